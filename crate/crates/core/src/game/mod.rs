//! Deterministic fixed-step grid puzzle in the style of *Time and Space*:
//! pressure switches that hold doors open, self-cloning with ghost replays,
//! a moving platform, lethal rays and an exit portal.

pub mod components;
pub mod level;
pub mod navigate;
pub mod predicate;
mod world;

pub use level::{Cell, Feature, FeatureKind, LevelError, LevelMap, Pos};
pub use navigate::{Move, Navigation};
pub use predicate::GameStateQuery;
pub use world::{Actor, Role, World, PLAYER};

use crate::entity::EntityError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error("input stamped tick {event} but world is at tick {world}")]
    TickMismatch { event: u64, world: u64 },
    #[error("no predicate `{key}` declared for `{entity}` ({etype})")]
    UnknownPredicate { entity: String, etype: String, key: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("session is over (level completed or avatar dead)")]
    SessionOver,
}
