//! Record-and-replay test harness for a grid puzzle game.

pub mod entity;
pub mod executor;
pub mod game;
pub mod petri;
pub mod recorder;
pub mod serve;
