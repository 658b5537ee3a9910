//! Test execution: raw replay, high-level adaptation and mixed mode.

pub mod conditions;
pub mod report;
mod runner;
pub mod spec;

use thiserror::Error;

use crate::game::GameError;
use crate::petri::PetriError;
use crate::recorder::RecorderError;

pub use conditions::{Condition, ConditionDef, Conditions, MessagePatternDef, Outcome, Pattern};
pub use report::{FailureKind, GhostDeath, ModeSwitch, TestResult, UnmetPlace, Verdict};
pub use runner::{run, run_high_level, run_mixed, run_raw, run_with, RunOptions};
pub use spec::{DiffPolicy, LoadedTest, Mode, TestSpec, DEFAULT_MAX_TIME, DEFAULT_WINDOW};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("invalid test spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error(transparent)]
    Petri(#[from] PetriError),
    #[error(transparent)]
    Game(#[from] GameError),
}
