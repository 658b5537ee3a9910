use serde::Serialize;

use super::spec::Mode;
use crate::recorder::{RawInputEvent, TraceDiff, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Timeout,
}

impl Verdict {
    /// Process exit status for CI.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Timeout => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    FailureCondition,
    AvatarKilled,
    LevelEnded,
    AchieverUnreachable,
    BudgetExceeded,
    NoAchiever,
    PostStateMismatch,
    TraceDiverged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnmetPlace {
    pub place: String,
    /// Namespaced id, e.g. `S2@Button1`.
    pub node: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModeSwitch {
    pub tick: u64,
    pub from: Mode,
    pub to: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GhostDeath {
    pub tick: u64,
    pub ghost: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub verdict: Verdict,
    pub reason: String,
    pub failure: Option<FailureKind>,
    pub mode: Mode,
    pub unmet_preconditions: Vec<UnmetPlace>,
    pub trace_diff: TraceDiff,
    pub elapsed: u64,
    pub mode_switches: Vec<ModeSwitch>,
    pub ghost_deaths: Vec<GhostDeath>,
    /// Expected trace records consumed, out of `expected_records`.
    pub consumed_records: usize,
    pub expected_records: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
    #[serde(skip)]
    pub raw: Vec<RawInputEvent>,
}

impl TestResult {
    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn text(&self) -> String {
        let mut s = format!("verdict: {:?} ({} mode, {} ticks)\n", self.verdict, self.mode, self.elapsed);
        s.push_str(&format!("reason: {}\n", self.reason));
        s.push_str(&format!("trace: {}/{} records consumed\n", self.consumed_records, self.expected_records));
        s.push_str(&format!("diff: {}\n", self.trace_diff.summary()));
        for u in &self.unmet_preconditions {
            s.push_str(&format!("unmet: {} \"{}\"\n", u.node, u.label));
        }
        for m in &self.mode_switches {
            s.push_str(&format!("switch: tick {} {} -> {}\n", m.tick, m.from, m.to));
        }
        for g in &self.ghost_deaths {
            s.push_str(&format!("ghost died: {} at tick {}\n", g.ghost, g.tick));
        }
        s
    }
}
