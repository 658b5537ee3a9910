//! Trace comparison by longest-common-subsequence alignment.
//!
//! Records are matched on `(type, source name, target name)` (configurable).
//! Timestamps never affect the alignment; they are compared afterwards as
//! per-pair deltas against a tolerance. Ties between equally long alignments
//! are broken by comparing the two candidate records' keys, which makes the
//! alignment of `(b, a)` the exact transpose of `(a, b)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchKeys {
    pub mtype: bool,
    pub source: bool,
    pub target: bool,
}

impl Default for MatchKeys {
    fn default() -> Self {
        MatchKeys {
            mtype: true,
            source: true,
            target: true,
        }
    }
}

impl MatchKeys {
    fn project<'a>(&self, r: &'a TraceRecord) -> (Option<&'a str>, Option<&'a str>, Option<Option<&'a str>>) {
        (
            self.mtype.then_some(r.mtype.as_str()),
            self.source.then_some(r.source.name.as_str()),
            self.target.then(|| r.target_name()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffOptions {
    pub keys: MatchKeys,
    /// Largest accepted `|actual - expected|` tick offset for matched pairs.
    /// `None` disables the timing check.
    pub tolerance: Option<u64>,
}

impl DiffOptions {
    /// Tick-exact comparison, used for raw replays.
    pub fn exact() -> Self {
        DiffOptions {
            keys: MatchKeys::default(),
            tolerance: Some(0),
        }
    }

    /// Order-only comparison, used for adapted replays.
    pub fn untimed() -> Self {
        DiffOptions {
            keys: MatchKeys::default(),
            tolerance: None,
        }
    }
}

impl Default for DiffOptions {
    fn default() -> Self {
        Self::exact()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffVerdict {
    Identical,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingDelta {
    pub expected_index: usize,
    pub actual_index: usize,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDiff {
    pub verdict: DiffVerdict,
    pub first_divergence: Option<usize>,
    pub missing: Vec<TraceRecord>,
    pub extra: Vec<TraceRecord>,
    pub timing_deltas: Vec<TimingDelta>,
}

impl TraceDiff {
    pub fn is_identical(&self) -> bool {
        self.verdict == DiffVerdict::Identical
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        match self.verdict {
            DiffVerdict::Identical => format!("identical ({} matched records)", self.timing_deltas.len()),
            DiffVerdict::Diverged => {
                let mut s = format!(
                    "diverged at record {}: {} missing, {} extra",
                    self.first_divergence.map_or("-".to_owned(), |i| i.to_string()),
                    self.missing.len(),
                    self.extra.len()
                );
                if let Some(m) = self.missing.first() {
                    s.push_str(&format!("; first missing: {}", describe(m)));
                }
                s
            }
        }
    }
}

pub fn describe(r: &TraceRecord) -> String {
    match r.target_name() {
        Some(t) => format!("[{}] {} {} {}", r.timestamp, r.source.name, r.mtype, t),
        None => format!("[{}] {} {}", r.timestamp, r.source.name, r.mtype),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Match(usize, usize),
    Missing(usize),
    Extra(usize),
}

fn align(expected: &[TraceRecord], actual: &[TraceRecord], keys: MatchKeys) -> Vec<Step> {
    let (n, m) = (expected.len(), actual.len());
    let ek: Vec<_> = expected.iter().map(|r| keys.project(r)).collect();
    let ak: Vec<_> = actual.iter().map(|r| keys.project(r)).collect();
    // suffix[i][j] = LCS length of expected[i..] and actual[j..]
    let mut suffix = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i][j] = if ek[i] == ak[j] {
                suffix[i + 1][j + 1] + 1
            } else {
                suffix[i + 1][j].max(suffix[i][j + 1])
            };
        }
    }
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if ek[i] == ak[j] {
            steps.push(Step::Match(i, j));
            i += 1;
            j += 1;
            continue;
        }
        let skip_expected = match suffix[i + 1][j].cmp(&suffix[i][j + 1]) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => ek[i] < ak[j],
        };
        if skip_expected {
            steps.push(Step::Missing(i));
            i += 1;
        } else {
            steps.push(Step::Extra(j));
            j += 1;
        }
    }
    steps.extend((i..n).map(Step::Missing));
    steps.extend((j..m).map(Step::Extra));
    steps
}

/// Compares an expected trace against an actual one. Pure.
pub fn diff_traces(expected: &[TraceRecord], actual: &[TraceRecord], opts: DiffOptions) -> TraceDiff {
    let steps = align(expected, actual, opts.keys);
    let mut missing = Vec::new();
    let mut extra = Vec::new();
    let mut timing_deltas = Vec::new();
    let mut prefix = 0usize;
    let mut in_prefix = true;
    let mut late: Option<usize> = None;
    for step in &steps {
        match *step {
            Step::Match(i, j) => {
                if in_prefix && i == prefix && j == prefix {
                    prefix += 1;
                } else {
                    in_prefix = false;
                }
                let delta = actual[j].timestamp as i64 - expected[i].timestamp as i64;
                if let Some(tol) = opts.tolerance {
                    if delta.unsigned_abs() > tol && late.is_none() {
                        late = Some(i);
                    }
                }
                timing_deltas.push(TimingDelta {
                    expected_index: i,
                    actual_index: j,
                    delta,
                });
            }
            Step::Missing(i) => {
                in_prefix = false;
                missing.push(expected[i].clone());
            }
            Step::Extra(j) => {
                in_prefix = false;
                extra.push(actual[j].clone());
            }
        }
    }
    let structural = (!missing.is_empty() || !extra.is_empty()).then_some(prefix);
    let first_divergence = match (structural, late) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    TraceDiff {
        verdict: if first_divergence.is_none() {
            DiffVerdict::Identical
        } else {
            DiffVerdict::Diverged
        },
        first_divergence,
        missing,
        extra,
        timing_deltas,
    }
}
