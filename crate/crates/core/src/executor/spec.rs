//! Test specification files and everything they reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::conditions::{Condition, ConditionDef};
use super::ExecError;
use crate::petri::{AchieverDef, InstancesFile, NetTemplate};
use crate::recorder::raw::parse_raw_log;
use crate::recorder::trace::parse_trace;
use crate::recorder::{RawInputEvent, TraceRecord};

pub const DEFAULT_MAX_TIME: u64 = 15000;
pub const DEFAULT_WINDOW: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Raw,
    HighLevel,
    Mixed,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Raw => "raw",
            Mode::HighLevel => "high_level",
            Mode::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffPolicy {
    /// Any trace divergence fails a raw test.
    #[default]
    Strict,
    /// Only the conditions decide.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    #[serde(default)]
    pub traces_file: Option<PathBuf>,
    #[serde(default)]
    pub raw_file: Option<PathBuf>,
    pub level_file: PathBuf,
    #[serde(default)]
    pub nets: Vec<PathBuf>,
    /// Companion file listing net instances; defaults to the level path with
    /// its extension replaced by `instances.json`.
    #[serde(default)]
    pub instances: Option<PathBuf>,
    #[serde(default = "default_max_time")]
    pub max_time: u64,
    #[serde(default)]
    pub success_conditions: Vec<ConditionDef>,
    #[serde(default)]
    pub failure_conditions: Vec<ConditionDef>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub diff_policy: DiffPolicy,
    /// Ticks a mixed run waits past a checkpoint's recorded tick.
    #[serde(default = "default_window")]
    pub window: u64,
    /// After a bound message, also require its transition's output places to hold.
    #[serde(default)]
    pub verify_post_state: bool,
}

fn default_max_time() -> u64 {
    DEFAULT_MAX_TIME
}

fn default_mode() -> Mode {
    Mode::HighLevel
}

fn default_window() -> u64 {
    DEFAULT_WINDOW
}

impl TestSpec {
    pub fn from_json(text: &str) -> Result<TestSpec, ExecError> {
        let spec: TestSpec = serde_json::from_str(text).map_err(|e| ExecError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.max_time == 0 {
            return Err(ExecError::Spec("max_time must be positive".into()));
        }
        if matches!(self.mode, Mode::Raw | Mode::Mixed) && self.raw_file.is_none() {
            return Err(ExecError::Spec(format!("{} mode needs raw_file", self.mode)));
        }
        if matches!(self.mode, Mode::HighLevel | Mode::Mixed) && self.traces_file.is_none() {
            return Err(ExecError::Spec(format!("{} mode needs traces_file", self.mode)));
        }
        for c in self.success_conditions.iter().chain(&self.failure_conditions) {
            Condition::from_def(c).map_err(ExecError::Spec)?;
        }
        Ok(())
    }
}

/// A spec with every referenced file read and parsed.
#[derive(Debug, Clone)]
pub struct LoadedTest {
    pub spec: TestSpec,
    pub level_text: String,
    pub expected: Vec<TraceRecord>,
    pub raw: Vec<RawInputEvent>,
    pub templates: Vec<NetTemplate>,
    pub instances: InstancesFile,
    /// Parsed `inject_raw` snippets, keyed by the path as written.
    pub snippets: BTreeMap<PathBuf, Vec<RawInputEvent>>,
}

fn read(path: &Path) -> Result<String, ExecError> {
    std::fs::read_to_string(path).map_err(|e| ExecError::Io(path.display().to_string(), e.to_string()))
}

fn companion(level: &Path) -> PathBuf {
    level.with_extension("instances.json")
}

impl LoadedTest {
    /// Reads a spec file; relative paths inside resolve against its directory.
    pub fn from_file(path: &Path) -> Result<LoadedTest, ExecError> {
        let spec = TestSpec::from_json(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        LoadedTest::load(spec, base)
    }

    pub fn load(spec: TestSpec, base: &Path) -> Result<LoadedTest, ExecError> {
        let at = |p: &Path| base.join(p);
        let level_path = at(&spec.level_file);
        let level_text = read(&level_path)?;
        let expected = match &spec.traces_file {
            Some(p) => parse_trace(&read(&at(p))?)?,
            None => Vec::new(),
        };
        let raw = match &spec.raw_file {
            Some(p) => parse_raw_log(&read(&at(p))?)?,
            None => Vec::new(),
        };
        let templates = spec
            .nets
            .iter()
            .map(|p| NetTemplate::from_json(&read(&at(p))?).map_err(ExecError::from))
            .collect::<Result<Vec<_>, _>>()?;
        let inst_path = spec.instances.as_ref().map(|p| at(p)).unwrap_or_else(|| companion(&level_path));
        let instances = if spec.instances.is_some() || (!templates.is_empty() && inst_path.exists()) {
            InstancesFile::from_json(&read(&inst_path)?)?
        } else {
            InstancesFile { instances: Vec::new() }
        };
        let inst_dir = inst_path.parent().unwrap_or(base).to_path_buf();
        let mut snippets = BTreeMap::new();
        let defs = templates
            .iter()
            .flat_map(|t| t.places.iter().filter_map(|p| p.achiever.as_ref()))
            .chain(instances.instances.iter().flat_map(|i| i.fallbacks.values()));
        for def in defs {
            if let AchieverDef::InjectRaw { snippet, .. } = def {
                if !snippets.contains_key(snippet) {
                    let events = parse_raw_log(&read(&inst_dir.join(snippet))?)?;
                    snippets.insert(snippet.clone(), events);
                }
            }
        }
        Ok(LoadedTest {
            spec,
            level_text,
            expected,
            raw,
            templates,
            instances,
            snippets,
        })
    }
}
