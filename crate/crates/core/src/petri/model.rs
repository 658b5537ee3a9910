//! Net model files and their validation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::PetriError;

pub const DEFAULT_DURATION: u64 = 200;

/// Entity reference in a template: `$param` or a literal entity name.
pub fn is_param(s: &str) -> bool {
    s.starts_with('$')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub entity_param: String,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AchieverDef {
    /// Walk onto the entity and stay there.
    NavigateAndHold { entity_param: String },
    Navigate { entity_param: String },
    PressClone,
    /// Replay a raw-log snippet, optionally after walking to `at`.
    InjectRaw {
        snippet: PathBuf,
        #[serde(default)]
        at: Option<[i32; 2]>,
    },
}

impl AchieverDef {
    fn param(&self) -> Option<&str> {
        match self {
            AchieverDef::NavigateAndHold { entity_param } | AchieverDef::Navigate { entity_param } => {
                Some(entity_param)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceDef {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub predicate: Option<PredicateDef>,
    #[serde(default)]
    pub achiever: Option<AchieverDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageDef {
    #[serde(rename = "type")]
    pub mtype: String,
    pub source_param: String,
    #[serde(default)]
    pub target_param: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDef {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default = "default_duration")]
    pub duration: u64,
    #[serde(default)]
    pub message: Option<MessageDef>,
}

fn default_duration() -> u64 {
    DEFAULT_DURATION
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcDef {
    pub from: String,
    pub to: String,
    /// Token colours allowed through an input arc; absent means any.
    #[serde(default)]
    pub guard: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetTemplate {
    pub name: String,
    #[serde(default)]
    pub params: Vec<String>,
    pub places: Vec<PlaceDef>,
    pub transitions: Vec<TransitionDef>,
    pub arcs: Vec<ArcDef>,
}

/// Place or transition, for arc endpoint checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Place,
    Transition,
}

impl NetTemplate {
    pub fn from_json(text: &str) -> Result<NetTemplate, PetriError> {
        let t: NetTemplate = serde_json::from_str(text).map_err(|e| PetriError::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn node_kind(&self, id: &str) -> Option<NodeKind> {
        if self.places.iter().any(|p| p.id == id) {
            Some(NodeKind::Place)
        } else if self.transitions.iter().any(|t| t.id == id) {
            Some(NodeKind::Transition)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), PetriError> {
        let mut ids = HashSet::new();
        for id in self.places.iter().map(|p| &p.id).chain(self.transitions.iter().map(|t| &t.id)) {
            if !ids.insert(id) {
                return Err(PetriError::DuplicateId(id.clone()));
            }
        }
        let params: HashSet<&str> = self.params.iter().map(String::as_str).collect();
        if let Some(p) = self.params.iter().find(|p| !is_param(p)) {
            return Err(PetriError::Parse(format!("parameter `{p}` must start with `$`")));
        }
        let check = |r: &str| -> Result<(), PetriError> {
            if is_param(r) && !params.contains(r) {
                return Err(PetriError::UnboundParameterReference(r.to_owned()));
            }
            Ok(())
        };
        for p in &self.places {
            if let Some(pred) = &p.predicate {
                check(&pred.entity_param)?;
            }
            if let Some(a) = &p.achiever {
                if p.predicate.is_none() {
                    return Err(PetriError::AchieverWithoutPredicate(p.id.clone()));
                }
                if let Some(r) = a.param() {
                    check(r)?;
                }
            }
        }
        for t in &self.transitions {
            if let Some(m) = &t.message {
                check(&m.source_param)?;
                if let Some(tp) = &m.target_param {
                    check(tp)?;
                }
            }
        }
        let mut seen = HashSet::new();
        for a in &self.arcs {
            let from = self.node_kind(&a.from).ok_or_else(|| PetriError::UnknownNode(a.from.clone()))?;
            let to = self.node_kind(&a.to).ok_or_else(|| PetriError::UnknownNode(a.to.clone()))?;
            if from == to {
                return Err(PetriError::ArcKindViolation {
                    from: a.from.clone(),
                    to: a.to.clone(),
                });
            }
            if from == NodeKind::Transition && a.guard.is_some() {
                return Err(PetriError::GuardOnOutputArc {
                    from: a.from.clone(),
                    to: a.to.clone(),
                });
            }
            if !seen.insert((&a.from, &a.to)) {
                return Err(PetriError::DuplicateArc {
                    from: a.from.clone(),
                    to: a.to.clone(),
                });
            }
        }
        Ok(())
    }
}

/// One `instances` entry of a level's companion file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDef {
    pub template: String,
    pub bindings: BTreeMap<String, String>,
    /// Local place id → achiever used when the place's own achiever cannot
    /// make progress (typically `inject_raw`).
    #[serde(default)]
    pub fallbacks: BTreeMap<String, AchieverDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstancesFile {
    pub instances: Vec<InstanceDef>,
}

impl InstancesFile {
    pub fn from_json(text: &str) -> Result<InstancesFile, PetriError> {
        serde_json::from_str(text).map_err(|e| PetriError::Parse(e.to_string()))
    }
}
