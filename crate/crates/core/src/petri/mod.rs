//! Coloured, timed Petri nets bound to game entities.
//!
//! Templates are loaded from net model files and instantiated once per group
//! of map entities. Places are bound to state predicates and transitions to
//! the messages that fire them. When a transition fires, it takes one
//! guard-passing token from each input place (the lexicographically smallest
//! colour), then puts one token on each output place. That token carries the
//! colour taken from the first guarded input arc, or [`NEUTRAL`] when no
//! input arc is guarded.

pub mod model;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::game::predicate::GameStateQuery;
use crate::game::{GameError, Pos};

pub use crate::game::predicate::NEUTRAL;
pub use model::{AchieverDef, ArcDef, InstanceDef, InstancesFile, MessageDef, NetTemplate, PlaceDef, TransitionDef};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PetriError {
    #[error("net file: {0}")]
    Parse(String),
    #[error("arc {from} -> {to} joins two nodes of the same kind")]
    ArcKindViolation { from: String, to: String },
    #[error("arc endpoint `{0}` is not a place or transition")]
    UnknownNode(String),
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("duplicate arc {from} -> {to}")]
    DuplicateArc { from: String, to: String },
    #[error("output arc {from} -> {to} cannot carry a guard")]
    GuardOnOutputArc { from: String, to: String },
    #[error("reference to undeclared parameter `{0}`")]
    UnboundParameterReference(String),
    #[error("place `{0}` has an achiever but no predicate")]
    AchieverWithoutPredicate(String),
    #[error("no binding for parameter `{0}`")]
    MissingBinding(String),
    #[error("binding names unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("fallback for unknown place `{0}`")]
    UnknownPlace(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("transition `{0}` is not enabled")]
    NotEnabled(String),
    #[error("message {message} matches both `{first}` and `{second}`")]
    AmbiguousBinding { message: String, first: String, second: String },
    #[error("two transitions share the message pattern {0}")]
    DuplicatePattern(String),
    #[error("place `{0}` has no predicate to sync from")]
    MissingPredicate(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub entity: String,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Achiever {
    NavigateAndHold(String),
    Navigate(String),
    PressClone,
    InjectRaw { snippet: std::path::PathBuf, at: Option<Pos> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    /// Namespaced id, e.g. `S2@Button1`.
    pub id: String,
    pub local_id: String,
    pub label: String,
    pub predicate: Option<Predicate>,
    pub achiever: Option<Achiever>,
    pub fallback: Option<Achiever>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessagePattern {
    pub mtype: String,
    pub source: String,
    pub target: Option<String>,
}

impl MessagePattern {
    pub fn matches(&self, mtype: &str, source: &str, target: Option<&str>) -> bool {
        self.mtype == mtype && self.source == source && self.target.as_deref() == target
    }
}

impl fmt::Display for MessagePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.source, self.mtype, self.target.as_deref().unwrap_or("-"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputArc {
    pub place: usize,
    pub guard: Option<BTreeSet<String>>,
}

impl InputArc {
    fn admits(&self, colour: &str) -> bool {
        self.guard.as_ref().is_none_or(|g| g.contains(colour))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    /// Namespaced id, e.g. `T1@Door1`.
    pub id: String,
    pub local_id: String,
    pub label: String,
    pub duration: u64,
    pub message: Option<MessagePattern>,
    pub inputs: Vec<InputArc>,
    pub outputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetInstance {
    pub template: String,
    pub bindings: BTreeMap<String, String>,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
}

/// Place id → colour → token count. Empty multisets are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Marking(BTreeMap<String, BTreeMap<String, u32>>);

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, place: &str, colour: &str) {
        *self.0.entry(place.to_owned()).or_default().entry(colour.to_owned()).or_default() += 1;
    }

    /// Removes one `colour` token; returns false if there was none.
    pub fn remove(&mut self, place: &str, colour: &str) -> bool {
        let Some(ms) = self.0.get_mut(place) else {
            return false;
        };
        let Some(n) = ms.get_mut(colour) else {
            return false;
        };
        *n -= 1;
        if *n == 0 {
            ms.remove(colour);
        }
        if ms.is_empty() {
            self.0.remove(place);
        }
        true
    }

    pub fn count(&self, place: &str) -> u32 {
        self.0.get(place).map_or(0, |ms| ms.values().sum())
    }

    pub fn tokens(&self, place: &str) -> impl Iterator<Item = (&str, u32)> {
        self.0
            .get(place)
            .into_iter()
            .flat_map(|ms| ms.iter().map(|(c, n)| (c.as_str(), *n)))
    }

    pub fn total(&self) -> u32 {
        self.0.values().flat_map(|ms| ms.values()).sum()
    }

    pub fn marked_places(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        f.write_str("{")?;
        for (p, ms) in &self.0 {
            for (c, n) in ms {
                if !first {
                    f.write_str(", ")?;
                }
                first = false;
                write!(f, "{p}:{c}x{n}")?;
            }
        }
        f.write_str("}")
    }
}

/// Tokens chosen to fire a transition: one (place, colour) per input arc.
pub type Binding = Vec<(String, String)>;

fn resolve(r: &str, bindings: &BTreeMap<String, String>) -> Result<String, PetriError> {
    if model::is_param(r) {
        bindings.get(r).cloned().ok_or_else(|| PetriError::MissingBinding(r.to_owned()))
    } else {
        Ok(r.to_owned())
    }
}

fn achiever(def: &AchieverDef, bindings: &BTreeMap<String, String>) -> Result<Achiever, PetriError> {
    Ok(match def {
        AchieverDef::NavigateAndHold { entity_param } => Achiever::NavigateAndHold(resolve(entity_param, bindings)?),
        AchieverDef::Navigate { entity_param } => Achiever::Navigate(resolve(entity_param, bindings)?),
        AchieverDef::PressClone => Achiever::PressClone,
        AchieverDef::InjectRaw { snippet, at } => Achiever::InjectRaw {
            snippet: snippet.clone(),
            at: at.map(|[x, y]| Pos::new(x, y)),
        },
    })
}

fn namespaced(id: &str, entity: Option<&str>) -> String {
    match entity {
        Some(e) => format!("{id}@{e}"),
        None => id.to_owned(),
    }
}

/// Binds a template to concrete entities. `exists` answers whether an entity
/// name is present in the target world.
pub fn instantiate(
    template: &NetTemplate,
    bindings: &BTreeMap<String, String>,
    fallbacks: &BTreeMap<String, AchieverDef>,
    exists: &dyn Fn(&str) -> bool,
) -> Result<NetInstance, PetriError> {
    for p in &template.params {
        let name = bindings.get(p).ok_or_else(|| PetriError::MissingBinding(p.clone()))?;
        if !exists(name) {
            return Err(PetriError::UnknownEntity(name.clone()));
        }
    }
    if let Some(k) = fallbacks.keys().find(|k| !template.places.iter().any(|p| &p.id == *k)) {
        return Err(PetriError::UnknownPlace(k.clone()));
    }
    let check = |name: String| -> Result<String, PetriError> {
        if exists(&name) {
            Ok(name)
        } else {
            Err(PetriError::UnknownEntity(name))
        }
    };
    let mut places = Vec::new();
    for p in &template.places {
        let predicate = match &p.predicate {
            Some(d) => Some(Predicate {
                entity: check(resolve(&d.entity_param, bindings)?)?,
                key: d.key.clone(),
            }),
            None => None,
        };
        places.push(Place {
            id: namespaced(&p.id, predicate.as_ref().map(|q| q.entity.as_str())),
            local_id: p.id.clone(),
            label: p.label.clone(),
            achiever: p.achiever.as_ref().map(|a| achiever(a, bindings)).transpose()?,
            fallback: fallbacks.get(&p.id).map(|a| achiever(a, bindings)).transpose()?,
            predicate,
        });
    }
    let place_index = |id: &str| template.places.iter().position(|p| p.id == id);
    let mut transitions = Vec::new();
    let mut patterns = HashSet::new();
    for t in &template.transitions {
        let message = match &t.message {
            Some(m) => Some(MessagePattern {
                mtype: m.mtype.clone(),
                source: check(resolve(&m.source_param, bindings)?)?,
                target: m.target_param.as_deref().map(|r| resolve(r, bindings).and_then(check)).transpose()?,
            }),
            None => None,
        };
        if let Some(m) = &message {
            if !patterns.insert(m.clone()) {
                return Err(PetriError::DuplicatePattern(m.to_string()));
            }
        }
        let inputs = template
            .arcs
            .iter()
            .filter(|a| a.to == t.id)
            .filter_map(|a| {
                place_index(&a.from).map(|place| InputArc {
                    place,
                    guard: a.guard.clone(),
                })
            })
            .collect();
        let outputs = template.arcs.iter().filter(|a| a.from == t.id).filter_map(|a| place_index(&a.to)).collect();
        let suffix = message.as_ref().map(|m| m.target.clone().unwrap_or_else(|| m.source.clone()));
        transitions.push(Transition {
            id: namespaced(&t.id, suffix.as_deref()),
            local_id: t.id.clone(),
            label: t.label.clone(),
            duration: t.duration,
            message,
            inputs,
            outputs,
        });
    }
    Ok(NetInstance {
        template: template.name.clone(),
        bindings: bindings.clone(),
        places,
        transitions,
    })
}

/// Instantiates every entry of a companion file against its templates.
pub fn instantiate_all(
    templates: &[NetTemplate],
    file: &InstancesFile,
    exists: &dyn Fn(&str) -> bool,
) -> Result<Vec<NetInstance>, PetriError> {
    file.instances
        .iter()
        .map(|def| {
            let t = templates
                .iter()
                .find(|t| t.name == def.template)
                .ok_or_else(|| PetriError::UnknownTemplate(def.template.clone()))?;
            instantiate(t, &def.bindings, &def.fallbacks, exists)
        })
        .collect()
}

impl NetInstance {
    pub fn transition(&self, id: &str) -> Result<&Transition, PetriError> {
        self.transitions
            .iter()
            .find(|t| t.id == id || t.local_id == id)
            .ok_or_else(|| PetriError::UnknownTransition(id.to_owned()))
    }

    pub fn place(&self, id: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.id == id || p.local_id == id)
    }

    /// The tokens `transition` would consume, or `None` if it is not enabled.
    pub fn enabling(&self, marking: &Marking, transition: &str) -> Result<Option<Binding>, PetriError> {
        let t = self.transition(transition)?;
        let mut binding = Vec::new();
        for arc in &t.inputs {
            let pid = &self.places[arc.place].id;
            match marking.tokens(pid).map(|(c, _)| c).find(|c| arc.admits(c)) {
                Some(c) => binding.push((pid.clone(), c.to_owned())),
                None => return Ok(None),
            }
        }
        Ok(Some(binding))
    }

    pub fn is_enabled(&self, marking: &Marking, transition: &str) -> Result<bool, PetriError> {
        Ok(self.enabling(marking, transition)?.is_some())
    }

    pub fn enabled(&self, marking: &Marking) -> Vec<&str> {
        self.transitions
            .iter()
            .filter(|t| self.is_enabled(marking, &t.id).unwrap_or(false))
            .map(|t| t.id.as_str())
            .collect()
    }

    pub fn fire(&self, marking: &Marking, transition: &str) -> Result<Marking, PetriError> {
        let t = self.transition(transition)?;
        let binding = self
            .enabling(marking, transition)?
            .ok_or_else(|| PetriError::NotEnabled(t.id.clone()))?;
        let mut next = marking.clone();
        for (p, c) in &binding {
            next.remove(p, c);
        }
        let colour = t
            .inputs
            .iter()
            .zip(&binding)
            .find(|(a, _)| a.guard.is_some())
            .map_or(NEUTRAL, |(_, (_, c))| c.as_str());
        for &o in &t.outputs {
            next.add(&self.places[o].id, colour);
        }
        Ok(next)
    }

    /// Input places of `transition` holding no admissible token, in arc order.
    pub fn unmet_inputs(&self, marking: &Marking, transition: &str) -> Result<Vec<&Place>, PetriError> {
        let t = self.transition(transition)?;
        Ok(t.inputs
            .iter()
            .filter(|arc| !marking.tokens(&self.places[arc.place].id).any(|(c, _)| arc.admits(c)))
            .map(|arc| &self.places[arc.place])
            .collect())
    }

    /// Marking read off the game: one token per place whose predicate holds.
    pub fn sync_marking(&self, world: &dyn GameStateQuery) -> Result<Marking, PetriError> {
        let mut m = Marking::new();
        for p in &self.places {
            let q = p.predicate.as_ref().ok_or_else(|| PetriError::MissingPredicate(p.id.clone()))?;
            if let Some(colour) = world.witness(&q.entity, &q.key)? {
                m.add(&p.id, &colour);
            }
        }
        Ok(m)
    }
}

/// The unique transition bound to a message, as (instance index, transition index).
pub fn transition_for_message(
    instances: &[NetInstance],
    mtype: &str,
    source: &str,
    target: Option<&str>,
) -> Result<Option<(usize, usize)>, PetriError> {
    let mut found: Option<(usize, usize)> = None;
    for (i, inst) in instances.iter().enumerate() {
        for (j, t) in inst.transitions.iter().enumerate() {
            if t.message.as_ref().is_some_and(|m| m.matches(mtype, source, target)) {
                if let Some((fi, fj)) = found {
                    return Err(PetriError::AmbiguousBinding {
                        message: format!("{source} {mtype} {}", target.unwrap_or("-")),
                        first: instances[fi].transitions[fj].id.clone(),
                        second: t.id.clone(),
                    });
                }
                found = Some((i, j));
            }
        }
    }
    Ok(found)
}
