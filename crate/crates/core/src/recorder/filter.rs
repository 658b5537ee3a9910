use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wildmatch::WildMatch;

use super::RecorderError;

/// Default subscriptions shipped with the crate.
pub const DEFAULT_FILTER: &str = include_str!("../../assets/filter.json");

/// Entity-name glob → message types written to the trace. A `"*"` entry in the
/// type list subscribes to every type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecorderFilter {
    pub subscriptions: BTreeMap<String, Vec<String>>,
}

impl RecorderFilter {
    pub fn from_json(text: &str) -> Result<Self, RecorderError> {
        serde_json::from_str(text).map_err(|e| RecorderError::Filter(e.to_string()))
    }

    pub fn default_config() -> Self {
        Self::from_json(DEFAULT_FILTER).expect("bundled filter parses")
    }

    /// Subscribes nothing; traces stay empty.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn subscribe(mut self, entity_glob: &str, types: &[&str]) -> Self {
        self.subscriptions
            .entry(entity_glob.to_owned())
            .or_default()
            .extend(types.iter().map(|t| (*t).to_owned()));
        self
    }

    /// True when some subscription covers `entity`.
    pub fn watches(&self, entity: &str) -> bool {
        self.subscriptions.keys().any(|g| WildMatch::new(g).matches(entity))
    }

    pub fn allows(&self, entity: &str, mtype: &str) -> bool {
        self.subscriptions
            .iter()
            .filter(|(g, _)| WildMatch::new(g).matches(entity))
            .any(|(_, types)| types.iter().any(|t| t == "*" || t == mtype))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn globs_and_types() {
        let f = RecorderFilter::none().subscribe("Button*", &["Open"]).subscribe("Player", &["CLONE", "TOUCH"]);
        assert!(f.allows("Button1", "Open"));
        assert!(f.allows("Button12", "Open"));
        assert!(!f.allows("Button1", "Close"));
        assert!(f.allows("Player", "CLONE"));
        assert!(!f.allows("Player", "PRESSED"));
        assert!(!f.allows("Clone1", "TOUCH"));
        assert!(!f.watches("Door1"));
    }

    #[test]
    fn star_type_means_everything() {
        let f = RecorderFilter::none().subscribe("Enemy", &["*"]);
        assert!(f.allows("Enemy", "KILLED"));
    }

    #[test]
    fn bundled_config_excludes_movement_noise() {
        let f = RecorderFilter::default_config();
        assert!(f.allows("Button1", "Open"));
        assert!(f.allows("Player", "TOUCH"));
        assert!(!f.allows("Player", "PRESSED"));
        assert!(!f.allows("Button1", "Close"));
    }
}
