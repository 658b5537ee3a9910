//! Success and failure conditions. Each is an ordered list of message
//! patterns matched as a subsequence of the live message stream.

use serde::{Deserialize, Serialize};
use wildmatch::WildMatch;

use crate::entity::Message;
use crate::recorder::TraceRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagePatternDef {
    #[serde(rename = "type")]
    pub mtype: String,
    #[serde(rename = "SourceEntity", default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(rename = "TargetEntity", default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionDef {
    #[serde(rename = "type")]
    pub ctype: String,
    pub msg: Vec<MessagePatternDef>,
}

/// Compiled pattern; absent fields match anything, names may be globs.
#[derive(Debug, Clone)]
pub struct Pattern {
    mtype: String,
    source: Option<WildMatch>,
    target: Option<WildMatch>,
}

impl Pattern {
    pub fn new(def: &MessagePatternDef) -> Self {
        Pattern {
            mtype: def.mtype.clone(),
            source: def.source.as_deref().map(WildMatch::new),
            target: def.target.as_deref().map(WildMatch::new),
        }
    }

    /// Exact pattern for a recorded trace row.
    pub fn exact(rec: &TraceRecord) -> Self {
        Pattern {
            mtype: rec.mtype.clone(),
            source: Some(WildMatch::new(&rec.source.name)),
            target: Some(WildMatch::new(rec.target_name().unwrap_or(""))),
        }
    }

    pub fn matches(&self, msg: &Message) -> bool {
        self.mtype == msg.mtype
            && self.source.as_ref().is_none_or(|w| w.matches(&msg.source.name))
            && self.target.as_ref().is_none_or(|w| w.matches(msg.target_name().unwrap_or("")))
    }
}

#[derive(Debug, Clone)]
pub struct Condition {
    patterns: Vec<Pattern>,
    cursor: usize,
}

impl Condition {
    pub fn new(patterns: Vec<Pattern>) -> Self {
        Condition { patterns, cursor: 0 }
    }

    pub fn from_def(def: &ConditionDef) -> Result<Self, String> {
        if def.ctype != "ordered" {
            return Err(format!("unsupported condition type `{}`", def.ctype));
        }
        if def.msg.is_empty() {
            return Err("condition needs at least one message pattern".into());
        }
        Ok(Condition::new(def.msg.iter().map(Pattern::new).collect()))
    }

    /// Advances on a match; true once every pattern has been seen in order.
    fn feed(&mut self, msg: &Message) -> bool {
        if self.cursor < self.patterns.len() && self.patterns[self.cursor].matches(msg) {
            self.cursor += 1;
        }
        self.done()
    }

    pub fn done(&self) -> bool {
        self.cursor == self.patterns.len()
    }

    pub fn progress(&self) -> (usize, usize) {
        (self.cursor, self.patterns.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pending,
    Success,
    Failure,
}

#[derive(Debug, Clone)]
pub struct Conditions {
    pub success: Vec<Condition>,
    pub failure: Vec<Condition>,
}

impl Conditions {
    pub fn new(success: Vec<Condition>, failure: Vec<Condition>) -> Self {
        Conditions { success, failure }
    }

    /// Feeds one message. Failure beats success on the same message.
    pub fn evaluate(&mut self, msg: &Message) -> Outcome {
        let mut failed = false;
        for c in &mut self.failure {
            failed |= c.feed(msg);
        }
        let mut succeeded = false;
        for c in &mut self.success {
            succeeded |= c.feed(msg);
        }
        if failed {
            Outcome::Failure
        } else if succeeded {
            Outcome::Success
        } else {
            Outcome::Pending
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityRef;

    fn msg(mtype: &str, src: &str, dst: &str) -> Message {
        Message::new(0, mtype, EntityRef::new(src, "X"), Some(EntityRef::new(dst, "Y")))
    }

    fn touched(src: &str) -> ConditionDef {
        ConditionDef {
            ctype: "ordered".into(),
            msg: vec![MessagePatternDef {
                mtype: "TOUCHED".into(),
                source: Some(src.into()),
                target: Some("doorTrigger1".into()),
            }],
        }
    }

    fn trigger() -> Conditions {
        Conditions::new(
            vec![Condition::from_def(&touched("Player")).unwrap()],
            vec![Condition::from_def(&touched("Enemy")).unwrap()],
        )
    }

    #[test]
    fn player_touch_succeeds() {
        let mut c = trigger();
        assert_eq!(c.evaluate(&msg("PRESSED", "Player", "doorTrigger1")), Outcome::Pending);
        assert_eq!(c.evaluate(&msg("TOUCHED", "Player", "doorTrigger1")), Outcome::Success);
    }

    #[test]
    fn enemy_touch_fails() {
        let mut c = trigger();
        assert_eq!(c.evaluate(&msg("TOUCHED", "Enemy", "doorTrigger1")), Outcome::Failure);
    }

    #[test]
    fn failure_wins_ties() {
        let mut c = Conditions::new(
            vec![Condition::from_def(&touched("*")).unwrap()],
            vec![Condition::from_def(&touched("Enemy")).unwrap()],
        );
        assert_eq!(c.evaluate(&msg("TOUCHED", "Enemy", "doorTrigger1")), Outcome::Failure);
    }

    #[test]
    fn ordered_is_a_subsequence() {
        let def = ConditionDef {
            ctype: "ordered".into(),
            msg: ["Open", "TOUCH"]
                .iter()
                .map(|t| MessagePatternDef {
                    mtype: (*t).into(),
                    source: None,
                    target: None,
                })
                .collect(),
        };
        let mut c = Conditions::new(vec![Condition::from_def(&def).unwrap()], vec![]);
        assert_eq!(c.evaluate(&msg("TOUCH", "Player", "EndPortal")), Outcome::Pending);
        assert_eq!(c.evaluate(&msg("Open", "Button1", "Door1")), Outcome::Pending);
        assert_eq!(c.evaluate(&msg("Close", "Button1", "Door1")), Outcome::Pending);
        assert_eq!(c.evaluate(&msg("TOUCH", "Player", "EndPortal")), Outcome::Success);
    }

    #[test]
    fn rejects_unknown_type_and_empty() {
        let mut d = touched("Player");
        d.ctype = "any".into();
        assert!(Condition::from_def(&d).is_err());
        d.ctype = "ordered".into();
        d.msg.clear();
        assert!(Condition::from_def(&d).is_err());
    }
}
