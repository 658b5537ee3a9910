//! Boolean state predicates over a running world. A predicate that holds
//! yields a witness colour: the etype of the actor responsible for a press,
//! [`NEUTRAL`] for everything else.

use super::{GameError, World};

pub const NEUTRAL: &str = "neutral";

/// Predicate keys each etype answers to.
pub fn declared(etype: &str) -> &'static [&'static str] {
    match etype {
        "Door" => &["isOpen", "isClosed"],
        "DoorButton" | "RaySwitch" => &["isPressed", "isUnlocked"],
        "Ray" => &["isActive", "isInactive"],
        "Portal" | "Trigger" => &["isTouched"],
        "Player" | "Clone" | "Enemy" => &["isAlive"],
        _ => &[],
    }
}

pub trait GameStateQuery {
    /// `Some(colour)` when `key` holds for `entity`, `None` when it does not.
    fn witness(&self, entity: &str, key: &str) -> Result<Option<String>, GameError>;

    fn query_state(&self, entity: &str, key: &str) -> Result<bool, GameError> {
        self.witness(entity, key).map(|w| w.is_some())
    }
}

fn holds(b: bool) -> Option<String> {
    b.then(|| NEUTRAL.to_owned())
}

impl World {
    /// Etype of the first actor standing on a switch, avatar first.
    fn presser(&self, switch: &str) -> Option<String> {
        let cells = &self.map().feature(switch)?.cells;
        cells.iter().find_map(|&c| self.actors_at(c).next().map(|a| a.etype.clone()))
    }
}

impl GameStateQuery for World {
    fn witness(&self, entity: &str, key: &str) -> Result<Option<String>, GameError> {
        let e = self
            .entities()
            .get(entity)
            .ok_or_else(|| GameError::UnknownEntity(entity.to_owned()))?;
        let etype = e.etype();
        if !declared(etype).contains(&key) {
            return Err(GameError::UnknownPredicate {
                entity: entity.to_owned(),
                etype: etype.to_owned(),
                key: key.to_owned(),
            });
        }
        Ok(match key {
            "isOpen" => holds(self.is_door_open(entity)),
            "isClosed" => holds(!self.is_door_open(entity)),
            "isActive" => holds(self.ray_active()),
            "isInactive" => holds(!self.ray_active()),
            "isTouched" => holds(e.bool_attr("isTouched")),
            "isAlive" => holds(self.actor(entity).is_some_and(|a| a.alive)),
            "isPressed" => self.presser(entity),
            "isUnlocked" => holds(self.presser(entity).is_none()),
            _ => unreachable!("declared predicate without evaluator"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recorder::{Edge, InputCode, RawInputEvent};

    fn world() -> World {
        World::load_default("7 3 0\n#######\n#Pa.AG#\n#######\na=A\n").unwrap()
    }

    #[test]
    fn unknown_pairs_are_errors() {
        let w = world();
        assert!(matches!(w.witness("Door1", "isPressed"), Err(GameError::UnknownPredicate { .. })));
        assert!(matches!(w.witness("Nobody", "isOpen"), Err(GameError::UnknownEntity(_))));
    }

    #[test]
    fn press_opens_door_with_actor_colour() {
        let mut w = world();
        assert_eq!(w.witness("Button1", "isPressed").unwrap(), None);
        assert!(w.query_state("Door1", "isClosed").unwrap());
        w.step(&[RawInputEvent::key(0, InputCode::Right, Edge::Down)]).unwrap();
        assert_eq!(w.witness("Button1", "isPressed").unwrap().as_deref(), Some("Player"));
        assert_eq!(w.witness("Door1", "isOpen").unwrap().as_deref(), Some(NEUTRAL));
        assert!(!w.query_state("Button1", "isUnlocked").unwrap());
        w.step(&[]).unwrap();
        assert!(!w.query_state("Button1", "isPressed").unwrap());
        assert!(w.query_state("Button1", "isUnlocked").unwrap());
        assert!(w.query_state("Door1", "isClosed").unwrap());
    }

    #[test]
    fn every_declared_predicate_evaluates() {
        let w = world();
        for e in w.entities().entities() {
            for key in declared(e.etype()) {
                w.witness(e.name(), key).unwrap();
            }
        }
    }
}
