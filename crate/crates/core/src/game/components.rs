//! Game component kinds. All state lives in entity attributes so a level
//! restart only has to reset attributes.

use crate::entity::{BlueprintRegistry, Component, ComponentRegistry, Context, Message, Value};
use crate::recorder::CRecorder;

pub const BLUEPRINTS: &str = include_str!("../../assets/blueprints.json");

pub const VOCABULARY: [&str; 10] = [
    "Open",
    "Close",
    "PRESSED",
    "RELEASED",
    "CLONE",
    "TOUCH",
    "TOUCHED",
    "KILLED",
    "DEACTIVATE",
    "ACTIVATE",
];

fn targeted_at_owner(msg: &Message, ctx: &Context<'_>) -> bool {
    msg.target.as_ref().is_some_and(|t| t.name == ctx.owner.name)
}

/// Holds a door open while at least one `Open` is outstanding.
pub struct DoorState;

impl Component for DoorState {
    fn kind(&self) -> &str {
        "CDoorState"
    }

    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool {
        if !targeted_at_owner(msg, ctx) {
            return false;
        }
        let delta = match msg.mtype.as_str() {
            "Open" => 1,
            "Close" => -1,
            _ => return false,
        };
        let holds = (ctx.int_attr("holds") + delta).max(0);
        ctx.set("holds", Value::Int(holds));
        ctx.set("isOpen", Value::Bool(holds > 0));
        true
    }
}

/// Pressure plate: counts actors standing on it and emits its `on` message on
/// the first press and its `off` message on the last release.
pub struct Switch;

impl Component for Switch {
    fn kind(&self) -> &str {
        "CSwitch"
    }

    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool {
        if !targeted_at_owner(msg, ctx) {
            return false;
        }
        let before = ctx.int_attr("presses");
        let after = match msg.mtype.as_str() {
            "PRESSED" => before + 1,
            "RELEASED" => (before - 1).max(0),
            _ => return false,
        };
        ctx.set("presses", Value::Int(after));
        ctx.set("isPressed", Value::Bool(after > 0));
        let target = ctx.str_attr("target").map(str::to_owned);
        let edge = match (before, after) {
            (0, 1..) => ctx.str_attr("on"),
            (1.., 0) => ctx.str_attr("off"),
            _ => None,
        }
        .map(str::to_owned);
        if let Some(mtype) = edge {
            ctx.emit(mtype, target.as_deref());
        }
        true
    }
}

/// Lethal ray, inactive while any `DEACTIVATE` is outstanding.
pub struct Ray;

impl Component for Ray {
    fn kind(&self) -> &str {
        "CRay"
    }

    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool {
        if !targeted_at_owner(msg, ctx) {
            return false;
        }
        let delta = match msg.mtype.as_str() {
            "DEACTIVATE" => 1,
            "ACTIVATE" => -1,
            _ => return false,
        };
        let holds = (ctx.int_attr("holds") + delta).max(0);
        ctx.set("holds", Value::Int(holds));
        ctx.set("isActive", Value::Bool(holds == 0));
        true
    }
}

pub struct Actor;

impl Component for Actor {
    fn kind(&self) -> &str {
        "CActor"
    }

    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool {
        if msg.mtype == "KILLED" && targeted_at_owner(msg, ctx) {
            ctx.set("alive", Value::Bool(false));
            return true;
        }
        false
    }
}

pub struct Touchable;

impl Component for Touchable {
    fn kind(&self) -> &str {
        "CTouchable"
    }

    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool {
        if matches!(msg.mtype.as_str(), "TOUCH" | "TOUCHED") && targeted_at_owner(msg, ctx) {
            ctx.set("isTouched", Value::Bool(true));
            return true;
        }
        false
    }
}

/// Marker for the moving platform; the world drives its position.
pub struct Platform;

impl Component for Platform {
    fn kind(&self) -> &str {
        "CPlatform"
    }

    fn accept(&mut self, _msg: &Message, _ctx: &mut Context<'_>) -> bool {
        false
    }
}

/// Presentation only. Removing it from every entity is the accelerated mode.
pub struct Glyph;

impl Component for Glyph {
    fn kind(&self) -> &str {
        "CGlyph"
    }

    fn accept(&mut self, _msg: &Message, _ctx: &mut Context<'_>) -> bool {
        false
    }
}

/// Hit points for damageable props; a `KILLED` aimed at the owner zeroes them.
pub struct Health;

impl Component for Health {
    fn kind(&self) -> &str {
        "CHealth"
    }

    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool {
        if msg.mtype == "KILLED" && targeted_at_owner(msg, ctx) {
            ctx.set("health", Value::Int(0));
            return true;
        }
        false
    }
}

/// Every component kind the game knows, plus an unbound `CRecorder`.
pub fn component_registry() -> ComponentRegistry {
    let mut k = ComponentRegistry::new();
    k.register("CDoorState", || Box::new(DoorState));
    k.register("CSwitch", || Box::new(Switch));
    k.register("CRay", || Box::new(Ray));
    k.register("CActor", || Box::new(Actor));
    k.register("CTouchable", || Box::new(Touchable));
    k.register("CPlatform", || Box::new(Platform));
    k.register("CGlyph", || Box::new(Glyph));
    k.register("CHealth", || Box::new(Health));
    k.register(CRecorder::KIND, || Box::new(CRecorder::detached()));
    k
}

pub fn default_blueprints() -> BlueprintRegistry {
    BlueprintRegistry::from_json(BLUEPRINTS, &component_registry()).expect("bundled blueprints are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_blueprints_load() {
        let bp = default_blueprints();
        for etype in ["Player", "Clone", "Door", "DoorButton", "RaySwitch", "Ray", "Portal", "Trigger"] {
            assert!(bp.get(etype).is_some(), "{etype}");
        }
    }

    #[test]
    fn breakable_door_added_in_data() {
        let mut bp = default_blueprints();
        bp.extend_from_json(
            r#"{"BreakableDoor":{"components":["CDoorState","CGlyph","CHealth"],"defaults":{"isOpen":false,"health":3}}}"#,
            &component_registry(),
        )
        .unwrap();
        assert_eq!(bp.get("BreakableDoor").unwrap().components.len(), 3);
    }
}
