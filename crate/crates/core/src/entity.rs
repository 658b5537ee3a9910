//! Component-based entities built from data-defined blueprints.
//!
//! Entities are containers of attributes plus an ordered list of components.
//! Components never call each other: every cross-component effect travels as a
//! [`Message`] through [`EntityWorld::send`]. Delivery is synchronous and
//! deterministic: entity insertion order first, then blueprint component order.
//! Follow-up messages emitted while handling a message are queued and delivered
//! FIFO before `send` returns.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::rc::Rc;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

/// Flat scalar stored in attributes and message payloads.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

pub type Attributes = BTreeMap<String, Value>;

/// Opaque handle, unique within one [`EntityWorld`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// `{name, type}` reference as it appears in messages and traces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub name: String,
    #[serde(rename = "type")]
    pub etype: String,
}

impl EntityRef {
    pub fn new(name: impl Into<String>, etype: impl Into<String>) -> Self {
        EntityRef {
            name: name.into(),
            etype: etype.into(),
        }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.etype)
    }
}

/// A typed, tick-stamped event between entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub tick: u64,
    pub mtype: String,
    pub source: EntityRef,
    pub target: Option<EntityRef>,
    pub payload: BTreeMap<String, Value>,
}

impl Message {
    pub fn new(tick: u64, mtype: impl Into<String>, source: EntityRef, target: Option<EntityRef>) -> Self {
        Message {
            tick,
            mtype: mtype.into(),
            source,
            target,
            payload: BTreeMap::new(),
        }
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target.as_ref().map(|t| t.name.as_str())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} {}", self.tick, self.source.name, self.mtype)?;
        if let Some(t) = &self.target {
            write!(f, " {}", t.name)?;
        }
        Ok(())
    }
}

/// Message requested by a component; the world stamps tick and source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub mtype: String,
    pub target: Option<String>,
    pub payload: BTreeMap<String, Value>,
}

/// What a component sees while handling a message or an update.
pub struct Context<'a> {
    pub tick: u64,
    pub owner: &'a EntityRef,
    pub attributes: &'a mut Attributes,
    outbox: &'a mut Vec<Outgoing>,
}

impl Context<'_> {
    pub fn emit(&mut self, mtype: impl Into<String>, target: Option<&str>) {
        self.outbox.push(Outgoing {
            mtype: mtype.into(),
            target: target.map(str::to_owned),
            payload: BTreeMap::new(),
        });
    }

    pub fn attr(&self, key: &str) -> Option<&Value> {
        self.attributes.get(key)
    }

    pub fn int_attr(&self, key: &str) -> i64 {
        self.attributes.get(key).and_then(Value::as_int).unwrap_or(0)
    }

    pub fn str_attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).and_then(Value::as_str)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.attributes.insert(key.to_owned(), value);
    }
}

/// Behaviour half of an entity. State that must survive a level restart lives
/// in the owning entity's attributes, not in the component.
pub trait Component {
    fn kind(&self) -> &str;

    /// Returns `true` when the component consumed the message.
    fn accept(&mut self, msg: &Message, ctx: &mut Context<'_>) -> bool;

    fn update(&mut self, _ctx: &mut Context<'_>) {}

    /// Sender-side tap: called with every message the owning entity emits,
    /// before delivery. Observers cannot emit or touch attributes.
    fn observe_outgoing(&mut self, _msg: &Message) {}
}

pub type ComponentFactory = Rc<dyn Fn() -> Box<dyn Component>>;

/// Known component kinds, by name.
#[derive(Clone, Default)]
pub struct ComponentRegistry {
    factories: BTreeMap<String, ComponentFactory>,
}

impl ComponentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) the factory for `kind`.
    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn() -> Box<dyn Component> + 'static,
    {
        self.factories.insert(kind.to_owned(), Rc::new(factory));
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.factories.contains_key(kind)
    }

    pub fn create(&self, kind: &str) -> Result<Box<dyn Component>, EntityError> {
        self.factories
            .get(kind)
            .map(|f| f())
            .ok_or_else(|| EntityError::UnknownComponentKind(kind.to_owned()))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl fmt::Debug for ComponentRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct Blueprint {
    #[serde(skip)]
    pub etype: String,
    pub components: Vec<String>,
    #[serde(default)]
    pub defaults: Attributes,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlueprintRegistry {
    blueprints: BTreeMap<String, Blueprint>,
}

/// JSON object entries in document order, keeping duplicate keys visible.
struct OrderedEntries(Vec<(String, Blueprint)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping entity types to blueprints")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Blueprint>()? {
                    out.push((k, v));
                }
                Ok(OrderedEntries(out))
            }
        }
        deserializer.deserialize_map(EntriesVisitor)
    }
}

impl BlueprintRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a blueprint file and registers every entry.
    pub fn from_json(defs: &str, kinds: &ComponentRegistry) -> Result<Self, EntityError> {
        let mut reg = Self::new();
        reg.extend_from_json(defs, kinds)?;
        Ok(reg)
    }

    pub fn extend_from_json(&mut self, defs: &str, kinds: &ComponentRegistry) -> Result<(), EntityError> {
        let entries: OrderedEntries =
            serde_json::from_str(defs).map_err(|e| EntityError::BlueprintParse(e.to_string()))?;
        for (etype, mut bp) in entries.0 {
            bp.etype = etype;
            self.insert(bp, kinds)?;
        }
        Ok(())
    }

    pub fn insert(&mut self, bp: Blueprint, kinds: &ComponentRegistry) -> Result<(), EntityError> {
        if let Some(kind) = bp.components.iter().find(|k| !kinds.contains(k)) {
            return Err(EntityError::UnknownComponentKind(kind.clone()));
        }
        if self.blueprints.contains_key(&bp.etype) {
            return Err(EntityError::DuplicateBlueprint(bp.etype));
        }
        self.blueprints.insert(bp.etype.clone(), bp);
        Ok(())
    }

    pub fn get(&self, etype: &str) -> Option<&Blueprint> {
        self.blueprints.get(etype)
    }

    pub fn len(&self) -> usize {
        self.blueprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blueprints.is_empty()
    }

    pub fn etypes(&self) -> impl Iterator<Item = &str> {
        self.blueprints.keys().map(String::as_str)
    }
}

pub struct Entity {
    pub id: EntityId,
    pub reference: EntityRef,
    pub attributes: Attributes,
    initial: Attributes,
    components: Vec<Box<dyn Component>>,
}

impl Entity {
    pub fn name(&self) -> &str {
        &self.reference.name
    }

    pub fn etype(&self) -> &str {
        &self.reference.etype
    }

    pub fn component_kinds(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.kind()).collect()
    }

    pub fn has_component(&self, kind: &str) -> bool {
        self.components.iter().any(|c| c.kind() == kind)
    }

    pub fn bool_attr(&self, key: &str) -> bool {
        self.attributes.get(key).and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn str_attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).and_then(Value::as_str)
    }
}

impl fmt::Debug for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Entity")
            .field("id", &self.id)
            .field("reference", &self.reference)
            .field("attributes", &self.attributes)
            .field("components", &self.component_kinds())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Entity(String),
    Broadcast,
}

/// One `accept()` call that reported consumption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consumption {
    pub tick: u64,
    pub mtype: String,
    pub source: String,
    pub entity: String,
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EntityError {
    #[error("unknown component kind `{0}`")]
    UnknownComponentKind(String),
    #[error("duplicate blueprint `{0}`")]
    DuplicateBlueprint(String),
    #[error("unknown blueprint `{0}`")]
    UnknownBlueprint(String),
    #[error("entity name `{0}` already in use")]
    DuplicateName(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("component `{kind}` not attached to `{entity}`")]
    ComponentAbsent { entity: String, kind: String },
    #[error("message stamped tick {message} but world is at tick {world}")]
    StaleTick { message: u64, world: u64 },
    #[error("message type `{0}` is not in the declared vocabulary")]
    UndeclaredMessageType(String),
    #[error("blueprint file: {0}")]
    BlueprintParse(String),
}

/// Single-threaded container of entities and the message bus between them.
pub struct EntityWorld {
    tick: u64,
    entities: Vec<Entity>,
    by_name: HashMap<String, usize>,
    kinds: ComponentRegistry,
    vocabulary: Option<BTreeSet<String>>,
    consumptions: Vec<Consumption>,
    emitted: Vec<Message>,
}

impl EntityWorld {
    pub fn new(kinds: ComponentRegistry) -> Self {
        EntityWorld {
            tick: 0,
            entities: Vec::new(),
            by_name: HashMap::new(),
            kinds,
            vocabulary: None,
            consumptions: Vec::new(),
            emitted: Vec::new(),
        }
    }

    /// Restricts message types accepted by [`send`](Self::send).
    pub fn declare_vocabulary<I, S>(&mut self, types: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.vocabulary = Some(types.into_iter().map(Into::into).collect());
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn advance_tick(&mut self) {
        self.tick += 1;
    }

    pub fn kinds(&self) -> &ComponentRegistry {
        &self.kinds
    }

    pub fn kinds_mut(&mut self) -> &mut ComponentRegistry {
        &mut self.kinds
    }

    pub fn spawn(
        &mut self,
        blueprints: &BlueprintRegistry,
        etype: &str,
        name: &str,
        overrides: Attributes,
    ) -> Result<EntityId, EntityError> {
        let bp = blueprints
            .get(etype)
            .ok_or_else(|| EntityError::UnknownBlueprint(etype.to_owned()))?;
        if self.by_name.contains_key(name) {
            return Err(EntityError::DuplicateName(name.to_owned()));
        }
        let components = bp
            .components
            .iter()
            .map(|k| self.kinds.create(k))
            .collect::<Result<Vec<_>, _>>()?;
        let mut attributes = bp.defaults.clone();
        attributes.extend(overrides);
        let id = EntityId(self.entities.len() as u32);
        self.by_name.insert(name.to_owned(), self.entities.len());
        self.entities.push(Entity {
            id,
            reference: EntityRef::new(name, etype),
            initial: attributes.clone(),
            attributes,
            components,
        });
        Ok(id)
    }

    pub fn attach(&mut self, entity: &str, kind: &str) -> Result<(), EntityError> {
        let component = self.kinds.create(kind)?;
        self.entity_mut(entity)?.components.push(component);
        Ok(())
    }

    pub fn detach(&mut self, entity: &str, kind: &str) -> Result<(), EntityError> {
        let e = self.entity_mut(entity)?;
        let pos = e
            .components
            .iter()
            .position(|c| c.kind() == kind)
            .ok_or_else(|| EntityError::ComponentAbsent {
                entity: entity.to_owned(),
                kind: kind.to_owned(),
            })?;
        e.components.remove(pos);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entity> {
        self.by_name.get(name).map(|&i| &self.entities[i])
    }

    pub fn entity(&self, name: &str) -> Result<&Entity, EntityError> {
        self.get(name).ok_or_else(|| EntityError::UnknownEntity(name.to_owned()))
    }

    fn entity_mut(&mut self, name: &str) -> Result<&mut Entity, EntityError> {
        match self.by_name.get(name) {
            Some(&i) => Ok(&mut self.entities[i]),
            None => Err(EntityError::UnknownEntity(name.to_owned())),
        }
    }

    pub fn reference(&self, name: &str) -> Result<EntityRef, EntityError> {
        self.entity(name).map(|e| e.reference.clone())
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter()
    }

    pub fn set_attribute(&mut self, entity: &str, key: &str, value: Value) -> Result<(), EntityError> {
        self.entity_mut(entity)?.attributes.insert(key.to_owned(), value);
        Ok(())
    }

    /// Restores every entity's attributes to their spawn-time values.
    pub fn reset_attributes(&mut self) {
        for e in &mut self.entities {
            e.attributes = e.initial.clone();
        }
    }

    pub fn consumptions(&self) -> &[Consumption] {
        &self.consumptions
    }

    /// Messages sent since the last drain, follow-ups included, in emission order.
    pub fn drain_emitted(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.emitted)
    }

    /// Delivers `msg` and any follow-ups it triggers. Returns how many
    /// components consumed `msg` itself.
    pub fn send(&mut self, msg: Message, scope: Scope) -> Result<usize, EntityError> {
        if msg.tick != self.tick {
            return Err(EntityError::StaleTick {
                message: msg.tick,
                world: self.tick,
            });
        }
        self.check_vocabulary(&msg.mtype)?;
        if let Scope::Entity(name) = &scope {
            self.entity(name)?;
        }
        let mut queue = VecDeque::new();
        let consumed = self.deliver(msg, scope, &mut queue);
        while let Some((m, s)) = queue.pop_front() {
            self.deliver(m, s, &mut queue);
        }
        Ok(consumed)
    }

    /// Runs every component's `update` hook in delivery order.
    pub fn update(&mut self) {
        let mut queue = VecDeque::new();
        for i in 0..self.entities.len() {
            let mut outbox = Vec::new();
            let e = &mut self.entities[i];
            for c in e.components.iter_mut() {
                let mut ctx = Context {
                    tick: self.tick,
                    owner: &e.reference,
                    attributes: &mut e.attributes,
                    outbox: &mut outbox,
                };
                c.update(&mut ctx);
            }
            let source = self.entities[i].reference.clone();
            self.enqueue(source, outbox, &mut queue);
        }
        while let Some((m, s)) = queue.pop_front() {
            self.deliver(m, s, &mut queue);
        }
    }

    fn check_vocabulary(&self, mtype: &str) -> Result<(), EntityError> {
        match &self.vocabulary {
            Some(v) if !v.contains(mtype) => Err(EntityError::UndeclaredMessageType(mtype.to_owned())),
            _ => Ok(()),
        }
    }

    fn deliver(&mut self, msg: Message, scope: Scope, queue: &mut VecDeque<(Message, Scope)>) -> usize {
        if let Some(&si) = self.by_name.get(&msg.source.name) {
            for c in self.entities[si].components.iter_mut() {
                c.observe_outgoing(&msg);
            }
        }
        let targets: Vec<usize> = match &scope {
            Scope::Entity(name) => self.by_name.get(name).copied().into_iter().collect(),
            Scope::Broadcast => (0..self.entities.len()).collect(),
        };
        let mut consumed = 0;
        for i in targets {
            let mut outbox = Vec::new();
            let e = &mut self.entities[i];
            for c in e.components.iter_mut() {
                let mut ctx = Context {
                    tick: self.tick,
                    owner: &e.reference,
                    attributes: &mut e.attributes,
                    outbox: &mut outbox,
                };
                if c.accept(&msg, &mut ctx) {
                    consumed += 1;
                    self.consumptions.push(Consumption {
                        tick: msg.tick,
                        mtype: msg.mtype.clone(),
                        source: msg.source.name.clone(),
                        entity: e.reference.name.clone(),
                        component: c.kind().to_owned(),
                    });
                }
            }
            let source = self.entities[i].reference.clone();
            self.enqueue(source, outbox, queue);
        }
        self.emitted.push(msg);
        consumed
    }

    fn enqueue(&self, source: EntityRef, outbox: Vec<Outgoing>, queue: &mut VecDeque<(Message, Scope)>) {
        for out in outbox {
            if self.check_vocabulary(&out.mtype).is_err() {
                continue;
            }
            let (target, scope) = match out.target {
                Some(name) => match self.get(&name) {
                    Some(t) => (Some(t.reference.clone()), Scope::Entity(name)),
                    None => continue,
                },
                None => (None, Scope::Broadcast),
            };
            let mut m = Message::new(self.tick, out.mtype, source.clone(), target);
            m.payload = out.payload;
            queue.push_back((m, scope));
        }
    }
}

impl fmt::Debug for EntityWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EntityWorld")
            .field("tick", &self.tick)
            .field("entities", &self.entities)
            .finish()
    }
}
