use std::collections::HashMap;
use std::fmt::Write as _;

use crate::entity::{Attributes, BlueprintRegistry, EntityWorld, Message, Scope, Value};
use crate::recorder::{CRecorder, Edge, InputCode, RawInputEvent, RecorderFilter, TraceSink};

use super::components::{self, VOCABULARY};
use super::level::{Cell, FeatureKind, LevelMap, Pos, PLATFORM_NAME, PORTAL_NAME, RAY_NAME};
use super::GameError;

pub const PLAYER: &str = "Player";
const ENEMY: &str = "Enemy";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Avatar,
    Ghost,
    /// Scripted rival; replays the level's enemy script every life.
    Rival,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Actor {
    pub name: String,
    pub etype: String,
    pub role: Role,
    pub pos: Pos,
    pub alive: bool,
    held: Vec<InputCode>,
    script: Vec<RawInputEvent>,
    cursor: usize,
    finished: bool,
}

impl Actor {
    fn new(name: &str, etype: &str, role: Role, pos: Pos, script: Vec<RawInputEvent>) -> Self {
        Actor {
            name: name.to_owned(),
            etype: etype.to_owned(),
            role,
            pos,
            alive: true,
            held: Vec::new(),
            script,
            cursor: 0,
            finished: false,
        }
    }

    /// Direction keys currently held, most recent last.
    pub fn held(&self) -> &[InputCode] {
        &self.held
    }

    fn apply_edge(&mut self, code: InputCode, edge: Edge) {
        if !code.is_direction() {
            return;
        }
        self.held.retain(|c| *c != code);
        if edge == Edge::Down {
            self.held.push(code);
        }
    }

    fn heading(&self) -> Option<(i32, i32)> {
        self.held.last().map(|c| direction(*c))
    }
}

pub(crate) fn direction(code: InputCode) -> (i32, i32) {
    match code {
        InputCode::Up => (0, -1),
        InputCode::Down => (0, 1),
        InputCode::Left => (-1, 0),
        InputCode::Right => (1, 0),
        _ => (0, 0),
    }
}

/// One running level. Everything is single-threaded and deterministic: the
/// same map, blueprints and input log always produce the same messages.
pub struct World {
    map: LevelMap,
    blueprints: BlueprintRegistry,
    entities: EntityWorld,
    cell_owner: HashMap<Pos, usize>,
    life_tick: u64,
    life_start: u64,
    actors: Vec<Actor>,
    clone_scripts: Vec<Vec<RawInputEvent>>,
    life_inputs: Vec<RawInputEvent>,
    session_inputs: Vec<RawInputEvent>,
    completed: bool,
    seed: u64,
    headless: bool,
    recorder: Option<(RecorderFilter, TraceSink)>,
    ghost_deaths: Vec<(u64, String)>,
}

impl World {
    pub fn load(text: &str, blueprints: &BlueprintRegistry) -> Result<World, GameError> {
        World::new(LevelMap::parse(text)?, blueprints)
    }

    /// Level with the bundled blueprints.
    pub fn load_default(text: &str) -> Result<World, GameError> {
        World::load(text, &components::default_blueprints())
    }

    pub fn new(map: LevelMap, blueprints: &BlueprintRegistry) -> Result<World, GameError> {
        let mut entities = EntityWorld::new(components::component_registry());
        entities.declare_vocabulary(VOCABULARY);
        entities.spawn(blueprints, "Player", PLAYER, Attributes::new())?;
        let mut cell_owner = HashMap::new();
        for (i, f) in map.features().iter().enumerate() {
            let mut overrides = Attributes::new();
            if let Some(t) = &f.target {
                overrides.insert("target".into(), Value::Str(t.clone()));
            }
            entities.spawn(blueprints, f.kind.etype(), &f.name, overrides)?;
            for c in &f.cells {
                cell_owner.insert(*c, i);
            }
        }
        if map.enemy_start.is_some() {
            entities.spawn(blueprints, "Enemy", ENEMY, Attributes::new())?;
        }
        let mut world = World {
            map,
            blueprints: blueprints.clone(),
            entities,
            cell_owner,
            life_tick: 0,
            life_start: 0,
            actors: Vec::new(),
            clone_scripts: Vec::new(),
            life_inputs: Vec::new(),
            session_inputs: Vec::new(),
            completed: false,
            seed: 0,
            headless: false,
            recorder: None,
            ghost_deaths: Vec::new(),
        };
        world.reset_actors();
        Ok(world)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Headless copy at the same tick, rebuilt by replaying the session inputs.
    /// Recorders are not carried over.
    pub fn fork(&self) -> Result<World, GameError> {
        let mut w = World::new(self.map.clone(), &self.blueprints)?.with_seed(self.seed);
        w.set_headless(true);
        let mut events = self.session_inputs.iter().peekable();
        while w.tick() < self.tick() {
            let t = w.tick();
            let mut now = Vec::new();
            while let Some(e) = events.next_if(|e| e.tick == t) {
                now.push(e.clone());
            }
            w.step(&now)?;
        }
        Ok(w)
    }

    fn reset_actors(&mut self) {
        let start = self.map.player_start;
        let mut actors = vec![Actor::new(PLAYER, "Player", Role::Avatar, start, Vec::new())];
        for (i, script) in self.clone_scripts.iter().enumerate() {
            actors.push(Actor::new(&ghost_name(i), "Clone", Role::Ghost, start, script.clone()));
        }
        if let Some(e) = self.map.enemy_start {
            actors.push(Actor::new(ENEMY, "Enemy", Role::Rival, e, self.map.enemy_script.clone()));
        }
        self.actors = actors;
    }

    // --- accessors -------------------------------------------------------

    /// Session tick: strictly increasing, never reset by cloning.
    pub fn tick(&self) -> u64 {
        self.entities.tick()
    }

    /// Ticks since the current life started.
    pub fn life_tick(&self) -> u64 {
        self.life_tick
    }

    pub fn map(&self) -> &LevelMap {
        &self.map
    }

    pub fn entities(&self) -> &EntityWorld {
        &self.entities
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }

    pub fn actor(&self, name: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.name == name)
    }

    pub fn avatar(&self) -> &Actor {
        &self.actors[0]
    }

    pub fn ghosts(&self) -> impl Iterator<Item = &Actor> {
        self.actors.iter().filter(|a| a.role == Role::Ghost)
    }

    pub fn clone_scripts(&self) -> &[Vec<RawInputEvent>] {
        &self.clone_scripts
    }

    /// Every input edge applied so far, stamped with session ticks.
    pub fn session_inputs(&self) -> &[RawInputEvent] {
        &self.session_inputs
    }

    pub fn completed(&self) -> bool {
        self.completed
    }

    pub fn avatar_alive(&self) -> bool {
        self.actors[0].alive
    }

    pub fn is_over(&self) -> bool {
        self.completed || !self.avatar_alive()
    }

    pub fn ghost_deaths(&self) -> &[(u64, String)] {
        &self.ghost_deaths
    }

    pub fn is_door_open(&self, door: &str) -> bool {
        self.entities.get(door).is_some_and(|e| e.bool_attr("isOpen"))
    }

    pub fn ray_active(&self) -> bool {
        self.entities.get(RAY_NAME).is_some_and(|e| e.bool_attr("isActive"))
    }

    pub fn platform_pos(&self) -> Option<Pos> {
        self.map.platform_at(self.life_tick)
    }

    /// Cells owned by an entity: its map cells, or its position for actors.
    pub fn entity_cells(&self, name: &str) -> Result<Vec<Pos>, GameError> {
        if let Some(a) = self.actor(name) {
            return Ok(vec![a.pos]);
        }
        match self.map.feature(name) {
            Some(f) if f.kind == FeatureKind::Platform => Ok(self.platform_pos().into_iter().collect()),
            Some(f) => Ok(f.cells.clone()),
            None => Err(GameError::UnknownEntity(name.to_owned())),
        }
    }

    pub(crate) fn owner_name(&self, p: Pos) -> Option<&str> {
        self.cell_owner.get(&p).map(|&i| self.map.features()[i].name.as_str())
    }

    /// Actors standing on `p`, in actor order.
    pub fn actors_at(&self, p: Pos) -> impl Iterator<Item = &Actor> {
        self.actors.iter().filter(move |a| a.alive && a.pos == p)
    }

    /// Whether an actor may step onto `p` right now (walls, bounds and closed doors block).
    pub fn walkable(&self, p: Pos) -> bool {
        match self.map.cell(p) {
            Cell::Wall => false,
            Cell::Door(_) => self.owner_name(p).is_some_and(|d| self.is_door_open(d)),
            _ => true,
        }
    }

    // --- recorder & presentation hooks ----------------------------------

    /// Attaches a `CRecorder` to every entity the filter watches, now and for
    /// ghosts spawned later. Returns the shared trace sink.
    pub fn install_recorder(&mut self, filter: RecorderFilter) -> TraceSink {
        self.remove_recorders();
        let sink = TraceSink::default();
        let (s, f) = (sink.clone(), filter.clone());
        self.entities
            .kinds_mut()
            .register(CRecorder::KIND, move || Box::new(CRecorder::new(s.clone(), f.clone())));
        let watched: Vec<String> = self
            .entities
            .entities()
            .map(|e| e.name().to_owned())
            .filter(|n| filter.watches(n))
            .collect();
        for name in watched {
            self.entities.attach(&name, CRecorder::KIND).expect("entity exists");
        }
        self.recorder = Some((filter, sink.clone()));
        sink
    }

    pub fn remove_recorders(&mut self) {
        let names: Vec<String> = self
            .entities
            .entities()
            .filter(|e| e.has_component(CRecorder::KIND))
            .map(|e| e.name().to_owned())
            .collect();
        for name in names {
            while self.entities.detach(&name, CRecorder::KIND).is_ok() {}
        }
        self.entities
            .kinds_mut()
            .register(CRecorder::KIND, || Box::new(CRecorder::detached()));
        self.recorder = None;
    }

    /// Accelerated mode: strips every presentation component.
    pub fn set_headless(&mut self, headless: bool) {
        self.headless = headless;
        let names: Vec<String> = self.entities.entities().map(|e| e.name().to_owned()).collect();
        for name in names {
            let has = self.entities.entity(&name).map(|e| e.has_component("CGlyph")).unwrap_or(false);
            if headless && has {
                let _ = self.entities.detach(&name, "CGlyph");
            } else if !headless && !has {
                let _ = self.entities.attach(&name, "CGlyph");
            }
        }
    }

    pub fn headless(&self) -> bool {
        self.headless
    }

    // --- simulation --------------------------------------------------------

    fn send(&mut self, mtype: &str, source: &str, target: Option<&str>) -> Result<(), GameError> {
        let src = self.entities.reference(source)?;
        let (dst, scope) = match target {
            Some(t) => (Some(self.entities.reference(t)?), Scope::Entity(t.to_owned())),
            None => (None, Scope::Broadcast),
        };
        self.entities.send(Message::new(self.tick(), mtype, src, dst), scope)?;
        Ok(())
    }

    fn finish_tick(&mut self) {
        self.entities.advance_tick();
        self.life_tick += 1;
    }

    /// Advances one fixed step. `inputs` are the avatar's edges for this tick.
    pub fn step(&mut self, inputs: &[RawInputEvent]) -> Result<Vec<Message>, GameError> {
        let tick = self.tick();
        if let Some(e) = inputs.iter().find(|e| e.tick != tick) {
            return Err(GameError::TickMismatch { event: e.tick, world: tick });
        }
        if self.is_over() {
            return Err(GameError::SessionOver);
        }
        self.session_inputs.extend(inputs.iter().cloned());
        let lt = self.life_tick;
        self.life_inputs.extend(inputs.iter().map(|e| e.at(lt)));

        if inputs.iter().any(|e| e.code == InputCode::Clone && e.edge == Edge::Down) {
            return self.clone_restart();
        }

        let before: Vec<(Pos, bool)> = self.actors.iter().map(|a| (a.pos, a.alive)).collect();

        // (1) platform
        if lt > 0 {
            if let (Some(prev), Some(now)) = (self.map.platform_at(lt - 1), self.map.platform_at(lt)) {
                if prev != now {
                    for a in self.actors.iter_mut().filter(|a| a.alive && a.pos == prev) {
                        a.pos = now;
                    }
                }
            }
        }

        // (2) ghosts and rival replay their scripts, (3) then the avatar
        for i in (1..self.actors.len()).chain(std::iter::once(0)) {
            if !self.actors[i].alive {
                continue;
            }
            if i == 0 {
                for e in inputs {
                    self.actors[0].apply_edge(e.code, e.edge);
                }
            } else {
                self.replay_script(i, lt);
            }
            if let Some((dx, dy)) = self.actors[i].heading() {
                let next = self.actors[i].pos.offset(dx, dy);
                if self.walkable(next) {
                    self.actors[i].pos = next;
                }
            }
        }

        // (4) pressure: presses first so a hand-over keeps the switch down
        for i in 0..self.actors.len() {
            let (pos, alive) = (self.actors[i].pos, self.actors[i].alive);
            if alive && (!before[i].1 || before[i].0 != pos) {
                if let Some(sw) = self.switch_at(pos) {
                    let actor = self.actors[i].name.clone();
                    self.send("PRESSED", &actor, Some(&sw))?;
                }
            }
        }
        for i in 0..self.actors.len() {
            let (pos, alive) = (self.actors[i].pos, self.actors[i].alive);
            if before[i].1 && (!alive || before[i].0 != pos) {
                if let Some(sw) = self.switch_at(before[i].0) {
                    let actor = self.actors[i].name.clone();
                    self.send("RELEASED", &actor, Some(&sw))?;
                }
            }
        }

        // (5) hazards
        let platform = self.map.platform_at(lt);
        for i in 0..self.actors.len() {
            if !self.actors[i].alive {
                continue;
            }
            let pos = self.actors[i].pos;
            let killer = match self.map.cell(pos) {
                Cell::RayCell if self.ray_active() => Some(RAY_NAME.to_owned()),
                Cell::Track if platform != Some(pos) => Some(PLATFORM_NAME.to_owned()),
                Cell::Door(_) if !self.walkable(pos) => self.owner_name(pos).map(str::to_owned),
                _ => None,
            };
            if let Some(killer) = killer {
                self.actors[i].alive = false;
                let name = self.actors[i].name.clone();
                if self.actors[i].role != Role::Avatar {
                    self.ghost_deaths.push((tick, name.clone()));
                }
                self.send("KILLED", &killer, Some(&name))?;
            }
        }

        // (6) portal and triggers
        for i in 0..self.actors.len() {
            let a = &self.actors[i];
            if !a.alive || a.pos == before[i].0 {
                continue;
            }
            let (pos, name, role) = (a.pos, a.name.clone(), a.role);
            match self.map.cell(pos) {
                Cell::Portal => {
                    self.send("TOUCH", &name, Some(PORTAL_NAME))?;
                    if role == Role::Avatar {
                        self.completed = true;
                    }
                }
                Cell::Trigger => {
                    let trig = self.owner_name(pos).expect("trigger has owner").to_owned();
                    self.send("TOUCHED", &name, Some(&trig))?;
                }
                _ => {}
            }
        }

        self.entities.update();
        let msgs = self.entities.drain_emitted();
        self.finish_tick();
        Ok(msgs)
    }

    fn switch_at(&self, p: Pos) -> Option<String> {
        match self.map.cell(p) {
            Cell::Switch(_) | Cell::RaySwitch => self.owner_name(p).map(str::to_owned),
            _ => None,
        }
    }

    fn replay_script(&mut self, i: usize, lt: u64) {
        let a = &mut self.actors[i];
        if a.finished {
            return;
        }
        while a.cursor < a.script.len() && a.script[a.cursor].tick <= lt {
            let e = a.script[a.cursor].clone();
            a.cursor += 1;
            if e.tick < lt {
                continue;
            }
            if e.code == InputCode::Clone && e.edge == Edge::Down && a.role == Role::Ghost {
                a.finished = true;
                a.held.clear();
                return;
            }
            a.apply_edge(e.code, e.edge);
        }
    }

    /// Ends the current life: emits `CLONE`, stores this life's inputs as a
    /// new ghost script and restarts the level with one ghost per script.
    pub fn clone_restart(&mut self) -> Result<Vec<Message>, GameError> {
        if self.is_over() {
            return Err(GameError::SessionOver);
        }
        self.send("CLONE", PLAYER, None)?;
        let msgs = self.entities.drain_emitted();
        let script = std::mem::take(&mut self.life_inputs);
        self.clone_scripts.push(script);
        self.entities.reset_attributes();
        let name = ghost_name(self.clone_scripts.len() - 1);
        if self.entities.get(&name).is_none() {
            self.entities.spawn(&self.blueprints, "Clone", &name, Attributes::new())?;
            if self.headless {
                let _ = self.entities.detach(&name, "CGlyph");
            }
            if self.recorder.as_ref().is_some_and(|(f, _)| f.watches(&name)) {
                self.entities.attach(&name, CRecorder::KIND)?;
            }
        }
        self.reset_actors();
        self.completed = false;
        self.entities.advance_tick();
        self.life_tick = 0;
        self.life_start = self.tick();
        Ok(msgs)
    }

    pub fn life_start(&self) -> u64 {
        self.life_start
    }

    /// Order-independent fingerprint of all game state (recorders excluded).
    pub fn state_hash(&self) -> u64 {
        let mut s = String::new();
        let _ = write!(s, "{}|{}|{}|{}|", self.tick(), self.life_tick, self.completed, self.clone_scripts.len());
        for a in &self.actors {
            let _ = write!(s, "{}@{}:{}:{}|", a.name, a.pos, a.alive, a.held.len());
        }
        for e in self.entities.entities() {
            let _ = write!(s, "{}=", e.name());
            for (k, v) in &e.attributes {
                let _ = write!(s, "{k}:{v},");
            }
            s.push('|');
        }
        let _ = write!(s, "{:?}", self.platform_pos());
        fnv1a(s.as_bytes())
    }

    /// Glyph view of the current state: `@` avatar, `&` ghost, `E` rival,
    /// `=` platform, `'` open door, `:` inactive ray.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let platform = self.platform_pos();
        for y in 0..self.map.height {
            for x in 0..self.map.width {
                let p = Pos::new(x, y);
                let c = match (self.actors_at(p).next(), self.map.cell(p)) {
                    (Some(a), _) => match a.role {
                        Role::Avatar => '@',
                        Role::Ghost => '&',
                        Role::Rival => 'E',
                    },
                    (None, _) if Some(p) == platform => '=',
                    (None, Cell::Door(_)) if self.walkable(p) => '\'',
                    (None, Cell::RayCell) if !self.ray_active() => ':',
                    (None, Cell::PlayerStart | Cell::EnemyStart | Cell::Hop) => '.',
                    (None, cell) => cell.glyph(),
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn ghost_name(i: usize) -> String {
    format!("Clone{}", i + 1)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("tick", &self.tick())
            .field("life_tick", &self.life_tick)
            .field("actors", &self.actors)
            .finish()
    }
}
