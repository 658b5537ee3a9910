//! Play-over-the-network protocol. Transport-agnostic: messages are one JSON
//! object per line or per WebSocket text frame.
//!
//! Server to client:
//! - `{"kind":"hello","version":1,"width":W,"height":H,"legend":{...}}` once;
//! - `{"kind":"frame","tick":T,"grid":[...],"actors":[...],"doors":[...],"switches":[...],"recording":B}`
//!   for tick 0 and for every later tick whose state changed;
//! - `{"kind":"ack","tick":T,"code":"RIGHT","edge":"DOWN"}` for each accepted input;
//! - `{"kind":"error","message":"..."}`.
//!
//! Client to server: `{"kind":"input","code":"RIGHT","edge":"DOWN"}` and `{"kind":"bye"}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::{GameError, GameStateQuery, Role, World};
use crate::recorder::{Edge, InputCode, RawInputEvent};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Avatar,
    Ghost,
    Rival,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameActor {
    pub name: String,
    pub kind: ActorKind,
    pub cell: [i32; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoorState {
    pub name: String,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchState {
    pub name: String,
    pub pressed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub grid: Vec<String>,
    pub actors: Vec<FrameActor>,
    pub doors: Vec<DoorState>,
    pub switches: Vec<SwitchState>,
    pub recording: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServerMsg {
    Hello {
        version: u32,
        width: i32,
        height: i32,
        legend: BTreeMap<String, String>,
    },
    Frame(StateFrame),
    Ack {
        tick: u64,
        code: InputCode,
        edge: Edge,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClientMsg {
    Input { code: InputCode, edge: Edge },
    Bye,
}

impl ServerMsg {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

impl ClientMsg {
    pub fn parse(text: &str) -> Result<ClientMsg, String> {
        serde_json::from_str(text.trim()).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client message serializes")
    }
}

fn legend() -> BTreeMap<String, String> {
    [
        ("#", "wall"),
        (".", "floor"),
        ("@", "avatar"),
        ("&", "ghost"),
        ("E", "rival"),
        ("G", "portal"),
        ("a-d", "door switch"),
        ("A-D", "closed door"),
        ("'", "open door"),
        ("r", "ray switch"),
        ("!", "active ray"),
        (":", "inactive ray"),
        ("~", "platform track"),
        ("=", "platform"),
        ("t", "trigger"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

pub fn hello(world: &World) -> ServerMsg {
    ServerMsg::Hello {
        version: PROTOCOL_VERSION,
        width: world.map().width,
        height: world.map().height,
        legend: legend(),
    }
}

pub fn frame(world: &World, recording: bool) -> StateFrame {
    let actors = world
        .actors()
        .iter()
        .filter(|a| a.alive)
        .map(|a| FrameActor {
            name: a.name.clone(),
            kind: match a.role {
                Role::Avatar => ActorKind::Avatar,
                Role::Ghost => ActorKind::Ghost,
                Role::Rival => ActorKind::Rival,
            },
            cell: [a.pos.x, a.pos.y],
        })
        .collect();
    let mut doors = Vec::new();
    let mut switches = Vec::new();
    for e in world.entities().entities() {
        match e.etype() {
            "Door" => doors.push(DoorState {
                name: e.name().to_owned(),
                open: world.is_door_open(e.name()),
            }),
            "DoorButton" | "RaySwitch" => switches.push(SwitchState {
                name: e.name().to_owned(),
                pressed: world.witness(e.name(), "isPressed").ok().flatten().is_some(),
            }),
            _ => {}
        }
    }
    StateFrame {
        tick: world.tick(),
        grid: world.render().lines().map(str::to_owned).collect(),
        actors,
        doors,
        switches,
        recording,
    }
}

/// Server side of one connection. Inputs are stamped with the tick they will
/// be applied on; a second edge of the same code within a tick moves to the
/// next free tick, keeping the log well formed.
#[derive(Debug)]
pub struct ServeSession {
    pub world: World,
    pub recording: bool,
    queue: Vec<RawInputEvent>,
    closed: bool,
    last: Option<StateFrame>,
}

impl ServeSession {
    pub fn new(world: World, recording: bool) -> Self {
        ServeSession {
            world,
            recording,
            queue: Vec::new(),
            closed: false,
            last: None,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed || self.world.is_over()
    }

    pub fn handle(&mut self, msg: ClientMsg) -> Option<ServerMsg> {
        match msg {
            ClientMsg::Bye => {
                self.closed = true;
                None
            }
            ClientMsg::Input { .. } if self.is_closed() => Some(ServerMsg::Error {
                message: "session closed".into(),
            }),
            ClientMsg::Input { code, edge } => {
                let mut tick = self.world.tick();
                while self.queue.iter().any(|e| e.tick == tick && e.code == code) {
                    tick += 1;
                }
                self.queue.push(RawInputEvent::key(tick, code, edge));
                Some(ServerMsg::Ack { tick, code, edge })
            }
        }
    }

    pub fn handle_text(&mut self, text: &str) -> Option<ServerMsg> {
        match ClientMsg::parse(text) {
            Ok(m) => self.handle(m),
            Err(e) => Some(ServerMsg::Error { message: e }),
        }
    }

    /// The first frame, sent right after `hello`.
    pub fn initial_frame(&mut self) -> ServerMsg {
        let f = frame(&self.world, self.recording);
        self.last = Some(f.clone());
        ServerMsg::Frame(f)
    }

    /// Steps one tick with the inputs due now. Returns a frame if anything changed.
    pub fn tick(&mut self) -> Result<Option<ServerMsg>, GameError> {
        let now = self.world.tick();
        let (due, later): (Vec<_>, Vec<_>) = self.queue.drain(..).partition(|e| e.tick == now);
        self.queue = later;
        self.world.step(&due)?;
        let f = frame(&self.world, self.recording);
        let same = self.last.as_ref().is_some_and(|l| StateFrame { tick: f.tick, ..l.clone() } == f);
        self.last = Some(f.clone());
        Ok((!same).then_some(ServerMsg::Frame(f)))
    }
}
