//! Session recording: the `CRecorder` component, raw input logs, message
//! traces and trace comparison.

pub mod diff;
pub mod filter;
pub mod raw;
pub mod trace;

use std::cell::RefCell;
use std::collections::VecDeque;
use std::path::Path;
use std::rc::Rc;

use crate::entity::{Component, Context, Message};
use crate::game::{GameError, World};

pub use diff::{diff_traces, DiffOptions, DiffVerdict, MatchKeys, TraceDiff};
pub use filter::RecorderFilter;
pub use raw::{Edge, InputCode, RawInputEvent};
pub use trace::TraceRecord;

#[derive(Debug, thiserror::Error)]
pub enum RecorderError {
    #[error("raw log line {line}: {msg}")]
    RawParse { line: usize, msg: String },
    #[error("trace line {line}: {msg}")]
    TraceParse { line: usize, msg: String },
    #[error("recorder filter: {0}")]
    Filter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Game(#[from] GameError),
}

pub type TraceSink = Rc<RefCell<Vec<TraceRecord>>>;

/// Writes the owning entity's outgoing messages to a trace when the filter
/// subscribes to them. A detached recorder drops everything.
pub struct CRecorder {
    sink: Option<TraceSink>,
    filter: RecorderFilter,
}

impl CRecorder {
    pub const KIND: &'static str = "CRecorder";

    pub fn new(sink: TraceSink, filter: RecorderFilter) -> Self {
        CRecorder {
            sink: Some(sink),
            filter,
        }
    }

    pub fn detached() -> Self {
        CRecorder {
            sink: None,
            filter: RecorderFilter::none(),
        }
    }
}

impl Component for CRecorder {
    fn kind(&self) -> &str {
        Self::KIND
    }

    fn accept(&mut self, _msg: &Message, _ctx: &mut Context<'_>) -> bool {
        false
    }

    fn observe_outgoing(&mut self, msg: &Message) {
        if let Some(sink) = &self.sink {
            if self.filter.allows(&msg.source.name, &msg.mtype) {
                sink.borrow_mut().push(TraceRecord::from(msg));
            }
        }
    }
}

/// Live input feed for a recording session.
pub trait InputSource {
    /// Edges to apply at `tick`, or `None` once the source is closed.
    fn poll(&mut self, tick: u64) -> Option<Vec<RawInputEvent>>;
}

/// Replays a raw log as if it were typed live. Never closes.
#[derive(Debug, Clone)]
pub struct ScriptedInput {
    events: VecDeque<RawInputEvent>,
}

impl ScriptedInput {
    pub fn new(events: Vec<RawInputEvent>) -> Self {
        ScriptedInput { events: events.into() }
    }
}

impl InputSource for ScriptedInput {
    fn poll(&mut self, tick: u64) -> Option<Vec<RawInputEvent>> {
        let mut out = Vec::new();
        while self.events.front().is_some_and(|e| e.tick <= tick) {
            let e = self.events.pop_front().expect("front checked");
            out.push(e.at(tick));
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordedSession {
    pub raw: Vec<RawInputEvent>,
    pub trace: Vec<TraceRecord>,
    pub ticks: u64,
}

impl RecordedSession {
    pub fn raw_text(&self) -> String {
        raw::write_raw_log(&self.raw)
    }

    pub fn trace_text(&self) -> String {
        trace::write_trace(&self.trace)
    }

    pub fn write_files(&self, raw_path: &Path, trace_path: &Path) -> Result<(), RecorderError> {
        std::fs::write(raw_path, self.raw_text())?;
        std::fs::write(trace_path, self.trace_text())?;
        Ok(())
    }
}

/// Runs `world` from its current tick, feeding `input` until the level is
/// completed, the avatar dies, the source closes or `max_ticks` elapse.
/// `on_tick` runs after every step (rendering, pacing).
pub fn record_session_with(
    world: &mut World,
    input: &mut dyn InputSource,
    filter: &RecorderFilter,
    max_ticks: u64,
    on_tick: &mut dyn FnMut(&World, &[Message]),
) -> Result<RecordedSession, RecorderError> {
    let sink = world.install_recorder(filter.clone());
    let start = world.tick();
    while !world.is_over() && world.tick() - start < max_ticks {
        let Some(events) = input.poll(world.tick()) else {
            break;
        };
        let msgs = world.step(&events)?;
        on_tick(world, &msgs);
    }
    world.remove_recorders();
    let trace = sink.borrow().clone();
    Ok(RecordedSession {
        raw: world.session_inputs().to_vec(),
        trace,
        ticks: world.tick() - start,
    })
}

pub fn record_session(
    world: &mut World,
    input: &mut dyn InputSource,
    filter: &RecorderFilter,
    max_ticks: u64,
) -> Result<RecordedSession, RecorderError> {
    record_session_with(world, input, filter, max_ticks, &mut |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_input_delivers_by_tick() {
        let mut s = ScriptedInput::new(vec![
            RawInputEvent::key(0, InputCode::Right, Edge::Down),
            RawInputEvent::key(2, InputCode::Right, Edge::Up),
        ]);
        assert_eq!(s.poll(0).unwrap().len(), 1);
        assert!(s.poll(1).unwrap().is_empty());
        assert_eq!(s.poll(2).unwrap()[0].edge, Edge::Up);
        assert!(s.poll(3).unwrap().is_empty());
    }
}
