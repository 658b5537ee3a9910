//! Terminal play: crossterm keyboard input and a redrawn glyph grid.
//!
//! Keys: arrows or WASD move, `c` or space clones, `q` or Esc quits. Terminals
//! that report key releases get true DOWN/UP edges; elsewhere each press is a
//! one-tick tap.

use std::io::{stdout, Write};
use std::time::Duration;

use crossterm::event::{
    self, Event, KeyCode, KeyEvent, KeyEventKind, KeyboardEnhancementFlags, PopKeyboardEnhancementFlags,
    PushKeyboardEnhancementFlags,
};
use crossterm::{cursor, execute, queue, terminal};
use replaytest::entity::Message;
use replaytest::game::World;
use replaytest::recorder::{record_session_with, Edge, InputCode, InputSource, RawInputEvent, RecordedSession, RecorderFilter};

pub fn draw_plain(world: &World) {
    let mut out = stdout();
    let _ = queue!(out, cursor::MoveTo(0, 0), terminal::Clear(terminal::ClearType::All));
    for line in world.render().lines() {
        let _ = write!(out, "{line}\r\n");
    }
    let ghosts = world.ghosts().count();
    let _ = write!(out, "tick {}  life tick {}  ghosts {ghosts}\r\n", world.tick(), world.life_tick());
    let _ = out.flush();
}

fn code_of(key: &KeyEvent) -> Option<InputCode> {
    match key.code {
        KeyCode::Up | KeyCode::Char('w') => Some(InputCode::Up),
        KeyCode::Down | KeyCode::Char('s') => Some(InputCode::Down),
        KeyCode::Left | KeyCode::Char('a') => Some(InputCode::Left),
        KeyCode::Right | KeyCode::Char('d') => Some(InputCode::Right),
        KeyCode::Char('c') | KeyCode::Char(' ') => Some(InputCode::Clone),
        _ => None,
    }
}

struct Keyboard {
    releases: bool,
    taps: Vec<InputCode>,
    held: Vec<InputCode>,
}

impl Keyboard {
    fn push(&self, out: &mut Vec<RawInputEvent>, tick: u64, code: InputCode, edge: Edge) {
        if !out.iter().any(|e| e.code == code) {
            out.push(RawInputEvent::key(tick, code, edge));
        }
    }
}

impl InputSource for Keyboard {
    fn poll(&mut self, tick: u64) -> Option<Vec<RawInputEvent>> {
        let mut out = Vec::new();
        for code in std::mem::take(&mut self.taps) {
            self.push(&mut out, tick, code, Edge::Up);
        }
        while event::poll(Duration::ZERO).unwrap_or(false) {
            let Ok(Event::Key(key)) = event::read() else {
                continue;
            };
            if matches!(key.code, KeyCode::Char('q') | KeyCode::Esc) {
                return None;
            }
            let Some(code) = code_of(&key) else {
                continue;
            };
            match key.kind {
                KeyEventKind::Press if self.releases => {
                    if !self.held.contains(&code) {
                        self.held.push(code);
                        self.push(&mut out, tick, code, Edge::Down);
                    }
                }
                KeyEventKind::Release => {
                    self.held.retain(|c| *c != code);
                    self.push(&mut out, tick, code, Edge::Up);
                }
                KeyEventKind::Press => {
                    if !out.iter().any(|e| e.code == code) {
                        out.push(RawInputEvent::key(tick, code, Edge::Down));
                        self.taps.push(code);
                    }
                }
                KeyEventKind::Repeat => {}
            }
        }
        Some(out)
    }
}

/// Runs a keyboard session until the level ends, `q` is pressed or `max_ticks` pass.
pub fn run(
    world: &mut World,
    filter: &RecorderFilter,
    max_ticks: u64,
    delay: Duration,
) -> Result<RecordedSession, String> {
    terminal::enable_raw_mode().map_err(|e| e.to_string())?;
    let releases = terminal::supports_keyboard_enhancement().unwrap_or(false);
    let mut out = stdout();
    if releases {
        let _ = execute!(out, PushKeyboardEnhancementFlags(KeyboardEnhancementFlags::REPORT_EVENT_TYPES));
    }
    let _ = execute!(out, terminal::EnterAlternateScreen, cursor::Hide);
    let mut keys = Keyboard {
        releases,
        taps: Vec::new(),
        held: Vec::new(),
    };
    draw_plain(world);
    let mut on_tick = |w: &World, _: &[Message]| {
        draw_plain(w);
        std::thread::sleep(delay);
    };
    let result = record_session_with(world, &mut keys, filter, max_ticks, &mut on_tick);
    if releases {
        let _ = execute!(out, PopKeyboardEnhancementFlags);
    }
    let _ = execute!(out, cursor::Show, terminal::LeaveAlternateScreen);
    let _ = terminal::disable_raw_mode();
    result.map_err(|e| e.to_string())
}
