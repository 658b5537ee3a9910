//! Raw input log: one `<tick> KB <CODE> <DOWN|UP>` event per line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RecorderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InputCode {
    Up,
    Down,
    Left,
    Right,
    Clone,
    Wait,
}

impl InputCode {
    pub const ALL: [InputCode; 6] = [
        InputCode::Up,
        InputCode::Down,
        InputCode::Left,
        InputCode::Right,
        InputCode::Clone,
        InputCode::Wait,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputCode::Up => "UP",
            InputCode::Down => "DOWN",
            InputCode::Left => "LEFT",
            InputCode::Right => "RIGHT",
            InputCode::Clone => "CLONE",
            InputCode::Wait => "WAIT",
        }
    }

    pub fn is_direction(self) -> bool {
        matches!(self, InputCode::Up | InputCode::Down | InputCode::Left | InputCode::Right)
    }
}

impl fmt::Display for InputCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputCode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InputCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown input code `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Edge {
    Down,
    Up,
}

impl Edge {
    pub fn as_str(self) -> &'static str {
        match self {
            Edge::Down => "DOWN",
            Edge::Up => "UP",
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Edge {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DOWN" => Ok(Edge::Down),
            "UP" => Ok(Edge::Up),
            _ => Err(format!("unknown edge `{s}`")),
        }
    }
}

pub const KEYBOARD: &str = "KB";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawInputEvent {
    pub tick: u64,
    pub device: String,
    pub code: InputCode,
    pub edge: Edge,
}

impl RawInputEvent {
    pub fn key(tick: u64, code: InputCode, edge: Edge) -> Self {
        RawInputEvent {
            tick,
            device: KEYBOARD.to_owned(),
            code,
            edge,
        }
    }

    pub fn at(&self, tick: u64) -> Self {
        RawInputEvent { tick, ..self.clone() }
    }
}

impl fmt::Display for RawInputEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.tick, self.device, self.code, self.edge)
    }
}

/// Parses one raw-log line (without trailing newline).
pub fn parse_line(line: &str, line_no: usize) -> Result<RawInputEvent, RecorderError> {
    let err = |msg: String| RecorderError::RawParse { line: line_no, msg };
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [tick, device, code, edge] = fields[..] else {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    };
    let tick = tick.parse::<u64>().map_err(|e| err(format!("bad tick `{tick}`: {e}")))?;
    if device != KEYBOARD {
        return Err(err(format!("unsupported device `{device}`")));
    }
    Ok(RawInputEvent {
        tick,
        device: device.to_owned(),
        code: code.parse().map_err(err)?,
        edge: edge.parse().map_err(err)?,
    })
}

/// Parses a whole raw log. Blank lines and `#` comments are skipped.
/// Ticks must be non-decreasing and a code may change edge at most once per tick.
pub fn parse_raw_log(text: &str) -> Result<Vec<RawInputEvent>, RecorderError> {
    let mut out: Vec<RawInputEvent> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let ev = parse_line(trimmed, i + 1)?;
        if let Some(prev) = out.last() {
            if ev.tick < prev.tick {
                return Err(RecorderError::RawParse {
                    line: i + 1,
                    msg: format!("tick {} after tick {}", ev.tick, prev.tick),
                });
            }
        }
        if out.iter().rev().take_while(|p| p.tick == ev.tick).any(|p| p.code == ev.code) {
            return Err(RecorderError::RawParse {
                line: i + 1,
                msg: format!("second {} edge at tick {}", ev.code, ev.tick),
            });
        }
        out.push(ev);
    }
    Ok(out)
}

pub fn write_raw_log(events: &[RawInputEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&e.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_writes() {
        let text = "0 KB RIGHT DOWN\n3 KB RIGHT UP\n3 KB CLONE DOWN\n";
        let evs = parse_raw_log(text).unwrap();
        assert_eq!(evs.len(), 3);
        assert_eq!(evs[2], RawInputEvent::key(3, InputCode::Clone, Edge::Down));
        assert_eq!(write_raw_log(&evs), text);
    }

    #[test]
    fn rejects_decreasing_ticks() {
        let err = parse_raw_log("5 KB UP DOWN\n4 KB UP UP\n").unwrap_err();
        assert!(matches!(err, RecorderError::RawParse { line: 2, .. }));
    }

    #[test]
    fn rejects_double_edge_same_tick() {
        let err = parse_raw_log("5 KB UP DOWN\n5 KB UP UP\n").unwrap_err();
        assert!(matches!(err, RecorderError::RawParse { line: 2, .. }));
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(parse_raw_log("x KB UP DOWN").is_err());
        assert!(parse_raw_log("1 MOUSE UP DOWN").is_err());
        assert!(parse_raw_log("1 KB JUMP DOWN").is_err());
        assert!(parse_raw_log("1 KB UP").is_err());
    }
}
