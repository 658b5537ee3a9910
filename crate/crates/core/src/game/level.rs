//! Level files.
//!
//! ```text
//! <W> <H> <period>
//! <H rows of exactly W glyphs>
//! <directives>
//! ```
//!
//! Glyphs: `#` wall, `.` floor, `P` player start, `G` portal, `a`-`d` door
//! switches, `A`-`D` doors, `r` ray switch, `!` ray cell, `~` platform track,
//! `t` touch trigger, `E` scripted rival start, `%` hop cell (walkable, but not
//! part of the navigation graph). Cells outside the grid count as walls.
//!
//! Directives, one per line after the grid:
//! - `x=Y` wires switch glyph `x` to door glyph `Y` (`r=!` wires ray switches
//!   to the ray cells);
//! - `enemy <tick> <CODE> <DOWN|UP>` appends to the rival's input script, with
//!   ticks relative to the start of each life;
//! - blank lines and lines starting with `#` after the grid are ignored.
//!
//! `period` is the number of ticks the platform waits on each track cell; it
//! must be at least 1 when the level has track cells. An open track is ridden
//! back and forth; a closed track is ridden round in one direction.

use std::collections::BTreeMap;
use std::fmt;

use crate::recorder::raw::{InputCode, RawInputEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Pos {
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Floor,
    PlayerStart,
    Portal,
    /// Door switch, glyph `a`..`d`.
    Switch(char),
    /// Door, glyph `A`..`D`.
    Door(char),
    Track,
    RayCell,
    RaySwitch,
    Trigger,
    EnemyStart,
    Hop,
}

impl Cell {
    fn from_glyph(c: char) -> Option<Cell> {
        Some(match c {
            '#' => Cell::Wall,
            '.' => Cell::Floor,
            'P' => Cell::PlayerStart,
            'G' => Cell::Portal,
            'a'..='d' => Cell::Switch(c),
            'A'..='D' => Cell::Door(c),
            '~' => Cell::Track,
            '!' => Cell::RayCell,
            'r' => Cell::RaySwitch,
            't' => Cell::Trigger,
            'E' => Cell::EnemyStart,
            '%' => Cell::Hop,
            _ => return None,
        })
    }

    pub fn glyph(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Floor => '.',
            Cell::PlayerStart => 'P',
            Cell::Portal => 'G',
            Cell::Switch(c) | Cell::Door(c) => c,
            Cell::Track => '~',
            Cell::RayCell => '!',
            Cell::RaySwitch => 'r',
            Cell::Trigger => 't',
            Cell::EnemyStart => 'E',
            Cell::Hop => '%',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LevelError {
    #[error("level parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("level invariant violated: {0}")]
    InvariantViolation(String),
}

fn parse_err(line: usize, col: usize, msg: impl Into<String>) -> LevelError {
    LevelError::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

fn violation(msg: impl Into<String>) -> LevelError {
    LevelError::InvariantViolation(msg.into())
}

/// Kind of map feature an entity stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Door,
    DoorButton,
    Ray,
    RaySwitch,
    Platform,
    Portal,
    Trigger,
}

impl FeatureKind {
    pub fn etype(self) -> &'static str {
        match self {
            FeatureKind::Door => "Door",
            FeatureKind::DoorButton => "DoorButton",
            FeatureKind::Ray => "Ray",
            FeatureKind::RaySwitch => "RaySwitch",
            FeatureKind::Platform => "Platform",
            FeatureKind::Portal => "Portal",
            FeatureKind::Trigger => "Trigger",
        }
    }
}

/// One entity derived from the map, with the cells it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    pub cells: Vec<Pos>,
    /// Entity the feature sends its on/off messages to (switches only).
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMap {
    pub width: i32,
    pub height: i32,
    pub period: u32,
    cells: Vec<Cell>,
    pub wiring: BTreeMap<char, char>,
    pub enemy_script: Vec<RawInputEvent>,
    /// Track cells in travel order.
    pub track: Vec<Pos>,
    /// Closed track: the platform runs round it instead of back and forth.
    pub track_loop: bool,
    pub player_start: Pos,
    pub enemy_start: Option<Pos>,
    features: Vec<Feature>,
}

pub fn switch_name(glyph: char) -> String {
    format!("Button{}", glyph as u32 - 'a' as u32 + 1)
}

pub fn door_name(glyph: char) -> String {
    format!("Door{}", glyph as u32 - 'A' as u32 + 1)
}

pub const RAY_NAME: &str = "Ray1";
pub const PLATFORM_NAME: &str = "Platform1";
pub const PORTAL_NAME: &str = "EndPortal";

impl LevelMap {
    pub fn parse(text: &str) -> Result<LevelMap, LevelError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty level file"))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        if nums.len() != 3 {
            return Err(parse_err(hline, 1, "header must be `W H period`"));
        }
        let field = |i: usize, what: &str| -> Result<i64, LevelError> {
            let col = header.find(nums[i]).unwrap_or(0) + 1;
            nums[i]
                .parse::<i64>()
                .map_err(|_| parse_err(hline, col, format!("{what} must be an integer")))
        };
        let (width, height, period) = (field(0, "width")?, field(1, "height")?, field(2, "period")?);
        if width < 1 || height < 1 {
            return Err(parse_err(hline, 1, "width and height must be positive"));
        }
        if !(0..=u32::MAX as i64).contains(&period) {
            return Err(parse_err(hline, 1, "period must be non-negative"));
        }
        let (width, height) = (width as i32, height as i32);

        let mut cells = Vec::with_capacity((width * height) as usize);
        for row in 0..height {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(hline + row as usize + 1, 1, format!("expected {height} grid rows")))?;
            let glyphs: Vec<char> = line.chars().collect();
            if glyphs.len() != width as usize {
                return Err(parse_err(
                    ln,
                    glyphs.len().min(width as usize) + 1,
                    format!("row has {} glyphs, expected {width}", glyphs.len()),
                ));
            }
            for (col, g) in glyphs.into_iter().enumerate() {
                let cell = Cell::from_glyph(g).ok_or_else(|| parse_err(ln, col + 1, format!("unknown glyph `{g}`")))?;
                cells.push(cell);
            }
        }

        let mut wiring = BTreeMap::new();
        let mut enemy_script = Vec::new();
        for (ln, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("enemy ") {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let [tick, code, edge] = fields[..] else {
                    return Err(parse_err(ln, 1, "expected `enemy <tick> <CODE> <EDGE>`"));
                };
                let tick = tick.parse::<u64>().map_err(|_| parse_err(ln, 7, "bad enemy tick"))?;
                let code = code.parse::<InputCode>().map_err(|e| parse_err(ln, 7, e))?;
                let edge = edge.parse().map_err(|e: String| parse_err(ln, 7, e))?;
                if enemy_script.last().is_some_and(|p: &RawInputEvent| p.tick > tick) {
                    return Err(parse_err(ln, 7, "enemy script ticks must not decrease"));
                }
                enemy_script.push(RawInputEvent::key(tick, code, edge));
                continue;
            }
            let chars: Vec<char> = line.chars().collect();
            match chars[..] {
                [s, '=', d] => {
                    let ok = matches!((s, d), ('a'..='d', 'A'..='D') | ('r', '!'));
                    if !ok {
                        return Err(parse_err(ln, 1, format!("cannot wire `{s}` to `{d}`")));
                    }
                    if wiring.insert(s, d).is_some() {
                        return Err(violation(format!("switch `{s}` wired twice")));
                    }
                }
                _ => return Err(parse_err(ln, 1, format!("unrecognised directive `{line}`"))),
            }
        }

        let mut map = LevelMap {
            width,
            height,
            period: period as u32,
            cells,
            wiring,
            enemy_script,
            track: Vec::new(),
            track_loop: false,
            player_start: Pos::new(0, 0),
            enemy_start: None,
            features: Vec::new(),
        };
        map.validate()?;
        Ok(map)
    }

    fn positions_of(&self, pred: impl Fn(Cell) -> bool) -> Vec<Pos> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Pos::new(x, y)))
            .filter(|p| pred(self.cell(*p)))
            .collect()
    }

    fn validate(&mut self) -> Result<(), LevelError> {
        let starts = self.positions_of(|c| c == Cell::PlayerStart);
        if starts.len() != 1 {
            return Err(violation(format!("expected exactly one player start, found {}", starts.len())));
        }
        self.player_start = starts[0];
        let portals = self.positions_of(|c| c == Cell::Portal);
        if portals.is_empty() {
            return Err(violation("level has no portal"));
        }
        let enemies = self.positions_of(|c| c == Cell::EnemyStart);
        if enemies.len() > 1 {
            return Err(violation("at most one enemy start is allowed"));
        }
        self.enemy_start = enemies.first().copied();
        if self.enemy_start.is_none() && !self.enemy_script.is_empty() {
            return Err(violation("enemy script given but the map has no `E`"));
        }

        let mut features = Vec::new();
        for door in 'A'..='D' {
            let cells = self.positions_of(|c| c == Cell::Door(door));
            if !cells.is_empty() {
                features.push(Feature {
                    name: door_name(door),
                    kind: FeatureKind::Door,
                    cells,
                    target: None,
                });
            }
        }
        for sw in 'a'..='d' {
            let cells = self.positions_of(|c| c == Cell::Switch(sw));
            if cells.is_empty() {
                if self.wiring.contains_key(&sw) {
                    return Err(violation(format!("wiring for absent switch `{sw}`")));
                }
                continue;
            }
            if cells.len() > 1 {
                return Err(violation(format!("switch `{sw}` appears {} times", cells.len())));
            }
            let door = *self
                .wiring
                .get(&sw)
                .ok_or_else(|| violation(format!("switch `{sw}` is not wired")))?;
            if !features.iter().any(|f| f.kind == FeatureKind::Door && f.name == door_name(door)) {
                return Err(violation(format!("switch `{sw}` wired to missing door `{door}`")));
            }
            features.push(Feature {
                name: switch_name(sw),
                kind: FeatureKind::DoorButton,
                cells,
                target: Some(door_name(door)),
            });
        }
        let rays = self.positions_of(|c| c == Cell::RayCell);
        let ray_switches = self.positions_of(|c| c == Cell::RaySwitch);
        if !rays.is_empty() {
            features.push(Feature {
                name: RAY_NAME.into(),
                kind: FeatureKind::Ray,
                cells: rays.clone(),
                target: None,
            });
        }
        if !ray_switches.is_empty() {
            if self.wiring.get(&'r') != Some(&'!') {
                return Err(violation("ray switches present but `r=!` wiring missing"));
            }
            if rays.is_empty() {
                return Err(violation("ray switch wired to missing ray"));
            }
            for (i, p) in ray_switches.into_iter().enumerate() {
                features.push(Feature {
                    name: format!("RaySwitch{}", i + 1),
                    kind: FeatureKind::RaySwitch,
                    cells: vec![p],
                    target: Some(RAY_NAME.into()),
                });
            }
        } else if self.wiring.contains_key(&'r') {
            return Err(violation("wiring for absent ray switch"));
        }

        (self.track, self.track_loop) = self.order_track()?;
        if !self.track.is_empty() {
            if self.period == 0 {
                return Err(violation("levels with a platform track need period >= 1"));
            }
            features.push(Feature {
                name: PLATFORM_NAME.into(),
                kind: FeatureKind::Platform,
                cells: self.track.clone(),
                target: None,
            });
        }
        features.push(Feature {
            name: PORTAL_NAME.into(),
            kind: FeatureKind::Portal,
            cells: portals,
            target: None,
        });
        for (i, p) in self.positions_of(|c| c == Cell::Trigger).into_iter().enumerate() {
            features.push(Feature {
                name: format!("doorTrigger{}", i + 1),
                kind: FeatureKind::Trigger,
                cells: vec![p],
                target: None,
            });
        }
        self.features = features;
        Ok(())
    }

    /// Orders track cells along a simple path. An open path starts at the
    /// endpoint first in reading order; a closed loop starts at its first cell
    /// in reading order and heads towards its first neighbour in `DIRS` order.
    fn order_track(&self) -> Result<(Vec<Pos>, bool), LevelError> {
        let cells = self.positions_of(|c| c == Cell::Track);
        if cells.len() <= 1 {
            return Ok((cells, false));
        }
        let neighbours = |p: Pos| -> Vec<Pos> {
            DIRS.iter()
                .map(|&(dx, dy)| p.offset(dx, dy))
                .filter(|q| self.cell(*q) == Cell::Track)
                .collect()
        };
        if cells.iter().any(|&p| neighbours(p).len() > 2) {
            return Err(violation("platform track branches"));
        }
        let endpoint = cells.iter().copied().find(|&p| neighbours(p).len() == 1);
        let closed = endpoint.is_none();
        if closed && cells.iter().any(|&p| neighbours(p).len() != 2) {
            return Err(violation("platform track must be a path or a loop"));
        }
        let start = endpoint.unwrap_or(cells[0]);
        let mut order = vec![start];
        let mut prev: Option<Pos> = None;
        let mut cur = start;
        while let Some(next) = neighbours(cur).into_iter().find(|q| Some(*q) != prev && *q != start) {
            prev = Some(cur);
            cur = next;
            order.push(cur);
        }
        if order.len() != cells.len() {
            return Err(violation("platform track cells are not contiguous"));
        }
        Ok((order, closed))
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn cell(&self, p: Pos) -> Cell {
        if self.in_bounds(p) {
            self.cells[(p.y * self.width + p.x) as usize]
        } else {
            Cell::Wall
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Feature owning cell `p`, if any.
    pub fn feature_at(&self, p: Pos) -> Option<&Feature> {
        self.features.iter().find(|f| f.cells.contains(&p))
    }

    /// Platform position schedule: indices into `track`, round a loop or
    /// back and forth along an open path.
    pub fn platform_schedule(&self) -> Vec<usize> {
        let n = self.track.len();
        match n {
            0 => Vec::new(),
            1 => vec![0],
            _ if self.track_loop => (0..n).collect(),
            _ => (0..n).chain((1..n - 1).rev()).collect(),
        }
    }

    /// Track cell the platform occupies during life tick `t`.
    pub fn platform_at(&self, t: u64) -> Option<Pos> {
        let sched = self.platform_schedule();
        if sched.is_empty() {
            return None;
        }
        let slot = (t / self.period as u64) as usize % sched.len();
        Some(self.track[sched[slot]])
    }

    /// Ticks after which the platform schedule repeats (1 without a platform).
    pub fn platform_cycle(&self) -> u64 {
        match self.platform_schedule().len() {
            0 => 1,
            n => n as u64 * self.period as u64,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.width, self.height, self.period);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(self.cell(Pos::new(x, y)).glyph());
            }
            s.push('\n');
        }
        for (k, v) in &self.wiring {
            s.push_str(&format!("{k}={v}\n"));
        }
        for e in &self.enemy_script {
            s.push_str(&format!("enemy {} {} {}\n", e.tick, e.code, e.edge));
        }
        s
    }
}

pub(crate) const DIRS: [(i32, i32); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
