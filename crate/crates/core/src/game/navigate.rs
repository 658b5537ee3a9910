//! Shortest-path navigation for the avatar.
//!
//! Breadth-first search over `(cell, life tick mod platform cycle)`, replaying
//! the same carry/move/hazard order as [`World::step`]. Door and ray state is
//! taken as frozen at planning time, so callers re-plan every tick. The search
//! never steps onto hop cells, the portal, triggers or switches other than the
//! goal, since doing so changes the world.

use std::collections::{HashMap, HashSet, VecDeque};

use super::level::{Cell, DIRS};
use super::world::direction;
use super::{GameError, Pos, World};
use crate::recorder::{Edge, InputCode, RawInputEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Wait];

    pub fn code(self) -> Option<InputCode> {
        match self {
            Move::Up => Some(InputCode::Up),
            Move::Down => Some(InputCode::Down),
            Move::Left => Some(InputCode::Left),
            Move::Right => Some(InputCode::Right),
            Move::Wait => None,
        }
    }

    fn delta(self) -> (i32, i32) {
        self.code().map(direction).unwrap_or((0, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Navigation {
    /// Moves to perform, one per tick; empty when already there.
    Plan(Vec<Move>),
    Unreachable,
}

impl Navigation {
    pub fn first(&self) -> Option<Move> {
        match self {
            Navigation::Plan(p) => Some(p.first().copied().unwrap_or(Move::Wait)),
            Navigation::Unreachable => None,
        }
    }
}

/// Plans a route for the avatar onto any cell of entity `goal`.
pub fn navigate(world: &World, goal: &str) -> Result<Navigation, GameError> {
    let cells: HashSet<Pos> = world.entity_cells(goal)?.into_iter().collect();
    Ok(navigate_to(world, &cells))
}

/// Plans a route for the avatar onto any of `goals`.
pub fn navigate_to(world: &World, goals: &HashSet<Pos>) -> Navigation {
    let avatar = world.avatar();
    if !avatar.alive {
        return Navigation::Unreachable;
    }
    if goals.contains(&avatar.pos) {
        return Navigation::Plan(Vec::new());
    }
    let map = world.map();
    let cycle = map.platform_cycle();
    let key = |p: Pos, lt: u64| (p, lt % cycle, lt == 0);
    let start = (avatar.pos, world.life_tick());
    let mut parent: HashMap<(Pos, u64, bool), ((Pos, u64, bool), Move)> = HashMap::new();
    let mut seen = HashSet::from([key(start.0, start.1)]);
    let mut queue = VecDeque::from([start]);
    while let Some((p, lt)) = queue.pop_front() {
        for mv in Move::ALL {
            let Some(next) = simulate(world, goals, p, lt, mv) else {
                continue;
            };
            let k = key(next, lt + 1);
            if !seen.insert(k) {
                continue;
            }
            parent.insert(k, (key(p, lt), mv));
            if goals.contains(&next) {
                let mut plan = vec![mv];
                let mut cur = key(p, lt);
                while let Some(&(prev, m)) = parent.get(&cur) {
                    plan.push(m);
                    cur = prev;
                }
                plan.reverse();
                return Navigation::Plan(plan);
            }
            queue.push_back((next, lt + 1));
        }
    }
    Navigation::Unreachable
}

/// One avatar step from `p` during life tick `lt`; `None` if it dies or
/// lands somewhere the planner avoids.
fn simulate(world: &World, goals: &HashSet<Pos>, p: Pos, lt: u64, mv: Move) -> Option<Pos> {
    let map = world.map();
    let mut p = p;
    if lt > 0 {
        if let (Some(prev), Some(now)) = (map.platform_at(lt - 1), map.platform_at(lt)) {
            if prev == p {
                p = now;
            }
        }
    }
    let (dx, dy) = mv.delta();
    if mv != Move::Wait {
        let next = p.offset(dx, dy);
        if !world.walkable(next) {
            return None;
        }
        let avoided = matches!(
            map.cell(next),
            Cell::Hop | Cell::Portal | Cell::Trigger | Cell::Switch(_) | Cell::RaySwitch
        );
        if avoided && !goals.contains(&next) {
            return None;
        }
        p = next;
    }
    match map.cell(p) {
        Cell::RayCell if world.ray_active() => None,
        Cell::Track if map.platform_at(lt) != Some(p) => None,
        _ => Some(p),
    }
}

/// Edges that make `mv` the only held direction.
pub fn controller_edges(held: &[InputCode], mv: Move, tick: u64) -> Vec<RawInputEvent> {
    let want = mv.code();
    let mut out: Vec<RawInputEvent> = held
        .iter()
        .filter(|c| Some(**c) != want)
        .map(|c| RawInputEvent::key(tick, *c, Edge::Up))
        .collect();
    if let Some(c) = want {
        if !held.contains(&c) {
            out.push(RawInputEvent::key(tick, c, Edge::Down));
        }
    }
    out
}

/// Cells orthogonally adjacent to `p`.
pub fn neighbours(p: Pos) -> impl Iterator<Item = Pos> {
    DIRS.iter().map(move |&(dx, dy)| p.offset(dx, dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(text: &str) -> World {
        World::load_default(text).unwrap()
    }

    /// Moves a fresh world through `moves` with the controller; returns the
    /// avatar's cell after each step, or `None` if it died.
    fn replay(text: &str, moves: &[Move]) -> Option<Vec<Pos>> {
        let mut w = level(text);
        let mut out = Vec::new();
        for &m in moves {
            let edges = controller_edges(w.avatar().held(), m, w.tick());
            w.step(&edges).ok()?;
            if !w.avatar_alive() {
                return None;
            }
            out.push(w.avatar().pos);
        }
        Some(out)
    }

    /// Independent oracle: breadth-first over move sequences, each one
    /// replayed from scratch on a real world.
    fn oracle_len(text: &str, goal: &str, depth: usize) -> Option<usize> {
        let w = level(text);
        let goals: HashSet<Pos> = w.entity_cells(goal).unwrap().into_iter().collect();
        let forbidden = |p: Pos| {
            matches!(
                w.map().cell(p),
                Cell::Hop | Cell::Portal | Cell::Trigger | Cell::Switch(_) | Cell::RaySwitch
            ) && !goals.contains(&p)
        };
        if goals.contains(&w.avatar().pos) {
            return Some(0);
        }
        let cycle = w.map().platform_cycle();
        let mut frontier = vec![Vec::<Move>::new()];
        let mut seen = HashSet::new();
        for d in 1..=depth {
            let mut next = Vec::new();
            for seq in &frontier {
                for m in Move::ALL {
                    let mut s = seq.clone();
                    s.push(m);
                    let Some(path) = replay(text, &s) else { continue };
                    if path.iter().any(|p| forbidden(*p)) {
                        continue;
                    }
                    let last = *path.last().unwrap();
                    if goals.contains(&last) {
                        return Some(d);
                    }
                    if seen.insert((last, d as u64 % cycle)) {
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
        None
    }

    const OPEN: &str = "7 4 0\n#######\n#P...G#\n#.###.#\n#######\n";
    const WALLED: &str = "7 3 0\n#######\n#P.#.G#\n#######\n";
    const RAY: &str = "7 4 0\n#######\n#P.!.G#\n#r....#\n#######\nr=!\n";
    const PLATFORM: &str = "8 3 2\n########\n#P.~~~G#\n########\n";
    const ROUTE: &str = "9 5 0\n#########\n#P..#...#\n#.#.%.#G#\n#.......#\n#########\n";

    #[test]
    fn straight_corridor() {
        let w = level(OPEN);
        assert_eq!(
            navigate(&w, "EndPortal").unwrap(),
            Navigation::Plan(vec![Move::Right; 4])
        );
    }

    #[test]
    fn walls_make_unreachable() {
        assert_eq!(navigate(&level(WALLED), "EndPortal").unwrap(), Navigation::Unreachable);
    }

    #[test]
    fn active_ray_blocks_but_switch_can_be_goal() {
        let w = level(RAY);
        let plan = navigate(&w, "EndPortal").unwrap();
        let Navigation::Plan(moves) = plan else { panic!() };
        let cells = replay(RAY, &moves).expect("alive");
        assert!(!cells.contains(&Pos::new(3, 1)));
        assert_eq!(navigate(&w, "RaySwitch1").unwrap(), Navigation::Plan(vec![Move::Down]));
    }

    #[test]
    fn plans_match_oracle() {
        for (text, goal) in [
            (OPEN, "EndPortal"),
            (RAY, "EndPortal"),
            (PLATFORM, "EndPortal"),
            (ROUTE, "EndPortal"),
            (ROUTE, "Player"),
        ] {
            let w = level(text);
            let got = match navigate(&w, goal).unwrap() {
                Navigation::Plan(p) => {
                    let cells = replay(text, &p).expect("plan keeps avatar alive");
                    let goals = w.entity_cells(goal).unwrap();
                    assert!(p.is_empty() || goals.contains(cells.last().unwrap()), "{goal} in\n{text}");
                    Some(p.len())
                }
                Navigation::Unreachable => None,
            };
            assert_eq!(got, oracle_len(text, goal, 9), "{goal} in\n{text}");
        }
    }

    #[test]
    fn platform_ride_waits_for_platform() {
        let w = level(PLATFORM);
        let Navigation::Plan(p) = navigate(&w, "EndPortal").unwrap() else { panic!() };
        assert!(p.contains(&Move::Wait) || p.len() > 5);
        let cells = replay(PLATFORM, &p).unwrap();
        assert_eq!(*cells.last().unwrap(), Pos::new(6, 1));
    }

    #[test]
    fn controller_edges_switch_direction() {
        let e = controller_edges(&[InputCode::Right], Move::Down, 4);
        assert_eq!(
            e,
            [
                RawInputEvent::key(4, InputCode::Right, Edge::Up),
                RawInputEvent::key(4, InputCode::Down, Edge::Down)
            ]
        );
        assert!(controller_edges(&[InputCode::Down], Move::Down, 4).is_empty());
        assert_eq!(controller_edges(&[InputCode::Left], Move::Wait, 1).len(), 1);
    }
}
