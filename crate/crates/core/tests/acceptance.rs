//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use replaytest::executor::{run_high_level, run_mixed, run_raw, FailureKind, LoadedTest, RunOptions, TestResult, Verdict};
use replaytest::game::navigate::{controller_edges, navigate};
use replaytest::game::{Move, Navigation, World};
use replaytest::petri::{instantiate, Marking, NetInstance, NetTemplate, NEUTRAL};
use replaytest::recorder::raw::parse_raw_log;
use replaytest::recorder::trace::parse_trace;
use replaytest::recorder::{record_session, Edge, InputCode, RawInputEvent, RecorderFilter, ScriptedInput, TraceRecord};

const C4_PLACE: &str = "S2";
const C4_LABEL: &str = "Is the button currently being pressed?";
const TRIGGER_MAX_TIME: u64 = 15000;
const NEUTRALITY_TICKS: u64 = 1000;

/// High-level trace of the level-1 walkthrough, as published.
const GOLDEN: [(&str, &str, &str); 8] = [
    ("Button 1", "OPEN", "Door 1"),
    ("Player", "CLONE", "-"),
    ("Button 1", "OPEN", "Door 1"),
    ("Button 2", "OPEN", "Door 2"),
    ("Player", "CLONE", "-"),
    ("Button 1", "OPEN", "Door 1"),
    ("Button 2", "OPEN", "Door 2"),
    ("Player", "TOUCH", "End portal"),
];

type Check = fn() -> Result<String, String>;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(assets().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn spec(name: &str) -> LoadedTest {
    LoadedTest::from_file(&assets().join("specs").join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn verdict_is(r: &TestResult, want: Verdict, what: &str) -> Result<(), String> {
    ensure(r.verdict == want, || format!("{what}: expected {want:?}, got {:?} ({})", r.verdict, r.reason))
}

fn record(level: &str, raw: &str) -> (World, Vec<TraceRecord>) {
    let mut world = World::load_default(&read(level)).unwrap();
    world.set_headless(true);
    let events = parse_raw_log(&read(raw)).unwrap();
    let filter = RecorderFilter::from_json(&read("filter.json")).unwrap();
    let session = record_session(&mut world, &mut ScriptedInput::new(events), &filter, 5000).unwrap();
    (world, session.trace)
}

fn norm(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase()
}

fn c1_golden() -> Result<String, String> {
    let (world, trace) = record("levels/level1.map", "fixtures/level1.raw");
    ensure(world.completed(), || "walkthrough did not complete the level".into())?;
    let got: Vec<(String, String, String)> = trace
        .iter()
        .map(|r| (norm(&r.source.name), norm(&r.mtype), norm(r.target_name().unwrap_or("-"))))
        .collect();
    let want: Vec<(String, String, String)> = GOLDEN.iter().map(|(s, t, d)| (norm(s), norm(t), norm(d))).collect();
    ensure(got == want, || format!("rows differ: {got:?}"))?;
    Ok(format!("{} rows", got.len()))
}

fn c2_fixpoint() -> Result<String, String> {
    let test = spec("level1-raw.json");
    let fixture = parse_trace(&read("fixtures/level1.trace")).unwrap();
    for i in 0..5 {
        let r = run_raw(&test, &RunOptions::default()).unwrap();
        verdict_is(&r, Verdict::Pass, &format!("run {i}"))?;
        ensure(r.trace_diff.is_identical(), || format!("run {i}: {}", r.trace_diff.summary()))?;
        ensure(r.trace == fixture, || format!("run {i}: trace is not tick-exact"))?;
    }
    Ok("5 identical replays".into())
}

fn c3_adaptation_success() -> Result<String, String> {
    let orig = World::load_default(&read("levels/level1.map")).unwrap();
    let moved = World::load_default(&read("levels/level1-moved.map")).unwrap();
    for b in ["Button1", "Button2"] {
        let (a, m) = (orig.entity_cells(b).unwrap(), moved.entity_cells(b).unwrap());
        ensure(a != m, || format!("{b} was not moved"))?;
    }
    let raw = run_raw(&spec("level1-moved-raw.json"), &RunOptions::default()).unwrap();
    verdict_is(&raw, Verdict::Timeout, "raw replay")?;
    let high = run_high_level(&spec("level1-moved-high.json"), &RunOptions::default()).unwrap();
    verdict_is(&high, Verdict::Pass, "high-level replay")?;
    Ok(format!("raw Timeout, high-level Pass in {} ticks", high.elapsed))
}

fn c4_adaptation_failure() -> Result<String, String> {
    let test = spec("level1-locked-high.json");
    let r = run_high_level(&test, &RunOptions::default()).unwrap();
    verdict_is(&r, Verdict::Fail, "high-level replay")?;
    ensure(r.failure == Some(FailureKind::AchieverUnreachable), || format!("failure kind {:?}", r.failure))?;
    ensure(r.elapsed < test.spec.max_time, || "run was not capped before max_time".into())?;
    let named = r.unmet_preconditions.iter().any(|u| u.place == C4_PLACE && u.label == C4_LABEL);
    ensure(named, || format!("unmet places: {:?}", r.unmet_preconditions))?;
    Ok(format!("Fail at tick {}: {}", r.elapsed, r.reason))
}

fn c5_level4() -> Result<String, String> {
    let text = read("levels/level4.map");
    let fresh = World::load_default(&text).unwrap();
    ensure(fresh.platform_pos().is_some(), || "no moving platform".into())?;
    ensure(fresh.ray_active(), || "no active ray".into())?;
    ensure(fresh.entity_cells("RaySwitch1").is_ok(), || "no ray switch".into())?;
    let direct = navigate(&fresh, "EndPortal").unwrap();
    ensure(direct == Navigation::Unreachable, || "portal reachable without clones".into())?;
    let (world, trace) = record("levels/level4.map", "fixtures/level4.raw");
    ensure(world.completed(), || "walkthrough did not complete the level".into())?;
    let clones = trace.iter().filter(|r| r.mtype == "CLONE").count();
    ensure(clones == 3, || format!("{clones} clones"))?;
    let fixture = parse_trace(&read("fixtures/level4.trace")).unwrap();
    ensure(trace == fixture, || "recording differs from the stored trace".into())?;
    let r = run_high_level(&spec("level4-high.json"), &RunOptions::default()).unwrap();
    verdict_is(&r, Verdict::Pass, "high-level replay")?;
    Ok(format!("3 clones, high-level Pass in {} ticks", r.elapsed))
}

fn c6_trigger() -> Result<String, String> {
    let cases = [
        ("trigger-player.json", Verdict::Pass),
        ("trigger-rival.json", Verdict::Fail),
        ("trigger-calm.json", Verdict::Timeout),
    ];
    let mut out = Vec::new();
    for (name, want) in cases {
        let test = spec(name);
        ensure(test.spec.max_time == TRIGGER_MAX_TIME, || format!("{name}: max_time {}", test.spec.max_time))?;
        let r = run_raw(&test, &RunOptions::default()).unwrap();
        verdict_is(&r, want, name)?;
        if want == Verdict::Fail {
            ensure(r.failure == Some(FailureKind::FailureCondition), || format!("{name}: {:?}", r.failure))?;
        }
        if want == Verdict::Timeout {
            ensure(r.elapsed == TRIGGER_MAX_TIME, || format!("{name}: elapsed {}", r.elapsed))?;
        }
        out.push(format!("{:?}", r.verdict));
    }
    Ok(out.join("/"))
}

// --- Petri nets against a brute-force oracle -------------------------------

const COLOURS: [&str; 2] = ["Clone", "Player"];

#[derive(Clone, Copy, PartialEq)]
enum ArcOpt {
    None,
    In,
    InGuarded,
    Out,
}

const ARC_OPTS: [ArcOpt; 4] = [ArcOpt::None, ArcOpt::In, ArcOpt::InGuarded, ArcOpt::Out];

/// `arcs[t][p]` relates place `p` and transition `t`.
#[derive(Clone)]
struct NetShape {
    places: usize,
    arcs: Vec<Vec<ArcOpt>>,
}

fn template_json(shape: &NetShape) -> String {
    let places: Vec<String> = (1..=shape.places).map(|i| format!(r#"{{"id": "S{i}", "label": "p{i}"}}"#)).collect();
    let transitions: Vec<String> =
        (1..=shape.arcs.len()).map(|i| format!(r#"{{"id": "T{i}", "label": "t{i}"}}"#)).collect();
    let mut arcs = Vec::new();
    for (t, row) in shape.arcs.iter().enumerate() {
        for (p, opt) in row.iter().enumerate() {
            let (s, tr) = (format!("S{}", p + 1), format!("T{}", t + 1));
            match opt {
                ArcOpt::None => {}
                ArcOpt::In => arcs.push(format!(r#"{{"from": "{s}", "to": "{tr}"}}"#)),
                ArcOpt::InGuarded => arcs.push(format!(r#"{{"from": "{s}", "to": "{tr}", "guard": ["Player"]}}"#)),
                ArcOpt::Out => arcs.push(format!(r#"{{"from": "{tr}", "to": "{s}"}}"#)),
            }
        }
    }
    format!(
        r#"{{"name": "gen", "places": [{}], "transitions": [{}], "arcs": [{}]}}"#,
        places.join(","),
        transitions.join(","),
        arcs.join(",")
    )
}

fn build(shape: &NetShape) -> NetInstance {
    let t = NetTemplate::from_json(&template_json(shape)).unwrap();
    instantiate(&t, &BTreeMap::new(), &BTreeMap::new(), &|_| true).unwrap()
}

/// Place index → colour → count.
type Counts = Vec<BTreeMap<String, u32>>;

fn to_marking(c: &Counts) -> Marking {
    let mut m = Marking::new();
    for (p, ms) in c.iter().enumerate() {
        for (col, n) in ms {
            for _ in 0..*n {
                m.add(&format!("S{}", p + 1), col);
            }
        }
    }
    m
}

/// Every marking reachable by firing `t` once under any token choice, plus the
/// one produced by taking the smallest admissible colour on each arc.
fn oracle_fire(shape: &NetShape, c: &Counts, t: usize) -> (BTreeSet<Marking>, Option<Marking>) {
    let row = &shape.arcs[t];
    let inputs: Vec<usize> = (0..shape.places).filter(|&p| matches!(row[p], ArcOpt::In | ArcOpt::InGuarded)).collect();
    let choices: Vec<Vec<String>> = inputs
        .iter()
        .map(|&p| {
            c[p].iter()
                .filter(|(col, n)| **n > 0 && (row[p] == ArcOpt::In || col.as_str() == "Player"))
                .map(|(col, _)| col.clone())
                .collect()
        })
        .collect();
    let mut all = BTreeSet::new();
    let mut canonical = None;
    let mut idx = vec![0usize; inputs.len()];
    if choices.iter().any(|c| c.is_empty()) {
        return (all, None);
    }
    loop {
        let mut next = c.clone();
        let mut colour = NEUTRAL.to_owned();
        let mut guarded_seen = false;
        for (k, &p) in inputs.iter().enumerate() {
            let col = &choices[k][idx[k]];
            let n = next[p].get_mut(col).unwrap();
            *n -= 1;
            if *n == 0 {
                next[p].remove(col);
            }
            if row[p] == ArcOpt::InGuarded && !guarded_seen {
                colour = col.clone();
                guarded_seen = true;
            }
        }
        for p in (0..shape.places).filter(|&p| row[p] == ArcOpt::Out) {
            *next[p].entry(colour.clone()).or_insert(0) += 1;
        }
        let m = to_marking(&next);
        if idx.iter().all(|&i| i == 0) {
            canonical = Some(m.clone());
        }
        all.insert(m);
        let mut k = 0;
        loop {
            if k == idx.len() {
                return (all, canonical);
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn check_marking(shape: &NetShape, net: &NetInstance, c: &Counts) -> Result<(), String> {
    let m = to_marking(c);
    for t in 0..shape.arcs.len() {
        let id = format!("T{}", t + 1);
        let (all, canonical) = oracle_fire(shape, c, t);
        let enabled = net.is_enabled(&m, &id).unwrap();
        ensure(enabled == !all.is_empty(), || format!("{id} enabled={enabled} at {m}"))?;
        if enabled {
            let got = net.fire(&m, &id).unwrap();
            ensure(all.contains(&got), || format!("{id} at {m} gave impossible {got}"))?;
            ensure(Some(&got) == canonical.as_ref(), || format!("{id} at {m} gave {got}"))?;
        } else {
            ensure(net.fire(&m, &id).is_err(), || format!("{id} fired while disabled at {m}"))?;
        }
    }
    Ok(())
}

/// Per-place multisets over two colours with at most two tokens.
fn place_options() -> Vec<BTreeMap<String, u32>> {
    let mk = |v: &[(&str, u32)]| v.iter().map(|(c, n)| ((*c).to_owned(), *n)).collect::<BTreeMap<_, _>>();
    vec![
        mk(&[]),
        mk(&[(COLOURS[0], 1)]),
        mk(&[(COLOURS[1], 1)]),
        mk(&[(COLOURS[0], 2)]),
        mk(&[(COLOURS[0], 1), (COLOURS[1], 1)]),
        mk(&[(COLOURS[1], 2)]),
    ]
}

/// Non-decreasing sequences of length `len` over `0..kinds`.
fn multisets(kinds: usize, len: usize) -> Vec<Vec<usize>> {
    if len == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in multisets(kinds, len - 1) {
        let lo = rest.last().copied().unwrap_or(0);
        for k in lo..kinds {
            let mut v = rest.clone();
            v.push(k);
            out.push(v);
        }
    }
    out
}

/// Single-transition nets are invariant under permuting places, so every
/// (arc, marking) assignment is covered by sorting places by arc kind and
/// taking markings non-decreasing within each kind.
fn check_single_transitions(places: usize, opts: &[BTreeMap<String, u32>]) -> Result<usize, String> {
    let mut checked = 0;
    for arc_kinds in multisets(ARC_OPTS.len(), places) {
        let shape = NetShape { places, arcs: vec![arc_kinds.iter().map(|&k| ARC_OPTS[k]).collect()] };
        let net = build(&shape);
        let mut groups: Vec<usize> = Vec::new();
        for k in 0..ARC_OPTS.len() {
            groups.push(arc_kinds.iter().filter(|&&a| a == k).count());
        }
        let mut all: Vec<Counts> = vec![Vec::new()];
        for &g in &groups {
            let picks = multisets(opts.len(), g);
            all = all
                .into_iter()
                .flat_map(|c| {
                    picks.iter().map(move |pick| {
                        let mut n = c.clone();
                        n.extend(pick.iter().map(|&i| opts[i].clone()));
                        n
                    })
                })
                .collect();
        }
        for c in &all {
            check_marking(&shape, &net, c)?;
            checked += 1;
        }
    }
    Ok(checked)
}

struct XorShift(u64);

impl XorShift {
    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

fn push_door_case() -> Result<(), String> {
    let t = NetTemplate::from_json(&read("nets/push-door.net.json")).map_err(|e| e.to_string())?;
    let net = instantiate(&t, &BTreeMap::new(), &BTreeMap::new(), &|_| true).map_err(|e| e.to_string())?;
    let mut m = Marking::new();
    m.add("S1", "Player");
    ensure(!net.is_enabled(&m, "T1").unwrap(), || "T1 enabled with the button unpushed".into())?;
    m.add("S2", "Player");
    ensure(net.is_enabled(&m, "T1").unwrap(), || "T1 disabled with S1 and S2 marked".into())?;
    let after = net.fire(&m, "T1").unwrap();
    let ok = after.count("S1") == 0 && after.count("S2") == 0 && after.count("S3") == 1 && after.total() == 1;
    ensure(ok, || format!("after firing: {after}"))?;
    ensure(!net.is_enabled(&after, "T1").unwrap(), || "T1 still enabled after firing".into())
}

fn c7_petri_oracle() -> Result<String, String> {
    push_door_case().map_err(|e| format!("push-door: {e}"))?;
    let mut checked = 0usize;
    let opts = place_options();
    for places in 1..=6 {
        checked += check_single_transitions(places, &opts)?;
    }
    let mut rng = XorShift(0x9e37_79b9_7f4a_7c15);
    let full = opts;
    for _ in 0..400 {
        let places = 1 + rng.below(6);
        let transitions = 1 + rng.below(4);
        let arcs = (0..transitions).map(|_| (0..places).map(|_| ARC_OPTS[rng.below(4)]).collect()).collect();
        let shape = NetShape { places, arcs };
        let net = build(&shape);
        let start: Counts = (0..places).map(|_| full[rng.below(full.len())].clone()).collect();
        let mut frontier = vec![start];
        let mut seen = HashSet::new();
        for _depth in 0..4 {
            let mut next = Vec::new();
            for c in frontier {
                if !seen.insert(to_marking(&c)) {
                    continue;
                }
                check_marking(&shape, &net, &c)?;
                checked += 1;
                for t in 0..shape.arcs.len() {
                    if let (_, Some(m)) = oracle_fire(&shape, &c, t) {
                        next.push(counts_of(&m, places));
                    }
                }
            }
            frontier = next;
        }
    }
    Ok(format!("push-door ok, {checked} markings agree"))
}

fn counts_of(m: &Marking, places: usize) -> Counts {
    (1..=places)
        .map(|p| m.tokens(&format!("S{p}")).map(|(c, n)| (c.to_owned(), n)).collect())
        .collect()
}

fn c8_mixed() -> Result<String, String> {
    let edit = spec("level1-b2-mixed.json");
    let r = run_mixed(&edit, &RunOptions::default()).unwrap();
    verdict_is(&r, Verdict::Pass, "edited level, mixed")?;
    ensure(r.mode_switches.len() == 1, || format!("{} mode switches", r.mode_switches.len()))?;
    let hop = spec("level1-hop-mixed.json");
    let mixed = run_mixed(&hop, &RunOptions::default()).unwrap();
    verdict_is(&mixed, Verdict::Pass, "hop level, mixed")?;
    let high = run_high_level(&hop, &RunOptions::default()).unwrap();
    ensure(high.verdict != Verdict::Pass, || "hop level passed in high-level mode".into())?;
    let raw = run_raw(&hop, &RunOptions::default()).unwrap();
    ensure(raw.verdict != Verdict::Pass, || "hop level passed in raw mode".into())?;
    Ok(format!(
        "switch at tick {}; hop: mixed Pass, high-level {:?}, raw {:?}",
        r.mode_switches[0].tick, high.verdict, raw.verdict
    ))
}

/// A 1000-tick session that wanders the first room of level 1 and clones
/// every 150 ticks. Door and portal cells are avoided so
/// the avatar never dies or finishes.
fn neutrality_script() -> Vec<RawInputEvent> {
    let mut world = World::load_default(&read("levels/level1.map")).unwrap();
    let door_cells: HashSet<_> =
        ["Door1", "Door2", "EndPortal"].iter().flat_map(|d| world.entity_cells(d).unwrap()).collect();
    let mut rng = XorShift(42);
    let mut current = Move::Wait;
    for t in 0..NEUTRALITY_TICKS {
        let mut events = Vec::new();
        if t % 150 == 149 {
            events.push(RawInputEvent::key(t, InputCode::Clone, Edge::Down));
        } else if t % 150 == 0 && t > 0 {
            events.push(RawInputEvent::key(t, InputCode::Clone, Edge::Up));
        } else {
            let pos = world.avatar().pos;
            let safe = |mv: Move| {
                let (dx, dy) = match mv {
                    Move::Up => (0, -1),
                    Move::Down => (0, 1),
                    Move::Left => (-1, 0),
                    Move::Right => (1, 0),
                    Move::Wait => (0, 0),
                };
                let p = pos.offset(dx, dy);
                mv == Move::Wait || (world.walkable(p) && !door_cells.contains(&p) && p.x < 6)
            };
            if rng.below(4) == 0 || !safe(current) {
                current = Move::ALL[rng.below(Move::ALL.len())];
                if !safe(current) {
                    current = Move::Wait;
                }
            }
            events.extend(controller_edges(world.avatar().held(), current, t));
        }
        world.step(&events).unwrap();
    }
    world.session_inputs().to_vec()
}

fn hashes(events: &[RawInputEvent], filter: Option<RecorderFilter>) -> Result<Vec<u64>, String> {
    let mut world = World::load_default(&read("levels/level1.map")).unwrap();
    let sink = filter.map(|f| world.install_recorder(f));
    let mut out = Vec::new();
    for t in 0..NEUTRALITY_TICKS {
        let now: Vec<_> = events.iter().filter(|e| e.tick == t).cloned().collect();
        world.step(&now).map_err(|e| e.to_string())?;
        out.push(world.state_hash());
    }
    if let Some(s) = sink {
        ensure(!s.borrow().is_empty(), || "recorder captured nothing".into())?;
    }
    Ok(out)
}

fn c9_neutrality() -> Result<String, String> {
    let events = neutrality_script();
    let bare = hashes(&events, None)?;
    let recorded = hashes(&events, Some(RecorderFilter::default_config()))?;
    let everything = hashes(&events, Some(RecorderFilter::none().subscribe("*", &["*"])))?;
    ensure(bare.len() == NEUTRALITY_TICKS as usize, || "short session".into())?;
    for (name, other) in [("default filter", &recorded), ("full filter", &everything)] {
        if let Some(t) = (0..bare.len()).find(|&t| bare[t] != other[t]) {
            return Err(format!("{name}: hashes differ at tick {t}"));
        }
    }
    Ok(format!("{} ticks, {} input events", bare.len(), events.len()))
}

fn main() {
    let criteria: [(&str, &str, Duration, Check); 9] = [
        ("C1", "golden trace reproduction", Duration::from_secs(5), c1_golden),
        ("C2", "raw-replay fixpoint", Duration::from_secs(5), c2_fixpoint),
        ("C3", "adaptation success", Duration::from_secs(10), c3_adaptation_success),
        ("C4", "adaptation failure", Duration::from_secs(10), c4_adaptation_failure),
        ("C5", "level-4 analog", Duration::from_secs(20), c5_level4),
        ("C6", "touch trigger semantics", Duration::from_secs(30), c6_trigger),
        ("C7", "petri oracle equivalence", Duration::from_secs(30), c7_petri_oracle),
        ("C8", "mixed-mode fallback", Duration::from_secs(30), c8_mixed),
        ("C9", "recorder neutrality", Duration::from_secs(30), c9_neutrality),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = result.and_then(|d| {
            if took < limit {
                Ok(d)
            } else {
                Err(format!("took {:.2}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
            }
        });
        match result {
            Ok(detail) => println!("PASS {id} {name}: {detail} ({:.2}s)", took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL {id} {name}: {e} ({:.2}s)", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
