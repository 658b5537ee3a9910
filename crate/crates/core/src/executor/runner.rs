use std::collections::HashSet;

use super::conditions::{Condition, Conditions, Outcome, Pattern};
use super::report::{FailureKind, GhostDeath, ModeSwitch, TestResult, UnmetPlace, Verdict};
use super::spec::{DiffPolicy, LoadedTest, Mode};
use super::ExecError;
use crate::entity::Message;
use crate::game::navigate::{controller_edges, navigate, navigate_to};
use crate::game::{Move, Navigation, Pos, World};
use crate::petri::model::DEFAULT_DURATION;
use crate::petri::{instantiate_all, transition_for_message, Achiever, NetInstance, Place};
use crate::recorder::{diff_traces, DiffOptions, Edge, InputCode, RawInputEvent, RecorderFilter, TraceRecord, TraceSink};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub filter: RecorderFilter,
    pub headless: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            filter: RecorderFilter::default_config(),
            headless: true,
        }
    }
}

pub fn run(test: &LoadedTest, opts: &RunOptions) -> Result<TestResult, ExecError> {
    run_with(test, opts, test.spec.mode, &mut |_| {})
}

pub fn run_raw(test: &LoadedTest, opts: &RunOptions) -> Result<TestResult, ExecError> {
    run_with(test, opts, Mode::Raw, &mut |_| {})
}

pub fn run_high_level(test: &LoadedTest, opts: &RunOptions) -> Result<TestResult, ExecError> {
    run_with(test, opts, Mode::HighLevel, &mut |_| {})
}

pub fn run_mixed(test: &LoadedTest, opts: &RunOptions) -> Result<TestResult, ExecError> {
    run_with(test, opts, Mode::Mixed, &mut |_| {})
}

/// Runs `test` in `mode`, calling `on_tick` after every simulation step.
pub fn run_with(
    test: &LoadedTest,
    opts: &RunOptions,
    mode: Mode,
    on_tick: &mut dyn FnMut(&World),
) -> Result<TestResult, ExecError> {
    let mut runner = Runner::new(test, opts, mode)?;
    runner.execute(on_tick)
}

fn record_matches(rec: &TraceRecord, msg: &Message) -> bool {
    rec.mtype == msg.mtype && rec.source.name == msg.source.name && rec.target_name() == msg.target_name()
}

/// Why a run stopped before its conditions decided.
struct Stop {
    verdict: Verdict,
    kind: Option<FailureKind>,
    reason: String,
    unmet: Vec<UnmetPlace>,
}

impl Stop {
    fn fail(kind: FailureKind, reason: impl Into<String>) -> Self {
        Stop {
            verdict: Verdict::Fail,
            kind: Some(kind),
            reason: reason.into(),
            unmet: Vec::new(),
        }
    }
}

fn unmet(place: &Place) -> UnmetPlace {
    UnmetPlace {
        place: place.local_id.clone(),
        node: place.id.clone(),
        label: place.label.clone(),
    }
}

/// An `inject_raw` fallback in progress: walk to `anchor`, then replay.
struct Fallback {
    anchor: Option<Pos>,
    events: Vec<RawInputEvent>,
    start: Option<u64>,
    next: usize,
    budget: u64,
    unmet: Vec<UnmetPlace>,
}

struct Runner<'a> {
    test: &'a LoadedTest,
    world: World,
    sink: TraceSink,
    conditions: Conditions,
    implicit_success: bool,
    instances: Vec<NetInstance>,
    start_mode: Mode,
    /// Mode currently driving input: `Raw` or `HighLevel`.
    driving: Mode,
    switches: Vec<ModeSwitch>,
    expected: &'a [TraceRecord],
    cursor: usize,
    unmatched: Vec<Message>,
    raw_next: usize,
    pending: Vec<RawInputEvent>,
    stuck: u64,
    waiting: u64,
    fallback: Option<Fallback>,
    fallback_used: bool,
    /// Tick at which the current record arrives if the avatar idles; computed once per record.
    forecast: Option<Option<u64>>,
    post_check: Option<(usize, usize)>,
}

impl<'a> Runner<'a> {
    fn new(test: &'a LoadedTest, opts: &RunOptions, mode: Mode) -> Result<Self, ExecError> {
        let mut world = World::load_default(&test.level_text)?;
        world.set_headless(opts.headless);
        let sink = world.install_recorder(opts.filter.clone());
        let instances = {
            let exists = |n: &str| world.entities().get(n).is_some();
            instantiate_all(&test.templates, &test.instances, &exists)?
        };
        let spec = &test.spec;
        let success: Vec<Condition> =
            spec.success_conditions.iter().map(Condition::from_def).collect::<Result<_, _>>().map_err(ExecError::Spec)?;
        let failure: Vec<Condition> =
            spec.failure_conditions.iter().map(Condition::from_def).collect::<Result<_, _>>().map_err(ExecError::Spec)?;
        let implicit_success = success.is_empty();
        let success = if implicit_success && !test.expected.is_empty() {
            vec![Condition::new(test.expected.iter().map(Pattern::exact).collect())]
        } else {
            success
        };
        Ok(Runner {
            test,
            world,
            sink,
            conditions: Conditions::new(success, failure),
            implicit_success,
            instances,
            start_mode: mode,
            driving: if mode == Mode::HighLevel { Mode::HighLevel } else { Mode::Raw },
            switches: Vec::new(),
            expected: &test.expected,
            cursor: 0,
            unmatched: Vec::new(),
            raw_next: 0,
            pending: Vec::new(),
            stuck: 0,
            waiting: 0,
            fallback: None,
            fallback_used: false,
            forecast: None,
            post_check: None,
        })
    }

    fn execute(&mut self, on_tick: &mut dyn FnMut(&World)) -> Result<TestResult, ExecError> {
        let max_time = self.test.spec.max_time;
        let stop = loop {
            let t = self.world.tick();
            if t >= max_time {
                break Stop {
                    verdict: Verdict::Timeout,
                    kind: None,
                    reason: format!("max_time {max_time} reached"),
                    unmet: self.current_unmet()?,
                };
            }
            if self.driving == Mode::Raw && self.start_mode == Mode::Mixed && self.should_switch(t) {
                self.switches.push(ModeSwitch {
                    tick: t,
                    from: Mode::Raw,
                    to: Mode::HighLevel,
                });
                self.driving = Mode::HighLevel;
            }
            let inputs = match self.driving {
                Mode::HighLevel => match self.high_level_inputs(t)? {
                    Ok(i) => i,
                    Err(stop) => break stop,
                },
                _ => self.raw_inputs(t),
            };
            let msgs = self.world.step(&inputs)?;
            on_tick(&self.world);
            if let Some(stop) = self.observe(&msgs)? {
                break stop;
            }
            if !self.world.avatar_alive() {
                let killer = msgs
                    .iter()
                    .find(|m| m.mtype == "KILLED" && m.target_name() == Some(crate::game::PLAYER))
                    .map_or("unknown".to_owned(), |m| m.source.name.clone());
                break Stop::fail(FailureKind::AvatarKilled, format!("avatar killed by {killer} at tick {t}"));
            }
            if self.world.completed() {
                if self.implicit_success && self.expected.is_empty() {
                    break self.pass("level completed");
                }
                break Stop::fail(FailureKind::LevelEnded, "level completed before the success condition");
            }
        };
        Ok(self.finish(stop))
    }

    fn pass(&self, reason: &str) -> Stop {
        Stop {
            verdict: Verdict::Pass,
            kind: None,
            reason: reason.to_owned(),
            unmet: Vec::new(),
        }
    }

    fn finish(&mut self, stop: Stop) -> TestResult {
        let trace = self.sink.borrow().clone();
        let options = if self.start_mode == Mode::Raw {
            DiffOptions::exact()
        } else {
            DiffOptions::untimed()
        };
        let diff = diff_traces(self.expected, &trace, options);
        let mut stop = stop;
        let strict_raw = self.start_mode == Mode::Raw
            && self.test.spec.traces_file.is_some()
            && self.test.spec.diff_policy == DiffPolicy::Strict;
        if stop.verdict == Verdict::Pass && strict_raw && !diff.is_identical() {
            stop = Stop::fail(FailureKind::TraceDiverged, format!("trace {}", diff.summary()));
        }
        self.world.remove_recorders();
        TestResult {
            verdict: stop.verdict,
            reason: stop.reason,
            failure: stop.kind,
            mode: self.start_mode,
            unmet_preconditions: stop.unmet,
            trace_diff: diff,
            elapsed: self.world.tick(),
            mode_switches: self.switches.clone(),
            ghost_deaths: self
                .world
                .ghost_deaths()
                .iter()
                .map(|(tick, ghost)| GhostDeath {
                    tick: *tick,
                    ghost: ghost.clone(),
                })
                .collect(),
            consumed_records: self.cursor,
            expected_records: self.expected.len(),
            trace,
            raw: self.world.session_inputs().to_vec(),
        }
    }

    // --- expected-trace tracking ------------------------------------------

    fn observe(&mut self, msgs: &[Message]) -> Result<Option<Stop>, ExecError> {
        for m in msgs {
            if self.cursor < self.expected.len() && record_matches(&self.expected[self.cursor], m) {
                self.consume();
                while self.cursor < self.expected.len() {
                    let rec = &self.expected[self.cursor];
                    match self.unmatched.iter().position(|u| record_matches(rec, u)) {
                        Some(i) => {
                            self.unmatched.remove(i);
                            self.consume();
                        }
                        None => break,
                    }
                }
            } else {
                self.unmatched.push(m.clone());
            }
            match self.conditions.evaluate(m) {
                Outcome::Failure => {
                    return Ok(Some(Stop::fail(
                        FailureKind::FailureCondition,
                        format!("failure condition met by {m}"),
                    )))
                }
                Outcome::Success => return Ok(Some(self.pass(&format!("success condition met by {m}")))),
                Outcome::Pending => {}
            }
        }
        if let Some((i, j)) = self.post_check.take() {
            let inst = &self.instances[i];
            let marking = inst.sync_marking(&self.world)?;
            let t = &inst.transitions[j];
            if let Some(&o) = t.outputs.iter().find(|&&o| marking.count(&inst.places[o].id) == 0) {
                let mut stop = Stop::fail(
                    FailureKind::PostStateMismatch,
                    format!("{} fired but {} does not hold", t.id, inst.places[o].id),
                );
                stop.unmet.push(unmet(&inst.places[o]));
                return Ok(Some(stop));
            }
        }
        Ok(None)
    }

    fn consume(&mut self) {
        let rec = &self.expected[self.cursor];
        if self.test.spec.verify_post_state {
            if let Ok(Some(ij)) = transition_for_message(&self.instances, &rec.mtype, &rec.source.name, rec.target_name()) {
                self.post_check = Some(ij);
            }
        }
        if rec.mtype == "CLONE" {
            self.unmatched.clear();
        }
        self.cursor += 1;
        self.stuck = 0;
        self.waiting = 0;
        self.fallback = None;
        self.fallback_used = false;
        self.forecast = None;
    }

    /// Unmet input places of the current record's transition, if bound.
    fn current_unmet(&self) -> Result<Vec<UnmetPlace>, ExecError> {
        let Some(rec) = self.expected.get(self.cursor) else {
            return Ok(Vec::new());
        };
        if self.driving != Mode::HighLevel {
            return Ok(Vec::new());
        }
        let Some((i, j)) = transition_for_message(&self.instances, &rec.mtype, &rec.source.name, rec.target_name())?
        else {
            return Ok(Vec::new());
        };
        let inst = &self.instances[i];
        let marking = inst.sync_marking(&self.world)?;
        Ok(inst.unmet_inputs(&marking, &inst.transitions[j].id)?.into_iter().map(unmet).collect())
    }

    // --- raw injection ----------------------------------------------------

    fn raw_inputs(&mut self, t: u64) -> Vec<RawInputEvent> {
        let raw = &self.test.raw;
        let mut out = Vec::new();
        while self.raw_next < raw.len() && raw[self.raw_next].tick <= t {
            if raw[self.raw_next].tick == t {
                out.push(raw[self.raw_next].clone());
            }
            self.raw_next += 1;
        }
        out
    }

    fn should_switch(&self, t: u64) -> bool {
        let Some(rec) = self.expected.get(self.cursor) else {
            return false;
        };
        let overdue = t > rec.timestamp + self.test.spec.window;
        let clone_due = rec.timestamp < t
            && self.test.raw[self.raw_next..]
                .iter()
                .take_while(|e| e.tick == t)
                .any(|e| e.code == InputCode::Clone && e.edge == Edge::Down);
        overdue || clone_due
    }

    // --- high-level adaptation --------------------------------------------

    fn hold(&self, t: u64) -> Vec<RawInputEvent> {
        controller_edges(self.world.avatar().held(), Move::Wait, t)
    }

    fn move_edges(&self, t: u64, mv: Move) -> Vec<RawInputEvent> {
        controller_edges(self.world.avatar().held(), mv, t)
    }

    fn press_clone(&mut self, t: u64, mut out: Vec<RawInputEvent>) -> Vec<RawInputEvent> {
        if out.iter().any(|e| e.code == InputCode::Clone) {
            return out;
        }
        out.push(RawInputEvent::key(t, InputCode::Clone, Edge::Down));
        self.pending.push(RawInputEvent::key(t + 1, InputCode::Clone, Edge::Up));
        out
    }

    /// Idles one tick; fails with `kind` once `budget` idle ticks pass.
    fn stall(
        &mut self,
        t: u64,
        mut out: Vec<RawInputEvent>,
        budget: u64,
        kind: FailureKind,
        unmet: Vec<UnmetPlace>,
        reason: impl FnOnce() -> String,
    ) -> Result<Vec<RawInputEvent>, Stop> {
        self.stuck += 1;
        if self.stuck > budget {
            let mut stop = Stop::fail(kind, reason());
            stop.unmet = unmet;
            return Err(stop);
        }
        out.extend(self.hold(t));
        Ok(out)
    }

    /// True while the current record is predicted to arrive without avatar help.
    fn others_deliver(&mut self, t: u64, rec: &TraceRecord, horizon: u64, out: &[RawInputEvent]) -> Result<bool, ExecError> {
        if self.forecast.is_none() {
            let mut fork = self.world.fork()?;
            let mut first = out.to_vec();
            let mut found = None;
            for _ in 0..horizon {
                if fork.is_over() {
                    break;
                }
                let tick = fork.tick();
                first.extend(controller_edges(fork.avatar().held(), Move::Wait, tick));
                let msgs = fork.step(&std::mem::take(&mut first))?;
                if msgs.iter().any(|m| record_matches(rec, m)) {
                    found = Some(tick);
                    break;
                }
            }
            self.forecast = Some(found);
        }
        Ok(self.forecast.flatten().is_some_and(|at| t <= at))
    }

    fn high_level_inputs(&mut self, t: u64) -> Result<Result<Vec<RawInputEvent>, Stop>, ExecError> {
        let out: Vec<RawInputEvent> = self.pending.drain(..).map(|e| e.at(t)).collect();
        if self.fallback.is_some() {
            return Ok(self.run_fallback(t, out));
        }
        let expected = self.expected;
        let Some(rec) = expected.get(self.cursor) else {
            let mut out = out;
            out.extend(self.hold(t));
            return Ok(Ok(out));
        };
        let bound = transition_for_message(&self.instances, &rec.mtype, &rec.source.name, rec.target_name())?;
        let Some((i, j)) = bound else {
            return self.default_achiever(t, rec, out);
        };
        let inst = &self.instances[i];
        let tr = &inst.transitions[j];
        let (tid, budget) = (tr.id.clone(), tr.duration);
        let marking = inst.sync_marking(&self.world)?;
        let missing: Vec<Place> = inst.unmet_inputs(&marking, &tid)?.into_iter().cloned().collect();
        if missing.is_empty() {
            self.waiting += 1;
            if self.waiting > budget {
                return Ok(Err(Stop::fail(
                    FailureKind::BudgetExceeded,
                    format!("{tid} enabled but {} not seen within {budget} ticks", describe(rec)),
                )));
            }
            let mut out = out;
            out.extend(self.hold(t));
            return Ok(Ok(out));
        }
        self.waiting = 0;
        if self.others_deliver(t, rec, budget, &out)? {
            let mut out = out;
            out.extend(self.hold(t));
            return Ok(Ok(out));
        }
        let unmet_all: Vec<UnmetPlace> = missing.iter().map(unmet).collect();
        let place = &missing[0];
        let Some(achiever) = place.achiever.clone() else {
            return Ok(self.stall(t, out, budget, FailureKind::NoAchiever, unmet_all, || {
                format!("no achiever for {} \"{}\"", place.id, place.label)
            }));
        };
        let step = match &achiever {
            Achiever::NavigateAndHold(e) | Achiever::Navigate(e) => navigate(&self.world, e)?,
            Achiever::PressClone => return Ok(Ok(self.press_clone(t, out))),
            Achiever::InjectRaw { .. } => Navigation::Unreachable,
        };
        match step {
            Navigation::Plan(p) if p.is_empty() => {
                Ok(self.stall(t, out, budget, FailureKind::BudgetExceeded, unmet_all, || {
                    format!("{} reached but {} still unmet", achiever_target(&achiever), place.id)
                }))
            }
            Navigation::Plan(p) => {
                self.stuck = 0;
                let mut out = out;
                out.extend(self.move_edges(t, p[0]));
                Ok(Ok(out))
            }
            Navigation::Unreachable => {
                let fallback = match &achiever {
                    a @ Achiever::InjectRaw { .. } => Some(a.clone()),
                    _ => place.fallback.clone(),
                };
                if let (Some(Achiever::InjectRaw { snippet, at }), Mode::Mixed, false) =
                    (fallback, self.start_mode, self.fallback_used)
                {
                    self.fallback_used = true;
                    let events = self.test.snippets.get(&snippet).cloned().unwrap_or_default();
                    self.fallback = Some(Fallback {
                        anchor: at,
                        events,
                        start: None,
                        next: 0,
                        budget,
                        unmet: unmet_all,
                    });
                    return Ok(self.run_fallback(t, out));
                }
                Ok(self.stall(t, out, budget, FailureKind::AchieverUnreachable, unmet_all, || {
                    format!("cannot reach {} for {} \"{}\"", achiever_target(&achiever), place.id, place.label)
                }))
            }
        }
    }

    fn default_achiever(
        &mut self,
        t: u64,
        rec: &TraceRecord,
        out: Vec<RawInputEvent>,
    ) -> Result<Result<Vec<RawInputEvent>, Stop>, ExecError> {
        let budget = DEFAULT_DURATION;
        if rec.mtype != "CLONE" && self.others_deliver(t, rec, budget, &out)? {
            let mut out = out;
            out.extend(self.hold(t));
            return Ok(Ok(out));
        }
        Ok(match (rec.mtype.as_str(), rec.target_name()) {
            ("CLONE", _) => Ok(self.press_clone(t, out)),
            ("TOUCH" | "TOUCHED", Some(goal)) => match navigate(&self.world, goal) {
                Ok(Navigation::Plan(p)) if !p.is_empty() => {
                    self.stuck = 0;
                    let mut out = out;
                    out.extend(self.move_edges(t, p[0]));
                    Ok(out)
                }
                _ => self.stall(t, out, budget, FailureKind::AchieverUnreachable, Vec::new(), || {
                    format!("cannot reach {goal} for {}", describe(rec))
                }),
            },
            _ => self.stall(t, out, budget, FailureKind::BudgetExceeded, Vec::new(), || {
                format!("{} not seen within {budget} ticks", describe(rec))
            }),
        })
    }

    fn run_fallback(&mut self, t: u64, mut out: Vec<RawInputEvent>) -> Result<Vec<RawInputEvent>, Stop> {
        let mut fb = self.fallback.take().expect("fallback active");
        if fb.start.is_none() {
            if let Some(at) = fb.anchor {
                match navigate_to(&self.world, &HashSet::from([at])) {
                    Navigation::Plan(p) if !p.is_empty() => {
                        out.extend(self.move_edges(t, p[0]));
                        self.fallback = Some(fb);
                        return Ok(out);
                    }
                    Navigation::Plan(_) => {}
                    Navigation::Unreachable => {
                        let (budget, unmet) = (fb.budget, fb.unmet.clone());
                        self.fallback = Some(fb);
                        let res = self.stall(t, out, budget, FailureKind::AchieverUnreachable, unmet, || {
                            format!("cannot reach fallback anchor {at}")
                        });
                        if res.is_err() {
                            self.fallback = None;
                        }
                        return res;
                    }
                }
            }
            if !self.world.avatar().held().is_empty() {
                out.extend(self.hold(t));
                self.fallback = Some(fb);
                return Ok(out);
            }
            fb.start = Some(t);
        }
        let start = fb.start.expect("snippet started");
        let origin = fb.events.first().map_or(0, |e| e.tick);
        while fb.next < fb.events.len() && start + fb.events[fb.next].tick - origin == t {
            out.push(fb.events[fb.next].at(t));
            fb.next += 1;
        }
        if fb.next < fb.events.len() {
            self.fallback = Some(fb);
        }
        Ok(out)
    }
}

fn describe(rec: &TraceRecord) -> String {
    crate::recorder::diff::describe(rec)
}

fn achiever_target(a: &Achiever) -> String {
    match a {
        Achiever::NavigateAndHold(e) | Achiever::Navigate(e) => e.clone(),
        Achiever::PressClone => "CLONE".into(),
        Achiever::InjectRaw { snippet, .. } => snippet.display().to_string(),
    }
}
