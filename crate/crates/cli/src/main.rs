mod interactive;
mod ws;

use std::io::{IsTerminal, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use replaytest::executor::{run_with, ExecError, LoadedTest, Mode, RunOptions, TestResult, Verdict};
use replaytest::game::World;
use replaytest::petri::{instantiate, InstancesFile, NetTemplate};
use replaytest::recorder::raw::{parse_raw_log, write_raw_log};
use replaytest::recorder::trace::{parse_trace, write_trace};
use replaytest::recorder::{diff_traces, record_session_with, DiffOptions, RecordedSession, RecorderFilter, ScriptedInput};

const EXIT_USAGE: u8 = 3;
const FILTER_ENV: &str = "REPLAYTEST_FILTER";

#[derive(Parser)]
#[command(name = "replaytest", version, about = "Record, replay and adaptively test grid-puzzle sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SessionArgs {
    #[arg(long)]
    level: PathBuf,
    /// Run ticks flat out without drawing.
    #[arg(long)]
    headless: bool,
    /// Ticks per second for paced play.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    tick_rate: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many ticks.
    #[arg(long, default_value_t = 15000)]
    max_ticks: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Play a level without logging. Reads a raw log from stdin when it is not a terminal.
    Play {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Play a level and write the raw input log and the message trace.
    Record {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        out_raw: PathBuf,
        #[arg(long)]
        out_trace: PathBuf,
        /// Take input from a WebSocket client on this port instead of the terminal.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Re-inject a raw log into a level and print the resulting trace.
    Replay {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Run test specs and report verdicts.
    Test {
        #[arg(long = "spec", required = true, num_args = 1..)]
        specs: Vec<PathBuf>,
        #[arg(long)]
        headless: bool,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        tick_rate: u32,
        /// Override the mode given in the spec.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Print JSON reports instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Compare two trace files.
    Diff {
        expected: PathBuf,
        actual: PathBuf,
        /// Ignore timestamps.
        #[arg(long)]
        untimed: bool,
    },
    /// Validate net templates against a level.
    NetCheck {
        #[arg(long = "net", required = true, num_args = 1..)]
        nets: Vec<PathBuf>,
        #[arg(long)]
        level: PathBuf,
        /// Instances file; defaults to the level's companion file.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Serve a level to a WebSocket client, optionally recording.
    Serve {
        #[arg(long)]
        level: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        tick_rate: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 15000)]
        max_ticks: u64,
        #[arg(long, requires = "out_trace")]
        out_raw: Option<PathBuf>,
        #[arg(long, requires = "out_raw")]
        out_trace: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown mode `{s}`"))
}

/// Failure to even start: bad arguments, unreadable files, invalid configs.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Usage> {
    std::fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Usage> {
    std::fs::write(path, text).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn filter() -> Result<RecorderFilter, Usage> {
    match std::env::var_os(FILTER_ENV) {
        Some(p) => Ok(RecorderFilter::from_json(&read(Path::new(&p))?)?),
        None => Ok(RecorderFilter::default_config()),
    }
}

fn load_world(level: &Path, seed: u64, headless: bool) -> Result<World, Usage> {
    let mut world = World::load_default(&read(level)?).map_err(|e| Usage(format!("{}: {e}", level.display())))?;
    world = world.with_seed(seed);
    world.set_headless(headless);
    Ok(world)
}

fn pace(tick_rate: u32) -> Duration {
    Duration::from_secs_f64(1.0 / f64::from(tick_rate))
}

/// Local session: scripted from stdin when piped, keyboard otherwise.
fn local_session(args: &SessionArgs, filter: &RecorderFilter) -> Result<(World, RecordedSession), Usage> {
    let mut world = load_world(&args.level, args.seed, args.headless)?;
    let stdin = std::io::stdin();
    let session = if stdin.is_terminal() {
        interactive::run(&mut world, filter, args.max_ticks, pace(args.tick_rate))?
    } else {
        let mut text = String::new();
        stdin.lock().read_to_string(&mut text)?;
        let events = parse_raw_log(&text)?;
        let delay = (!args.headless).then(|| pace(args.tick_rate));
        let mut draw = |w: &World, _: &[replaytest::entity::Message]| {
            if let Some(d) = delay {
                interactive::draw_plain(w);
                std::thread::sleep(d);
            }
        };
        record_session_with(&mut world, &mut ScriptedInput::new(events), filter, args.max_ticks, &mut draw)?
    };
    Ok((world, session))
}

fn summary(world: &World, ticks: u64) -> String {
    let end = if world.completed() {
        "level completed"
    } else if !world.avatar_alive() {
        "avatar died"
    } else {
        "stopped"
    };
    format!("{end} after {ticks} ticks")
}

fn cmd_play(args: SessionArgs) -> Result<u8, Usage> {
    let (world, session) = local_session(&args, &RecorderFilter::none())?;
    eprintln!("{}", summary(&world, session.ticks));
    Ok(0)
}

fn cmd_record(args: SessionArgs, out_raw: &Path, out_trace: &Path, port: Option<u16>) -> Result<u8, Usage> {
    let filter = filter()?;
    let (world, session) = match port {
        Some(_) if args.headless => return Err(Usage("--headless and --port are mutually exclusive".into())),
        Some(port) => {
            let world = load_world(&args.level, args.seed, true)?;
            ws::serve(world, port, &filter, args.max_ticks, pace(args.tick_rate), true)?
        }
        None => local_session(&args, &filter)?,
    };
    write(out_raw, &session.raw_text())?;
    write(out_trace, &session.trace_text())?;
    eprintln!("{}; {} inputs, {} trace records", summary(&world, session.ticks), session.raw.len(), session.trace.len());
    Ok(0)
}

fn cmd_replay(args: SessionArgs, raw: &Path, out_trace: Option<&Path>) -> Result<u8, Usage> {
    let events = parse_raw_log(&read(raw)?)?;
    let mut world = load_world(&args.level, args.seed, args.headless)?;
    let delay = (!args.headless).then(|| pace(args.tick_rate));
    let mut draw = |w: &World, _: &[replaytest::entity::Message]| {
        if let Some(d) = delay {
            interactive::draw_plain(w);
            std::thread::sleep(d);
        }
    };
    let session =
        record_session_with(&mut world, &mut ScriptedInput::new(events), &filter()?, args.max_ticks, &mut draw)?;
    let text = session.trace_text();
    match out_trace {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    eprintln!("{}", summary(&world, session.ticks));
    Ok(if world.completed() {
        0
    } else if world.avatar_alive() {
        2
    } else {
        1
    })
}

fn cmd_test(specs: &[PathBuf], headless: bool, tick_rate: u32, mode: Option<Mode>, json: bool) -> Result<u8, Usage> {
    let opts = RunOptions {
        filter: filter()?,
        headless,
    };
    let mut results: Vec<TestResult> = Vec::new();
    for path in specs {
        let test = LoadedTest::from_file(path).map_err(|e| match e {
            ExecError::Io(..) => Usage(e.to_string()),
            _ => Usage(format!("{}: {e}", path.display())),
        })?;
        let delay = pace(tick_rate);
        let mut draw = |w: &World| {
            if !headless {
                interactive::draw_plain(w);
                std::thread::sleep(delay);
            }
        };
        let r = run_with(&test, &opts, mode.unwrap_or(test.spec.mode), &mut draw)
            .map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        if json {
            println!("{}", r.to_json());
        } else {
            println!("== {}", path.display());
            print!("{}", r.text());
        }
        results.push(r);
    }
    let code = if results.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail.exit_code()
    } else if results.iter().any(|r| r.verdict == Verdict::Timeout) {
        Verdict::Timeout.exit_code()
    } else {
        0
    };
    Ok(code as u8)
}

fn cmd_diff(expected: &Path, actual: &Path, untimed: bool) -> Result<u8, Usage> {
    let parse = |p: &Path| parse_trace(&read(p)?).map_err(|e| Usage(format!("{}: {e}", p.display())));
    let (e, a) = (parse(expected)?, parse(actual)?);
    let opts = if untimed { DiffOptions::untimed() } else { DiffOptions::exact() };
    let d = diff_traces(&e, &a, opts);
    println!("{}", d.summary());
    for r in &d.missing {
        println!("missing: {}", replaytest::recorder::diff::describe(r));
    }
    for r in &d.extra {
        println!("extra: {}", replaytest::recorder::diff::describe(r));
    }
    for t in d.timing_deltas.iter().filter(|t| t.delta != 0) {
        println!("timing: expected record {} off by {}", t.expected_index, t.delta);
    }
    Ok(if d.is_identical() { 0 } else { 1 })
}

fn cmd_net_check(nets: &[PathBuf], level: &Path, instances: Option<&Path>) -> Result<u8, Usage> {
    let world = load_world(level, 0, true)?;
    let mut problems = 0;
    let mut templates = Vec::new();
    for p in nets {
        match NetTemplate::from_json(&read(p)?) {
            Ok(t) => {
                println!("{}: template `{}` OK", p.display(), t.name);
                templates.push(t);
            }
            Err(e) => {
                problems += 1;
                println!("{}: {e}", p.display());
            }
        }
    }
    let inst_path = instances.map(Path::to_path_buf).unwrap_or_else(|| level.with_extension("instances.json"));
    let file = match read(&inst_path) {
        Ok(text) => InstancesFile::from_json(&text)?,
        Err(Usage(e)) => {
            println!("{e}");
            return Ok(1);
        }
    };
    let exists = |n: &str| world.entities().get(n).is_some();
    for def in &file.instances {
        let binding: Vec<String> = def.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let label = format!("{}({})", def.template, binding.join(", "));
        let Some(t) = templates.iter().find(|t| t.name == def.template) else {
            problems += 1;
            println!("{label}: unknown template `{}`", def.template);
            continue;
        };
        match instantiate(t, &def.bindings, &def.fallbacks, &exists) {
            Ok(_) => println!("{label}: OK"),
            Err(e) => {
                problems += 1;
                println!("{label}: {e}");
            }
        }
    }
    println!("{} instances, {problems} problems", file.instances.len());
    Ok(if problems == 0 { 0 } else { 1 })
}

fn cmd_serve(
    level: &Path,
    port: u16,
    tick_rate: u32,
    seed: u64,
    max_ticks: u64,
    out: Option<(&Path, &Path)>,
) -> Result<u8, Usage> {
    let world = load_world(level, seed, true)?;
    let filter = filter()?;
    let (world, session) = ws::serve(world, port, &filter, max_ticks, pace(tick_rate), out.is_some())?;
    if let Some((raw, trace)) = out {
        write(raw, &write_raw_log(&session.raw))?;
        write(trace, &write_trace(&session.trace))?;
    }
    eprintln!("{}", summary(&world, session.ticks));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Play { session } => cmd_play(session),
        Command::Record {
            session,
            out_raw,
            out_trace,
            port,
        } => cmd_record(session, &out_raw, &out_trace, port),
        Command::Replay {
            session,
            raw,
            out_trace,
        } => cmd_replay(session, &raw, out_trace.as_deref()),
        Command::Test {
            specs,
            headless,
            tick_rate,
            mode,
            json,
        } => cmd_test(&specs, headless, tick_rate, mode, json),
        Command::Diff {
            expected,
            actual,
            untimed,
        } => cmd_diff(&expected, &actual, untimed),
        Command::NetCheck { nets, level, instances } => cmd_net_check(&nets, &level, instances.as_deref()),
        Command::Serve {
            level,
            port,
            tick_rate,
            seed,
            max_ticks,
            out_raw,
            out_trace,
        } => cmd_serve(&level, port, tick_rate, seed, max_ticks, out_raw.as_deref().zip(out_trace.as_deref())),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
