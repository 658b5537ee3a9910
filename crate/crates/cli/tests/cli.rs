use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use tungstenite::Message;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_replaytest"));
    c.env_remove("REPLAYTEST_FILTER");
    c
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets")
}

fn asset(rel: &str) -> String {
    assets().join(rel).display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(cmd: &mut Command, input: &str) -> Output {
    let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn record_from_scripted_stdin_gives_golden_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (raw, trace) = (dir.path().join("s.raw"), dir.path().join("s.trace"));
    let o = run_stdin(
        bin().args(["record", "--headless", "--level", &asset("levels/level1.map")]).arg("--out-raw").arg(&raw).arg("--out-trace").arg(&trace),
        &read(&assets().join("fixtures/level1.raw")),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&trace), read(&assets().join("fixtures/level1.trace")));
    assert_eq!(read(&raw), read(&assets().join("fixtures/level1.raw")));
}

#[test]
fn play_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_stdin(
        bin().current_dir(dir.path()).args(["play", "--headless", "--level", &asset("levels/level1.map")]),
        &read(&assets().join("fixtures/level1.raw")),
    );
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("level completed"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn test_exit_codes() {
    let cases = [
        ("level1-raw.json", 0),
        ("level1-moved-high.json", 0),
        ("level1-moved-raw.json", 2),
        ("level1-locked-high.json", 1),
    ];
    for (spec, want) in cases {
        let o = run(&["test", "--headless", "--spec", &asset(&format!("specs/{spec}"))]);
        assert_eq!(code(&o), want, "{spec}: {}", stdout(&o));
    }
    let o = run(&["test", "--headless", "--spec", &asset("specs/level1-raw.json"), &asset("specs/level1-moved-raw.json")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn mode_override() {
    let o = run(&["test", "--headless", "--mode", "raw", "--spec", &asset("specs/level1-moved-raw.json")]);
    assert_eq!(code(&o), 2);
    let o = run(&["test", "--headless", "--mode", "sideways", "--spec", &asset("specs/level1-raw.json")]);
    assert_eq!(code(&o), 3);
}

#[test]
fn usage_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"level_file": "x.map", "mode": "raw"}"#).unwrap();
    assert_eq!(code(&run(&["test", "--spec", bad.to_str().unwrap()])), 3);
    assert_eq!(code(&run(&["test", "--spec", "/nonexistent/spec.json"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["play", "--level", &asset("levels/level1.map"), "--tick-rate", "0"])), 3);
    let o = run(&["record", "--headless", "--port", "1", "--level", &asset("levels/level1.map"), "--out-raw", "a", "--out-trace", "b"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn headless_and_rendered_reports_match() {
    let spec = asset("specs/level1-moved-high.json");
    let a = run(&["test", "--json", "--headless", "--spec", &spec]);
    let b = run(&["test", "--json", "--tick-rate", "100000", "--spec", &spec]);
    assert_eq!(code(&a), 0);
    let report = |o: &Output| {
        let text = stdout(o);
        let start = text.find("{\n").unwrap();
        serde_json::from_str::<Value>(&text[start..]).unwrap()
    };
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(ra["verdict"], "Pass");
    assert_eq!(ra, rb);
}

#[test]
fn diff_command() {
    let dir = tempfile::tempdir().unwrap();
    let golden = assets().join("fixtures/level1.trace");
    let text = read(&golden);
    let short = dir.path().join("short.trace");
    std::fs::write(&short, text.lines().take(7).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let bad = dir.path().join("bad.trace");
    std::fs::write(&bad, format!("{}\n{{not json\n", text.lines().next().unwrap())).unwrap();
    let g = golden.to_str().unwrap();

    assert_eq!(code(&run(&["diff", g, g])), 0);
    let o = run(&["diff", g, short.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("diverged at record 7"), "{}", stdout(&o));
    let o = run(&["diff", g, bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn net_check_diagnostics() {
    let door = asset("nets/door.net.json");
    let o = run(&["net-check", "--net", &door, "--level", &asset("levels/level1.map")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("2 instances, 0 problems"));

    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    std::fs::write(&inst, r#"{"instances": [{"template": "door", "bindings": {"$button": "Button1", "$door": "Door9"}}]}"#).unwrap();
    let o = run(&["net-check", "--net", &door, "--level", &asset("levels/level1.map"), "--instances", inst.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("Door9"), "{}", stdout(&o));

    let net = dir.path().join("bad.net.json");
    let text = read(&assets().join("nets/door.net.json")).replacen(r#""to": "T1""#, r#""to": "S3""#, 1);
    std::fs::write(&net, text).unwrap();
    let o = run(&["net-check", "--net", net.to_str().unwrap(), "--level", &asset("levels/level1.map")]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).to_lowercase().contains("arc"), "{}", stdout(&o));
}

#[test]
fn filter_env_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let filter = dir.path().join("f.json");
    std::fs::write(&filter, r#"{"Player": ["CLONE"]}"#).unwrap();
    let trace = dir.path().join("t.trace");
    let o = run_stdin(
        bin()
            .env("REPLAYTEST_FILTER", &filter)
            .args(["record", "--headless", "--level", &asset("levels/level1.map")])
            .arg("--out-raw")
            .arg(dir.path().join("r.raw"))
            .arg("--out-trace")
            .arg(&trace),
        &read(&assets().join("fixtures/level1.raw")),
    );
    assert_eq!(code(&o), 0);
    let t = read(&trace);
    assert_eq!(t.lines().count(), 2);
    assert!(t.lines().all(|l| l.contains("CLONE")));
}

#[test]
fn replay_prints_trace() {
    let o = run(&["replay", "--headless", "--level", &asset("levels/level1.map"), "--raw", &asset("fixtures/level1.raw")]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), read(&assets().join("fixtures/level1.trace")));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

type Client = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>;

fn connect(port: u16) -> Client {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match tungstenite::connect(format!("ws://127.0.0.1:{port}")) {
            Ok((ws, _)) => return ws,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => panic!("connect: {e}"),
        }
    }
}

fn next_json(ws: &mut Client) -> Option<Value> {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => {}
        }
    }
}

fn send(ws: &mut Client, code: &str, edge: &str) -> u64 {
    ws.send(Message::text(format!(r#"{{"kind":"input","code":"{code}","edge":"{edge}"}}"#))).unwrap();
    loop {
        let m = next_json(ws).expect("ack");
        if m["kind"] == "ack" {
            assert_eq!(m["code"], code);
            return m["tick"].as_u64().unwrap();
        }
    }
}

fn wait_for_frame(ws: &mut Client, pred: impl Fn(&Value) -> bool) -> Value {
    loop {
        let m = next_json(ws).expect("frame");
        if m["kind"] == "frame" && pred(&m) {
            return m;
        }
    }
}

#[test]
fn serve_session_matches_local_recording() {
    let dir = tempfile::tempdir().unwrap();
    let (raw, trace) = (dir.path().join("ws.raw"), dir.path().join("ws.trace"));
    let port = free_port();
    let mut server = bin()
        .args(["serve", "--level", &asset("levels/level1.map"), "--tick-rate", "50", "--max-ticks", "150"])
        .args(["--port", &port.to_string()])
        .arg("--out-raw")
        .arg(&raw)
        .arg("--out-trace")
        .arg(&trace)
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut ws = connect(port);
    let hello = next_json(&mut ws).unwrap();
    assert_eq!(hello["kind"], "hello");
    assert_eq!(hello["version"], 1);
    assert_eq!((hello["width"].as_u64(), hello["height"].as_u64()), (Some(15), Some(7)));
    let first = next_json(&mut ws).unwrap();
    assert_eq!(first["kind"], "frame");
    assert_eq!(first["tick"], 0);

    send(&mut ws, "DOWN", "DOWN");
    wait_for_frame(&mut ws, |f| f["actors"][0]["cell"] == serde_json::json!([1, 2]));
    send(&mut ws, "DOWN", "UP");
    send(&mut ws, "RIGHT", "DOWN");
    wait_for_frame(&mut ws, |f| f["actors"][0]["cell"][0].as_i64().unwrap() >= 3);
    send(&mut ws, "RIGHT", "UP");
    send(&mut ws, "CLONE", "DOWN");
    let f = wait_for_frame(&mut ws, |f| f["actors"].as_array().unwrap().len() == 2);
    let kinds: Vec<&str> = f["actors"].as_array().unwrap().iter().map(|a| a["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["avatar", "ghost"]);
    send(&mut ws, "CLONE", "UP");
    while next_json(&mut ws).is_some() {}
    assert!(server.wait().unwrap().success());

    let local_raw = dir.path().join("local.raw");
    let local_trace = dir.path().join("local.trace");
    let o = run_stdin(
        bin()
            .args(["record", "--headless", "--max-ticks", "150", "--level", &asset("levels/level1.map")])
            .arg("--out-raw")
            .arg(&local_raw)
            .arg("--out-trace")
            .arg(&local_trace),
        &read(&raw),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(read(&raw), read(&local_raw));
    assert_eq!(read(&trace), read(&local_trace));
    assert!(read(&trace).contains("CLONE"));
}

#[test]
fn serve_port_in_use() {
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port();
    let o = run(&["serve", "--level", &asset("levels/level1.map"), "--port", &port.to_string()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}
