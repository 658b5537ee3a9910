//! WebSocket transport for the serve protocol. One client per run; the world
//! steps on this thread and drains the client's messages once per tick.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use replaytest::game::World;
use replaytest::recorder::{RecordedSession, RecorderFilter};
use replaytest::serve::{hello, ClientMsg, ServeSession, ServerMsg};
use tungstenite::{Message, WebSocket};

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMsg) -> Result<(), String> {
    ws.send(Message::text(msg.to_json())).map_err(|e| e.to_string())
}

pub fn serve(
    mut world: World,
    port: u16,
    filter: &RecorderFilter,
    max_ticks: u64,
    delay: Duration,
    recording: bool,
) -> Result<(World, RecordedSession), String> {
    let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| match e.kind() {
        ErrorKind::AddrInUse => format!("port {port} in use"),
        _ => e.to_string(),
    })?;
    eprintln!("listening on ws://127.0.0.1:{port}");
    let (stream, _) = listener.accept().map_err(|e| e.to_string())?;
    let mut ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(1))).map_err(|e| e.to_string())?;

    let sink = world.install_recorder(filter.clone());
    let start = world.tick();
    let mut session = ServeSession::new(world, recording);
    send(&mut ws, &hello(&session.world))?;
    let first = session.initial_frame();
    send(&mut ws, &first)?;
    'run: while !session.is_closed() && session.world.tick() - start < max_ticks {
        loop {
            match ws.read() {
                Ok(Message::Text(text)) => {
                    if let Some(reply) = session.handle_text(&text) {
                        send(&mut ws, &reply)?;
                    }
                }
                Ok(Message::Close(_)) => {
                    session.handle(ClientMsg::Bye);
                    break 'run;
                }
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    break
                }
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break 'run,
                Err(e) => return Err(e.to_string()),
            }
        }
        if session.is_closed() {
            break;
        }
        if let Some(frame) = session.tick().map_err(|e| e.to_string())? {
            send(&mut ws, &frame)?;
        }
        std::thread::sleep(delay);
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    let mut world = session.world;
    world.remove_recorders();
    let trace = sink.borrow().clone();
    let recorded = RecordedSession {
        raw: world.session_inputs().to_vec(),
        trace,
        ticks: world.tick() - start,
    };
    Ok((world, recorded))
}
