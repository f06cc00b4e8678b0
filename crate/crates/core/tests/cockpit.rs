use std::net::TcpListener;
use std::time::{Duration, Instant};

use tungstenite::Message as WsMessage;
use vilbench::cockpit::{serve_cockpit, CockpitFrame, CockpitMessage, CockpitOptions, DriverInput, COCKPIT_VERSION};
use vilbench::gateway::{GatewayEvent, GatewayMode, TurnSignal};
use vilbench::harness::runlog::EventKind;
use vilbench::harness::RunLog;

fn input(steer: f64, throttle: f64) -> DriverInput {
    DriverInput {
        v: COCKPIT_VERSION,
        steer,
        throttle,
        brake: 0.0,
        turn_signal: None,
        mode_toggle: false,
        estop: false,
    }
}

fn send(ws: &mut tungstenite::WebSocket<impl std::io::Read + std::io::Write>, i: DriverInput) {
    let text = serde_json::to_string(&CockpitMessage::Input(i)).unwrap();
    ws.send(WsMessage::text(text)).unwrap();
}

#[test]
fn axes_are_clamped_server_side() {
    let i = DriverInput {
        steer: 3.0,
        throttle: -0.5,
        brake: f64::NAN,
        ..input(0.0, 0.0)
    }
    .clamped();
    assert_eq!((i.steer, i.throttle, i.brake), (1.0, 0.0, 0.0));
    let cmd = input(-2.0, 7.0).to_command(0.5, TurnSignal::Left);
    assert_eq!((cmd.steer, cmd.throttle), (-0.5, 1.0));
    assert_eq!(cmd.turn_signal, TurnSignal::Left);
}

#[test]
fn input_message_shape() {
    let v: serde_json::Value =
        serde_json::from_str(&serde_json::to_string(&CockpitMessage::Input(input(0.1, 0.2))).unwrap()).unwrap();
    assert_eq!(v["t"], "input");
    assert_eq!(v["v"], 1);
    let minimal: CockpitMessage = serde_json::from_str(r#"{"t":"input","steer":0.5}"#).unwrap();
    let CockpitMessage::Input(i) = minimal else { panic!("not an input") };
    assert_eq!((i.v, i.steer, i.throttle, i.estop), (1, 0.5, 0.0, false));
}

#[test]
fn other_paths_are_refused() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let opts = CockpitOptions {
        max_sessions: Some(1),
        ..CockpitOptions::manual(2.0)
    };
    std::thread::spawn(move || serve_cockpit(listener, &opts));
    let err = tungstenite::connect(format!("ws://{addr}/elsewhere")).unwrap_err();
    match err {
        tungstenite::Error::Http(resp) => assert_eq!(resp.status(), 404),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn live_session_streams_frames_and_takes_input() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let out = tempfile::tempdir().unwrap();
    let opts = CockpitOptions {
        out: Some(out.path().to_path_buf()),
        max_sessions: Some(1),
        ..CockpitOptions::manual(30.0)
    };
    let server = std::thread::spawn(move || serve_cockpit(listener, &opts));

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}/cockpit")).unwrap();
    let mut frames: Vec<CockpitFrame> = Vec::new();
    let read_for = |ws: &mut tungstenite::WebSocket<_>, secs: f64, frames: &mut Vec<CockpitFrame>| {
        let until = Instant::now() + Duration::from_secs_f64(secs);
        while Instant::now() < until {
            if let WsMessage::Text(t) = ws.read().unwrap() {
                let raw: serde_json::Value = serde_json::from_str(&t).unwrap();
                assert_eq!((raw["t"].as_str(), raw["v"].as_u64()), (Some("frame"), Some(1)));
                let CockpitMessage::Frame(f) = serde_json::from_str(&t).unwrap() else { panic!() };
                frames.push(*f);
            }
        }
    };

    let t0 = Instant::now();
    send(&mut ws, input(0.0, 0.5));
    read_for(&mut ws, 1.5, &mut frames);
    let rate = frames.len() as f64 / t0.elapsed().as_secs_f64();
    assert!(rate >= 10.0, "{rate:.1} frames/s");
    assert!(frames.windows(2).all(|w| w[1].time > w[0].time), "frames out of order");
    assert!(frames.last().unwrap().ego.speed > 0.5);

    // steer together with a throttle change that marks the arrival tick
    send(&mut ws, input(0.6, 0.6));
    read_for(&mut ws, 0.5, &mut frames);
    let mut stop = input(0.6, 0.6);
    stop.estop = true;
    send(&mut ws, stop);
    read_for(&mut ws, 0.3, &mut frames);
    assert_eq!(frames.last().unwrap().mode, GatewayMode::EmergencyStop);
    ws.close(None).unwrap();
    while ws.read().is_ok() {}
    server.join().unwrap().unwrap();

    let log = RunLog::read_dir(&out.path().join("session-1")).unwrap();
    let k = log.rows.iter().position(|r| r.throttle == 0.6).expect("steer input never applied");
    let h0 = log.rows[k].heading;
    let changed = log.rows[k + 1..=k + 3].iter().any(|r| r.heading != h0);
    assert!(changed, "heading unchanged 3 ticks after steer input");
    assert!(log.events.iter().any(|e| matches!(
        &e.kind,
        EventKind::Gateway { event: GatewayEvent::EmergencyStop { cause, .. } } if cause == "Bench request"
    )));
    assert!(log.rows.last().unwrap().brake == 1.0);
}
