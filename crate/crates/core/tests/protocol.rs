use std::io::{Cursor, Write};
use std::net::{TcpListener, TcpStream};

use vilbench::gateway::{encode_frame, ControlCommand, E2EFrame, GatewayEvent, GatewayMode};
use vilbench::harness::peers::serve_cecas_session;
use vilbench::harness::protocol::{
    encode_message, frames_from_hex, frames_to_hex, read_message, write_message, Direction, PeerSetup,
    TranscriptEntry, MAX_MESSAGE_LEN, PROTOCOL_VERSION,
};
use vilbench::harness::*;

fn bye() -> Message {
    Message::Bye { reason: "done".into() }
}

#[test]
fn length_prefix_is_little_endian_body_length() {
    let bytes = encode_message(&bye());
    let body = &bytes[4..];
    assert_eq!(u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize, body.len());
    let v: serde_json::Value = serde_json::from_slice(body).unwrap();
    assert_eq!(v["type"], "Bye");
    assert_eq!(v["reason"], "done");
}

#[test]
fn messages_round_trip() {
    let setup = PeerSetup {
        scenario: ScenarioConfig::acc_lka(),
        lockstep: true,
        transport_delay: 0.001,
        faults: FaultPlan::default(),
        gateway_addr: Some("127.0.0.1:9".into()),
    };
    let frame = encode_frame(0x0100, 7, &ControlCommand::neutral().to_payload()).unwrap();
    let msgs = vec![
        Message::Hello {
            role: Role::World,
            version: PROTOCOL_VERSION,
            setup: Some(Box::new(setup)),
        },
        Message::GatewayFrame {
            tick: 3,
            frames: frames_to_hex(std::slice::from_ref(&frame)),
        },
        Message::ModeEvent {
            tick: 4,
            event: GatewayEvent::ModeChanged {
                time: 0.08,
                from: GatewayMode::ExternalControl,
                to: GatewayMode::FallbackLimited,
                cause: "test".into(),
            },
        },
        bye(),
    ];
    let mut buf = Vec::new();
    for m in &msgs {
        write_message(&mut buf, m).unwrap();
    }
    let mut rd = Cursor::new(buf);
    for m in &msgs {
        assert_eq!(read_message(&mut rd).unwrap().as_ref(), Some(m));
    }
    assert!(read_message(&mut rd).unwrap().is_none(), "clean end of stream");
    assert_eq!(frames_from_hex(&frames_to_hex(std::slice::from_ref(&frame))).unwrap(), vec![frame]);
}

#[test]
fn frame_hex_is_the_wire_layout() {
    let f = encode_frame(0x0101, 0x2A, &[0xDE, 0xAD]).unwrap();
    let hex = &frames_to_hex(std::slice::from_ref(&f))[0];
    assert_eq!(&hex[..8], "01012a02");
    assert_eq!(hex.len(), 2 * (5 + 2));
    assert_eq!(E2EFrame::from_hex(hex).unwrap(), f);
}

#[test]
fn malformed_input_is_a_protocol_violation() {
    let violation = |bytes: Vec<u8>| {
        matches!(read_message(&mut Cursor::new(bytes)), Err(HarnessError::ProtocolViolation(_)))
    };
    let full = encode_message(&bye());
    assert!(violation(full[..full.len() - 3].to_vec()), "truncated body");
    let mut junk = 5u32.to_le_bytes().to_vec();
    junk.extend_from_slice(b"{nope");
    assert!(violation(junk), "undecodable body");
    let mut unknown = Vec::new();
    let body = br#"{"type":"Teleport"}"#;
    unknown.extend_from_slice(&(body.len() as u32).to_le_bytes());
    unknown.extend_from_slice(body);
    assert!(violation(unknown), "unknown type");
    assert!(violation((MAX_MESSAGE_LEN + 1).to_le_bytes().to_vec()), "oversized");
    assert!(matches!(
        frames_from_hex(&["zz".to_string()]),
        Err(HarnessError::ProtocolViolation(_))
    ));
}

fn entry(peer: Role, direction: Direction, kind: &str, tick: u64) -> TranscriptEntry {
    TranscriptEntry {
        peer,
        direction,
        kind: kind.into(),
        tick: Some(tick),
    }
}

#[test]
fn lockstep_check_on_handmade_transcripts() {
    use Direction::*;
    let ok = vec![
        entry(Role::Cecas, Sent, "TickState", 0),
        entry(Role::Gateway, Sent, "TickState", 0),
        entry(Role::Cecas, Received, "ControlReply", 0),
        entry(Role::Gateway, Received, "ControlReply", 0),
        entry(Role::Cecas, Sent, "TickState", 1),
    ];
    assert!(check_lockstep(&ok).is_ok());
    let mut early = ok.clone();
    early.swap(3, 4);
    assert!(check_lockstep(&early).is_err(), "tick 1 sent before the gateway replied to tick 0");
}

#[test]
fn external_run_transcript_is_lockstep() {
    let mut sc = ScenarioConfig::acc_lka();
    sc.duration = 2.0;
    let out = run_stage(&sc, &StageConfig::vil()).unwrap();
    let t = out.transcript.expect("remote runs keep a transcript");
    check_lockstep(&t).unwrap();
    let sent = |peer: Role| {
        t.iter()
            .filter(|e| e.peer == peer && e.direction == Direction::Sent && e.kind == "TickState")
            .count()
    };
    assert_eq!(sent(Role::Cecas), 100);
    assert_eq!(sent(Role::Gateway), 100);
    let kinds: std::collections::BTreeSet<_> = t.iter().map(|e| e.kind.as_str()).collect();
    for k in ["Hello", "TickState", "ControlReply", "Bye"] {
        assert!(kinds.contains(k), "missing {k}");
    }
}

#[test]
fn peer_rejects_wrong_version() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    let server = std::thread::spawn(move || serve_cecas_session(l.accept().unwrap().0));
    let mut s = TcpStream::connect(addr).unwrap();
    write_message(
        &mut s,
        &Message::Hello {
            role: Role::World,
            version: PROTOCOL_VERSION + 1,
            setup: None,
        },
    )
    .unwrap();
    s.flush().unwrap();
    assert!(matches!(server.join().unwrap(), Err(HarnessError::ProtocolViolation(_))));
}

#[test]
fn peer_that_vanishes_is_reported() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    // answers the handshake, then hangs up
    std::thread::spawn(move || {
        let (mut s, _) = l.accept().unwrap();
        let _ = read_message(&mut s);
        write_message(
            &mut s,
            &Message::Hello {
                role: Role::Cecas,
                version: PROTOCOL_VERSION,
                setup: None,
            },
        )
        .unwrap();
        let _ = read_message(&mut s);
    });
    let stage = StageConfig {
        endpoints: Endpoints {
            cecas: Some(addr),
            gateway: None,
        },
        ..StageConfig::external()
    };
    let err = run_stage(&ScenarioConfig::acc_lka(), &stage).err().expect("run must fail");
    assert!(matches!(err, HarnessError::PeerUnreachable(_) | HarnessError::ProtocolViolation(_)), "{err}");
}

#[test]
fn unreachable_endpoint() {
    let stage = StageConfig {
        endpoints: Endpoints {
            cecas: Some("127.0.0.1:1".into()),
            gateway: None,
        },
        ..StageConfig::external()
    };
    let err = run_stage(&ScenarioConfig::acc_lka(), &stage).err().expect("run must fail");
    assert!(matches!(err, HarnessError::PeerUnreachable(_)), "{err}");
}
