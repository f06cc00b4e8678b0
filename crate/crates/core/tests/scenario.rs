use vilbench::harness::scenario::PRESET_NAMES;
use vilbench::harness::*;

#[test]
fn presets_resolve_and_validate() {
    for name in PRESET_NAMES {
        let sc = ScenarioConfig::resolve(name).unwrap();
        sc.validate().unwrap();
    }
    assert!(matches!(ScenarioConfig::resolve("no_such_thing"), Err(HarnessError::Config(_))));
}

#[test]
fn scenario_file_round_trip() {
    let sc = ScenarioConfig::emergency_brake(7.5).with_seed(11);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("eb.json");
    std::fs::write(&p, serde_json::to_string_pretty(&sc).unwrap()).unwrap();
    assert_eq!(ScenarioConfig::resolve(p.to_str().unwrap()).unwrap(), sc);
}

#[test]
fn minimal_file_takes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("min.json");
    std::fs::write(&p, r#"{"name":"ManualDrive","map":"straight_1km","duration":2.0,"seed":1}"#).unwrap();
    let sc = ScenarioConfig::resolve(p.to_str().unwrap()).unwrap();
    assert_eq!(sc.tick_period, 0.02);
    assert_eq!(sc.total_ticks(), 100);
    assert_eq!(sc.camera.fps, 5.0);
    sc.validate().unwrap();
}

#[test]
fn map_can_be_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("bend.json");
    std::fs::write(&map, r#"{"closed":false,"lane_width":3.5,"points":[[0,0],[200,0],[300,50]]}"#).unwrap();
    let sc = ScenarioConfig {
        map: map.to_str().unwrap().to_string(),
        duration: 2.0,
        ..ScenarioConfig::manual_drive()
    };
    let log = run_scenario(&sc, &StageConfig::internal()).unwrap();
    assert_eq!(log.rows.len(), 100);
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ScenarioConfig::acc_lka();
    let cases: Vec<ScenarioConfig> = vec![
        ScenarioConfig { duration: 0.0, ..base.clone() },
        ScenarioConfig { tick_period: -0.02, ..base.clone() },
        // not a whole number of microseconds
        ScenarioConfig { tick_period: 0.0200003, ..base.clone() },
        ScenarioConfig { map: "atlantis".into(), ..base.clone() },
        ScenarioConfig { trigger_distance: 0.0, ..base.clone() },
        {
            let mut s = base.clone();
            s.camera.fps = 0.0;
            s
        },
        {
            let mut s = base.clone();
            s.event_script.push(TimedEvent { at: -1.0, action: EventAction::RemovePedestrians });
            s
        },
    ];
    for (i, sc) in cases.iter().enumerate() {
        assert!(matches!(sc.validate(), Err(HarnessError::Config(_))), "case {i}");
        assert!(matches!(run_stage(sc, &StageConfig::internal()), Err(HarnessError::Config(_))), "case {i}");
    }
}

#[test]
fn ten_millisecond_ticks_keep_cadences() {
    let mut sc = ScenarioConfig::acc_lka();
    sc.duration = 10.0;
    sc.tick_period = 0.010;
    let log = run_scenario(&sc, &StageConfig::internal()).unwrap();
    assert_eq!(log.rows.len(), 1000);
    assert_eq!(log.counters.control_emissions, 1000);
    assert_eq!(log.counters.comfort_emissions, 200);
}

#[test]
fn scripted_lead_braking_is_followed() {
    let mut sc = ScenarioConfig::acc_lka();
    sc.event_script.push(TimedEvent {
        at: 40.0,
        action: EventAction::SetLeadMotion { speed: 8.333, accel: -2.0 },
    });
    let log = run_scenario(&sc, &StageConfig::internal()).unwrap();
    let last = log.rows.last().unwrap();
    assert!(last.speed < 0.1, "ego still moving at {}", last.speed);
    assert!(log.rows.iter().all(|r| r.gap.unwrap() > 0.0));
}
