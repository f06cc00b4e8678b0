use vilbench::batch::*;
use vilbench::harness::*;

#[test]
fn parallel_and_sequential_batches_agree() {
    let jobs: Vec<ScenarioConfig> = (0..6)
        .map(|i| {
            let mut sc = ScenarioConfig::emergency_brake(2.0 + 0.13 * i as f64).with_seed(i);
            sc.camera.distance_noise_std = 0.2;
            sc
        })
        .collect();
    let par = run_batch(&jobs, &StageConfig::internal());
    let seq = run_batch_sequential(&jobs, &StageConfig::internal());
    assert_eq!(par.len(), 6);
    for (p, s) in par.into_iter().zip(seq) {
        let (p, s) = (p.unwrap(), s.unwrap());
        assert_eq!(p.csv_bytes(), s.csv_bytes());
        assert_eq!(p.sidecar_bytes(), s.sidecar_bytes());
    }
}

#[test]
fn batch_keeps_per_job_errors() {
    let bad = ScenarioConfig { duration: -1.0, ..ScenarioConfig::acc_lka() };
    let r = run_batch(&[ScenarioConfig::emergency_brake(1.0), bad], &StageConfig::internal());
    assert!(r[0].is_ok());
    assert!(matches!(r[1], Err(HarnessError::Config(_))));
}

#[test]
fn bit_flip_sweeps_agree_and_cover_every_bit() {
    let frames = random_control_frames(3, 20);
    assert_eq!(frames, random_control_frames(3, 20));
    assert!(frames.iter().all(|f| f.crc_ok()));
    assert!(frames.iter().all(|f| !receiver_rejects(f, &f.to_bytes())));
    let a = bit_flip_sweep(&frames);
    assert_eq!(a, bit_flip_sweep_sequential(&frames));
    assert_eq!(a.flips, frames.iter().map(|f| 8 * f.to_bytes().len()).sum::<usize>());
    assert!(a.all_detected());
}
