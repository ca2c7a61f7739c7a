//! Integration coverage of the full two-party session: determinism and
//! replay, abort paths, leakage accounting, key sizing, and the corrector
//! hook.

use cvqkd_core::channel::ChannelParams;
use cvqkd_core::decoder::GroupId;
use cvqkd_core::error::Error;
use cvqkd_core::session::{
    replay_session, run_session, run_session_with, Corrector, SessionConfig,
};

fn config_at(distance_km: f64, xi: f64, n: u64, seed: u64) -> SessionConfig {
    let params = ChannelParams::from_distance(distance_km, 0.2, xi, 500.0).unwrap();
    SessionConfig::new(params, n, seed)
}

#[test]
fn session_at_15km_distills_a_key() {
    let result = run_session(&config_at(15.0, 0.0, 100_000, 42)).unwrap();
    assert!(result.report.practical_rate > 0.0);
    assert!(!result.final_key.is_empty());
    assert_eq!(result.n + result.calibration_pulses, 100_000);
    assert_eq!(result.calibration_pulses, 10_000);
    // final length never exceeds the grouped-rate budget
    let budget = result.n as f64 * result.report.practical_rate;
    assert!(result.final_key.len() as f64 <= budget);
    assert!((result.final_key_rate - result.final_key.len() as f64 / result.n as f64).abs() < 1e-12);
    // with f_ec = 1 the length is exactly the floored budget
    assert_eq!(result.final_key.len(), budget.floor() as usize);
    // every leaked bit appears in exactly one transcript record
    assert!((result.transcript.total_leaked_bits() - result.leaked_bits).abs() < 1e-9);
    // normality screen ran on the calibration residuals
    assert!(result.normality.pass);
    // estimates are close to the calibrated channel
    assert!((result.estimated_transmission - 0.501187).abs() < 0.01);
}

#[test]
fn session_is_deterministic_and_replayable() {
    let config = config_at(15.0, 0.0, 100_000, 7);
    let a = run_session(&config).unwrap();
    let b = run_session(&config).unwrap();
    assert_eq!(a.final_key, b.final_key);
    assert_eq!(a.key_digest_hex, b.key_digest_hex);
    assert_eq!(a.transcript.encode(), b.transcript.encode());
    assert_eq!(a.kept, b.kept);
    let replayed = replay_session(&config, &a.transcript).unwrap();
    assert_eq!(replayed.key_digest_hex, a.key_digest_hex);

    let other = run_session(&config_at(15.0, 0.0, 100_000, 8)).unwrap();
    assert_ne!(other.key_digest_hex, a.key_digest_hex);
}

#[test]
fn session_aborts_when_no_key_is_distillable() {
    // excess noise far above the threshold at long distance
    let err = run_session(&config_at(150.0, 0.6, 100_000, 3)).unwrap_err();
    match err {
        Error::SessionAbort(msg) => {
            assert!(msg.contains("non-positive"), "unexpected abort: {msg}")
        }
        other => panic!("expected a session abort, got {other}"),
    }
}

#[test]
fn error_correction_inefficiency_shortens_the_key_linearly() {
    let base = config_at(15.0, 0.0, 100_000, 11);
    let r1 = run_session(&base).unwrap();
    let mut lossy = base.clone();
    lossy.f_ec = 1.1;
    let r11 = run_session(&lossy).unwrap();
    // leaked bits scale exactly by f_ec
    assert!((r11.leaked_bits - 1.1 * r1.leaked_bits).abs() < 1e-6);
    // the key shrinks by the extra 0.1x leakage, up to flooring
    let expected_drop = 0.1 * r1.leaked_bits;
    let actual_drop = r1.final_key.len() as f64 - r11.final_key.len() as f64;
    assert!(
        (actual_drop - expected_drop).abs() <= 1.0,
        "expected drop {expected_drop}, got {actual_drop}"
    );
}

#[test]
fn corrupted_correction_fails_digest_verification() {
    struct FaultyCorrector;
    impl Corrector for FaultyCorrector {
        fn correct(&self, _: GroupId, _: &[bool], bob_bits: &[bool], _: f64) -> Vec<bool> {
            let mut bits = bob_bits.to_vec();
            if let Some(b) = bits.first_mut() {
                *b = !*b;
            }
            bits
        }
    }
    let err = run_session_with(&config_at(15.0, 0.0, 100_000, 5), &FaultyCorrector).unwrap_err();
    assert!(matches!(err, Error::DigestMismatch { .. }), "got {err}");
}

#[test]
fn session_with_excess_noise_pays_the_penalty() {
    let clean = run_session(&config_at(15.0, 0.0, 100_000, 13)).unwrap();
    let noisy = run_session(&config_at(15.0, 0.2, 100_000, 13)).unwrap();
    let g = noisy.report.groups.len(); // groups exist under noise too
    assert!(g > 0);
    let expected_penalty = (1.0f64 + 10f64.powf(-0.3) * 0.2).log2();
    assert!((noisy.report.penalty_2hprime - expected_penalty).abs() < 1e-15);
    assert!(noisy.report.practical_rate < clean.report.practical_rate);
    assert!(!noisy.final_key.is_empty());
}

#[test]
fn calibration_starved_session_is_rejected() {
    // 10% of 20k pulses is below the estimator's floor
    let err = run_session(&config_at(15.0, 0.0, 20_000, 1)).unwrap_err();
    assert!(matches!(err, Error::InsufficientSamples { .. }), "got {err}");
}
