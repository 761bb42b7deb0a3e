//! Property tests for the metric invariants.

use dancegen_core::metrics::{
    beat_align_score, beats_from_speed, diversity, fid, speed_std, FeatureKind, FeatureVector,
};
use dancegen_core::model::MotionSequence;
use dancegen_core::rng::Rng;
use proptest::prelude::*;

fn random_set(seed: u64, count: usize, dim: usize) -> Vec<FeatureVector> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|_| FeatureVector {
            values: rng.uniform_vec(dim, -2.0, 2.0),
            kind: FeatureKind::Kinetic,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fid_self_distance_vanishes(seed in 0u64..500, count in 10usize..24, dim in 1usize..=8) {
        let set = random_set(seed, count, dim);
        let d = fid(&set, &set).unwrap();
        prop_assert!(d.abs() < 1e-6, "fid(X,X) = {d}");
    }

    #[test]
    fn diversity_is_translation_invariant(seed in 0u64..500, count in 2usize..12, dim in 1usize..6, shift in -5.0f64..5.0) {
        let set = random_set(seed, count, dim);
        let shifted: Vec<FeatureVector> = set
            .iter()
            .map(|f| FeatureVector {
                values: f.values.iter().map(|v| v + shift).collect(),
                kind: f.kind,
            })
            .collect();
        let a = diversity(&set).unwrap();
        let b = diversity(&shifted).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn beats_invariant_to_constant_speed_offset(seed in 0u64..500, offset in 0.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let speed: Vec<f64> = (0..80).map(|_| rng.uniform(0.1, 1.0)).collect();
        let lifted: Vec<f64> = speed.iter().map(|s| s + offset).collect();
        let a = beats_from_speed(&speed, 60.0);
        let b = beats_from_speed(&lifted, 60.0);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bas_within_unit_interval(seed in 0u64..500, sigma in 0.01f64..0.5) {
        let mut rng = Rng::new(seed);
        let music: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 + rng.uniform(0.0, 0.2)).collect();
        let dance: Vec<f64> = (0..8).map(|_| rng.uniform(0.0, 3.0)).collect();
        let s = beat_align_score(&music, &dance, sigma).unwrap();
        prop_assert!((0.0..=1.0).contains(&s), "bas {s}");
    }
}

#[test]
fn bas_monotone_as_dance_beats_drift_away() {
    let music = [0.5, 1.0, 1.5, 2.0];
    let mut previous = f64::INFINITY;
    for k in 0..20 {
        let offset = k as f64 * 0.01;
        let dance: Vec<f64> = music.iter().map(|b| b + offset).collect();
        let s = beat_align_score(&music, &dance, 0.05).unwrap();
        assert!(
            s <= previous + 1e-12,
            "score rose from {previous} to {s} at offset {offset}"
        );
        previous = s;
    }
}

#[test]
fn speed_std_time_reversal_invariance_window_aligned() {
    // T chosen so the speed samples tile the windows exactly:
    // (T - 1) divisible by window frames.
    let fps = 30.0;
    let window = 2.0;
    let t = 241; // 240 speed samples = 4 windows of 60
    let mut rng = Rng::new(99);
    let mut p = MotionSequence::zeros(t, 3, fps);
    for ti in 0..t {
        for j in 0..3 {
            for a in 0..3 {
                *p.coord_mut(ti, j, a) = rng.uniform(-1.0, 1.0)
                    + (ti as f64 * (0.05 + j as f64 * 0.01) + a as f64).sin();
            }
        }
    }
    let mut reversed = MotionSequence::zeros(t, 3, fps);
    for ti in 0..t {
        for j in 0..3 {
            for a in 0..3 {
                *reversed.coord_mut(ti, j, a) = p.coord(t - 1 - ti, j, a);
            }
        }
    }
    let (fwd_joints, fwd_mean) = speed_std(&p, window).unwrap();
    let (rev_joints, rev_mean) = speed_std(&reversed, window).unwrap();
    for (a, b) in fwd_joints.iter().zip(&rev_joints) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!((fwd_mean - rev_mean).abs() < 1e-10);
}
