//! Soft nearest neighbour loss against a direct evaluation, plus temperature search
//! against a dense grid.

mod oracles;

use advmap_core::geometry::{optimize_temperature, snn_loss};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use oracles::direct_snn;
use rand_chacha::ChaCha8Rng;

fn refs(points: &[Vec<f32>]) -> Vec<&[f32]> {
    points.iter().map(Vec::as_slice).collect()
}

#[test]
fn hand_instance() {
    let pts = vec![vec![0.0f32], vec![0.0], vec![1.0]];
    let l = snn_loss(&refs(&pts), &[0, 0, 1], 1.0).unwrap();
    assert!((l - 0.31326).abs() < 5e-6, "{l}");
}

#[test]
fn hundred_random_batches_match_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let b = rng.random_range(4..24);
        let dim = rng.random_range(1..6);
        let classes = rng.random_range(2..4);
        let pts: Vec<Vec<f32>> = (0..b).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..classes)).collect();
        labels[0] = labels[1];
        let t = rng.random_range(0.2..5.0);
        let got = snn_loss(&refs(&pts), &labels, t).unwrap();
        let want = direct_snn(&pts, &labels, t);
        assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn optimised_temperature_beats_a_dense_grid() {
    let spacing = 10.0 / 128.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // two overlapping blobs give an interior optimum
        let pts: Vec<Vec<f32>> = (0..16)
            .map(|i| {
                let centre = if i < 8 { 0.0 } else { 0.6 };
                vec![centre + rng.random_range(-0.5..0.5f32), rng.random_range(-0.5..0.5f32)]
            })
            .collect();
        let labels: Vec<usize> = (0..16).map(|i| i / 8).collect();
        let r = refs(&pts);
        let (best_log_t, best) = (0..=128)
            .map(|i| {
                let lt = -5.0 + i as f64 * spacing;
                (lt, snn_loss(&r, &labels, lt.exp()).unwrap())
            })
            .fold((0.0, f64::INFINITY), |acc, (lt, l)| if l < acc.1 { (lt, l) } else { acc });
        let (t, loss) = optimize_temperature(&r, &labels, 1.0, 200, 0.5).unwrap();
        assert!(loss <= best + 1e-9, "seed {seed}: {loss} vs grid {best}");
        assert!(
            (t.ln() - best_log_t).abs() <= spacing,
            "seed {seed}: log T* {} vs grid {best_log_t}",
            t.ln()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_under_relabelling(seed in any::<u64>(), b in 4usize..16, shift in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f32>> = (0..b).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let mut labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..3)).collect();
        labels[1] = labels[0];
        let renamed: Vec<usize> = labels.iter().map(|&l| (l + shift) % 3 + 10).collect();
        let a = snn_loss(&refs(&pts), &labels, 0.7).unwrap();
        let c = snn_loss(&refs(&pts), &renamed, 0.7).unwrap();
        prop_assert!((a - c).abs() <= 1e-12);
    }

    #[test]
    fn temperature_search_never_increases_the_loss(seed in any::<u64>(), t0 in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f32>> = (0..10).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let start = snn_loss(&refs(&pts), &labels, t0).unwrap();
        let (t, loss) = optimize_temperature(&refs(&pts), &labels, t0, 30, 0.5).unwrap();
        prop_assert!(t > 0.0);
        prop_assert!(loss <= start);
    }
}
