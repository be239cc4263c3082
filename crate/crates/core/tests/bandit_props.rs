mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rerank_core::bandit::{GtsState, LinUcbState, TsLinearState};

#[test]
fn ts_posterior_mean_is_ridge_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 18;
    let mut ts = TsLinearState::new(d, 0.5);
    let mut xs = Vec::new();
    let mut rs = Vec::new();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = f64::from(u8::from(rng.random_bool(0.3)));
        ts.update(&x, r).unwrap();
        xs.push(x);
        rs.push(r);
    }
    let oracle = common::ridge(&xs, &rs);
    for (a, b) in ts.mu_hat().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn ts_samples_have_the_posterior_moments() {
    let d = 4;
    let ts = TsLinearState::new(d, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let mut mean = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    for _ in 0..n {
        let s = ts.sample(&mut rng).unwrap();
        for i in 0..d {
            mean[i] += s[i] / n as f64;
            for j in 0..d {
                second[i][j] += s[i] * s[j] / n as f64;
            }
        }
    }
    for i in 0..d {
        assert!(mean[i].abs() < 0.02, "mean {i} = {}", mean[i]);
        for j in 0..d {
            let cov = second[i][j] - mean[i] * mean[j];
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((cov - expect).abs() < 0.05, "cov {i},{j} = {cov}");
        }
    }
}

#[test]
fn ts_without_noise_is_greedy() {
    let mut ts = TsLinearState::new(3, 0.0);
    ts.update(&[1.0, 0.0, 0.0], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = ts.sample(&mut rng).unwrap();
    assert_eq!(s.as_slice(), ts.mu_hat().as_slice());
    let cands = [[0.1, 5.0, 0.0], [0.9, 0.0, 0.0], [0.3, 0.0, 9.0]];
    assert_eq!(ts.select(&cands, &mut rng).unwrap(), 1);
    assert_eq!(ts.select(&cands[..1], &mut rng).unwrap(), 0);
}

#[test]
fn ts_symmetric_posterior_picks_uniformly() {
    let d = 10;
    let ts = TsLinearState::new(d, 0.5);
    let cands: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000u64;
    let mut hits = [0u64; 10];
    for _ in 0..n {
        hits[ts.select(&cands, &mut rng).unwrap()] += 1;
    }
    for h in hits {
        assert!(common::within_3_sigma(h, n, 0.1), "{hits:?}");
    }
}

#[test]
fn ts_sampling_is_reproducible() {
    let mut ts = TsLinearState::new(5, 0.5);
    ts.update(&[1.0, 2.0, 0.0, 0.0, 1.0], 1.0).unwrap();
    let a = ts.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = ts.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn linucb_design_matrix_stays_positive_definite(
        updates in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 4), any::<bool>()), 0..40)
    ) {
        let mut s = LinUcbState::new(4, 1.0);
        for (x, r) in &updates {
            s.update(x, f64::from(u8::from(*r))).unwrap();
        }
        let a = s.a();
        prop_assert_eq!(a.clone(), a.transpose());
        prop_assert!(a.clone().cholesky().is_some());
        prop_assert!(s.theta().iter().all(|t| t.is_finite()));
    }

    #[test]
    fn gts_probabilities_are_a_distribution_and_scale_free(
        weights in prop::collection::vec(1e-6f64..10.0, 1..8),
        votes_seed: u64,
        gamma in 0.0f64..=1.0,
        scale in 1e-3f64..1e3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(votes_seed);
        let votes: Vec<usize> = weights.iter().map(|_| rng.random_range(0..10)).collect();
        let s = GtsState::with_weights(weights.clone(), gamma, 1.0);
        let p = s.probabilities(&votes, 10).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= gamma / 10.0 - 1e-15));
        let scaled = GtsState::with_weights(weights.iter().map(|w| w * scale).collect(), gamma, 1.0);
        let q = scaled.probabilities(&votes, 10).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gts_common_prediction_keeps_ratios(weights in prop::collection::vec(0.1f64..10.0, 2..6), r_hat in 0.01f64..0.99, click: bool) {
        let mut s = GtsState::with_weights(weights.clone(), 0.05, 1.0);
        s.update(&vec![r_hat; weights.len()], f64::from(u8::from(click)));
        for (a, b) in s.normalized_weights().iter().zip(GtsState::with_weights(weights, 0.05, 1.0).normalized_weights()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
