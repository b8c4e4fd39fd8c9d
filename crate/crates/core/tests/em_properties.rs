use bundlesight_core::em::{compute_q_hat, e_step, m_step};
use bundlesight_core::{fit, Bundle, Dataset, EmConfig, GaussianParams, PriceMenu, SampleBatch, Transaction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn fixed(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0xe11),
        failure_persistence: None,
        ..Config::default()
    }
}

/// Random 2D batches: each a few weighted points.
fn batches_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    let batch = (3usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, 2 * n),
            prop::collection::vec(0.05f64..1.0, n),
        )
    });
    prop::collection::vec(batch, 2..12)
}

fn to_batches(raw: &[(Vec<f64>, Vec<f64>)]) -> Vec<SampleBatch> {
    raw.iter()
        .map(|(p, w)| SampleBatch::weighted(2, p.clone(), w.clone()).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(fixed(128))]

    /// μ = mean of conditional means; Σ = between-batch scatter plus the mean
    /// of within-batch conditional covariances.
    #[test]
    fn m_step_matches_moment_formulas(raw in batches_strategy()) {
        let batches = to_batches(&raw);
        let n = batches.len() as f64;
        let cond_means: Vec<Vec<f64>> = batches.iter().map(|b| b.weighted_mean()).collect();
        let mu: Vec<f64> = (0..2).map(|i| cond_means.iter().map(|e| e[i]).sum::<f64>() / n).collect();
        let mut sigma = [[0.0; 2]; 2];
        for (b, e) in batches.iter().zip(&cond_means) {
            for r in 0..2 {
                for c in 0..2 {
                    let u: f64 = b.points().zip(b.weights()).map(|(x, w)| w * (x[r] - e[r]) * (x[c] - e[c])).sum();
                    sigma[r][c] += ((e[r] - mu[r]) * (e[c] - mu[c]) + u) / n;
                }
            }
        }
        let got = m_step(&batches).unwrap();
        for r in 0..2 {
            prop_assert!((got.mu()[r] - mu[r]).abs() < 1e-9);
            for c in 0..2 {
                prop_assert!((got.sigma()[(r, c)] - sigma[r][c]).abs() < 1e-8, "{:?} vs {:?}", got.sigma(), sigma);
            }
        }
    }

    #[test]
    fn m_step_maximizes_q_hat(raw in batches_strategy(), dm in prop::collection::vec(-1.0f64..1.0, 2), scale in 0.5f64..2.0, rho in -0.5f64..0.5) {
        let batches = to_batches(&raw);
        let best = m_step(&batches).unwrap();
        let q_best = compute_q_hat(&batches, &best).unwrap();
        let other = GaussianParams::from_slices(&[dm[0], dm[1]], &[scale, rho, rho, scale]).unwrap();
        prop_assert!(q_best >= compute_q_hat(&batches, &other).unwrap() - 1e-9);
        for k in 0..2 {
            for delta in [-0.1, 0.1] {
                let mut m = best.mu().clone();
                m[k] += delta;
                let nudged = best.with_mean(m).unwrap();
                prop_assert!(q_best >= compute_q_hat(&batches, &nudged).unwrap() - 1e-9);
            }
        }
    }
}

#[test]
fn q_hat_hand_values() {
    let one = SampleBatch::uniform(2, vec![1.0, -2.0]).unwrap();
    let at = GaussianParams::new(DVector::from_vec(vec![1.0, -2.0]), DMatrix::identity(2, 2)).unwrap();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    assert!((compute_q_hat(&[one], &at).unwrap() + ln2pi).abs() < 1e-12);
    // Points 0 and 2 in 1D under N(0, 1), weights ½: ½(−½ln2π) + ½(−½ln2π − 2).
    let two = SampleBatch::uniform(1, vec![0.0, 2.0]).unwrap();
    let q = compute_q_hat(&[two], &GaussianParams::standard(1)).unwrap();
    assert!((q - (-0.5 * ln2pi - 1.0)).abs() < 1e-12);
}

fn one_product(prices_and_choices: &[(f64, usize)]) -> Dataset {
    let txns = prices_and_choices
        .iter()
        .map(|&(p, c)| Transaction::new(PriceMenu::new(vec![(Bundle::single(1, 0).unwrap(), p)]).unwrap(), c).unwrap())
        .collect();
    Dataset::new(1, txns).unwrap()
}

#[test]
fn e_step_half_normal_mean() {
    let data = one_product(&[(5.0, 1)]);
    let cfg = EmConfig {
        mc_samples_l: 100_000,
        seed: 3,
        ..EmConfig::default()
    };
    let at = GaussianParams::from_slices(&[5.0], &[1.0]).unwrap();
    let b = e_step(&data, &at, &cfg, 0).unwrap();
    let m = b[0].weighted_mean()[0] - 5.0;
    assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01, "{m}");
    assert_eq!(b, e_step(&data, &at, &cfg, 0).unwrap());
}

/// Buy/no-buy data for N(30, 4) at prices 29 and 31, drawn here rather than
/// by the crate's generator.
fn two_price_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<(f64, usize)> = (0..n)
        .map(|k| {
            let p = if k % 2 == 0 { 29.0 } else { 31.0 };
            let v = 30.0 + 2.0 * rng.sample::<f64, _>(StandardNormal);
            (p, usize::from(v >= p))
        })
        .collect();
    one_product(&rows)
}

#[test]
fn one_product_two_prices_recovery() {
    let data = two_price_data(4000, 17);
    let cfg = EmConfig {
        seed: 5,
        max_iterations: 300,
        tolerance_eps: 1e-3,
        ..EmConfig::default()
    };
    let r = fit(&data, &cfg).unwrap();
    let (mu, var) = (r.params.mu()[0], r.params.sigma()[(0, 0)]);
    assert!((mu - 30.0).abs() < 0.3, "mu {mu}");
    assert!((var - 4.0).abs() < 0.8, "var {var}");
}

#[test]
fn transaction_order_does_not_matter() {
    let data = two_price_data(300, 2);
    let mut txns = data.transactions().to_vec();
    txns.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let shuffled = Dataset::new(1, txns).unwrap();
    let cfg = EmConfig {
        seed: 1,
        max_iterations: 5,
        ..EmConfig::default()
    };
    let a = fit(&data, &cfg).unwrap();
    let b = fit(&shuffled, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.error_trace, b.error_trace);
}

#[test]
fn identical_at_any_worker_count() {
    let truth = bundlesight_core::datagen::generate_ground_truth(3, 4).unwrap();
    let spec = bundlesight_core::datagen::GenSpec::new(bundlesight_core::datagen::GroundTruth::Gaussian(truth), 400, 4);
    let data = bundlesight_core::datagen::generate_dataset(&spec).unwrap().dataset;
    let cfg = EmConfig {
        seed: 8,
        max_iterations: 4,
        ..EmConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit(&data, &cfg).unwrap())
    };
    let one = run(1);
    for t in [2, 5] {
        let other = run(t);
        assert_eq!(one.params, other.params);
        assert_eq!(one.trajectory, other.trajectory);
    }
}
