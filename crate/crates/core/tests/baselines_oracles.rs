use bundlesight_core::baselines::{
    fit_grid_search, fit_metropolis_hastings, fit_mnl, fit_mnl_from, ChoiceModel, GridSpec, MhConfig, MnlParams,
    PriorBox,
};
use bundlesight_core::theory::single_product_dataset;
use bundlesight_core::{Bundle, Dataset, GaussianParams, GmmComponent, GmmParams, PriceMenu, Transaction};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn singles(prices: &[f64]) -> PriceMenu {
    let d = prices.len();
    PriceMenu::new(
        prices
            .iter()
            .enumerate()
            .map(|(i, p)| (Bundle::single(d, i).unwrap(), *p))
            .collect(),
    )
    .unwrap()
}

/// Two products sold alone, utilities `α_j + β p_j`, no purchase at 0.
fn logit_data(alpha: [f64; 2], beta: f64, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let txns = (0..n)
        .map(|_| {
            let p = [rng.random_range(2.0..12.0), rng.random_range(2.0..12.0)];
            let e = [1.0, (alpha[0] + beta * p[0]).exp(), (alpha[1] + beta * p[1]).exp()];
            let u = rng.random::<f64>() * e.iter().sum::<f64>();
            let c = if u < e[0] {
                0
            } else if u < e[0] + e[1] {
                1
            } else {
                2
            };
            Transaction::new(singles(&p), c).unwrap()
        })
        .collect();
    Dataset::new(2, txns).unwrap()
}

#[test]
fn logit_parameters_are_recovered() {
    let (alpha, beta) = ([1.5, 0.5], -0.3);
    let fit = fit_mnl(&logit_data(alpha, beta, 10_000, 8)).unwrap();
    assert!(!fit.ridge_applied);
    let p = &fit.params;
    assert!((p.intercepts[&vec![true, false]] - alpha[0]).abs() < 0.1, "{p:?}");
    assert!((p.intercepts[&vec![false, true]] - alpha[1]).abs() < 0.1, "{p:?}");
    assert!((p.price_coefficient - beta).abs() < 0.1, "{p:?}");
}

#[test]
fn logit_optimum_does_not_depend_on_the_start() {
    let data = logit_data([0.8, -0.2], -0.25, 2000, 3);
    let reference = fit_mnl(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let start: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let other = fit_mnl_from(&data, Some(&start)).unwrap();
        assert!((other.log_likelihood - reference.log_likelihood).abs() < 1e-4);
        for (a, b) in other
            .params
            .intercepts
            .values()
            .zip(reference.params.intercepts.values())
        {
            assert!((a - b).abs() < 1e-4);
        }
        assert!((other.params.price_coefficient - reference.params.price_coefficient).abs() < 1e-4);
    }
}

/// `P(v1 > a, v2 > b)` for a bivariate normal, by Simpson's rule over `v1`
/// with the conditional normal of `v2`.
fn upper_orthant(mu: [f64; 2], s: [[f64; 2]; 2], a: f64, b: f64) -> f64 {
    let s1 = s[0][0].sqrt();
    let slope = s[0][1] / s[0][0];
    let cond_sd = (s[1][1] - s[0][1] * s[0][1] / s[0][0]).sqrt();
    let lo = a.max(mu[0] - 12.0 * s1);
    let hi = mu[0] + 12.0 * s1;
    if lo >= hi {
        return 0.0;
    }
    let n = 4000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let z = (x - mu[0]) / s1;
        let dens = (-0.5 * z * z).exp() / (s1 * (2.0 * std::f64::consts::PI).sqrt());
        let m2 = mu[1] + slope * (x - mu[0]);
        dens * phi_cdf((m2 - b) / cond_sd)
    };
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn gaussian_prediction_matches_quadrature() {
    let mu = [10.0, 12.0];
    let s = [[4.0, 1.0], [1.0, 5.0]];
    let params = GaussianParams::from_slices(&mu, &[4.0, 1.0, 1.0, 5.0]).unwrap();
    let (p1, p2) = (9.0, 13.5);
    // The bundle at the summed price splits the plane into quadrants.
    let menu = PriceMenu::new(vec![
        (Bundle::single(2, 0).unwrap(), p1),
        (Bundle::single(2, 1).unwrap(), p2),
        (Bundle::from_products(2, &[0, 1]).unwrap(), p1 + p2),
    ])
    .unwrap();
    let got = params.predict(&menu, 400_000, 5).unwrap();
    let both = upper_orthant(mu, s, p1, p2);
    let only1 = upper_orthant(mu, s, p1, f64::NEG_INFINITY) - both;
    let only2 = upper_orthant(mu, s, f64::NEG_INFINITY, p2) - both;
    let none = 1.0 - both - only1 - only2;
    for (g, e) in got.iter().zip([none, only1, only2, both]) {
        assert!((g - e).abs() < 0.01, "{got:?} vs {:?}", [none, only1, only2, both]);
    }
}

#[test]
fn flat_likelihood_accepts_everything() {
    // Every valuation near the prior buys at this price.
    let data = single_product_dataset(&[(0.01, 1), (0.01, 1)]).unwrap();
    let cfg = MhConfig {
        n_iterations: 2000,
        prior: Some(PriorBox {
            low: vec![10.0],
            high: vec![210.0],
        }),
        init: Some(vec![110.0]),
        mc_count: 200,
        ..MhConfig::new(DMatrix::from_element(1, 1, 1.0), 4)
    };
    let r = fit_metropolis_hastings(&data, &cfg).unwrap();
    assert!(r.acceptance_rate > 0.98, "{}", r.acceptance_rate);
    assert!(r.log_posterior.iter().all(|lp| (lp - r.log_posterior[0]).abs() < 1e-12));
}

#[test]
fn chain_samples_the_grid_posterior() {
    let data = single_product_dataset(&[(10.0, 1)]).unwrap();
    let sigma = DMatrix::from_element(1, 1, 4.0);
    let prior = PriorBox {
        low: vec![0.0],
        high: vec![20.0],
    };
    let mc = 5000;
    let grid = GridSpec::uniform(&[0.0], &[20.0], 40).unwrap();
    let g = fit_grid_search(&data, &grid, &sigma, Some(&prior), mc, 9).unwrap();
    let w: Vec<f64> = g
        .log_posterior
        .iter()
        .enumerate()
        .map(|(i, lp)| (lp - g.best_log_posterior).exp() * if i == 0 || i == 40 { 0.5 } else { 1.0 })
        .collect();
    let total: f64 = w.iter().sum();
    let cfg = MhConfig {
        n_iterations: 60_000,
        proposal_halfwidth: 3.0,
        burn_in_fraction: 0.05,
        prior: Some(prior),
        init: Some(vec![12.0]),
        mc_count: mc,
        ..MhConfig::new(sigma.clone(), 9)
    };
    let r = fit_metropolis_hastings(&data, &cfg).unwrap();
    let kept = &r.chain[3000..];
    let mut hist = vec![0.0; 41];
    for m in kept {
        hist[((m[0] / 0.5).round() as usize).min(40)] += 1.0 / kept.len() as f64;
    }
    let tv: f64 = 0.5 * hist.iter().zip(&w).map(|(h, x)| (h - x / total).abs()).sum::<f64>();
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn one_dimensional_grid_map_matches_quadrature() {
    let (price, sd) = (10.0, 2.0);
    let rows: Vec<(f64, usize)> = (0..100).map(|k| (price, usize::from(k < 70))).collect();
    let data = single_product_dataset(&rows).unwrap();
    let prior = PriorBox {
        low: vec![0.0],
        high: vec![20.0],
    };
    let grid = GridSpec::uniform(&[0.0], &[20.0], 80).unwrap();
    let r = fit_grid_search(
        &data,
        &grid,
        &DMatrix::from_element(1, 1, sd * sd),
        Some(&prior),
        200_000,
        3,
    )
    .unwrap();
    // Flat prior: maximize 70 ln Φ + 30 ln(1 − Φ) on a fine grid.
    let map = (0..=200_000)
        .map(|k| k as f64 * 1e-4)
        .map(|mu| {
            let q = phi_cdf((mu - price) / sd);
            (mu, 70.0 * q.ln() + 30.0 * (1.0 - q).ln())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert!((r.best_mu[0] - map).abs() <= 0.25 + 1e-9, "{} vs {map}", r.best_mu[0]);
}

#[test]
fn refining_the_grid_never_lowers_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let txns = (0..60)
        .map(|_| {
            let p = [rng.random_range(8.0..14.0), rng.random_range(8.0..14.0)];
            Transaction::new(singles(&p), rng.random_range(0..3)).unwrap()
        })
        .collect();
    let data = Dataset::new(2, txns).unwrap();
    let sigma = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 5.0]);
    let prior = PriorBox {
        low: vec![0.0, 0.0],
        high: vec![24.0, 24.0],
    };
    let mut last = f64::NEG_INFINITY;
    for steps in [6, 12, 24] {
        let grid = GridSpec::uniform(&[0.0, 0.0], &[24.0, 24.0], steps).unwrap();
        let r = fit_grid_search(&data, &grid, &sigma, Some(&prior), 3000, 7).unwrap();
        assert!(r.best_log_posterior >= last);
        last = r.best_log_posterior;
    }
}

fn random_menu(dim: usize, raw: &[(u8, f64)]) -> Option<PriceMenu> {
    let mut seen = BTreeMap::new();
    for (bits, p) in raw {
        let mask: Vec<bool> = (0..dim).map(|i| bits >> i & 1 == 1).collect();
        if mask.iter().any(|b| *b) {
            seen.entry(mask).or_insert(*p);
        }
    }
    let entries = seen
        .into_iter()
        .map(|(m, p)| (Bundle::new(m).unwrap(), p))
        .collect::<Vec<_>>();
    (!entries.is_empty()).then(|| PriceMenu::new(entries).unwrap())
}

fn assert_distribution(p: &[f64], len: usize) -> Result<(), TestCaseError> {
    prop_assert_eq!(p.len(), len);
    prop_assert!(p.iter().all(|x| *x >= 0.0));
    prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    Ok(())
}

proptest! {
    #![proptest_config(Config { cases: 64, rng_seed: RngSeed::Fixed(5), failure_persistence: None, ..Config::default() })]

    #[test]
    fn every_model_predicts_a_distribution(
        raw in prop::collection::vec((1u8..8, 0.5f64..40.0), 1..6),
        mu in prop::collection::vec(0.0f64..30.0, 3),
        alpha in prop::collection::vec(-3.0f64..3.0, 7),
        beta in -1.0f64..0.0,
        seed in any::<u64>(),
    ) {
        let Some(menu) = random_menu(3, &raw) else { return Ok(()) };
        let g = GaussianParams::from_slices(&mu, &[4.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 3.0]).unwrap();
        let shifted: Vec<f64> = mu.iter().map(|m| m + 5.0).collect();
        let mix = GmmParams::new(vec![
            GmmComponent { phi: 0.3, params: g.clone() },
            GmmComponent { phi: 0.7, params: GaussianParams::from_slices(&shifted, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]).unwrap() },
        ]).unwrap();
        let mnl = MnlParams {
            intercepts: (1u8..8)
                .map(|b| ((0..3).map(|i| b >> i & 1 == 1).collect(), alpha[b as usize - 1]))
                .collect(),
            price_coefficient: beta,
        };
        let len = menu.len() + 1;
        assert_distribution(&g.predict(&menu, 500, seed).unwrap(), len)?;
        assert_distribution(&mix.predict(&menu, 500, seed).unwrap(), len)?;
        assert_distribution(&mnl.predict(&menu, 1, seed).unwrap(), len)?;
    }
}
