//! One PASS/FAIL line per acceptance criterion. Failures are reported, never
//! panicked on.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bundlesight::repro;
use bundlesight_core::censored::censored_posterior_pmf;
use bundlesight_core::datagen::{generate_dataset, generate_ground_truth, GenSpec, GroundTruth};
use bundlesight_core::domain::{menu_partition, partition_check};
use bundlesight_core::em::m_step;
use bundlesight_core::gmm::{responsibilities, GmmComponent, GmmParams};
use bundlesight_core::rng::stream;
use bundlesight_core::sampler::{
    region_probability, sample_truncated_importance, sample_truncated_rejection, ProposalParams,
};
use bundlesight_core::theory::{
    assumption1_eigenvalue, assumption1_report, contraction_experiment, PartitionSpec, PopulationEm, Whitening,
};
use bundlesight_core::{fit, Bundle, EmConfig, GaussianParams, Polyhedron, PriceMenu, SampleBatch};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Check = fn() -> anyhow::Result<Outcome>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(id: &str, name: &str, f: impl FnOnce() -> anyhow::Result<Outcome>) -> bool {
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => Err(format!("error: {e:#}")),
        Err(_) => Err("panicked".into()),
    };
    let secs = start.elapsed().as_secs_f64();
    let pass = outcome.is_ok();
    let detail = outcome.unwrap_or_else(|e| e);
    println!(
        "{} criterion {id} ({name}): {detail} [{secs:.0}s]",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Population map for N(0, 1) split at zero by quadrature.
fn split_map_oracle(mu: f64) -> f64 {
    let dens = |x: f64| (-0.5 * (x - mu) * (x - mu)).exp() / (2.0 * PI).sqrt();
    let mean_in = |a: f64, b: f64| simpson(|x| x * dens(x), a, b) / simpson(dens, a, b);
    0.5 * mean_in(0.0, mu + 14.0) + 0.5 * mean_in(mu - 14.0, 0.0)
}

fn criterion_1() -> anyhow::Result<Outcome> {
    let r = repro::figure1(&repro::Figure1Config::default())?;
    let ok = matches!(r.first_below, Some(t) if t <= 20) && r.runtime_seconds <= 600.0;
    Ok(check(
        ok,
        format!(
            "first iteration below 0.1 = {:?}, error at 20 = {:.4}, {} bundles",
            r.first_below,
            r.errors[20.min(r.errors.len() - 1)],
            r.distinct_bundles
        ),
    ))
}

fn criterion_2() -> anyhow::Result<Outcome> {
    let r = repro::figure1b(&repro::Figure1bConfig::default())?;
    let medians: Vec<String> = r
        .medians
        .iter()
        .map(|(n, m, se)| format!("N={n}: {m:.4}±{se:.4}"))
        .collect();
    Ok(check(r.monotone(), format!("medians {}", medians.join(", "))))
}

fn criterion_3() -> anyhow::Result<Outcome> {
    let r = repro::figure2(&repro::Figure2Config::default())?;
    let (g, u) = (r.em_wins("gaussian"), r.em_wins("gumbel"));
    Ok(check(
        g >= 4 && u >= 4,
        format!("EM below MNL: gaussian {g}/5, gumbel {u}/5"),
    ))
}

fn criterion_4() -> anyhow::Result<Outcome> {
    let r = repro::censored(&repro::CensoredConfig::default())?;
    let shares: Vec<String> = r.rows.iter().map(|row| format!("{:.3}", row.censored_share)).collect();
    let in_band = r.rows.iter().all(|row| (0.05..=0.15).contains(&row.censored_share));
    Ok(check(
        r.median_gap <= 0.004 && in_band,
        format!(
            "median |RMSE gap| = {:.5} (limit 0.004), censored shares [{}]",
            r.median_gap,
            shares.join(", ")
        ),
    ))
}

fn criterion_5() -> anyhow::Result<Outcome> {
    let r = repro::mh_comparison(&repro::MhComparisonConfig::default())?;
    let em_secs: f64 = r.rows.iter().map(|row| row.em_seconds).sum();
    let wins = r.em_wins();
    let errs: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("{:.3}/{:.3}", row.em_error, row.mh_error))
        .collect();
    Ok(check(
        wins >= 4 && em_secs < 300.0,
        format!(
            "EM below MH in {wins}/{} seeds (EM/MH errors {}), EM {em_secs:.0}s",
            r.rows.len(),
            errs.join(" ")
        ),
    ))
}

fn criterion_6() -> anyhow::Result<Outcome> {
    let std1 = GaussianParams::from_slices(&[0.0], &[1.0])?;
    let split = assumption1_eigenvalue(&PartitionSpec::slabs(&[0.0])?, &std1, 500_000, 1)?;
    let whole = assumption1_eigenvalue(&PartitionSpec::whole_space(1), &std1, 500_000, 2)?;
    Ok(check(
        (split - 2.0 / PI).abs() <= 0.02 && whole <= 0.01,
        format!(
            "split at 0: {split:.4} (2/π = {:.4}), whole space: {whole:.4}",
            2.0 / PI
        ),
    ))
}

fn criterion_7() -> anyhow::Result<Outcome> {
    let std1 = GaussianParams::from_slices(&[0.0], &[1.0])?;
    let split = PartitionSpec::slabs(&[0.0])?;
    let r = contraction_experiment(&std1, &split, 0.2, 10, 500_000, 9)?;
    let decreasing = r.errors.len() == 11 && r.errors.windows(2).all(|w| w[1] < w[0]);
    let worst = r.ratios.iter().copied().fold(f64::MIN, f64::max);
    let pop = PopulationEm::new(&split, &std1, 500_000, 9)?;
    let mut mu = r.initial[0];
    let mut gap = 0.0f64;
    for _ in 0..10 {
        let next = pop.step(&[mu])?[0];
        gap = gap.max((next - split_map_oracle(mu)).abs());
        mu = next;
    }
    Ok(check(
        decreasing && worst <= r.bound + 0.05 && gap <= 0.01,
        format!(
            "strictly decreasing: {decreasing}, worst ratio {worst:.4} vs bound {:.4} + 0.05, max gap to quadrature {gap:.5}",
            r.bound
        ),
    ))
}

fn partition_probes() -> anyhow::Result<Outcome> {
    let entries = [
        (vec![true, false, false], 10.0),
        (vec![false, true, false], 12.0),
        (vec![true, true, false], 19.0),
        (vec![true, true, true], 30.0),
    ];
    let menu = PriceMenu::new(
        entries
            .iter()
            .map(|(m, p)| Ok((Bundle::new(m.clone())?, *p)))
            .collect::<bundlesight_core::Result<_>>()?,
    )?;
    let regions = menu_partition(&menu)?;
    let mut rng = stream(8, &[1]);
    let probes: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..3).map(|_| rng.random_range(0.0..25.0)).collect())
        .collect();
    let mut misses = 0;
    for v in &probes {
        let mut best = (0, 0.0);
        for (k, (mask, p)) in entries.iter().enumerate() {
            let s: f64 = mask.iter().zip(v).filter(|(m, _)| **m).map(|(_, x)| x).sum::<f64>() - p;
            if s > best.1 {
                best = (k + 1, s);
            }
        }
        misses += usize::from(!regions[best.0].contains_point(v));
    }
    Ok(check(
        partition_check(&menu, &probes) && misses == 0,
        format!("{misses} argmax misses"),
    ))
}

fn sampler_moments() -> anyhow::Result<Outcome> {
    let std1 = GaussianParams::from_slices(&[0.0], &[1.0])?;
    let upper = Polyhedron::from_halfspaces(1, &[(vec![1.0], 0.0)])?;
    let half = sample_truncated_rejection(&upper, &std1, 200_000, 1_000_000, &mut stream(8, &[2]))?.weighted_mean()[0];
    let tail = Polyhedron::from_halfspaces(1, &[(vec![1.0], 6.0)])?;
    let proposal = ProposalParams::new(DVector::from_element(1, 6.5), DMatrix::identity(1, 1))?;
    let mills = sample_truncated_importance(&tail, &std1, &proposal, 100_000, &mut stream(8, &[3]))?.weighted_mean()[0];
    let mills_oracle = (-18.0f64).exp() / (2.0 * PI).sqrt() / (0.5 * libm::erfc(6.0 / std::f64::consts::SQRT_2));
    let corr = GaussianParams::from_slices(&[0.0, 0.0], &[1.0, 0.5, 0.5, 1.0])?;
    let quadrant = Polyhedron::from_halfspaces(2, &[(vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)])?;
    let orthant = region_probability(&quadrant, &corr, 200_000, &mut stream(8, &[4]))?;
    let orthant_oracle = 0.25 + 0.5f64.asin() / (2.0 * PI);
    Ok(check(
        (half - (2.0 / PI).sqrt()).abs() < 0.01 && (mills - mills_oracle).abs() < 0.02 && (orthant - orthant_oracle).abs() < 0.01,
        format!("half-normal {half:.4}, tail mean {mills:.4} vs {mills_oracle:.4}, orthant {orthant:.4} vs {orthant_oracle:.4}"),
    ))
}

fn nb_pmf() -> anyhow::Result<Outcome> {
    let mut worst = 0.0f64;
    for big_n in [0u64, 1, 5, 20] {
        for p in [0.05, 0.3, 0.7] {
            for extra in 0..30u64 {
                let n = big_n + extra;
                let mut c = 1.0;
                for k in 0..extra {
                    c *= (big_n + 1 + k) as f64 / (k + 1) as f64;
                }
                let want = c * f64::powi(p, extra as i32) * f64::powi(1.0 - p, big_n as i32 + 1);
                let got = censored_posterior_pmf(n, big_n, p)?;
                worst = worst.max((got - want).abs() / want.max(1e-300));
            }
        }
    }
    Ok(check(worst < 1e-10, format!("max relative deviation {worst:.2e}")))
}

fn m_step_moments() -> anyhow::Result<Outcome> {
    let mut rng = stream(8, &[5]);
    let batches: Vec<SampleBatch> = (0..30)
        .map(|_| {
            let n = rng.random_range(1..8);
            let pts: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            SampleBatch::weighted(2, pts, w)
        })
        .collect::<bundlesight_core::Result<_>>()?;
    let got = m_step(&batches)?;
    let total = batches.len() as f64;
    let mut mu = [0.0; 2];
    for b in &batches {
        for (x, w) in b.points().zip(b.weights()) {
            mu[0] += w * x[0] / total;
            mu[1] += w * x[1] / total;
        }
    }
    let mut s = [[0.0; 2]; 2];
    for b in &batches {
        for (x, w) in b.points().zip(b.weights()) {
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += w * (x[i] - mu[i]) * (x[j] - mu[j]) / total;
                }
            }
        }
    }
    let mut dev = 0.0f64;
    for i in 0..2 {
        dev = dev.max((got.mu()[i] - mu[i]).abs());
        for j in 0..2 {
            dev = dev.max((got.sigma()[(i, j)] - s[i][j]).abs());
        }
    }
    Ok(check(dev < 1e-9, format!("max deviation {dev:.2e}")))
}

fn gmm_rows() -> anyhow::Result<Outcome> {
    let truth = generate_ground_truth(2, 3)?;
    let data = generate_dataset(&GenSpec::new(GroundTruth::Gaussian(truth.clone()), 200, 3))?.dataset;
    let comps = [(-3.0, 0.2), (0.0, 0.5), (4.0, 0.3)]
        .iter()
        .map(|(o, phi)| {
            Ok(GmmComponent {
                phi: *phi,
                params: GaussianParams::from_slices(&[truth.mu()[0] + o, truth.mu()[1] - o], &[6.0, 1.0, 1.0, 6.0])?,
            })
        })
        .collect::<bundlesight_core::Result<_>>()?;
    let r = responsibilities(
        &data,
        &GmmParams::new(comps)?,
        &EmConfig {
            pool_size: Some(20_000),
            ..EmConfig::default()
        },
        0,
    )?;
    let worst = r
        .rows()
        .iter()
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let bounded = r.rows().iter().flatten().all(|x| (0.0..=1.0).contains(x));
    Ok(check(
        worst < 1e-9 && bounded && r.rows().len() == 200,
        format!("max |row sum − 1| {worst:.2e}"),
    ))
}

fn total_variance() -> anyhow::Result<Outcome> {
    let m = 200_000;
    let grid = PartitionSpec::grid(&[vec![9.0, 11.0], vec![10.0, 13.0]])?;
    let truth = GaussianParams::from_slices(&[10.0, 12.0], &[4.0, 1.0, 1.0, 5.0])?;
    let r = assumption1_report(&grid, &truth, m, 6, Whitening::Cholesky)?;
    let total = &r.within + &r.between;
    let mut worst_z = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let expect = if i == j { 1.0 } else { 0.0 };
            let se = if i == j {
                (2.0 / m as f64).sqrt()
            } else {
                (1.0 / m as f64).sqrt()
            };
            worst_z = worst_z.max((total[(i, j)] - expect).abs() / se);
        }
    }
    Ok(check(worst_z < 3.0, format!("worst deviation {worst_z:.2} SE")))
}

fn determinism() -> anyhow::Result<Outcome> {
    let truth = generate_ground_truth(3, 11)?;
    let spec = GenSpec::new(GroundTruth::Gaussian(truth), 300, 11);
    let cfg = EmConfig {
        max_iterations: 4,
        seed: 5,
        pool_size: Some(20_000),
        ..EmConfig::default()
    };
    let run = |threads: usize| -> anyhow::Result<(Vec<u64>, usize)> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        pool.install(|| {
            let data = generate_dataset(&spec)?.dataset;
            let r = fit(&data, &cfg)?;
            let mut bits: Vec<u64> = r
                .params
                .mu()
                .iter()
                .chain(r.params.sigma().iter())
                .map(|x| x.to_bits())
                .collect();
            bits.extend(r.error_trace.iter().map(|x| x.to_bits()));
            Ok((bits, data.len()))
        })
    };
    let one = run(1)?;
    let same = [1, 2, 4]
        .iter()
        .map(|t| run(*t))
        .collect::<anyhow::Result<Vec<_>>>()?
        .iter()
        .all(|r| *r == one);
    Ok(check(same, format!("bit-identical over 1, 2 and 4 workers: {same}")))
}

fn criterion_8() -> anyhow::Result<Outcome> {
    let suites: [(&str, Check); 7] = [
        ("partition", partition_probes),
        ("sampler moments", sampler_moments),
        ("nb pmf", nb_pmf),
        ("m-step", m_step_moments),
        ("gmm rows", gmm_rows),
        ("total variance", total_variance),
        ("determinism", determinism),
    ];
    let mut lines = Vec::new();
    let mut all = true;
    for (name, f) in suites {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Ok(Err("panicked".into())));
        let o = o.unwrap_or_else(|e| Err(format!("error: {e:#}")));
        all &= o.is_ok();
        lines.push(format!(
            "{name} {} ({})",
            if o.is_ok() { "ok" } else { "failed" },
            o.unwrap_or_else(|e| e)
        ));
    }
    Ok(check(all, lines.join("; ")))
}

fn main() {
    // `cargo test -- --list` and similar harness probes expect no work.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, &str, Check); 8] = [
        ("1", "base EM recovery", criterion_1),
        ("2", "sample-size monotonicity", criterion_2),
        ("3", "EM beats MNL", criterion_3),
        ("4", "censored-demand closeness", criterion_4),
        ("5", "MH comparison", criterion_5),
        ("6", "between-region eigenvalue", criterion_6),
        ("7", "population EM contraction", criterion_7),
        ("8", "property suites", criterion_8),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut passed = 0;
    let mut run = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        run += 1;
        passed += usize::from(report(id, name, f));
    }
    println!("{passed}/{run} criteria passed");
}
