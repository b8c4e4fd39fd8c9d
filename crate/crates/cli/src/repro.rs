//! Desk-scale reproductions of the synthetic experiments.
//!
//! Each experiment returns its per-run rows and a summary; `write_*`
//! helpers turn them into CSV files. Wall-clock times are measured but only
//! written when asked for, so outputs are byte-stable.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Result};
use bundlesight_core::baselines::{fit_metropolis_hastings, fit_mnl, rmse_choice_prediction, MhConfig};
use bundlesight_core::censored::{
    fit_censored, no_purchase_probability, CensoredDataset, MenuCounts, DEFAULT_MC_INSTANCES,
};
use bundlesight_core::datagen::{generate_dataset, generate_ground_truth, random_menu, GenSpec, GroundTruth, MenuMode};
use bundlesight_core::metrics::{l1_param_error, mean_abs_error, train_test_split};
use bundlesight_core::rng::{self, tag};
use bundlesight_core::{fit, Bundle, Dataset, EmConfig, GaussianParams, PriceMenu};
use rand::seq::index::sample;
use rand::Rng;

use crate::io::{fmt_f64, write_csv};

/// Draws used by choice-probability predictions.
pub const PREDICT_DRAWS: usize = 10_000;

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Standard error of a sample median, `1.2533 · sd / √n`.
fn median_se(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    1.2533 * var.sqrt() / n.sqrt()
}

fn gaussian_spec(truth: &GaussianParams, n: usize, seed: u64) -> GenSpec {
    GenSpec::new(GroundTruth::Gaussian(truth.clone()), n, seed)
}

/// Parameter error of every iterate, starting with the initialization.
fn error_path(r: &bundlesight_core::FitReport, truth: &GaussianParams) -> Result<Vec<f64>> {
    std::iter::once(&r.initial)
        .chain(&r.trajectory)
        .map(|p| l1_param_error(p, truth).map_err(|e| anyhow!("{e}")))
        .collect()
}

// ---------------------------------------------------------------------------
// EM convergence on one dataset

#[derive(Clone, Debug)]
pub struct Figure1Config {
    pub product_count: usize,
    pub n_transactions: usize,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            product_count: 6,
            n_transactions: 2000,
            seed: 1,
            em: EmConfig {
                seed: 1,
                ..EmConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Figure1Result {
    pub truth: GaussianParams,
    /// Parameter error at iterations `0..=iterations`.
    pub errors: Vec<f64>,
    pub distinct_bundles: usize,
    pub first_below: Option<usize>,
    pub runtime_seconds: f64,
}

pub const FIGURE1_TARGET: f64 = 0.1;

pub fn figure1(cfg: &Figure1Config) -> Result<Figure1Result> {
    let truth = generate_ground_truth(cfg.product_count, cfg.seed)?;
    let data = generate_dataset(&gaussian_spec(&truth, cfg.n_transactions, cfg.seed))?.dataset;
    let mut bundles = std::collections::BTreeSet::new();
    for t in data.transactions() {
        for (b, _) in t.menu().entries() {
            bundles.insert(b.mask().to_vec());
        }
    }
    let start = Instant::now();
    let report = fit(&data, &cfg.em)?;
    let runtime = secs(start);
    let errors = error_path(&report, &truth)?;
    let first_below = errors.iter().position(|&e| e < FIGURE1_TARGET);
    Ok(Figure1Result {
        truth,
        errors,
        distinct_bundles: bundles.len(),
        first_below,
        runtime_seconds: runtime,
    })
}

pub fn write_figure1(path: &Path, r: &Figure1Result) -> Result<()> {
    let rows = r
        .errors
        .iter()
        .enumerate()
        .map(|(t, e)| vec![t.to_string(), fmt_f64(*e)])
        .collect::<Vec<_>>();
    write_csv(path, &["iteration", "error"], &rows)
}

// ---------------------------------------------------------------------------
// Final error against sample size

#[derive(Clone, Debug)]
pub struct Figure1bConfig {
    pub product_count: usize,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub em: EmConfig,
}

impl Default for Figure1bConfig {
    fn default() -> Self {
        Self {
            product_count: 4,
            sizes: vec![1000, 2000, 4000],
            seeds: (1..=5).collect(),
            em: EmConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Figure1bRow {
    pub n: usize,
    pub seed: u64,
    pub final_error: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Figure1bResult {
    pub rows: Vec<Figure1bRow>,
    /// `(N, median final error, its standard error)`.
    pub medians: Vec<(usize, f64, f64)>,
    pub runtime_seconds: f64,
}

impl Figure1bResult {
    /// Consecutive sizes whose median did not decrease, with whether the
    /// increase stays within one standard error.
    pub fn inversions(&self) -> Vec<(usize, bool)> {
        self.medians
            .windows(2)
            .filter(|w| w[1].1 >= w[0].1)
            .map(|w| (w[1].0, w[1].1 - w[0].1 <= w[0].2.max(w[1].2)))
            .collect()
    }

    pub fn monotone(&self) -> bool {
        let inv = self.inversions();
        inv.is_empty() || (inv.len() == 1 && inv[0].1)
    }
}

pub fn figure1b(cfg: &Figure1bConfig) -> Result<Figure1bResult> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        for &seed in &cfg.seeds {
            let truth = generate_ground_truth(cfg.product_count, seed)?;
            let data = generate_dataset(&gaussian_spec(&truth, n, seed))?.dataset;
            let em = EmConfig { seed, ..cfg.em.clone() };
            let r = fit(&data, &em)?;
            rows.push(Figure1bRow {
                n,
                seed,
                final_error: l1_param_error(&r.params, &truth)?,
                iterations: r.iterations,
            });
        }
    }
    let medians = cfg
        .sizes
        .iter()
        .map(|&n| {
            let e: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.final_error).collect();
            (n, median(&e), median_se(&e))
        })
        .collect();
    Ok(Figure1bResult {
        rows,
        medians,
        runtime_seconds: secs(start),
    })
}

pub fn write_figure1b(path: &Path, r: &Figure1bResult) -> Result<()> {
    let rows = r
        .rows
        .iter()
        .map(|x| {
            vec![
                x.n.to_string(),
                x.seed.to_string(),
                x.iterations.to_string(),
                fmt_f64(x.final_error),
            ]
        })
        .collect::<Vec<_>>();
    write_csv(path, &["n", "seed", "iterations", "final_error"], &rows)
}

// ---------------------------------------------------------------------------
// Prediction error of EM against the logit

#[derive(Clone, Debug)]
pub struct Figure2Config {
    pub product_count: usize,
    pub n_transactions: usize,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub em: EmConfig,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Self {
            product_count: 4,
            n_transactions: 2000,
            seeds: (1..=5).collect(),
            train_fraction: 0.8,
            em: EmConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Figure2Row {
    pub truth: &'static str,
    pub seed: u64,
    pub em_rmse: f64,
    pub mnl_rmse: f64,
}

#[derive(Clone, Debug)]
pub struct Figure2Result {
    pub rows: Vec<Figure2Row>,
    pub runtime_seconds: f64,
}

impl Figure2Result {
    /// Seeds where EM predicts better, per truth kind.
    pub fn em_wins(&self, truth: &str) -> usize {
        self.rows
            .iter()
            .filter(|r| r.truth == truth && r.em_rmse < r.mnl_rmse)
            .count()
    }
}

fn split(data: &Dataset, frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = train_test_split(data.len(), frac, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

pub fn figure2(cfg: &Figure2Config) -> Result<Figure2Result> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for kind in ["gaussian", "gumbel"] {
        for &seed in &cfg.seeds {
            let g = generate_ground_truth(cfg.product_count, seed)?;
            let truth = match kind {
                "gaussian" => GroundTruth::Gaussian(g),
                _ => GroundTruth::gumbel_matching(&g),
            };
            let data = generate_dataset(&GenSpec::new(truth, cfg.n_transactions, seed))?.dataset;
            let (train, test) = split(&data, cfg.train_fraction, seed)?;
            let em = fit(&train, &EmConfig { seed, ..cfg.em.clone() })?;
            let mnl = fit_mnl(&train)?;
            rows.push(Figure2Row {
                truth: kind,
                seed,
                em_rmse: rmse_choice_prediction(&em.params, test.transactions(), PREDICT_DRAWS, seed)?,
                mnl_rmse: rmse_choice_prediction(&mnl.params, test.transactions(), PREDICT_DRAWS, seed)?,
            });
        }
    }
    Ok(Figure2Result {
        rows,
        runtime_seconds: secs(start),
    })
}

pub fn write_figure2(path: &Path, r: &Figure2Result) -> Result<()> {
    let rows = r
        .rows
        .iter()
        .map(|x| {
            vec![
                x.truth.to_string(),
                x.seed.to_string(),
                fmt_f64(x.em_rmse),
                fmt_f64(x.mnl_rmse),
            ]
        })
        .collect::<Vec<_>>();
    write_csv(path, &["truth", "seed", "em_rmse", "mnl_rmse"], &rows)
}

// ---------------------------------------------------------------------------
// Censored demand

#[derive(Clone, Debug)]
pub struct CensoredConfig {
    pub product_count: usize,
    pub bundles_per_menu: usize,
    pub menu_count: usize,
    pub n_transactions: usize,
    pub seeds: Vec<u64>,
    /// Accepted band for each menu's no-purchase probability.
    pub censoring_band: (f64, f64),
    pub mc_instances: usize,
    pub em: EmConfig,
}

impl Default for CensoredConfig {
    fn default() -> Self {
        Self {
            product_count: 4,
            bundles_per_menu: 3,
            menu_count: 3,
            n_transactions: 2000,
            seeds: (1..=5).collect(),
            censoring_band: (0.05, 0.15),
            mc_instances: DEFAULT_MC_INSTANCES,
            em: EmConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CensoredRow {
    pub seed: u64,
    pub censored_share: f64,
    pub complete_rmse: f64,
    pub censored_rmse: f64,
    pub complete_error: f64,
    pub censored_error: f64,
}

impl CensoredRow {
    pub fn gap(&self) -> f64 {
        (self.censored_rmse - self.complete_rmse).abs()
    }
}

#[derive(Clone, Debug)]
pub struct CensoredResult {
    pub rows: Vec<CensoredRow>,
    pub median_gap: f64,
    pub runtime_seconds: f64,
}

const MENU_PROBE_DRAWS: usize = 20_000;
const MENU_ATTEMPTS: usize = 10_000;

/// A fixed menu: every product alone at `U[μ_i ± 3]` and `bundles` distinct
/// bundles of sizes 2 and 3 (alternating) at the summed member prices minus
/// a `U[0, 5]` discount; redrawn until its no-purchase probability under
/// the truth falls in `band`.
pub fn censored_menu(
    truth: &GaussianParams,
    bundles: usize,
    band: (f64, f64),
    seed: u64,
    slot: u64,
) -> Result<PriceMenu> {
    let d = truth.dim();
    let mut rng = rng::stream(seed, &[tag::DATAGEN, u64::MAX - 1, slot]);
    for attempt in 0..MENU_ATTEMPTS {
        let prices: Vec<f64> = (0..d).map(|i| truth.mu()[i] + rng.random_range(-3.0..3.0)).collect();
        let mut entries = Vec::new();
        for (i, p) in prices.iter().enumerate() {
            entries.push((Bundle::single(d, i)?, p.max(0.01)));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut k = 0;
        while seen.len() < bundles {
            let size = [2, 3][k % 2].min(d);
            k += 1;
            let mut members: Vec<usize> = sample(&mut rng, d, size).into_vec();
            members.sort_unstable();
            if size < 2 || !seen.insert(members.clone()) {
                continue;
            }
            let price = members.iter().map(|&i| prices[i]).sum::<f64>() - rng.random_range(0.0..5.0);
            entries.push((Bundle::from_products(d, &members)?, price.max(0.01)));
        }
        let menu = PriceMenu::new(entries)?;
        let p0 = no_purchase_probability(&menu, truth, MENU_PROBE_DRAWS, seed ^ attempt as u64)?;
        if (band.0..=band.1).contains(&p0) {
            return Ok(menu);
        }
    }
    Err(anyhow!(
        "no menu with censoring in [{}, {}] after {MENU_ATTEMPTS} draws",
        band.0,
        band.1
    ))
}

fn counts_of(data: &Dataset, menus: &[PriceMenu]) -> Result<CensoredDataset> {
    let mut counts: Vec<Vec<u64>> = menus.iter().map(|m| vec![0; m.len()]).collect();
    for t in data.transactions() {
        if t.choice() == 0 {
            continue;
        }
        let k = menus
            .iter()
            .position(|m| m == t.menu())
            .ok_or_else(|| anyhow!("transaction menu not in the fixed list"))?;
        counts[k][t.choice() - 1] += 1;
    }
    let kept = menus
        .iter()
        .zip(counts)
        .filter(|(_, c)| c.iter().sum::<u64>() > 0)
        .map(|(m, c)| MenuCounts {
            menu: m.clone(),
            counts: c,
        })
        .collect();
    Ok(CensoredDataset::new(data.product_count(), kept)?)
}

pub fn censored(cfg: &CensoredConfig) -> Result<CensoredResult> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let truth = generate_ground_truth(cfg.product_count, seed)?;
        let menus = (0..cfg.menu_count as u64)
            .map(|k| censored_menu(&truth, cfg.bundles_per_menu, cfg.censoring_band, seed, k))
            .collect::<Result<Vec<_>>>()?;
        let mut spec = gaussian_spec(&truth, cfg.n_transactions, seed);
        spec.menu_mode = MenuMode::Fixed(menus.clone());
        let complete = generate_dataset(&spec)?.dataset;
        let (train, test) = split(&complete, 0.8, seed)?;
        let em = EmConfig { seed, ..cfg.em.clone() };
        let full = fit(&train, &em)?;
        let cens = fit_censored(&counts_of(&train, &menus)?, &em, cfg.mc_instances)?;
        let share = train.transactions().iter().filter(|t| t.choice() == 0).count() as f64 / train.len() as f64;
        rows.push(CensoredRow {
            seed,
            censored_share: share,
            complete_rmse: rmse_choice_prediction(&full.params, test.transactions(), PREDICT_DRAWS, seed)?,
            censored_rmse: rmse_choice_prediction(&cens.report.params, test.transactions(), PREDICT_DRAWS, seed)?,
            complete_error: l1_param_error(&full.params, &truth)?,
            censored_error: l1_param_error(&cens.report.params, &truth)?,
        });
    }
    let gaps: Vec<f64> = rows.iter().map(CensoredRow::gap).collect();
    Ok(CensoredResult {
        median_gap: median(&gaps),
        rows,
        runtime_seconds: secs(start),
    })
}

pub fn write_censored(path: &Path, r: &CensoredResult) -> Result<()> {
    let rows = r
        .rows
        .iter()
        .map(|x| {
            vec![
                x.seed.to_string(),
                fmt_f64(x.censored_share),
                fmt_f64(x.complete_rmse),
                fmt_f64(x.censored_rmse),
                fmt_f64(x.complete_error),
                fmt_f64(x.censored_error),
            ]
        })
        .collect::<Vec<_>>();
    write_csv(
        path,
        &[
            "seed",
            "censored_share",
            "complete_rmse",
            "censored_rmse",
            "complete_error",
            "censored_error",
        ],
        &rows,
    )
}

// ---------------------------------------------------------------------------
// EM against Metropolis-Hastings

#[derive(Clone, Debug)]
pub struct MhComparisonConfig {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n_transactions: usize,
    /// Number of distinct menus the transactions cycle through.
    pub menu_count: usize,
    pub seeds: Vec<u64>,
    pub mh_iterations: usize,
    pub mh_draws: usize,
    pub em: EmConfig,
}

impl Default for MhComparisonConfig {
    fn default() -> Self {
        Self {
            mu: vec![0.5, 0.5],
            sigma: vec![4.0, 1.0, 1.0, 5.0],
            n_transactions: 1000,
            menu_count: 20,
            seeds: (1..=5).collect(),
            mh_iterations: 10_000,
            mh_draws: 2000,
            em: EmConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MhComparisonRow {
    pub seed: u64,
    pub em_mu: Vec<f64>,
    pub mh_mu: Vec<f64>,
    pub em_error: f64,
    pub mh_error: f64,
    pub acceptance_rate: f64,
    pub em_seconds: f64,
    pub mh_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct MhComparisonResult {
    pub rows: Vec<MhComparisonRow>,
}

impl MhComparisonResult {
    pub fn em_wins(&self) -> usize {
        self.rows.iter().filter(|r| r.em_error < r.mh_error).count()
    }
}

pub fn mh_comparison(cfg: &MhComparisonConfig) -> Result<MhComparisonResult> {
    let truth = GaussianParams::from_slices(&cfg.mu, &cfg.sigma)?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let mut spec = gaussian_spec(&truth, cfg.n_transactions, seed);
        let centers = spec.ground_truth.price_centers();
        let menus = (0..cfg.menu_count as u64)
            .map(|k| {
                let mut rng = rng::stream(seed, &[tag::DATAGEN, u64::MAX - 2, k]);
                random_menu(&spec, &centers, &mut rng)
            })
            .collect::<bundlesight_core::Result<Vec<_>>>()?;
        spec.menu_mode = MenuMode::Fixed(menus);
        let data = generate_dataset(&spec)?.dataset;
        let t0 = Instant::now();
        let em = fit(&data, &EmConfig { seed, ..cfg.em.clone() })?;
        let em_seconds = secs(t0);
        let mut mh_cfg = MhConfig::new(truth.sigma().clone(), seed);
        mh_cfg.n_iterations = cfg.mh_iterations;
        mh_cfg.mc_count = cfg.mh_draws;
        let t1 = Instant::now();
        let mh = fit_metropolis_hastings(&data, &mh_cfg)?;
        let mh_seconds = secs(t1);
        let em_mu: Vec<f64> = em.params.mu().iter().copied().collect();
        rows.push(MhComparisonRow {
            seed,
            em_error: mean_abs_error(&em_mu, &cfg.mu)?,
            mh_error: mean_abs_error(&mh.posterior_mean, &cfg.mu)?,
            em_mu,
            mh_mu: mh.posterior_mean,
            acceptance_rate: mh.acceptance_rate,
            em_seconds,
            mh_seconds,
        });
    }
    Ok(MhComparisonResult { rows })
}

pub fn write_mh_comparison(path: &Path, r: &MhComparisonResult, timing: bool) -> Result<()> {
    let d = r.rows.first().map_or(0, |x| x.em_mu.len());
    let mut header = vec!["seed".to_string()];
    header.extend((1..=d).map(|i| format!("em_mu{i}")));
    header.extend((1..=d).map(|i| format!("mh_mu{i}")));
    header.extend(["em_error", "mh_error", "acceptance_rate"].map(String::from));
    if timing {
        header.extend(["em_seconds", "mh_seconds"].map(String::from));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = r
        .rows
        .iter()
        .map(|x| {
            let mut row = vec![x.seed.to_string()];
            row.extend(x.em_mu.iter().map(|v| fmt_f64(*v)));
            row.extend(x.mh_mu.iter().map(|v| fmt_f64(*v)));
            row.extend([fmt_f64(x.em_error), fmt_f64(x.mh_error), fmt_f64(x.acceptance_rate)]);
            if timing {
                row.extend([fmt_f64(x.em_seconds), fmt_f64(x.mh_seconds)]);
            }
            row
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, &rows)
}
