//! Spec files and CSV output for the `lab` subcommands.

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use bundlesight_core::theory::{
    assumption1_report, contraction_sweep, identifiability_experiment, ContractionReport, IdentifiabilityReport,
    PartitionSpec, Whitening, DEFAULT_MC_COUNT, DEFAULT_RADII,
};
use bundlesight_core::Bundle;
use bundlesight_core::PriceMenu;
use serde::{Deserialize, Serialize};

use crate::io::{fmt_f64, write_csv, EmConfigDto, EntryDto, GaussianDto};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionDto {
    /// The whole space as a single region.
    Whole { dim: usize },
    /// One-dimensional slabs between cut points.
    Slabs { cuts: Vec<f64> },
    /// Axis-aligned cells, one list of cut points per axis.
    Grid { cuts: Vec<Vec<f64>> },
    /// The IC polyhedra of a single menu.
    Menu { menu: Vec<EntryDto> },
}

impl PartitionDto {
    pub fn to_partition(&self) -> Result<PartitionSpec> {
        let p = match self {
            PartitionDto::Whole { dim } => {
                if *dim == 0 {
                    bail!("partition.dim: must be at least 1");
                }
                PartitionSpec::whole_space(*dim)
            }
            PartitionDto::Slabs { cuts } => PartitionSpec::slabs(cuts).map_err(|e| anyhow!("partition.cuts: {e}"))?,
            PartitionDto::Grid { cuts } => PartitionSpec::grid(cuts).map_err(|e| anyhow!("partition.cuts: {e}"))?,
            PartitionDto::Menu { menu } => {
                let d = menu.first().map_or(0, |e| e.mask.len());
                let entries = menu
                    .iter()
                    .enumerate()
                    .map(|(j, e)| {
                        let b = Bundle::new(e.mask.iter().map(|&x| x == 1).collect())
                            .map_err(|err| anyhow!("partition.menu[{j}].mask: {err}"))?;
                        if b.product_count() != d {
                            bail!("partition.menu[{j}].mask: length differs from the first entry");
                        }
                        Ok((b, e.price))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let menu = PriceMenu::new(entries).map_err(|e| anyhow!("partition.menu: {e}"))?;
                PartitionSpec::from_menu(&menu).map_err(|e| anyhow!("partition.menu: {e}"))?
            }
        };
        Ok(p)
    }
}

fn default_mc() -> usize {
    DEFAULT_MC_COUNT
}
fn default_steps() -> usize {
    10
}
fn default_radii() -> Vec<f64> {
    DEFAULT_RADII.to_vec()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Assumption1Spec {
    pub partition: PartitionDto,
    pub truth: GaussianDto,
    #[serde(default = "default_mc")]
    pub mc_count: usize,
    #[serde(default)]
    pub seed: u64,
}

pub fn run_assumption1(spec: &Assumption1Spec, out: &Path) -> Result<f64> {
    let part = spec.partition.to_partition()?;
    let truth = spec.truth.to_params("truth")?;
    let r = assumption1_report(&part, &truth, spec.mc_count, spec.seed, Whitening::Cholesky)?;
    let rows: Vec<Vec<String>> = r
        .region_probabilities
        .iter()
        .enumerate()
        .map(|(k, p)| {
            vec![
                k.to_string(),
                fmt_f64(*p),
                fmt_f64(r.lambda_min),
                fmt_f64(r.mass_deficit),
            ]
        })
        .collect();
    write_csv(out, &["region", "probability", "lambda_min", "mass_deficit"], &rows)?;
    Ok(r.lambda_min)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ContractionSpec {
    pub partition: PartitionDto,
    pub truth: GaussianDto,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_mc")]
    pub mc_count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ContractionReportDto {
    pub radius: f64,
    pub epsilon_hat: f64,
    pub bound: f64,
    pub initial: Vec<f64>,
    pub errors: Vec<f64>,
    pub ratios: Vec<f64>,
    pub mc_error: f64,
    pub excursions: Vec<usize>,
    pub diverged: bool,
}

impl From<&ContractionReport> for ContractionReportDto {
    fn from(r: &ContractionReport) -> Self {
        Self {
            radius: r.radius,
            epsilon_hat: r.epsilon_hat,
            bound: r.bound,
            initial: r.initial.clone(),
            errors: r.errors.clone(),
            ratios: r.ratios.clone(),
            mc_error: r.mc_error,
            excursions: r.excursions.clone(),
            diverged: r.diverged,
        }
    }
}

pub fn run_contraction(spec: &ContractionSpec, out: &Path) -> Result<Vec<ContractionReport>> {
    let part = spec.partition.to_partition()?;
    let truth = spec.truth.to_params("truth")?;
    let reports = contraction_sweep(&truth, &part, &spec.radii, spec.n_steps, spec.mc_count, spec.seed)?;
    let mut rows = Vec::new();
    for r in &reports {
        for (t, e) in r.errors.iter().enumerate() {
            let ratio = if t == 0 {
                String::new()
            } else {
                r.ratios.get(t - 1).map(|q| fmt_f64(*q)).unwrap_or_default()
            };
            rows.push(vec![
                fmt_f64(r.radius),
                t.to_string(),
                fmt_f64(*e),
                ratio,
                fmt_f64(r.bound),
            ]);
        }
    }
    write_csv(out, &["radius", "step", "error", "ratio", "bound"], &rows)?;
    Ok(reports)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IdentifiabilitySpec {
    pub product_count: usize,
    pub n_large: usize,
    /// `(regular, discount)` per product; derived from the truth when absent.
    #[serde(default)]
    pub prices: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub em: EmConfigDto,
}

pub fn run_identifiability(spec: &IdentifiabilitySpec, out: &Path) -> Result<IdentifiabilityReport> {
    let cfg = spec.em.to_config()?;
    let r = identifiability_experiment(spec.product_count, spec.prices.as_deref(), spec.n_large, &cfg)?;
    let mut rows = vec![vec!["separate_selling".to_string(), fmt_f64(r.error)]];
    for (k, e) in r.control.errors.iter().enumerate() {
        rows.push(vec![format!("one_price_init_{k}"), fmt_f64(*e)]);
    }
    write_csv(out, &["case", "error"], &rows)?;
    Ok(r)
}
