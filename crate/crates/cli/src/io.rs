//! JSON and CSV file formats.
//!
//! Every reader validates the decoded document against the library's
//! invariants and reports the offending field by path, e.g.
//! `transactions[3].menu[0].mask`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bundlesight_core::baselines::{MhResult, MnlParams};
use bundlesight_core::censored::{CensoredDataset, CensoredFitReport, MenuCounts};
use bundlesight_core::datagen::{GenSpec, GroundTruth, MenuMode};
use bundlesight_core::em::{EmConfig, FitReport, InitStrategy};
use bundlesight_core::gmm::{GmmFitReport, GmmParams};
use bundlesight_core::{Bundle, Dataset, GaussianParams, PriceMenu, Transaction};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Fixed 17-significant-digit float for CSV output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header line and rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EntryDto {
    pub mask: Vec<u8>,
    pub price: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransactionDto {
    pub menu: Vec<EntryDto>,
    pub choice: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetDto {
    pub product_count: usize,
    pub transactions: Vec<TransactionDto>,
}

fn menu_from_dto(entries: &[EntryDto], product_count: usize, at: &str) -> Result<PriceMenu> {
    if entries.is_empty() {
        bail!("{at}: menu must offer at least one bundle");
    }
    let mut out = Vec::with_capacity(entries.len());
    for (j, e) in entries.iter().enumerate() {
        if e.mask.len() != product_count {
            bail!(
                "{at}[{j}].mask: has {} entries, product_count is {product_count}",
                e.mask.len()
            );
        }
        if let Some(bad) = e.mask.iter().find(|&&b| b > 1) {
            bail!("{at}[{j}].mask: entries must be 0 or 1, found {bad}");
        }
        if !(e.price > 0.0 && e.price.is_finite()) {
            bail!("{at}[{j}].price: must be positive and finite, found {}", e.price);
        }
        let bundle =
            Bundle::new(e.mask.iter().map(|&b| b == 1).collect()).map_err(|err| anyhow!("{at}[{j}].mask: {err}"))?;
        out.push((bundle, e.price));
    }
    PriceMenu::new(out).map_err(|err| anyhow!("{at}: {err}"))
}

fn menu_to_dto(menu: &PriceMenu) -> Vec<EntryDto> {
    menu.entries()
        .iter()
        .map(|(b, p)| EntryDto {
            mask: b.mask().iter().map(|&x| u8::from(x)).collect(),
            price: *p,
        })
        .collect()
}

impl DatasetDto {
    pub fn into_dataset(self) -> Result<Dataset> {
        if self.product_count == 0 {
            bail!("product_count: must be at least 1");
        }
        let mut txns = Vec::with_capacity(self.transactions.len());
        for (n, t) in self.transactions.iter().enumerate() {
            let menu = menu_from_dto(&t.menu, self.product_count, &format!("transactions[{n}].menu"))?;
            if t.choice > menu.len() {
                bail!(
                    "transactions[{n}].choice: {} exceeds the {} menu alternatives",
                    t.choice,
                    menu.len()
                );
            }
            txns.push(Transaction::new(menu, t.choice).map_err(|e| anyhow!("transactions[{n}]: {e}"))?);
        }
        Dataset::new(self.product_count, txns).map_err(|e| anyhow!("{e}"))
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            product_count: d.product_count(),
            transactions: d
                .transactions()
                .iter()
                .map(|t| TransactionDto {
                    menu: menu_to_dto(t.menu()),
                    choice: t.choice(),
                })
                .collect(),
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_dataset_csv(path);
    }
    read_json::<DatasetDto>(path)?
        .into_dataset()
        .with_context(|| format!("validating {}", path.display()))
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    write_json(path, &DatasetDto::from_dataset(d))
}

/// One row per offered bundle: `txn_id,bundle_mask,price,chosen`.
///
/// `bundle_mask` is a bitstring whose `i`-th character is `1` when product
/// `i` is in the bundle; all masks have the same length, which sets the
/// product count. Rows with the same `txn_id` form one transaction, in
/// order of first appearance, and at most one of them has `chosen = 1`
/// (none means no purchase).
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    #[derive(Deserialize)]
    struct Row {
        txn_id: String,
        bundle_mask: String,
        price: f64,
        chosen: u8,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (Vec<EntryDto>, Option<usize>)> = BTreeMap::new();
    let mut width: Option<usize> = None;
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = rec.with_context(|| format!("{}: row {line}", path.display()))?;
        let mask: Vec<u8> = row
            .bundle_mask
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(anyhow!(
                    "row {line}.bundle_mask: expected a bitstring, found {:?}",
                    row.bundle_mask
                )),
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(mask.len()),
            Some(w) if w != mask.len() => bail!("row {line}.bundle_mask: length {} differs from {w}", mask.len()),
            _ => {}
        }
        if row.chosen > 1 {
            bail!("row {line}.chosen: must be 0 or 1");
        }
        let g = groups.entry(row.txn_id.clone()).or_insert_with(|| {
            order.push(row.txn_id.clone());
            (Vec::new(), None)
        });
        g.0.push(EntryDto { mask, price: row.price });
        if row.chosen == 1 {
            if g.1.is_some() {
                bail!(
                    "row {line}.chosen: transaction {} already has a chosen bundle",
                    row.txn_id
                );
            }
            g.1 = Some(g.0.len());
        }
    }
    let dto = DatasetDto {
        product_count: width.ok_or_else(|| anyhow!("{}: no rows", path.display()))?,
        transactions: order
            .iter()
            .map(|id| {
                let (menu, c) = groups.remove(id).expect("grouped");
                TransactionDto {
                    menu,
                    choice: c.unwrap_or(0),
                }
            })
            .collect(),
    };
    dto.into_dataset()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MenuCountsDto {
    pub menu: Vec<EntryDto>,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CensoredDatasetDto {
    pub product_count: usize,
    pub menus: Vec<MenuCountsDto>,
}

impl CensoredDatasetDto {
    pub fn into_dataset(self) -> Result<CensoredDataset> {
        if self.product_count == 0 {
            bail!("product_count: must be at least 1");
        }
        let mut menus = Vec::with_capacity(self.menus.len());
        for (m, mc) in self.menus.iter().enumerate() {
            let menu = menu_from_dto(&mc.menu, self.product_count, &format!("menus[{m}].menu"))?;
            if mc.counts.len() != menu.len() {
                bail!(
                    "menus[{m}].counts: has {} entries for {} alternatives",
                    mc.counts.len(),
                    menu.len()
                );
            }
            menus.push(MenuCounts {
                menu,
                counts: mc.counts.clone(),
            });
        }
        CensoredDataset::new(self.product_count, menus).map_err(|e| anyhow!("{e}"))
    }

    pub fn from_dataset(d: &CensoredDataset) -> Self {
        Self {
            product_count: d.product_count(),
            menus: d
                .menus()
                .iter()
                .map(|m| MenuCountsDto {
                    menu: menu_to_dto(&m.menu),
                    counts: m.counts.clone(),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaussianDto {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

pub fn sigma_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, at: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d {
        bail!("{at}: has {} rows, expected {d}", rows.len());
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != d {
            bail!("{at}[{r}]: has {} entries, expected {d}", row.len());
        }
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

impl GaussianDto {
    pub fn from_params(p: &GaussianParams) -> Self {
        Self {
            mu: p.mu().iter().copied().collect(),
            sigma: sigma_rows(p.sigma()),
        }
    }

    pub fn to_params(&self, at: &str) -> Result<GaussianParams> {
        let d = self.mu.len();
        if d == 0 {
            bail!("{at}.mu: must not be empty");
        }
        let sigma = matrix_from_rows(&self.sigma, d, &format!("{at}.sigma"))?;
        GaussianParams::new(DVector::from_vec(self.mu.clone()), sigma).map_err(|e| anyhow!("{at}: {e}"))
    }
}

/// Generating parameters written next to a synthetic dataset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TruthDto {
    Gaussian { mu: Vec<f64>, sigma: Vec<Vec<f64>> },
    Gumbel { location: Vec<f64>, scale: Vec<f64> },
}

impl TruthDto {
    pub fn from_truth(t: &GroundTruth) -> Self {
        match t {
            GroundTruth::Gaussian(p) => TruthDto::Gaussian {
                mu: p.mu().iter().copied().collect(),
                sigma: sigma_rows(p.sigma()),
            },
            GroundTruth::Gumbel { location, scale } => TruthDto::Gumbel {
                location: location.clone(),
                scale: scale.clone(),
            },
        }
    }

    pub fn to_truth(&self, at: &str) -> Result<GroundTruth> {
        Ok(match self {
            TruthDto::Gaussian { mu, sigma } => GroundTruth::Gaussian(
                GaussianDto {
                    mu: mu.clone(),
                    sigma: sigma.clone(),
                }
                .to_params(at)?,
            ),
            TruthDto::Gumbel { location, scale } => {
                if location.len() != scale.len() {
                    bail!(
                        "{at}.scale: has {} entries, location has {}",
                        scale.len(),
                        location.len()
                    );
                }
                GroundTruth::Gumbel {
                    location: location.clone(),
                    scale: scale.clone(),
                }
            }
        })
    }

    /// Gaussian truths as parameters; Gumbel truths have none.
    pub fn gaussian(&self) -> Result<Option<GaussianParams>> {
        match self.to_truth("truth")? {
            GroundTruth::Gaussian(p) => Ok(Some(p)),
            GroundTruth::Gumbel { .. } => Ok(None),
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration

fn default_consideration() -> f64 {
    0.5
}
fn default_sizes() -> Vec<usize> {
    vec![2, 3]
}
fn default_discount() -> (f64, f64) {
    (0.0, 5.0)
}
fn default_halfwidth() -> f64 {
    3.0
}
fn default_truth_kind() -> String {
    "gaussian".into()
}

/// Generator settings. Without `ground_truth` a random Gaussian truth is
/// drawn from `seed`; `truth_kind = "gumbel"` turns it into variance-matched
/// Gumbel marginals.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenSpecDto {
    pub product_count: usize,
    pub n_transactions: usize,
    #[serde(default)]
    pub ground_truth: Option<TruthDto>,
    #[serde(default = "default_truth_kind")]
    pub truth_kind: String,
    #[serde(default = "default_consideration")]
    pub consideration_prob: f64,
    #[serde(default = "default_sizes")]
    pub bundle_sizes: Vec<usize>,
    #[serde(default = "default_discount")]
    pub discount_range: (f64, f64),
    #[serde(default = "default_halfwidth")]
    pub price_halfwidth: f64,
    /// Fixed menus cycled over transactions; random menus when absent.
    #[serde(default)]
    pub fixed_menus: Option<Vec<Vec<EntryDto>>>,
    #[serde(default)]
    pub censor: bool,
    pub seed: u64,
}

impl GenSpecDto {
    pub fn to_spec(&self) -> Result<GenSpec> {
        let truth = match &self.ground_truth {
            Some(t) => t.to_truth("ground_truth")?,
            None => {
                let g = bundlesight_core::datagen::generate_ground_truth(self.product_count, self.seed)
                    .map_err(|e| anyhow!("product_count: {e}"))?;
                match self.truth_kind.as_str() {
                    "gaussian" => GroundTruth::Gaussian(g),
                    "gumbel" => GroundTruth::gumbel_matching(&g),
                    other => bail!("truth_kind: expected \"gaussian\" or \"gumbel\", found {other:?}"),
                }
            }
        };
        if truth.dim() != self.product_count {
            bail!(
                "ground_truth: dimension {} differs from product_count {}",
                truth.dim(),
                self.product_count
            );
        }
        let menu_mode = match &self.fixed_menus {
            None => MenuMode::PerTransaction,
            Some(ms) => MenuMode::Fixed(
                ms.iter()
                    .enumerate()
                    .map(|(k, m)| menu_from_dto(m, self.product_count, &format!("fixed_menus[{k}]")))
                    .collect::<Result<_>>()?,
            ),
        };
        let spec = GenSpec {
            product_count: self.product_count,
            n_transactions: self.n_transactions,
            ground_truth: truth,
            consideration_prob: self.consideration_prob,
            bundle_sizes: self.bundle_sizes.clone(),
            discount_range: self.discount_range,
            price_halfwidth: self.price_halfwidth,
            menu_mode,
            censor: self.censor,
            seed: self.seed,
        };
        spec.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(spec)
    }
}

fn default_l() -> usize {
    EmConfig::default().mc_samples_l
}
fn default_eps() -> f64 {
    EmConfig::default().tolerance_eps
}
fn default_iters() -> usize {
    EmConfig::default().max_iterations
}
fn default_threshold() -> f64 {
    EmConfig::default().acceptance_threshold
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EmConfigDto {
    #[serde(default = "default_l")]
    pub mc_samples_l: usize,
    #[serde(default = "default_eps")]
    pub tolerance_eps: f64,
    #[serde(default = "default_iters")]
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting parameters; price-based initialization when absent.
    #[serde(default)]
    pub init: Option<GaussianDto>,
    #[serde(default)]
    pub pool_size: Option<usize>,
    #[serde(default = "default_threshold")]
    pub acceptance_threshold: f64,
}

impl Default for EmConfigDto {
    fn default() -> Self {
        Self::from_config(&EmConfig::default())
    }
}

impl EmConfigDto {
    pub fn from_config(c: &EmConfig) -> Self {
        Self {
            mc_samples_l: c.mc_samples_l,
            tolerance_eps: c.tolerance_eps,
            max_iterations: c.max_iterations,
            seed: c.seed,
            init: match &c.init {
                InitStrategy::FromPrices => None,
                InitStrategy::Given(p) => Some(GaussianDto::from_params(p)),
            },
            pool_size: c.pool_size,
            acceptance_threshold: c.acceptance_threshold,
        }
    }

    pub fn to_config(&self) -> Result<EmConfig> {
        let c = EmConfig {
            mc_samples_l: self.mc_samples_l,
            tolerance_eps: self.tolerance_eps,
            max_iterations: self.max_iterations,
            seed: self.seed,
            init: match &self.init {
                None => InitStrategy::FromPrices,
                Some(g) => InitStrategy::Given(g.to_params("init")?),
            },
            pool_size: self.pool_size,
            acceptance_threshold: self.acceptance_threshold,
        };
        c.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InterceptDto {
    pub mask: Vec<u8>,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MnlDto {
    pub intercepts: Vec<InterceptDto>,
    pub price_coefficient: f64,
    pub log_likelihood: f64,
    pub ridge_applied: bool,
}

impl MnlDto {
    pub fn to_params(&self) -> MnlParams {
        MnlParams {
            intercepts: self
                .intercepts
                .iter()
                .map(|i| (i.mask.iter().map(|&b| b == 1).collect(), i.value))
                .collect(),
            price_coefficient: self.price_coefficient,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ComponentDto {
    pub phi: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

/// Fit output shared by every estimator. `mu`/`sigma` are empty for the
/// logit; mixtures fill `components` and report the mixture mean and
/// covariance in `mu`/`sigma`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FitReportDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub iterations: usize,
    pub error_trace: Vec<f64>,
    pub converged: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentDto>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnl: Option<MnlDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_posterior: Option<f64>,
}

impl FitReportDto {
    pub fn em(r: &FitReport) -> Self {
        Self {
            method: Some("em".into()),
            mu: r.params.mu().iter().copied().collect(),
            sigma: sigma_rows(r.params.sigma()),
            iterations: r.iterations,
            error_trace: r.error_trace.clone(),
            converged: r.converged,
            seed: r.config.seed,
            components: None,
            mnl: None,
            acceptance_rate: None,
            log_posterior: None,
        }
    }

    pub fn censored(r: &CensoredFitReport) -> Self {
        Self {
            method: Some("em-censored".into()),
            ..Self::em(&r.report)
        }
    }

    pub fn gmm(r: &GmmFitReport) -> Self {
        let (mu, sigma) = mixture_moments(&r.params);
        Self {
            method: Some("em-gmm".into()),
            mu,
            sigma,
            iterations: r.iterations,
            error_trace: r.error_trace.clone(),
            converged: r.converged,
            seed: r.config.seed,
            components: Some(
                r.params
                    .components()
                    .iter()
                    .map(|c| ComponentDto {
                        phi: c.phi,
                        mu: c.params.mu().iter().copied().collect(),
                        sigma: sigma_rows(c.params.sigma()),
                    })
                    .collect(),
            ),
            mnl: None,
            acceptance_rate: None,
            log_posterior: None,
        }
    }

    pub fn mnl(fit: &bundlesight_core::baselines::MnlFit, seed: u64) -> Self {
        Self {
            method: Some("mnl".into()),
            mu: Vec::new(),
            sigma: Vec::new(),
            iterations: fit.iterations,
            error_trace: vec![fit.gradient_norm],
            converged: fit.gradient_norm <= 1e-6,
            seed,
            components: None,
            mnl: Some(MnlDto {
                intercepts: fit
                    .params
                    .intercepts
                    .iter()
                    .map(|(m, v)| InterceptDto {
                        mask: m.iter().map(|&b| u8::from(b)).collect(),
                        value: *v,
                    })
                    .collect(),
                price_coefficient: fit.params.price_coefficient,
                log_likelihood: fit.log_likelihood,
                ridge_applied: fit.ridge_applied,
            }),
            acceptance_rate: None,
            log_posterior: None,
        }
    }

    pub fn mh(r: &MhResult, sigma: &DMatrix<f64>, seed: u64) -> Self {
        Self {
            method: Some("metropolis-hastings".into()),
            mu: r.posterior_mean.clone(),
            sigma: sigma_rows(sigma),
            iterations: r.chain.len(),
            error_trace: Vec::new(),
            converged: false,
            seed,
            components: None,
            mnl: None,
            acceptance_rate: Some(r.acceptance_rate),
            log_posterior: r.log_posterior.last().copied(),
        }
    }

    pub fn grid(mu: Vec<f64>, sigma: &DMatrix<f64>, nodes: usize, log_posterior: f64, seed: u64) -> Self {
        Self {
            method: Some("grid-search".into()),
            mu,
            sigma: sigma_rows(sigma),
            iterations: nodes,
            error_trace: Vec::new(),
            converged: true,
            seed,
            components: None,
            mnl: None,
            acceptance_rate: None,
            log_posterior: Some(log_posterior),
        }
    }

    /// The fitted model as something that predicts choices.
    pub fn model(&self) -> Result<Box<dyn bundlesight_core::baselines::ChoiceModel>> {
        if let Some(m) = &self.mnl {
            return Ok(Box::new(m.to_params()));
        }
        if let Some(cs) = &self.components {
            let comps = cs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    Ok(bundlesight_core::GmmComponent {
                        phi: c.phi,
                        params: GaussianDto {
                            mu: c.mu.clone(),
                            sigma: c.sigma.clone(),
                        }
                        .to_params(&format!("components[{k}]"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Box::new(GmmParams::new(comps).map_err(|e| anyhow!("components: {e}"))?));
        }
        Ok(Box::new(self.gaussian()?))
    }

    pub fn gaussian(&self) -> Result<GaussianParams> {
        GaussianDto {
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
        }
        .to_params("report")
    }
}

/// Mean and covariance of a Gaussian mixture.
pub fn mixture_moments(g: &GmmParams) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = g.dim();
    let mut mean = DVector::zeros(d);
    for c in g.components() {
        mean += c.params.mu() * c.phi;
    }
    let mut cov = DMatrix::zeros(d, d);
    for c in g.components() {
        let dm = c.params.mu() - &mean;
        cov += (c.params.sigma() + &dm * dm.transpose()) * c.phi;
    }
    (mean.iter().copied().collect(), sigma_rows(&cov))
}

/// Evaluation output; runtime only when timing was requested.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_param_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}
