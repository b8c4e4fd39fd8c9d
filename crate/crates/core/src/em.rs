//! Monte-Carlo EM for a Gaussian valuation distribution.
//!
//! Each iteration draws `L` points from `N(μ^(t), Σ^(t))` restricted to every
//! transaction's IC polyhedron (E-step) and refits the Gaussian by weighted
//! maximum likelihood (M-step), until the ℓ1 parameter step falls below ε.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::domain::{build_ic_polyhedron, Dataset, Polyhedron, PriceMenu};
use crate::error::{check_dim, invalid, Error, Result};
use crate::gaussian::{stabilize_covariance, GaussianParams, Mvn};
use crate::rng::{self, fold_path, tag};
use crate::sampler::{draw_conditional, DrawMethod, DrawPool, SampleBatch, DEFAULT_ACCEPTANCE_THRESHOLD};

/// How `θ^(0)` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum InitStrategy {
    /// Mean of observed prices per product, isotropic spread from the price range.
    FromPrices,
    Given(GaussianParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub mc_samples_l: usize,
    pub tolerance_eps: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub init: InitStrategy,
    /// Shared pool size; `None` means `max(100 L, 100000)`.
    pub pool_size: Option<usize>,
    pub acceptance_threshold: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            mc_samples_l: 200,
            tolerance_eps: 0.05,
            max_iterations: 100,
            seed: 0,
            init: InitStrategy::FromPrices,
            pool_size: None,
            acceptance_threshold: DEFAULT_ACCEPTANCE_THRESHOLD,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples_l == 0 {
            return Err(invalid("mc_samples_l must be at least 1"));
        }
        if !(self.tolerance_eps > 0.0 && self.tolerance_eps.is_finite()) {
            return Err(invalid("tolerance_eps must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if !(self.acceptance_threshold > 0.0 && self.acceptance_threshold <= 1.0) {
            return Err(invalid("acceptance_threshold must lie in (0, 1]"));
        }
        if self.pool_size == Some(0) {
            return Err(invalid("pool_size must be at least 1"));
        }
        Ok(())
    }

    pub fn effective_pool_size(&self) -> usize {
        self.pool_size.unwrap_or_else(|| (100 * self.mc_samples_l).max(100_000))
    }
}

/// Result of a base EM fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub params: GaussianParams,
    pub iterations: usize,
    /// ℓ1 step norm of every iteration.
    pub error_trace: Vec<f64>,
    pub converged: bool,
    /// Parameters after every iteration (`trajectory[t]` is `θ^(t+1)`).
    pub trajectory: Vec<GaussianParams>,
    pub initial: GaussianParams,
    /// Batches that needed importance sampling, per iteration.
    pub importance_batches: Vec<usize>,
    pub config: EmConfig,
}

/// A region-censored observation with its content-derived stream key.
#[derive(Clone, Debug)]
pub(crate) struct Observation {
    pub poly: Polyhedron,
    pub key: u64,
}

/// Keys each polyhedron by its content and occurrence index among identical
/// polyhedra, and returns them sorted by key together with the original
/// positions. Results therefore do not depend on transaction order.
pub(crate) fn keyed_observations(polys: Vec<Polyhedron>) -> (Vec<Observation>, Vec<usize>) {
    let mut seen: BTreeMap<u64, u64> = BTreeMap::new();
    let mut tagged: Vec<(u64, u64, usize, Polyhedron)> = polys
        .into_iter()
        .enumerate()
        .map(|(i, poly)| {
            let content = poly.content_key();
            let occ = seen.entry(content).or_insert(0);
            let key = fold_path(&[content, *occ]);
            *occ += 1;
            (key, content, i, poly)
        })
        .collect();
    tagged.sort_by_key(|t| (t.0, t.1));
    let order = tagged.iter().map(|t| t.2).collect();
    let obs = tagged
        .into_iter()
        .map(|(key, _, _, poly)| Observation { poly, key })
        .collect();
    (obs, order)
}

pub(crate) fn dataset_polyhedra(dataset: &Dataset) -> Result<Vec<Polyhedron>> {
    dataset.transactions().iter().map(build_ic_polyhedron).collect()
}

/// `θ^(0)` from prices: `μ_i` is the mean single-product price of product `i`
/// (else the mean per-item price of bundles containing it); `Σ = s² I` with
/// `s` the average over products of half the range of their observed
/// single-product prices (per-item bundle prices when a product is never
/// sold alone).
pub fn initial_params(dataset: &Dataset) -> Result<GaussianParams> {
    initial_params_from_menus(dataset.product_count(), dataset.transactions().iter().map(|t| t.menu()))
}

/// [`initial_params`] over a sequence of menus.
pub fn initial_params_from_menus<'a>(
    dim: usize,
    menus: impl IntoIterator<Item = &'a PriceMenu>,
) -> Result<GaussianParams> {
    let d = dim;
    let mut single = vec![PriceStats::default(); d];
    let mut per_item = vec![PriceStats::default(); d];
    let mut all = PriceStats::default();
    for menu in menus {
        for (b, p) in menu.entries() {
            check_dim(d, b.product_count())?;
            let size = b.size();
            let unit = p / size as f64;
            all.add(unit);
            for i in b.products() {
                if size == 1 {
                    single[i].add(*p);
                }
                per_item[i].add(unit);
            }
        }
    }
    if all.n == 0 {
        return Err(invalid("dataset has no priced alternatives"));
    }
    let overall = all.mean();
    let source = |i: usize| if single[i].n > 0 { &single[i] } else { &per_item[i] };
    let mu = DVector::from_iterator(
        d,
        (0..d).map(|i| if source(i).n > 0 { source(i).mean() } else { overall }),
    );
    let ranged: Vec<f64> = (0..d)
        .map(source)
        .filter(|st| st.n > 0)
        .map(|st| 0.5 * (st.hi - st.lo))
        .collect();
    let mut s = ranged.iter().sum::<f64>() / ranged.len().max(1) as f64;
    if s <= 0.0 {
        s = 0.5 * (all.hi - all.lo);
    }
    if s <= 0.0 {
        s = (0.1 * overall.abs()).max(1.0);
    }
    GaussianParams::new(mu, DMatrix::identity(d, d) * (s * s))
}

#[derive(Clone, Debug)]
struct PriceStats {
    sum: f64,
    n: usize,
    lo: f64,
    hi: f64,
}

impl Default for PriceStats {
    fn default() -> Self {
        Self {
            sum: 0.0,
            n: 0,
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        }
    }
}

impl PriceStats {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
        self.lo = self.lo.min(x);
        self.hi = self.hi.max(x);
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

fn resolve_init(dataset: &Dataset, config: &EmConfig) -> Result<GaussianParams> {
    match &config.init {
        InitStrategy::FromPrices => initial_params(dataset),
        InitStrategy::Given(p) => {
            check_dim(dataset.product_count(), p.dim())?;
            Ok(p.clone())
        }
    }
}

/// Weighted Gaussian MLE over all batches, each point weighted by
/// `mass · w_l`. The covariance is centered at the new mean.
pub fn m_step(batches: &[SampleBatch]) -> Result<GaussianParams> {
    let first = batches
        .first()
        .ok_or_else(|| invalid("m_step needs at least one batch"))?;
    let d = first.dim();
    let mut total = 0.0;
    let mut mu = vec![0.0; d];
    for b in batches {
        check_dim(d, b.dim())?;
        for (x, w) in b.points().zip(b.weights()) {
            let w = w * b.mass();
            total += w;
            for (m, xi) in mu.iter_mut().zip(x) {
                *m += w * xi;
            }
        }
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NumericFailure("total sample weight is not positive".into()));
    }
    for m in &mut mu {
        *m /= total;
    }
    let mut sigma = DMatrix::zeros(d, d);
    let mut dev = vec![0.0; d];
    for b in batches {
        for (x, w) in b.points().zip(b.weights()) {
            let w = w * b.mass();
            for ((di, xi), m) in dev.iter_mut().zip(x).zip(&mu) {
                *di = xi - m;
            }
            for i in 0..d {
                let wi = w * dev[i];
                for j in 0..=i {
                    sigma[(i, j)] += wi * dev[j];
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = sigma[(i, j)] / total;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    GaussianParams::new(DVector::from_vec(mu), stabilize_covariance(sigma)?)
}

/// `Q̂(θ | θ^(t)) = Σ_n mass_n Σ_l w_nl log f(x_nl | θ)`.
pub fn compute_q_hat(batches: &[SampleBatch], candidate: &GaussianParams) -> Result<f64> {
    if batches.is_empty() {
        return Err(invalid("compute_q_hat needs at least one batch"));
    }
    let stable = GaussianParams::regularized(candidate.mu().clone(), candidate.sigma().clone())?;
    let mvn = Mvn::new(&stable)?;
    let mut q = 0.0;
    for b in batches {
        check_dim(mvn.dim(), b.dim())?;
        let s: f64 = b.points().zip(b.weights()).map(|(x, w)| w * mvn.log_pdf(x)).sum();
        q += b.mass() * s;
    }
    Ok(q)
}

/// Conditional batches for keyed observations under `current`.
pub(crate) fn e_step_observations(
    obs: &[Observation],
    current: &GaussianParams,
    config: &EmConfig,
    iteration: usize,
) -> Result<(Vec<SampleBatch>, usize)> {
    let params_key = current.content_key();
    let pool = DrawPool::generate(
        current,
        config.effective_pool_size(),
        config.seed,
        &[tag::POOL, iteration as u64, params_key],
    )?;
    let mvn = Mvn::new(current)?;
    let drawn = crate::par::try_map(obs.len(), |k| {
        let mut rng = rng::stream(config.seed, &[tag::ESTEP, iteration as u64, params_key, obs[k].key]);
        draw_conditional(
            &pool,
            &obs[k].poly,
            current,
            &mvn,
            config.mc_samples_l,
            config.acceptance_threshold,
            &mut rng,
        )
    })?;
    let fallbacks = drawn.iter().filter(|(_, m)| *m == DrawMethod::Importance).count();
    Ok((drawn.into_iter().map(|(b, _)| b).collect(), fallbacks))
}

/// One E-step: a conditional batch per transaction, in transaction order.
pub fn e_step(
    dataset: &Dataset,
    current: &GaussianParams,
    config: &EmConfig,
    iteration: usize,
) -> Result<Vec<SampleBatch>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    check_dim(dataset.product_count(), current.dim())?;
    let (obs, order) = keyed_observations(dataset_polyhedra(dataset)?);
    let (batches, _) = e_step_observations(&obs, current, config, iteration)?;
    let mut out: Vec<Option<SampleBatch>> = vec![None; batches.len()];
    for (b, &pos) in batches.into_iter().zip(&order) {
        out[pos] = Some(b);
    }
    Ok(out.into_iter().map(|b| b.expect("every position filled")).collect())
}

/// Runs EM on a dataset.
pub fn fit(dataset: &Dataset, config: &EmConfig) -> Result<FitReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    let init = resolve_init(dataset, config)?;
    fit_regions(dataset_polyhedra(dataset)?, init, config)
}

/// Runs EM directly on region-censored observations, starting from `init`.
pub fn fit_regions(regions: Vec<Polyhedron>, init: GaussianParams, config: &EmConfig) -> Result<FitReport> {
    config.validate()?;
    if regions.is_empty() {
        return Err(invalid("no observations"));
    }
    for r in &regions {
        check_dim(init.dim(), r.dim())?;
    }
    let (obs, _) = keyed_observations(regions);
    let mut current = init.clone();
    let mut report = FitReport {
        params: init.clone(),
        iterations: 0,
        error_trace: Vec::new(),
        converged: false,
        trajectory: Vec::new(),
        initial: init,
        importance_batches: Vec::new(),
        config: config.clone(),
    };
    for t in 0..config.max_iterations {
        let (batches, fallbacks) = e_step_observations(&obs, &current, config, t)?;
        let next = m_step(&batches)?;
        let err = next.l1_distance(&current);
        report.error_trace.push(err);
        report.importance_batches.push(fallbacks);
        report.trajectory.push(next.clone());
        report.iterations = t + 1;
        current = next;
        if err <= config.tolerance_eps {
            report.converged = true;
            break;
        }
    }
    report.params = current;
    Ok(report)
}
