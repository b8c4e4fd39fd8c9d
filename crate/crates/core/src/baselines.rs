//! Comparison estimators and out-of-sample choice prediction.
//!
//! * A multinomial logit that treats every bundle as a separate product,
//!   with one intercept per bundle mask and a shared price coefficient.
//! * A random-walk Metropolis-Hastings chain and an exhaustive grid search
//!   over the mean, with the covariance held fixed.
//!
//! The sampled likelihood used by both Bayesian baselines draws its
//! standard normals from a stream keyed by the bits of `μ`: re-evaluating a
//! point gives the same value, while different points carry independent
//! Monte-Carlo noise.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::domain::{Dataset, PriceMenu, Transaction};
use crate::error::{check_dim, invalid, Error, Result};
use crate::gaussian::{GaussianParams, Mvn};
use crate::gmm::GmmParams;
use crate::math::{exp, ln, sqrt};
use crate::metrics::rmse_from_predictions;
use crate::rng::{self, tag, ContentHasher};

/// Anything that predicts choice probabilities for a menu.
pub trait ChoiceModel: Sync {
    /// Probabilities of alternatives `0..=J` (0 is no purchase).
    fn predict(&self, menu: &PriceMenu, mc_count: usize, seed: u64) -> Result<Vec<f64>>;
}

fn best_response_frequencies(menu: &PriceMenu, draws: &[f64], dim: usize) -> Vec<f64> {
    let mut counts = vec![0usize; menu.len() + 1];
    for v in draws.chunks_exact(dim) {
        counts[menu.best_response(v)] += 1;
    }
    let m = (draws.len() / dim) as f64;
    counts.into_iter().map(|c| c as f64 / m).collect()
}

impl ChoiceModel for GaussianParams {
    fn predict(&self, menu: &PriceMenu, mc_count: usize, seed: u64) -> Result<Vec<f64>> {
        check_menu(menu, self.dim(), mc_count)?;
        let mvn = Mvn::new(self)?;
        let d = self.dim();
        let mut rng = rng::stream(seed, &[tag::PREDICT, self.content_key()]);
        let mut draws = vec![0.0; mc_count * d];
        let mut z = vec![0.0; d];
        for x in draws.chunks_exact_mut(d) {
            mvn.sample_into(&mut rng, x, &mut z);
        }
        Ok(best_response_frequencies(menu, &draws, d))
    }
}

impl ChoiceModel for GmmParams {
    fn predict(&self, menu: &PriceMenu, mc_count: usize, seed: u64) -> Result<Vec<f64>> {
        check_menu(menu, self.dim(), mc_count)?;
        let d = self.dim();
        let mvns = self
            .components()
            .iter()
            .map(|c| Mvn::new(&c.params))
            .collect::<Result<Vec<_>>>()?;
        let mut h = ContentHasher::default();
        for c in self.components() {
            h.write_f64(c.phi);
            h.write_u64(c.params.content_key());
        }
        let mut rng = rng::stream(seed, &[tag::PREDICT, h.finish()]);
        let mut draws = vec![0.0; mc_count * d];
        let mut z = vec![0.0; d];
        for x in draws.chunks_exact_mut(d) {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = mvns.len() - 1;
            for (k, c) in self.components().iter().enumerate() {
                acc += c.phi;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            mvns[pick].sample_into(&mut rng, x, &mut z);
        }
        Ok(best_response_frequencies(menu, &draws, d))
    }
}

fn check_menu(menu: &PriceMenu, dim: usize, mc_count: usize) -> Result<()> {
    if mc_count == 0 {
        return Err(invalid("mc_count must be at least 1"));
    }
    for (b, _) in menu.entries() {
        check_dim(dim, b.product_count())?;
    }
    Ok(())
}

/// Choice-prediction RMSE of `model` on `test`, over all
/// (transaction, alternative) cells.
pub fn rmse_choice_prediction(
    model: &dyn ChoiceModel,
    test: &[Transaction],
    mc_count: usize,
    seed: u64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(invalid("empty test set"));
    }
    let preds = crate::par::try_map(test.len(), |n| model.predict(test[n].menu(), mc_count, seed))?;
    let choices: Vec<usize> = test.iter().map(Transaction::choice).collect();
    rmse_from_predictions(&preds, &choices)
}

// ---------------------------------------------------------------------------
// Multinomial logit

/// Ridge applied when the unpenalized likelihood has no finite maximizer.
pub const MNL_RIDGE: f64 = 1e-4;
const MNL_GRAD_TOL: f64 = 1e-6;
const MNL_MAX_STEPS: usize = 500;
const MNL_PARAM_LIMIT: f64 = 1e4;
const MNL_DECREMENT_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct MnlParams {
    /// Intercept of each bundle mask seen in training.
    pub intercepts: BTreeMap<Vec<bool>, f64>,
    pub price_coefficient: f64,
}

impl MnlParams {
    /// Intercept for `mask`; unseen masks get the mean intercept of seen
    /// bundles of the same size, or of all bundles.
    pub fn intercept(&self, mask: &[bool]) -> f64 {
        if let Some(a) = self.intercepts.get(mask) {
            return *a;
        }
        let size = mask.iter().filter(|&&b| b).count();
        let mean = |it: &mut dyn Iterator<Item = f64>| {
            let (s, n) = it.fold((0.0, 0usize), |(s, n), a| (s + a, n + 1));
            (n > 0).then(|| s / n as f64)
        };
        mean(
            &mut self
                .intercepts
                .iter()
                .filter(|(m, _)| m.iter().filter(|&&b| b).count() == size)
                .map(|(_, a)| *a),
        )
        .or_else(|| mean(&mut self.intercepts.values().copied()))
        .unwrap_or(0.0)
    }
}

/// Logit fit with its convergence diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct MnlFit {
    pub params: MnlParams,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Whether the ridge penalty had to be switched on.
    pub ridge_applied: bool,
}

impl ChoiceModel for MnlParams {
    fn predict(&self, menu: &PriceMenu, _mc_count: usize, _seed: u64) -> Result<Vec<f64>> {
        let u: Vec<f64> = menu
            .entries()
            .iter()
            .map(|(b, p)| self.intercept(b.mask()) + self.price_coefficient * p)
            .collect();
        let top = u.iter().copied().fold(0.0, f64::max);
        let mut e: Vec<f64> = core::iter::once(exp(-top))
            .chain(u.iter().map(|x| exp(x - top)))
            .collect();
        let s: f64 = e.iter().sum();
        for x in &mut e {
            *x /= s;
        }
        Ok(e)
    }
}

/// Design of one transaction: `(intercept index, price)` per alternative.
struct MnlRow {
    alts: Vec<(usize, f64)>,
    choice: usize,
}

struct MnlProblem {
    masks: Vec<Vec<bool>>,
    rows: Vec<MnlRow>,
}

impl MnlProblem {
    fn new(dataset: &Dataset) -> Self {
        let mut index: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
        for t in dataset.transactions() {
            for (b, _) in t.menu().entries() {
                let next = index.len();
                index.entry(b.mask().to_vec()).or_insert(next);
            }
        }
        // Intercepts in mask order so the fit does not depend on data order.
        let masks: Vec<Vec<bool>> = index.keys().cloned().collect();
        let pos: BTreeMap<&Vec<bool>, usize> = masks.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let rows = dataset
            .transactions()
            .iter()
            .map(|t| MnlRow {
                alts: t
                    .menu()
                    .entries()
                    .iter()
                    .map(|(b, p)| (pos[&b.mask().to_vec()], *p))
                    .collect(),
                choice: t.choice(),
            })
            .collect();
        Self { masks, rows }
    }

    fn dim(&self) -> usize {
        self.masks.len() + 1
    }

    /// Penalized log-likelihood, gradient and Hessian at `theta`.
    fn evaluate(&self, theta: &DVector<f64>, ridge: f64, want_hessian: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = self.dim();
        let beta_i = m - 1;
        let parts = crate::par::map(self.rows.len(), |n| {
            let row = &self.rows[n];
            let u: Vec<f64> = row.alts.iter().map(|&(a, p)| theta[a] + theta[beta_i] * p).collect();
            let top = u.iter().copied().fold(0.0, f64::max);
            let z0 = exp(-top);
            let ez: Vec<f64> = u.iter().map(|x| exp(x - top)).collect();
            let s = z0 + ez.iter().sum::<f64>();
            let lse = top + ln(s);
            let chosen = if row.choice == 0 { 0.0 } else { u[row.choice - 1] };
            let probs: Vec<f64> = ez.iter().map(|e| e / s).collect();
            (chosen - lse, probs)
        });
        let mut ll = 0.0;
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        let mut xbar = vec![0.0; m];
        for (row, (l, probs)) in self.rows.iter().zip(&parts) {
            ll += l;
            xbar.fill(0.0);
            for (&(a, p), &pj) in row.alts.iter().zip(probs) {
                xbar[a] += pj;
                xbar[beta_i] += pj * p;
            }
            if row.choice > 0 {
                let (a, p) = row.alts[row.choice - 1];
                g[a] += 1.0;
                g[beta_i] += p;
            }
            for (i, x) in xbar.iter().enumerate() {
                g[i] -= x;
            }
            if want_hessian {
                // Var of the design vector under the choice probabilities.
                for (&(a, p), &pj) in row.alts.iter().zip(probs) {
                    h[(a, a)] -= pj;
                    h[(a, beta_i)] -= pj * p;
                    h[(beta_i, a)] -= pj * p;
                    h[(beta_i, beta_i)] -= pj * p * p;
                }
                for i in 0..m {
                    if xbar[i] == 0.0 {
                        continue;
                    }
                    for j in 0..m {
                        h[(i, j)] += xbar[i] * xbar[j];
                    }
                }
            }
        }
        if ridge > 0.0 {
            ll -= 0.5 * ridge * theta.norm_squared();
            g -= theta * ridge;
            for i in 0..m {
                h[(i, i)] -= ridge;
            }
        }
        (ll, g, h)
    }

    /// Damped Newton ascent with Armijo backtracking. `None` when the
    /// iterates run off to infinity or the budget is exhausted.
    fn ascend(&self, start: DVector<f64>, ridge: f64) -> Option<(DVector<f64>, f64, f64, usize)> {
        let mut theta = start;
        let (mut ll, mut g, mut h) = self.evaluate(&theta, ridge, true);
        for step in 0..MNL_MAX_STEPS {
            let gn = g.norm();
            if gn <= MNL_GRAD_TOL {
                return Some((theta, ll, gn, step));
            }
            let neg_h = -h.clone();
            let dir = match neg_h.cholesky() {
                Some(c) => c.solve(&g),
                None => g.clone(),
            };
            let slope = g.dot(&dir);
            // Newton decrement below rounding level: no further progress is possible.
            if slope <= MNL_DECREMENT_TOL * ll.abs().max(1.0) {
                return Some((theta, ll, gn, step));
            }
            let mut t = 1.0;
            loop {
                let cand = &theta + &dir * t;
                let (cll, _, _) = self.evaluate(&cand, ridge, false);
                if cll.is_finite() && cll >= ll + 1e-4 * t * slope {
                    theta = cand;
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return (g.norm() <= MNL_GRAD_TOL * 100.0).then(|| (theta.clone(), ll, g.norm(), step));
                }
            }
            if theta.amax() > MNL_PARAM_LIMIT || !theta.iter().all(|x| x.is_finite()) {
                return None;
            }
            (ll, g, h) = self.evaluate(&theta, ridge, true);
        }
        None
    }

    /// A mask never chosen sends its intercept to −∞.
    fn has_unchosen_mask(&self) -> bool {
        let mut chosen = vec![false; self.masks.len()];
        for r in &self.rows {
            if r.choice > 0 {
                chosen[r.alts[r.choice - 1].0] = true;
            }
        }
        chosen.iter().any(|c| !c)
    }

    /// Whether the negative Hessian at `theta` is numerically positive
    /// definite, i.e. the maximizer is unique.
    fn curvature_is_definite(&self, theta: &DVector<f64>) -> bool {
        let (_, _, h) = self.evaluate(theta, 0.0, true);
        let ev = (-h).symmetric_eigenvalues();
        let top = ev.amax();
        ev.min() > 1e-10 * top.max(1.0)
    }

    fn params(&self, theta: &DVector<f64>) -> MnlParams {
        MnlParams {
            intercepts: self.masks.iter().cloned().zip(theta.iter().copied()).collect(),
            price_coefficient: theta[self.dim() - 1],
        }
    }
}

/// Maximum-likelihood logit fit from the zero vector.
pub fn fit_mnl(dataset: &Dataset) -> Result<MnlFit> {
    fit_mnl_from(dataset, None)
}

/// Logit fit from a given start, laid out as the intercepts in mask order
/// followed by the price coefficient.
pub fn fit_mnl_from(dataset: &Dataset, start: Option<&[f64]>) -> Result<MnlFit> {
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    let prob = MnlProblem::new(dataset);
    let theta0 = match start {
        Some(s) => {
            check_dim(prob.dim(), s.len())?;
            DVector::from_column_slice(s)
        }
        None => DVector::zeros(prob.dim()),
    };
    let unpenalized = if prob.has_unchosen_mask() {
        None
    } else {
        prob.ascend(theta0.clone(), 0.0)
            .filter(|(t, ..)| prob.curvature_is_definite(t))
    };
    let (theta, ll, gn, it, ridge_applied) = match unpenalized {
        Some((t, ll, gn, it)) => (t, ll, gn, it, false),
        None => {
            let (t, ll, gn, it) = prob
                .ascend(theta0, MNL_RIDGE)
                .ok_or_else(|| Error::NumericFailure("logit ascent did not converge".into()))?;
            (t, ll, gn, it, true)
        }
    };
    Ok(MnlFit {
        params: prob.params(&theta),
        log_likelihood: ll,
        gradient_norm: gn,
        iterations: it,
        ridge_applied,
    })
}

/// Number of logit parameters for `dataset` (distinct masks plus one).
pub fn mnl_parameter_count(dataset: &Dataset) -> usize {
    MnlProblem::new(dataset).dim()
}

// ---------------------------------------------------------------------------
// Sampled likelihood shared by the Bayesian baselines

/// Uniform prior box on `μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl PriorBox {
    /// Observed price range widened by 10 on both sides, in every coordinate.
    pub fn from_prices(dataset: &Dataset) -> Self {
        let (lo, hi) = dataset
            .transactions()
            .iter()
            .flat_map(|t| t.menu().entries().iter().map(|e| e.1))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p), h.max(p)));
        let d = dataset.product_count();
        Self {
            low: vec![lo - 10.0; d],
            high: vec![hi + 10.0; d],
        }
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.iter()
            .zip(self.low.iter().zip(&self.high))
            .all(|(m, (l, h))| l <= m && m <= h)
    }

    fn log_density(&self) -> f64 {
        -self.low.iter().zip(&self.high).map(|(l, h)| ln(h - l)).sum::<f64>()
    }
}

/// Transactions grouped by menu with choice counts.
pub struct SampledLikelihood {
    dim: usize,
    chol: DMatrix<f64>,
    mc_count: usize,
    seed: u64,
    menus: Vec<(PriceMenu, Vec<f64>)>,
}

/// Hit counts below this are raised to it before taking logs.
pub const HIT_FLOOR: f64 = 0.5;

impl SampledLikelihood {
    pub fn new(dataset: &Dataset, sigma: &DMatrix<f64>, mc_count: usize, seed: u64) -> Result<Self> {
        let d = dataset.product_count();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: sigma.nrows(),
            });
        }
        if mc_count == 0 {
            return Err(invalid("mc_count must be at least 1"));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| invalid("fixed sigma is not positive definite"))?
            .l();
        let mut grouped: BTreeMap<u64, (PriceMenu, Vec<f64>)> = BTreeMap::new();
        for t in dataset.transactions() {
            let mut h = ContentHasher::default();
            t.menu().hash_into(&mut h);
            let e = grouped
                .entry(h.finish())
                .or_insert_with(|| (t.menu().clone(), vec![0.0; t.menu().len() + 1]));
            e.1[t.choice()] += 1.0;
        }
        Ok(Self {
            dim: d,
            chol,
            mc_count,
            seed,
            menus: grouped.into_values().collect(),
        })
    }

    pub fn menu_count(&self) -> usize {
        self.menus.len()
    }

    /// `Σ_n ln P̂(R_n | μ, Σ)`, frequencies from `mc_count` draws seeded by `μ`.
    pub fn log_likelihood(&self, mu: &[f64]) -> Result<f64> {
        check_dim(self.dim, mu.len())?;
        let d = self.dim;
        let m = self.mc_count;
        let mut h = ContentHasher::default();
        for v in mu {
            h.write_f64(*v);
        }
        let mut rng = rng::stream(self.seed, &[tag::LIKELIHOOD, h.finish()]);
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; m * d];
        for xi in x.chunks_exact_mut(d) {
            for zc in z.iter_mut() {
                *zc = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            for r in 0..d {
                let mut s = mu[r];
                for c in 0..=r {
                    s += self.chol[(r, c)] * z[c];
                }
                xi[r] = s;
            }
        }
        let parts = crate::par::map(self.menus.len(), |k| {
            let (menu, counts) = &self.menus[k];
            let mut hits = vec![0usize; counts.len()];
            for v in x.chunks_exact(d) {
                hits[menu.best_response(v)] += 1;
            }
            counts
                .iter()
                .zip(&hits)
                .filter(|(c, _)| **c > 0.0)
                .map(|(c, &h)| c * ln((h as f64).max(HIT_FLOOR) / m as f64))
                .sum::<f64>()
        });
        Ok(parts.iter().sum())
    }
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings

#[derive(Clone, Debug, PartialEq)]
pub struct MhConfig {
    pub n_iterations: usize,
    pub proposal_halfwidth: f64,
    pub fixed_sigma: DMatrix<f64>,
    /// Defaults to the observed price range ±10.
    pub prior: Option<PriorBox>,
    pub burn_in_fraction: f64,
    /// Draws per likelihood evaluation.
    pub mc_count: usize,
    /// Defaults to the price-based EM initialization.
    pub init: Option<Vec<f64>>,
    pub seed: u64,
}

impl MhConfig {
    pub fn new(fixed_sigma: DMatrix<f64>, seed: u64) -> Self {
        Self {
            n_iterations: 10_000,
            proposal_halfwidth: 0.5,
            fixed_sigma,
            prior: None,
            burn_in_fraction: 0.2,
            mc_count: 2000,
            init: None,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MhResult {
    pub posterior_mean: Vec<f64>,
    pub chain: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub acceptance_rate: f64,
    /// The starting point had zero posterior and the chain restarted from
    /// the price-based initialization.
    pub restarted: bool,
}

/// Random-walk Metropolis-Hastings on `μ` with `Σ` fixed: propose
/// `μ + ε`, `ε ~ U[−h, h]^I`, accept with probability
/// `min(1, post(proposal) / post(current))`.
pub fn fit_metropolis_hastings(dataset: &Dataset, config: &MhConfig) -> Result<MhResult> {
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    if config.n_iterations == 0 || !(0.0..1.0).contains(&config.burn_in_fraction) || !(config.proposal_halfwidth > 0.0)
    {
        return Err(invalid(
            "n_iterations must be positive, burn_in_fraction in [0, 1), proposal_halfwidth positive",
        ));
    }
    let d = dataset.product_count();
    let lik = SampledLikelihood::new(dataset, &config.fixed_sigma, config.mc_count, config.seed)?;
    let prior = config.prior.clone().unwrap_or_else(|| PriorBox::from_prices(dataset));
    check_dim(d, prior.low.len())?;
    let log_post = |mu: &[f64]| -> Result<f64> {
        if !prior.contains(mu) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lik.log_likelihood(mu)? + prior.log_density())
    };
    let price_init = || -> Result<Vec<f64>> { Ok(crate::em::initial_params(dataset)?.mu().iter().copied().collect()) };
    let mut mu = match &config.init {
        Some(m) => {
            check_dim(d, m.len())?;
            m.clone()
        }
        None => price_init()?,
    };
    let mut lp = log_post(&mu)?;
    let mut restarted = false;
    if !lp.is_finite() {
        mu = price_init()?;
        lp = log_post(&mu)?;
        restarted = true;
        if !lp.is_finite() {
            return Err(Error::NumericFailure("posterior is zero at the initialization".into()));
        }
    }
    let mut rng = rng::stream(config.seed, &[tag::MCMC]);
    let h = config.proposal_halfwidth;
    let mut chain = Vec::with_capacity(config.n_iterations);
    let mut trace = Vec::with_capacity(config.n_iterations);
    let mut accepted = 0usize;
    for _ in 0..config.n_iterations {
        let prop: Vec<f64> = mu.iter().map(|m| m + rng.random_range(-h..h)).collect();
        let lp_new = log_post(&prop)?;
        let a: f64 = rng.random();
        if lp_new.is_finite() && ln(a) <= lp_new - lp {
            mu = prop;
            lp = lp_new;
            accepted += 1;
        }
        chain.push(mu.clone());
        trace.push(lp);
    }
    let burn = (config.burn_in_fraction * config.n_iterations as f64) as usize;
    let kept = &chain[burn..];
    let mut mean = vec![0.0; d];
    for m in kept {
        for (a, b) in mean.iter_mut().zip(m) {
            *a += b;
        }
    }
    for a in &mut mean {
        *a /= kept.len() as f64;
    }
    Ok(MhResult {
        posterior_mean: mean,
        chain,
        log_posterior: trace,
        acceptance_rate: accepted as f64 / config.n_iterations as f64,
        restarted,
    })
}

// ---------------------------------------------------------------------------
// Grid search

/// Cartesian grid of candidate means, one axis per product.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Vec<f64>>,
}

impl GridSpec {
    /// `steps + 1` evenly spaced nodes on `[low_i, high_i]` in every axis.
    pub fn uniform(low: &[f64], high: &[f64], steps: usize) -> Result<Self> {
        check_dim(low.len(), high.len())?;
        if steps == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        Ok(Self {
            axes: low
                .iter()
                .zip(high)
                .map(|(l, h)| (0..=steps).map(|k| l + (h - l) * k as f64 / steps as f64).collect())
                .collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn node(&self, mut index: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.axes.len());
        for axis in &self.axes {
            out.push(axis[index % axis.len()]);
            index /= axis.len();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best_mu: Vec<f64>,
    pub best_log_posterior: f64,
    /// Log posterior of every node in grid order.
    pub log_posterior: Vec<f64>,
}

/// Evaluates the unnormalized log posterior (sampled likelihood times the
/// uniform prior) at every node and returns the maximizer; ties go to the
/// first node.
pub fn fit_grid_search(
    dataset: &Dataset,
    grid: &GridSpec,
    fixed_sigma: &DMatrix<f64>,
    prior: Option<&PriorBox>,
    mc_count: usize,
    seed: u64,
) -> Result<GridResult> {
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    check_dim(dataset.product_count(), grid.axes.len())?;
    if grid.axes.iter().any(Vec::is_empty) {
        return Err(invalid("grid axes must be nonempty"));
    }
    let lik = SampledLikelihood::new(dataset, fixed_sigma, mc_count, seed)?;
    let prior = prior.cloned().unwrap_or_else(|| PriorBox::from_prices(dataset));
    let log_posterior = crate::par::try_map(grid.node_count(), |i| {
        let mu = grid.node(i);
        if !prior.contains(&mu) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lik.log_likelihood(&mu)? + prior.log_density())
    })?;
    let mut best = 0;
    for (i, lp) in log_posterior.iter().enumerate() {
        if *lp > log_posterior[best] {
            best = i;
        }
    }
    if !log_posterior[best].is_finite() {
        return Err(invalid("no grid node lies inside the prior box"));
    }
    Ok(GridResult {
        best_mu: grid.node(best),
        best_log_posterior: log_posterior[best],
        log_posterior,
    })
}

/// Posterior standard deviation of one coordinate on a grid, for reporting.
pub fn grid_posterior_sd(result: &GridResult, grid: &GridSpec, axis: usize) -> f64 {
    let top = result.best_log_posterior;
    let w: Vec<f64> = result.log_posterior.iter().map(|lp| exp(lp - top)).collect();
    let s: f64 = w.iter().sum();
    let mean = (0..w.len()).map(|i| w[i] * grid.node(i)[axis]).sum::<f64>() / s;
    let var = (0..w.len())
        .map(|i| {
            let dx = grid.node(i)[axis] - mean;
            w[i] * dx * dx
        })
        .sum::<f64>()
        / s;
    sqrt(var)
}
