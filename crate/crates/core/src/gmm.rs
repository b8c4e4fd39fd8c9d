//! Monte-Carlo EM for a Gaussian-mixture valuation distribution.
//!
//! Each iteration estimates every observation's component responsibilities
//! from region probabilities, draws conditional samples per (observation,
//! component) pair and refits each component on responsibility-weighted
//! samples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use crate::domain::{Dataset, Polyhedron};
use crate::em::{dataset_polyhedra, fit, keyed_observations, m_step, EmConfig, InitStrategy, Observation};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianParams, Mvn};
use crate::math::{abs, sqrt};
use crate::rng::{self, tag};
use crate::sampler::{
    draw_conditional, find_interior_point_near, region_probability_importance, DrawMethod, DrawPool, ProposalParams,
};

/// Smallest weight a component keeps; lighter components are frozen.
pub const PHI_FLOOR: f64 = 1e-6;

/// Responsibilities below this are treated as zero when sampling.
pub const RESPONSIBILITY_CUTOFF: f64 = 1e-12;

const IMPORTANCE_PROBABILITY_DRAWS: usize = 20_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GmmComponent {
    pub phi: f64,
    pub params: GaussianParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmParams {
    components: Vec<GmmComponent>,
}

impl GmmParams {
    /// Checks weights are nonnegative and sum to one within 1e-9, then
    /// renormalizes them exactly.
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid("a mixture needs at least one component"))?;
        let d = first.params.dim();
        for (k, c) in components.iter().enumerate() {
            if c.params.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.params.dim(),
                });
            }
            if !(c.phi >= 0.0 && c.phi.is_finite()) {
                return Err(invalid(format!("components[{k}].phi must be nonnegative")));
            }
        }
        let total: f64 = components.iter().map(|c| c.phi).sum();
        if abs(total - 1.0) > 1e-9 {
            return Err(invalid(format!("component weights sum to {total}, not 1")));
        }
        let mut components = components;
        for c in &mut components {
            c.phi /= total;
        }
        Ok(Self { components })
    }

    pub fn single(params: GaussianParams) -> Self {
        Self {
            components: vec![GmmComponent { phi: 1.0, params }],
        }
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].params.dim()
    }

    /// `Σ_k |Δφ_k| + ‖Δμ_k‖₁ + ‖ΔΣ_k‖₁`, component by component.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let terms: Vec<(u64, f64)> = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                (
                    a.params.content_key(),
                    abs(a.phi - b.phi) + a.params.l1_distance(&b.params),
                )
            })
            .collect();
        canonical_sum(&terms)
    }
}

/// Sums values in the order of their keys, so the result does not depend on
/// component labels.
fn canonical_sum(terms: &[(u64, f64)]) -> f64 {
    let mut sorted = terms.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sorted.iter().map(|t| t.1).sum()
}

/// `N × K` posterior component memberships.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    rows: Vec<Vec<f64>>,
}

impl Responsibilities {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmFitReport {
    pub params: GmmParams,
    pub iterations: usize,
    pub error_trace: Vec<f64>,
    pub converged: bool,
    pub trajectory: Vec<GmmParams>,
    pub initial: GmmParams,
    /// Components frozen at the weight floor, per iteration.
    pub frozen: Vec<Vec<usize>>,
    /// Rows that fell back to a uniform responsibility, per iteration.
    pub uniform_rows: Vec<usize>,
    pub config: EmConfig,
}

struct ComponentState {
    key: u64,
    pool: DrawPool,
    mvn: Mvn,
}

fn component_states(current: &GmmParams, config: &EmConfig, iteration: usize) -> Result<Vec<ComponentState>> {
    current
        .components
        .iter()
        .map(|c| {
            let key = c.params.content_key();
            let pool = DrawPool::generate(
                &c.params,
                config.effective_pool_size(),
                config.seed,
                &[tag::POOL, iteration as u64, key],
            )?;
            Ok(ComponentState {
                key,
                pool,
                mvn: Mvn::new(&c.params)?,
            })
        })
        .collect()
}

/// Responsibilities of keyed observations; returns rows and the number of
/// uniform fallbacks.
fn responsibilities_for(
    obs: &[Observation],
    current: &GmmParams,
    states: &[ComponentState],
    config: &EmConfig,
    iteration: usize,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let k = current.k();
    // Region probabilities are computed once per distinct region.
    let mut distinct: BTreeMap<u64, usize> = BTreeMap::new();
    let mut reps: Vec<&Polyhedron> = Vec::new();
    let slot: Vec<usize> = obs
        .iter()
        .map(|o| {
            let key = o.poly.content_key();
            *distinct.entry(key).or_insert_with(|| {
                reps.push(&o.poly);
                reps.len() - 1
            })
        })
        .collect();
    let probs = crate::par::try_map(reps.len(), |r| {
        let poly = reps[r];
        let mut est = Vec::with_capacity(k);
        for (c, s) in current.components.iter().zip(states) {
            let hit = s.pool.fraction_in(poly);
            if hit > 0.0 {
                est.push(hit);
                continue;
            }
            // No pool draw landed in the region: estimate the tail mass.
            let anchor: Vec<f64> = c.params.mu().iter().copied().collect();
            let center = find_interior_point_near(poly, &anchor)?;
            let proposal = ProposalParams::new(DVector::from_vec(center), c.params.sigma().clone())?;
            let mut rng = rng::stream(
                config.seed,
                &[tag::IMPORTANCE, iteration as u64, s.key, poly.content_key()],
            );
            est.push(region_probability_importance(
                poly,
                &c.params,
                &proposal,
                IMPORTANCE_PROBABILITY_DRAWS,
                &mut rng,
            )?);
        }
        let uniform = weighted_total(current, states, &est) <= 0.0;
        Ok::<_, Error>((est, uniform))
    })?;
    let mut uniform_rows = 0;
    let rows = slot
        .iter()
        .map(|&r| {
            let (p, uniform) = &probs[r];
            if *uniform {
                uniform_rows += 1;
                return vec![1.0 / k as f64; k];
            }
            let denom = weighted_total(current, states, p);
            current
                .components
                .iter()
                .zip(p)
                .map(|(c, pk)| c.phi * pk / denom)
                .collect()
        })
        .collect();
    Ok((rows, uniform_rows))
}

fn weighted_total(current: &GmmParams, states: &[ComponentState], probs: &[f64]) -> f64 {
    let terms: Vec<(u64, f64)> = current
        .components
        .iter()
        .zip(states)
        .zip(probs)
        .map(|((c, s), p)| (s.key, c.phi * p))
        .collect();
    canonical_sum(&terms)
}

/// `π̂_nk ∝ φ_k P(R_n | μ_k, Σ_k)` for every transaction, in dataset order.
pub fn responsibilities(
    dataset: &Dataset,
    current: &GmmParams,
    config: &EmConfig,
    iteration: usize,
) -> Result<Responsibilities> {
    config.validate()?;
    let (obs, order) = keyed_observations(dataset_polyhedra(dataset)?);
    let states = component_states(current, config, iteration)?;
    let (rows, _) = responsibilities_for(&obs, current, &states, config, iteration)?;
    let mut out = vec![Vec::new(); rows.len()];
    for (row, &pos) in rows.into_iter().zip(&order) {
        out[pos] = row;
    }
    Ok(Responsibilities { rows: out })
}

/// Single-Gaussian fit split into `k` components with means displaced by
/// `±0.5 sd` along random sign vectors (antithetic pairs), equal weights and
/// the shared covariance. With `k = 1` this is the base EM initialization.
pub fn initial_gmm(dataset: &Dataset, k: usize, config: &EmConfig) -> Result<GmmParams> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k == 1 {
        let p = match &config.init {
            InitStrategy::FromPrices => crate::em::initial_params(dataset)?,
            InitStrategy::Given(p) => p.clone(),
        };
        return Ok(GmmParams::single(p));
    }
    let base = fit(dataset, config)?.params;
    let d = base.dim();
    let sd: Vec<f64> = (0..d).map(|i| sqrt(base.sigma()[(i, i)])).collect();
    let mut rng = rng::stream(config.seed, &[tag::GMM_INIT, k as u64]);
    let mut components = Vec::with_capacity(k);
    let mut signs = vec![1.0; d];
    for c in 0..k {
        if c % 2 == 0 {
            for s in &mut signs {
                *s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
        } else {
            for s in &mut signs {
                *s = -*s;
            }
        }
        let mu = DVector::from_fn(d, |i, _| base.mu()[i] + 0.5 * signs[i] * sd[i]);
        components.push(GmmComponent {
            phi: 1.0 / k as f64,
            params: base.with_mean(mu)?,
        });
    }
    GmmParams::new(components)
}

/// Fits a `k`-component mixture.
pub fn fit_gmm(dataset: &Dataset, k: usize, config: &EmConfig) -> Result<GmmFitReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    let init = initial_gmm(dataset, k, config)?;
    fit_gmm_from(dataset, init, config)
}

/// Fits a mixture starting from `init`.
pub fn fit_gmm_from(dataset: &Dataset, init: GmmParams, config: &EmConfig) -> Result<GmmFitReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no transactions"));
    }
    if init.dim() != dataset.product_count() {
        return Err(Error::DimensionMismatch {
            expected: dataset.product_count(),
            found: init.dim(),
        });
    }
    let (obs, _) = keyed_observations(dataset_polyhedra(dataset)?);
    let n = obs.len() as f64;
    let k = init.k();
    let mut current = init.clone();
    let mut report = GmmFitReport {
        params: init.clone(),
        iterations: 0,
        error_trace: Vec::new(),
        converged: false,
        trajectory: Vec::new(),
        initial: init,
        frozen: Vec::new(),
        uniform_rows: Vec::new(),
        config: config.clone(),
    };
    for t in 0..config.max_iterations {
        let states = component_states(&current, config, t)?;
        let (rows, uniform) = responsibilities_for(&obs, &current, &states, config, t)?;
        let pairs: Vec<(usize, usize)> = (0..obs.len())
            .flat_map(|i| (0..k).map(move |c| (i, c)))
            .filter(|&(i, c)| rows[i][c] >= RESPONSIBILITY_CUTOFF)
            .collect();
        let drawn = crate::par::try_map(pairs.len(), |p| {
            let (i, c) = pairs[p];
            let s = &states[c];
            let params = &current.components[c].params;
            let mut rng = rng::stream(config.seed, &[tag::ESTEP, t as u64, s.key, obs[i].key]);
            let (b, how) = draw_conditional(
                &s.pool,
                &obs[i].poly,
                params,
                &s.mvn,
                config.mc_samples_l,
                config.acceptance_threshold,
                &mut rng,
            )?;
            debug_assert!(how == DrawMethod::Importance || b.len() == config.mc_samples_l);
            Ok::<_, Error>(b.with_mass(rows[i][c]))
        })?;
        let mut per_component: Vec<Vec<_>> = vec![Vec::new(); k];
        for ((_, c), b) in pairs.iter().zip(drawn) {
            per_component[*c].push(b);
        }
        let mut frozen = Vec::new();
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let phi = col.iter().sum::<f64>() / n;
            let old = &current.components[c];
            if phi < PHI_FLOOR || per_component[c].is_empty() {
                frozen.push(c);
                next.push(GmmComponent {
                    phi: PHI_FLOOR,
                    params: old.params.clone(),
                });
            } else {
                next.push(GmmComponent {
                    phi,
                    params: m_step(&per_component[c])?,
                });
            }
        }
        let keys: Vec<(u64, f64)> = next.iter().map(|c| (c.params.content_key(), c.phi)).collect();
        let total = canonical_sum(&keys);
        for c in &mut next {
            c.phi /= total;
        }
        let next = GmmParams { components: next };
        let err = next.l1_distance(&current);
        report.error_trace.push(err);
        report.trajectory.push(next.clone());
        report.frozen.push(frozen);
        report.uniform_rows.push(uniform);
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
