//! Gaussian sampling, truncated sampling inside polyhedra, region
//! probabilities and the negative-binomial arrival draw.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::domain::Polyhedron;
use crate::error::{check_dim, invalid, Error, Result};
use crate::gaussian::{GaussianParams, Mvn};
use crate::lp::{maximize, LpOutcome};
use crate::math::{self, exp};
use crate::rng;

/// Default acceptance-rate threshold below which rejection sampling is
/// abandoned for importance sampling.
pub const DEFAULT_ACCEPTANCE_THRESHOLD: f64 = 0.01;

/// Weighted draws standing in for one region-censored observation.
///
/// `mass` is the number of customers the batch represents in the M-step
/// (1 for an ordinary transaction).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mass: f64,
}

impl SampleBatch {
    /// Equal weights `1/L` over row-major `points`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = Self::count_points(dim, &points)?;
        Ok(Self {
            dim,
            points,
            weights: vec![1.0 / n as f64; n],
            mass: 1.0,
        })
    }

    /// Normalizes positive `weights` to sum to one.
    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = Self::count_points(dim, &points)?;
        check_dim(n, weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("sample weights must be finite and positive"));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            dim,
            points,
            weights: weights.iter().map(|w| w / total).collect(),
            mass: 1.0,
        })
    }

    fn count_points(dim: usize, points: &[f64]) -> Result<usize> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(invalid("a sample batch needs at least one point of positive dimension"));
        }
        Ok(points.len() / dim)
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, l: usize) -> &[f64] {
        &self.points[l * self.dim..(l + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `Σ_l w_l x_l`.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.points().zip(&self.weights) {
            for (mi, xi) in m.iter_mut().zip(x) {
                *mi += w * xi;
            }
        }
        m
    }
}

/// Importance-sampling proposal `N(μ′, Σ′)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalParams(GaussianParams);

impl ProposalParams {
    pub fn new(mu_prime: DVector<f64>, sigma_prime: DMatrix<f64>) -> Result<Self> {
        Ok(Self(GaussianParams::new(mu_prime, sigma_prime)?))
    }

    pub fn from_gaussian(params: GaussianParams) -> Self {
        Self(params)
    }

    pub fn mu_prime(&self) -> &DVector<f64> {
        self.0.mu()
    }

    pub fn sigma_prime(&self) -> &DMatrix<f64> {
        self.0.sigma()
    }

    pub fn as_gaussian(&self) -> &GaussianParams {
        &self.0
    }
}

/// `count` i.i.d. draws from `N(μ, Σ)`.
pub fn sample_mvn<R: Rng + ?Sized>(params: &GaussianParams, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mvn = Mvn::new(params)?;
    let d = params.dim();
    let mut z = vec![0.0; d];
    Ok((0..count)
        .map(|_| {
            let mut x = vec![0.0; d];
            mvn.sample_into(rng, &mut x, &mut z);
            x
        })
        .collect())
}

/// Acceptance-rejection draws from `N(μ, Σ)` restricted to `poly`.
pub fn sample_truncated_rejection<R: Rng + ?Sized>(
    poly: &Polyhedron,
    params: &GaussianParams,
    count: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    check_dim(poly.dim(), params.dim())?;
    if count == 0 || max_attempts < count {
        return Err(invalid("need count >= 1 and max_attempts >= count"));
    }
    let mvn = Mvn::new(params)?;
    let points = rejection_fill(poly, &mvn, count, max_attempts, rng)?;
    SampleBatch::uniform(poly.dim(), points)
}

fn rejection_fill<R: Rng + ?Sized>(
    poly: &Polyhedron,
    mvn: &Mvn,
    count: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = mvn.dim();
    let mut points = Vec::with_capacity(count * d);
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut accepted = 0;
    for attempt in 1..=max_attempts {
        mvn.sample_into(rng, &mut x, &mut z);
        if poly.contains_point(&x) {
            points.extend_from_slice(&x);
            accepted += 1;
            if accepted == count {
                return Ok(points);
            }
        }
        if attempt == max_attempts {
            break;
        }
    }
    Err(Error::LowAcceptance {
        rate: accepted as f64 / max_attempts as f64,
        attempts: max_attempts,
    })
}

/// A point of `poly` with positive slack, nearest to the origin in ℓ1 among
/// points whose slack is (almost) the largest achievable.
pub fn find_interior_point(poly: &Polyhedron) -> Result<Vec<f64>> {
    find_interior_point_near(poly, &vec![0.0; poly.dim()])
}

/// Chebyshev-style interior point closest to `anchor`.
///
/// First maximizes the inradius `r` with unit-normalized half-spaces, then
/// minimizes `‖v − anchor‖₁` over points with slack at least `r(1 − 1e-7)`
/// (slack 1 when the inradius is unbounded). For a bounded region with a
/// unique maximal inscribed ball this is the Chebyshev center.
pub fn find_interior_point_near(poly: &Polyhedron, anchor: &[f64]) -> Result<Vec<f64>> {
    let d = poly.dim();
    check_dim(d, anchor.len())?;
    let mut unit: Vec<(Vec<f64>, f64)> = Vec::with_capacity(poly.halfspace_count());
    for (a, b) in poly.halfspaces() {
        let norm = math::sqrt(math::dot(a, a));
        if norm == 0.0 {
            if b > 0.0 {
                return Err(Error::EmptyRegion);
            }
            continue;
        }
        unit.push((a.iter().map(|x| x / norm).collect(), b / norm));
    }
    if unit.is_empty() {
        return Ok(anchor.to_vec());
    }
    // Stage 1: max r s.t. â·v − r ≥ b̂.
    let mut c1 = vec![0.0; d + 1];
    c1[d] = 1.0;
    let rows1: Vec<Vec<f64>> = unit
        .iter()
        .map(|(a, _)| {
            let mut row: Vec<f64> = a.iter().map(|x| -x).collect();
            row.push(1.0);
            row
        })
        .collect();
    let rhs1: Vec<f64> = unit.iter().map(|(_, b)| -b).collect();
    let scale = 1.0 + unit.iter().fold(0.0f64, |m, (_, b)| m.max(math::abs(*b)));
    let slack = match maximize(&c1, &rows1, &rhs1) {
        LpOutcome::Unbounded => 1.0,
        LpOutcome::Optimal { value, .. } => {
            if value < -1e-9 * scale {
                return Err(Error::EmptyRegion);
            }
            value.max(0.0) * (1.0 - 1e-7)
        }
        LpOutcome::Infeasible => return Err(Error::EmptyRegion),
    };
    // Stage 2: min Σ t s.t. |v − anchor| ≤ t, â·v ≥ b̂ + slack.
    let mut c2 = vec![0.0; 2 * d];
    for ci in &mut c2[d..] {
        *ci = -1.0;
    }
    let mut rows2 = Vec::with_capacity(2 * d + unit.len());
    let mut rhs2 = Vec::with_capacity(2 * d + unit.len());
    for i in 0..d {
        let mut up = vec![0.0; 2 * d];
        up[i] = 1.0;
        up[d + i] = -1.0;
        rows2.push(up);
        rhs2.push(anchor[i]);
        let mut down = vec![0.0; 2 * d];
        down[i] = -1.0;
        down[d + i] = -1.0;
        rows2.push(down);
        rhs2.push(-anchor[i]);
    }
    for (a, b) in &unit {
        let mut row: Vec<f64> = a.iter().map(|x| -x).collect();
        row.extend(core::iter::repeat_n(0.0, d));
        rows2.push(row);
        rhs2.push(-b - slack);
    }
    match maximize(&c2, &rows2, &rhs2) {
        LpOutcome::Optimal { x, .. } => Ok(x[..d].to_vec()),
        LpOutcome::Infeasible => Err(Error::EmptyRegion),
        LpOutcome::Unbounded => Err(Error::NumericFailure("interior-point LP is unbounded".into())),
    }
}

/// Self-normalized importance sampling: draws from the proposal truncated to
/// `poly` (by rejection), weighted by `f(x | target) / f(x | proposal)`.
pub fn sample_truncated_importance<R: Rng + ?Sized>(
    poly: &Polyhedron,
    target: &GaussianParams,
    proposal: &ProposalParams,
    count: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    let max_attempts = max_attempts_for(count, DEFAULT_ACCEPTANCE_THRESHOLD);
    importance_batch(
        poly,
        &Mvn::new(target)?,
        &Mvn::new(proposal.as_gaussian())?,
        count,
        max_attempts,
        rng,
    )
}

fn max_attempts_for(count: usize, threshold: f64) -> usize {
    let m = count as f64 / threshold;
    if m >= usize::MAX as f64 {
        usize::MAX
    } else {
        (math::ceil(m) as usize).max(count)
    }
}

fn importance_batch<R: Rng + ?Sized>(
    poly: &Polyhedron,
    target: &Mvn,
    proposal: &Mvn,
    count: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    check_dim(poly.dim(), target.dim())?;
    check_dim(poly.dim(), proposal.dim())?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let points = rejection_fill(poly, proposal, count, max_attempts, rng)?;
    let d = poly.dim();
    let log_w: Vec<f64> = points
        .chunks_exact(d)
        .map(|x| target.log_pdf(x) - proposal.log_pdf(x))
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = log_w.iter().map(|lw| exp(lw - top).max(f64::MIN_POSITIVE)).collect();
    SampleBatch::weighted(d, points, weights)
}

/// Fraction of `count` draws from `N(μ, Σ)` that land in `poly`.
pub fn region_probability<R: Rng + ?Sized>(
    poly: &Polyhedron,
    params: &GaussianParams,
    count: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dim(poly.dim(), params.dim())?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    if poly.halfspace_count() == 0 {
        return Ok(1.0);
    }
    let mvn = Mvn::new(params)?;
    let d = params.dim();
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..count {
        mvn.sample_into(rng, &mut x, &mut z);
        hits += usize::from(poly.contains_point(&x));
    }
    Ok(hits as f64 / count as f64)
}

/// Unbiased importance-sampling estimate of `P(poly | μ, Σ)` using
/// untruncated draws from the proposal.
pub fn region_probability_importance<R: Rng + ?Sized>(
    poly: &Polyhedron,
    params: &GaussianParams,
    proposal: &ProposalParams,
    count: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dim(poly.dim(), params.dim())?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let target = Mvn::new(params)?;
    let prop = Mvn::new(proposal.as_gaussian())?;
    let d = params.dim();
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut total = 0.0;
    for _ in 0..count {
        prop.sample_into(rng, &mut x, &mut z);
        if poly.contains_point(&x) {
            total += exp(target.log_pdf(&x) - prop.log_pdf(&x));
        }
    }
    Ok((total / count as f64).min(1.0))
}

/// Draws the total arrival count `N′ ≥ N` from the negative binomial with
/// pmf `C(n, N) p^{n−N} (1 − p)^{N+1}`: `N` plus the failures before the
/// `(N + 1)`-th success of Bernoulli(`1 − p`) trials.
pub fn sample_negative_binomial_total<R: Rng + ?Sized>(n_observed: u64, p_censored: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..1.0).contains(&p_censored) {
        return Err(invalid("censoring probability must lie in [0, 1)"));
    }
    if p_censored == 0.0 {
        return Ok(n_observed);
    }
    let geo = Geometric::new(1.0 - p_censored).map_err(|_| invalid("invalid censoring probability"))?;
    let mut total = n_observed;
    for _ in 0..=n_observed {
        total += geo.sample(rng);
    }
    Ok(total)
}

/// One iteration's shared draws from `N(μ^(t), Σ^(t))`.
#[derive(Clone, Debug)]
pub struct DrawPool {
    dim: usize,
    points: Vec<f64>,
}

const POOL_CHUNK: usize = 4096;

impl DrawPool {
    /// Generates `size` draws in fixed-size chunks, each from its own stream
    /// `path ++ [chunk]`, so the pool does not depend on the worker count.
    pub fn generate(params: &GaussianParams, size: usize, master: u64, path: &[u64]) -> Result<Self> {
        if size == 0 {
            return Err(invalid("pool size must be at least 1"));
        }
        let mvn = Mvn::new(params)?;
        let d = params.dim();
        let chunks = size.div_ceil(POOL_CHUNK);
        let parts = crate::par::map(chunks, |c| {
            let mut p = path.to_vec();
            p.push(c as u64);
            let mut rng = rng::stream(master, &p);
            let n = POOL_CHUNK.min(size - c * POOL_CHUNK);
            let mut out = vec![0.0; n * d];
            let mut z = vec![0.0; d];
            for x in out.chunks_exact_mut(d) {
                mvn.sample_into(&mut rng, x, &mut z);
            }
            out
        });
        Ok(Self {
            dim: d,
            points: parts.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Fraction of pool draws inside `poly`.
    pub fn fraction_in(&self, poly: &Polyhedron) -> f64 {
        if poly.halfspace_count() == 0 {
            return 1.0;
        }
        let hits = self.points().filter(|x| poly.contains_point(x)).count();
        hits as f64 / self.len() as f64
    }
}

/// How a conditional batch was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrawMethod {
    Pool,
    PoolWithTopUp,
    Importance,
}

/// Conditional draws for one region under the shared-pool policy.
///
/// Scans the pool from a random offset and keeps the first `count` members
/// of `poly`, looking at no more than `count / threshold` draws. If the whole
/// pool was scanned at an acceptance rate of at least `threshold`, fresh
/// draws make up the shortfall. Otherwise the batch comes from importance
/// sampling with proposal `N(v°, Σ)`, `v°` the interior point nearest `μ`.
pub fn draw_conditional<R: Rng + ?Sized>(
    pool: &DrawPool,
    poly: &Polyhedron,
    params: &GaussianParams,
    mvn: &Mvn,
    count: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<(SampleBatch, DrawMethod)> {
    let d = poly.dim();
    check_dim(d, pool.dim())?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let n = pool.len();
    let offset = rng.random_range(0..n);
    let max_scan = n.min(max_attempts_for(count, threshold));
    let mut points = Vec::with_capacity(count * d);
    let mut accepted = 0;
    let mut scanned = 0;
    while scanned < max_scan && accepted < count {
        let mut i = offset + scanned;
        if i >= n {
            i -= n;
        }
        let x = pool.point(i);
        if poly.contains_point(x) {
            points.extend_from_slice(x);
            accepted += 1;
        }
        scanned += 1;
    }
    if accepted == count {
        return Ok((SampleBatch::uniform(d, points)?, DrawMethod::Pool));
    }
    let rate = accepted as f64 / scanned as f64;
    if scanned == n && rate >= threshold {
        let remaining = count - accepted;
        if let Ok(extra) = rejection_fill(poly, mvn, remaining, max_attempts_for(remaining, threshold), rng) {
            points.extend_from_slice(&extra);
            return Ok((SampleBatch::uniform(d, points)?, DrawMethod::PoolWithTopUp));
        }
    }
    let batch = importance_fallback(poly, params, mvn, count, threshold, rng)?;
    Ok((batch, DrawMethod::Importance))
}

/// Importance sampling centered at the interior point nearest to `μ`. If the
/// proposal `N(v°, Σ)` still accepts too rarely (a thin region), its
/// covariance is shrunk by a factor of four up to three times.
fn importance_fallback<R: Rng + ?Sized>(
    poly: &Polyhedron,
    params: &GaussianParams,
    target: &Mvn,
    count: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<SampleBatch> {
    let anchor: Vec<f64> = params.mu().iter().copied().collect();
    let center = find_interior_point_near(poly, &anchor)?;
    let max_attempts = max_attempts_for(count, threshold);
    let mut sigma = params.sigma().clone();
    let mut last = Error::EmptyRegion;
    for _ in 0..4 {
        let proposal = GaussianParams::new(DVector::from_column_slice(&center), sigma.clone())?;
        match importance_batch(poly, target, &Mvn::new(&proposal)?, count, max_attempts, rng) {
            Ok(b) => return Ok(b),
            Err(e @ Error::LowAcceptance { .. }) => last = e,
            Err(e) => return Err(e),
        }
        sigma *= 0.25;
    }
    Err(last)
}
