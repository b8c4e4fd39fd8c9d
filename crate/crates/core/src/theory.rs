//! Numerical checks of identifiability and of the population EM map.
//!
//! All quantities here are Monte-Carlo estimates over antithetic
//! standard-normal draws `z`; a valuation at mean `μ` is `μ + L z` with
//! `L Lᵀ = Σ*`. The same `z` are reused for every `μ`, so the estimated
//! population map is a deterministic function and `μ*` is an exact fixed
//! point of it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::datagen::{generate_dataset, generate_ground_truth, GenSpec, GroundTruth, MenuMode};
use crate::domain::{menu_partition, Bundle, Dataset, Polyhedron, PriceMenu, Transaction};
use crate::em::{fit, EmConfig, InitStrategy};
use crate::error::{check_dim, invalid, Error, Result};
use crate::gaussian::GaussianParams;
use crate::math::sqrt;
use crate::metrics::l1_param_error;
use crate::rng::{self, tag};

/// Default draw count for the laboratory.
pub const DEFAULT_MC_COUNT: usize = 500_000;

/// Regions that together cover valuation space.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSpec {
    regions: Vec<Polyhedron>,
}

impl PartitionSpec {
    pub fn new(regions: Vec<Polyhedron>) -> Result<Self> {
        let first = regions
            .first()
            .ok_or_else(|| invalid("a partition needs at least one region"))?;
        let d = first.dim();
        for r in &regions {
            check_dim(d, r.dim())?;
        }
        Ok(Self { regions })
    }

    pub fn whole_space(dim: usize) -> Self {
        Self {
            regions: vec![Polyhedron::whole_space(dim)],
        }
    }

    /// The IC polyhedra of one menu shared by every consumer.
    pub fn from_menu(menu: &PriceMenu) -> Result<Self> {
        Self::new(menu_partition(menu)?)
    }

    /// One-dimensional slabs between consecutive sorted `cuts`.
    pub fn slabs(cuts: &[f64]) -> Result<Self> {
        let mut c = cuts.to_vec();
        if c.iter().any(|x| !x.is_finite()) {
            return Err(invalid("cuts must be finite"));
        }
        c.sort_by(f64::total_cmp);
        let mut regions = Vec::with_capacity(c.len() + 1);
        let mut lower: Option<f64> = None;
        for &x in c.iter().chain(core::iter::once(&f64::INFINITY)) {
            let mut r = Polyhedron::whole_space(1);
            if let Some(l) = lower {
                r.push(&[1.0], l)?;
            }
            if x.is_finite() {
                r.push(&[-1.0], -x)?;
            }
            regions.push(r);
            lower = Some(x);
        }
        Self::new(regions)
    }

    /// Axis-aligned grid: product of per-axis slabs.
    pub fn grid(cuts: &[Vec<f64>]) -> Result<Self> {
        let d = cuts.len();
        let mut regions = vec![Polyhedron::whole_space(d)];
        for (axis, c) in cuts.iter().enumerate() {
            let slabs = Self::slabs(c)?;
            let mut next = Vec::new();
            for r in &regions {
                for s in &slabs.regions {
                    let mut q = r.clone();
                    for (a, b) in s.halfspaces() {
                        let mut normal = vec![0.0; d];
                        normal[axis] = a[0];
                        q.push(&normal, b)?;
                    }
                    next.push(q);
                }
            }
            regions = next;
        }
        Self::new(regions)
    }

    pub fn regions(&self) -> &[Polyhedron] {
        &self.regions
    }

    pub fn dim(&self) -> usize {
        self.regions[0].dim()
    }

    /// Every probe lies in at least one region, and in the interior of at
    /// most one.
    pub fn check(&self, probes: &[Vec<f64>]) -> bool {
        probes.iter().all(|p| {
            self.regions.iter().any(|r| r.contains_point(p))
                && self.regions.iter().filter(|r| r.interior_contains(p)).count() <= 1
        })
    }

    /// Index of the first region containing `v`.
    fn locate(&self, v: &[f64]) -> Option<usize> {
        self.regions.iter().position(|r| r.contains_point(v))
    }
}

/// How whitened draws `Z = W (X − μ*)` are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Whitening {
    /// `W = L⁻¹` with `L` the Cholesky factor of `Σ*`.
    Cholesky,
    /// `W = Σ*^{−1/2}`, the symmetric root.
    Symmetric,
}

/// Antithetic standard normal draws, flat `count × dim`.
fn antithetic_draws(dim: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(invalid("mc_count must be at least 2"));
    }
    let half = count / 2;
    let mut rng = rng::stream(seed, &[tag::THEORY, dim as u64]);
    let mut z = Vec::with_capacity(2 * half * dim);
    for _ in 0..half {
        let start = z.len();
        for _ in 0..dim {
            z.push(rng.sample::<f64, _>(rand_distr::StandardNormal));
        }
        for i in 0..dim {
            let v = -z[start + i];
            z.push(v);
        }
    }
    Ok(z)
}

fn cholesky_factor(truth: &GaussianParams) -> Result<DMatrix<f64>> {
    Ok(truth
        .sigma()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericFailure("truth covariance is not positive definite".into()))?
        .l())
}

fn shift(mu: &[f64], l: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    let d = mu.len();
    for r in 0..d {
        let mut s = mu[r];
        for c in 0..=r {
            s += l[(r, c)] * z[c];
        }
        out[r] = s;
    }
}

/// Region statistics of the whitened variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Assumption1Report {
    pub lambda_min: f64,
    /// `Var(E[Z | R′]) = Σ_k P_k m_k m_kᵀ`.
    pub between: DMatrix<f64>,
    /// `Σ_k P_k Var(Z | R′_k)`.
    pub within: DMatrix<f64>,
    pub region_probabilities: Vec<f64>,
    /// Regions with no draws, excluded from the sums.
    pub empty_regions: Vec<usize>,
    /// Share of draws that fell in no region.
    pub mass_deficit: f64,
    pub draws: usize,
}

/// `λ_min(Var(E[Z | R′]))` for `Z` the whitened valuation.
pub fn assumption1_eigenvalue(
    partition: &PartitionSpec,
    truth: &GaussianParams,
    mc_count: usize,
    seed: u64,
) -> Result<f64> {
    Ok(assumption1_report(partition, truth, mc_count, seed, Whitening::Cholesky)?.lambda_min)
}

pub fn assumption1_report(
    partition: &PartitionSpec,
    truth: &GaussianParams,
    mc_count: usize,
    seed: u64,
    whitening: Whitening,
) -> Result<Assumption1Report> {
    let d = truth.dim();
    check_dim(d, partition.dim())?;
    let l = cholesky_factor(truth)?;
    let z = antithetic_draws(d, mc_count, seed)?;
    let m = z.len() / d;
    // Symmetric whitening: Z = Σ^{-1/2} L z, an orthogonal rotation of z.
    let rot = match whitening {
        Whitening::Cholesky => DMatrix::identity(d, d),
        Whitening::Symmetric => {
            let eig = truth.sigma().clone().symmetric_eigen();
            let inv_root = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / sqrt(x)))
                * eig.eigenvectors.transpose();
            inv_root * &l
        }
    };
    let mu: Vec<f64> = truth.mu().iter().copied().collect();
    let k = partition.regions.len();
    let slot = crate::par::map(m, |i| {
        let mut x = vec![0.0; d];
        shift(&mu, &l, &z[i * d..(i + 1) * d], &mut x);
        partition.locate(&x)
    });
    let mut count = vec![0usize; k];
    let mut sum = vec![DVector::<f64>::zeros(d); k];
    let mut outer = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut missing = 0usize;
    for (i, s) in slot.iter().enumerate() {
        let Some(r) = *s else {
            missing += 1;
            continue;
        };
        let w = &rot * DVector::from_column_slice(&z[i * d..(i + 1) * d]);
        count[r] += 1;
        outer[r] += &w * w.transpose();
        sum[r] += w;
    }
    let mut between = DMatrix::zeros(d, d);
    let mut within = DMatrix::zeros(d, d);
    let mut probs = vec![0.0; k];
    let mut empty = Vec::new();
    for r in 0..k {
        if count[r] == 0 {
            empty.push(r);
            continue;
        }
        let n = count[r] as f64;
        let p = n / m as f64;
        let mean = &sum[r] / n;
        let mm = &mean * mean.transpose();
        between += &mm * p;
        within += (&outer[r] / n - mm) * p;
        probs[r] = p;
    }
    let lambda_min = between.clone().symmetric_eigenvalues().min();
    Ok(Assumption1Report {
        lambda_min,
        between,
        within,
        region_probabilities: probs,
        empty_regions: empty,
        mass_deficit: missing as f64 / m as f64,
        draws: m,
    })
}

/// Reusable draws for iterating the population map.
pub struct PopulationEm<'a> {
    partition: &'a PartitionSpec,
    truth: &'a GaussianParams,
    l: DMatrix<f64>,
    z: Vec<f64>,
    true_probs: Vec<f64>,
}

impl<'a> PopulationEm<'a> {
    pub fn new(partition: &'a PartitionSpec, truth: &'a GaussianParams, mc_count: usize, seed: u64) -> Result<Self> {
        let d = truth.dim();
        check_dim(d, partition.dim())?;
        let l = cholesky_factor(truth)?;
        let z = antithetic_draws(d, mc_count, seed)?;
        let mu: Vec<f64> = truth.mu().iter().copied().collect();
        let mut me = Self {
            partition,
            truth,
            l,
            z,
            true_probs: Vec::new(),
        };
        let (counts, _) = me.region_sums(&mu);
        let m = (me.z.len() / d) as f64;
        me.true_probs = counts.iter().map(|&c| c as f64 / m).collect();
        Ok(me)
    }

    /// `P(R_k | μ*)` for every region.
    pub fn true_probabilities(&self) -> &[f64] {
        &self.true_probs
    }

    fn region_sums(&self, mu: &[f64]) -> (Vec<usize>, Vec<Vec<f64>>) {
        let d = mu.len();
        let k = self.partition.regions.len();
        let m = self.z.len() / d;
        let mut x = vec![0.0; d];
        let mut count = vec![0usize; k];
        let mut sum = vec![vec![0.0; d]; k];
        for i in 0..m {
            shift(mu, &self.l, &self.z[i * d..(i + 1) * d], &mut x);
            if let Some(r) = self.partition.locate(&x) {
                count[r] += 1;
                for (a, b) in sum[r].iter_mut().zip(&x) {
                    *a += b;
                }
            }
        }
        (count, sum)
    }

    /// `M(μ) = Σ_k P(R_k | μ*) E[X | X ∈ R_k; μ, Σ*]`. Regions the draws at
    /// `μ` never reach are dropped and the remaining weights renormalized.
    pub fn step(&self, mu: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.truth.dim(), mu.len())?;
        let d = mu.len();
        let (count, sum) = self.region_sums(mu);
        let mut out = vec![0.0; d];
        let mut weight = 0.0;
        for r in 0..count.len() {
            if count[r] == 0 || self.true_probs[r] == 0.0 {
                continue;
            }
            let p = self.true_probs[r];
            weight += p;
            for (o, s) in out.iter_mut().zip(&sum[r]) {
                *o += p * s / count[r] as f64;
            }
        }
        if weight == 0.0 {
            return Err(Error::EmptyRegion);
        }
        for o in &mut out {
            *o /= weight;
        }
        Ok(out)
    }
}

/// One population EM step from fresh draws.
pub fn population_em_step(
    mu: &[f64],
    truth: &GaussianParams,
    partition: &PartitionSpec,
    mc_count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    PopulationEm::new(partition, truth, mc_count, seed)?.step(mu)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub radius: f64,
    pub epsilon_hat: f64,
    /// `1 − ε̂ / 2`.
    pub bound: f64,
    pub initial: Vec<f64>,
    /// `‖μ^(t) − μ*‖₂` for `t = 0..=n_steps`.
    pub errors: Vec<f64>,
    /// `errors[t + 1] / errors[t]`.
    pub ratios: Vec<f64>,
    /// Monte-Carlo error scale `sqrt(tr Σ* / mc_count)`; errors below it are noise.
    pub mc_error: f64,
    /// Steps whose ratio exceeded `bound + RATE_SLACK` while the error was
    /// above `mc_error`.
    pub excursions: Vec<usize>,
    /// Error grew above `mc_error` three steps in a row.
    pub diverged: bool,
}

/// Tolerance on the contraction rate before a step is flagged.
pub const RATE_SLACK: f64 = 0.05;

/// Errors at or below this are treated as converged; ratios are not formed.
const ERROR_FLOOR: f64 = 1e-12;

/// Iterates the population map from a uniform point on the sphere of
/// radius `r` around `μ*`.
pub fn contraction_experiment(
    truth: &GaussianParams,
    partition: &PartitionSpec,
    r: f64,
    n_steps: usize,
    mc_count: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("radius must be positive"));
    }
    let d = truth.dim();
    let eps = assumption1_eigenvalue(partition, truth, mc_count, seed)?;
    let pop = PopulationEm::new(partition, truth, mc_count, seed)?;
    let star: Vec<f64> = truth.mu().iter().copied().collect();
    let mut rng = rng::stream(seed, &[tag::THEORY, r.to_bits()]);
    let dir: Vec<f64> = loop {
        let g: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let n = sqrt(g.iter().map(|x| x * x).sum());
        if n > 0.0 {
            break g.iter().map(|x| x / n).collect();
        }
    };
    let initial: Vec<f64> = star.iter().zip(&dir).map(|(s, u)| s + r * u).collect();
    let dist = |m: &[f64]| sqrt(m.iter().zip(&star).map(|(a, b)| (a - b) * (a - b)).sum());
    let mut mu = initial.clone();
    let mut errors = vec![dist(&mu)];
    for _ in 0..n_steps {
        mu = pop.step(&mu)?;
        errors.push(dist(&mu));
    }
    let bound = 1.0 - eps / 2.0;
    let mc_error = sqrt(truth.sigma().trace() / mc_count as f64);
    let mut ratios = Vec::new();
    let mut excursions = Vec::new();
    for t in 0..n_steps {
        if errors[t] <= ERROR_FLOOR {
            break;
        }
        let q = errors[t + 1] / errors[t];
        if q > bound + RATE_SLACK && errors[t + 1] > mc_error {
            excursions.push(t);
        }
        ratios.push(q);
    }
    let growing: Vec<bool> = (0..ratios.len())
        .map(|t| ratios[t] > 1.0 && errors[t + 1] > mc_error)
        .collect();
    let diverged = growing.windows(3).any(|w| w.iter().all(|g| *g));
    Ok(ContractionReport {
        radius: r,
        epsilon_hat: eps,
        bound,
        initial,
        errors,
        ratios,
        mc_error,
        excursions,
        diverged,
    })
}

/// Contraction at each radius, for locating where the rate holds.
pub fn contraction_sweep(
    truth: &GaussianParams,
    partition: &PartitionSpec,
    radii: &[f64],
    n_steps: usize,
    mc_count: usize,
    seed: u64,
) -> Result<Vec<ContractionReport>> {
    radii
        .iter()
        .map(|&r| contraction_experiment(truth, partition, r, n_steps, mc_count, seed))
        .collect()
}

/// Radii swept by default.
pub const DEFAULT_RADII: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

/// Two single-product truths with the same purchase probability at one
/// price, and the fits obtained from each.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeControl {
    pub price: f64,
    pub truths: [GaussianParams; 2],
    /// Purchase probability under each truth.
    pub purchase_probabilities: [f64; 2],
    /// Fit from initializations at each truth, on data from the first.
    pub fits: [GaussianParams; 2],
    /// Parameter error of each fit against the data-generating truth.
    pub errors: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiabilityReport {
    pub truth: GaussianParams,
    pub estimate: GaussianParams,
    pub error: f64,
    pub prices: Vec<(f64, f64)>,
    pub iterations: usize,
    pub control: NegativeControl,
}

/// The `I + 1` separate-selling menus: every product alone at its regular
/// price, and for each product the same menu with that product discounted.
pub fn separate_selling_menus(prices: &[(f64, f64)]) -> Result<Vec<PriceMenu>> {
    let d = prices.len();
    let menu = |discounted: Option<usize>| {
        PriceMenu::new(
            (0..d)
                .map(|i| {
                    let p = if Some(i) == discounted {
                        prices[i].1
                    } else {
                        prices[i].0
                    };
                    Ok((Bundle::single(d, i)?, p))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    };
    core::iter::once(None).chain((0..d).map(Some)).map(menu).collect()
}

/// Separate-selling recovery: draws a random truth for `I` products,
/// generates `n_large` transactions on the separate-selling menus and fits
/// with base EM. `prices[i] = (regular, discount)` default to `μ_i ± sd_i/2`.
/// Also runs the one-price negative control.
pub fn identifiability_experiment(
    product_count: usize,
    prices: Option<&[(f64, f64)]>,
    n_large: usize,
    config: &EmConfig,
) -> Result<IdentifiabilityReport> {
    let truth = generate_ground_truth(product_count, config.seed)?;
    let prices: Vec<(f64, f64)> = match prices {
        Some(p) => {
            check_dim(product_count, p.len())?;
            p.to_vec()
        }
        None => (0..product_count)
            .map(|i| {
                let sd = sqrt(truth.sigma()[(i, i)]);
                (truth.mu()[i] + 0.5 * sd, truth.mu()[i] - 0.5 * sd)
            })
            .collect(),
    };
    for (i, (a, b)) in prices.iter().enumerate() {
        if a == b {
            return Err(invalid(format!("prices[{i}] must contain two distinct prices")));
        }
    }
    let estimate = fit_on_menus(&truth, separate_selling_menus(&prices)?, n_large, config)?;
    let error = l1_param_error(&estimate.0, &truth)?;
    let control = negative_control(n_large, config)?;
    Ok(IdentifiabilityReport {
        truth,
        estimate: estimate.0,
        error,
        prices,
        iterations: estimate.1,
        control,
    })
}

fn fit_on_menus(
    truth: &GaussianParams,
    menus: Vec<PriceMenu>,
    n: usize,
    config: &EmConfig,
) -> Result<(GaussianParams, usize)> {
    let data = synthetic(truth, menus, n, config.seed)?;
    let r = fit(&data, config)?;
    Ok((r.params, r.iterations))
}

fn synthetic(truth: &GaussianParams, menus: Vec<PriceMenu>, n: usize, seed: u64) -> Result<Dataset> {
    let mut spec = GenSpec::new(GroundTruth::Gaussian(truth.clone()), n, seed);
    spec.menu_mode = MenuMode::Fixed(menus);
    Ok(generate_dataset(&spec)?.dataset)
}

/// Price and truths of the one-price control; `(μ − p)/σ` is 1 for both.
pub const CONTROL_PRICE: f64 = 10.0;
pub const CONTROL_TRUTHS: [(f64, f64); 2] = [(12.0, 2.0), (14.0, 4.0)];

/// One product sold at a single price: the data pin down only
/// `(μ − p)/σ`, so fits started at either truth stay apart.
pub fn negative_control(n: usize, config: &EmConfig) -> Result<NegativeControl> {
    let p = CONTROL_PRICE;
    let truths = CONTROL_TRUTHS.map(|(m, s)| GaussianParams::from_slices(&[m], &[s * s]));
    let [a, b] = truths;
    let truths = [a?, b?];
    let menu = PriceMenu::new(vec![(Bundle::single(1, 0)?, p)])?;
    let data = synthetic(&truths[0], vec![menu.clone()], n, config.seed)?;
    let probs = truths
        .clone()
        .map(|t| crate::math::norm_cdf((t.mu()[0] - p) / sqrt(t.sigma()[(0, 0)])));
    let run = |init: &GaussianParams| {
        let cfg = EmConfig {
            init: InitStrategy::Given(init.clone()),
            ..config.clone()
        };
        fit(&data, &cfg).map(|r| r.params)
    };
    let fits = [run(&truths[0])?, run(&truths[1])?];
    let errors = [
        l1_param_error(&fits[0], &truths[0])?,
        l1_param_error(&fits[1], &truths[0])?,
    ];
    Ok(NegativeControl {
        price: p,
        truths,
        purchase_probabilities: probs,
        fits,
        errors,
    })
}

/// Single-product transactions at the given prices, one per entry of
/// `choices`, for hand-built checks.
pub fn single_product_dataset(prices_and_choices: &[(f64, usize)]) -> Result<Dataset> {
    let txns = prices_and_choices
        .iter()
        .map(|&(p, c)| Transaction::new(PriceMenu::new(vec![(Bundle::single(1, 0)?, p)])?, c))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(1, txns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn std1() -> GaussianParams {
        GaussianParams::from_slices(&[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn whole_space_has_no_between_variance() {
        let r = assumption1_report(
            &PartitionSpec::whole_space(2),
            &GaussianParams::standard(2),
            20_000,
            1,
            Whitening::Cholesky,
        )
        .unwrap();
        assert!(r.lambda_min.abs() < 1e-12);
    }

    #[test]
    fn split_at_zero_gives_two_over_pi() {
        let part = PartitionSpec::slabs(&[0.0]).unwrap();
        let l = assumption1_eigenvalue(&part, &std1(), 200_000, 3).unwrap();
        assert!((l - 2.0 / PI).abs() < 0.01, "{l}");
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let t = GaussianParams::from_slices(&[1.0, -2.0], &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let part = PartitionSpec::grid(&[vec![0.0, 1.5], vec![-2.0]]).unwrap();
        let m = population_em_step(&[1.0, -2.0], &t, &part, 10_000, 4).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12 && (m[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn whole_space_map_is_identity() {
        let part = PartitionSpec::whole_space(1);
        let m = population_em_step(&[0.7], &std1(), &part, 10_000, 4).unwrap();
        assert!((m[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn separate_selling_menu_shape() {
        let m = separate_selling_menus(&[(10.0, 8.0), (20.0, 15.0)]).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!((m[0].price(1), m[0].price(2)), (10.0, 20.0));
        assert_eq!((m[2].price(1), m[2].price(2)), (10.0, 15.0));
    }

    #[test]
    fn grid_partition_covers_the_plane() {
        let part = PartitionSpec::grid(&[vec![-1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(part.regions().len(), 9);
        let probes: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![-3.0 + 0.13 * i as f64, 3.0 - 0.11 * i as f64])
            .collect();
        assert!(part.check(&probes));
    }
}
