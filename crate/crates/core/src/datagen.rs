//! Synthetic bundle transactions with known ground truth.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use crate::censored::{CensoredDataset, MenuCounts};
use crate::domain::{Bundle, Dataset, PriceMenu, Transaction};
use crate::error::{check_dim, invalid, Result};
use crate::gaussian::{GaussianParams, Mvn};
use crate::rng::{self, tag};

/// Smallest price a discounted bundle may have.
pub const PRICE_FLOOR: f64 = 0.01;

/// Distribution the latent valuations are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    Gaussian(GaussianParams),
    /// Independent Gumbel marginals.
    Gumbel {
        location: Vec<f64>,
        scale: Vec<f64>,
    },
}

impl GroundTruth {
    pub fn dim(&self) -> usize {
        match self {
            GroundTruth::Gaussian(p) => p.dim(),
            GroundTruth::Gumbel { location, .. } => location.len(),
        }
    }

    /// Centers of the product price distributions.
    pub fn price_centers(&self) -> Vec<f64> {
        match self {
            GroundTruth::Gaussian(p) => p.mu().iter().copied().collect(),
            GroundTruth::Gumbel { location, .. } => location.clone(),
        }
    }

    /// Gumbel marginals with locations `μ` whose variances equal `diag(Σ)`.
    pub fn gumbel_matching(params: &GaussianParams) -> Self {
        let d = params.dim();
        GroundTruth::Gumbel {
            location: params.mu().iter().copied().collect(),
            scale: (0..d)
                .map(|i| gumbel_scale_for_variance(params.sigma()[(i, i)]))
                .collect(),
        }
    }
}

/// `β = √(6 var) / π`, since a Gumbel with scale `β` has variance `π²β²/6`.
pub fn gumbel_scale_for_variance(variance: f64) -> f64 {
    crate::math::sqrt(6.0 * variance) / core::f64::consts::PI
}

/// How menus are assigned to transactions.
#[derive(Clone, Debug, PartialEq)]
pub enum MenuMode {
    /// A fresh random menu per transaction.
    PerTransaction,
    /// Transaction `n` faces `menus[n % menus.len()]`.
    Fixed(Vec<PriceMenu>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub product_count: usize,
    pub n_transactions: usize,
    pub ground_truth: GroundTruth,
    pub consideration_prob: f64,
    pub bundle_sizes: Vec<usize>,
    pub discount_range: (f64, f64),
    pub price_halfwidth: f64,
    pub menu_mode: MenuMode,
    pub censor: bool,
    pub seed: u64,
}

impl GenSpec {
    /// The default protocol for a given truth.
    pub fn new(ground_truth: GroundTruth, n_transactions: usize, seed: u64) -> Self {
        Self {
            product_count: ground_truth.dim(),
            n_transactions,
            ground_truth,
            consideration_prob: 0.5,
            bundle_sizes: vec![2, 3],
            discount_range: (0.0, 5.0),
            price_halfwidth: 3.0,
            menu_mode: MenuMode::PerTransaction,
            censor: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.product_count == 0 {
            return Err(invalid("product_count must be at least 1"));
        }
        check_dim(self.product_count, self.ground_truth.dim())?;
        if !(0.0..=1.0).contains(&self.consideration_prob) || self.consideration_prob == 0.0 {
            return Err(invalid("consideration_prob must lie in (0, 1]"));
        }
        let (lo, hi) = self.discount_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("discount_range must be a nonnegative interval"));
        }
        if !(self.price_halfwidth >= 0.0 && self.price_halfwidth.is_finite()) {
            return Err(invalid("price_halfwidth must be nonnegative"));
        }
        if self.bundle_sizes.contains(&0) {
            return Err(invalid("bundle sizes must be positive"));
        }
        if let GroundTruth::Gumbel { location, scale } = &self.ground_truth {
            check_dim(location.len(), scale.len())?;
            if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(invalid("gumbel scales must be positive"));
            }
        }
        if let MenuMode::Fixed(menus) = &self.menu_mode {
            if menus.is_empty() {
                return Err(invalid("fixed menu mode needs at least one menu"));
            }
            for m in menus {
                if m.is_empty() {
                    return Err(invalid("fixed menus must offer something"));
                }
                check_dim(self.product_count, m.bundle(1).product_count())?;
            }
        }
        Ok(())
    }
}

/// Random truth: `μ_i ~ U[10, 50]`, `Σ = A Aᵀ` with `A_ij ~ U[1, 2]`.
pub fn generate_ground_truth(product_count: usize, seed: u64) -> Result<GaussianParams> {
    if product_count == 0 {
        return Err(invalid("product_count must be at least 1"));
    }
    let mut rng = rng::stream(seed, &[tag::DATAGEN, u64::MAX]);
    let d = product_count;
    let mu = DVector::from_fn(d, |_, _| rng.random_range(10.0..50.0));
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(1.0..2.0));
    let sigma = &a * a.transpose();
    GaussianParams::regularized(mu, sigma)
}

/// A random menu: each product is considered with probability
/// `consideration_prob` (redrawn if none is), every considered product is
/// offered alone at `U[c_i − h, c_i + h]`, and for every bundle size one
/// random bundle of considered products is offered at the sum of member
/// prices minus a `U[discount_range]` discount.
pub fn random_menu<R: Rng + ?Sized>(spec: &GenSpec, centers: &[f64], rng: &mut R) -> Result<PriceMenu> {
    let d = spec.product_count;
    let considered: Vec<usize> = loop {
        let c: Vec<usize> = (0..d).filter(|_| rng.random_bool(spec.consideration_prob)).collect();
        if !c.is_empty() {
            break c;
        }
    };
    let h = spec.price_halfwidth;
    let prices: Vec<f64> = centers
        .iter()
        .map(|&c| if h > 0.0 { rng.random_range(c - h..c + h) } else { c })
        .collect();
    let mut entries: Vec<(Bundle, f64)> = Vec::new();
    for &i in &considered {
        entries.push((Bundle::single(d, i)?, prices[i].max(PRICE_FLOOR)));
    }
    for &size in &spec.bundle_sizes {
        if considered.len() < size {
            continue;
        }
        let mut pick = considered.clone();
        for k in 0..size {
            let j = rng.random_range(k..pick.len());
            pick.swap(k, j);
        }
        let members = &pick[..size];
        let bundle = Bundle::from_products(d, members)?;
        let (lo, hi) = spec.discount_range;
        let discount = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let price = members.iter().map(|&i| prices[i]).sum::<f64>() - discount;
        if entries.iter().all(|(b, _)| *b != bundle) {
            entries.push((bundle, price.max(PRICE_FLOOR)));
        }
    }
    PriceMenu::new(entries)
}

/// Draws one valuation vector.
pub fn sample_valuation<R: Rng + ?Sized>(truth: &GroundTruth, mvn: Option<&Mvn>, rng: &mut R) -> Vec<f64> {
    match truth {
        GroundTruth::Gaussian(p) => {
            let d = p.dim();
            let mut x = vec![0.0; d];
            let mut z = vec![0.0; d];
            let owned;
            let m = match mvn {
                Some(m) => m,
                None => {
                    owned = Mvn::new(p).expect("validated covariance");
                    &owned
                }
            };
            m.sample_into(rng, &mut x, &mut z);
            x
        }
        GroundTruth::Gumbel { location, scale } => location
            .iter()
            .zip(scale)
            .map(|(&l, &s)| Gumbel::new(l, s).expect("validated scale").sample(rng))
            .collect(),
    }
}

/// A generated dataset with its latent valuations.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// All transactions, or only the purchases when censoring.
    pub dataset: Dataset,
    /// Valuation behind each transaction of `dataset`.
    pub valuations: Vec<Vec<f64>>,
    /// Every transaction before censoring.
    pub complete: Dataset,
    /// Purchase counts per fixed menu (fixed-menu mode with censoring only).
    pub censored: Option<CensoredDataset>,
}

/// Runs the generation protocol of `spec`.
pub fn generate_dataset(spec: &GenSpec) -> Result<Generated> {
    spec.validate()?;
    let centers = spec.ground_truth.price_centers();
    let mvn = match &spec.ground_truth {
        GroundTruth::Gaussian(p) => Some(Mvn::new(p)?),
        GroundTruth::Gumbel { .. } => None,
    };
    let rows = crate::par::try_map(spec.n_transactions, |n| {
        let mut rng = rng::stream(spec.seed, &[tag::DATAGEN, n as u64]);
        let (menu, slot) = match &spec.menu_mode {
            MenuMode::PerTransaction => (random_menu(spec, &centers, &mut rng)?, None),
            MenuMode::Fixed(menus) => {
                let k = n % menus.len();
                (menus[k].clone(), Some(k))
            }
        };
        let v = sample_valuation(&spec.ground_truth, mvn.as_ref(), &mut rng);
        let choice = menu.best_response(&v);
        Ok::<_, crate::Error>((Transaction::new(menu, choice)?, v, slot))
    })?;
    let complete = Dataset::new(spec.product_count, rows.iter().map(|r| r.0.clone()).collect())?;
    if !spec.censor {
        return Ok(Generated {
            dataset: complete.clone(),
            valuations: rows.into_iter().map(|r| r.1).collect(),
            complete,
            censored: None,
        });
    }
    let censored = match &spec.menu_mode {
        MenuMode::Fixed(menus) => {
            let mut counts: Vec<Vec<u64>> = menus.iter().map(|m| vec![0; m.len()]).collect();
            for (t, _, slot) in &rows {
                if t.choice() > 0 {
                    counts[slot.expect("fixed mode")][t.choice() - 1] += 1;
                }
            }
            let kept: Vec<MenuCounts> = menus
                .iter()
                .zip(counts)
                .filter(|(_, c)| c.iter().sum::<u64>() > 0)
                .map(|(m, c)| MenuCounts {
                    menu: m.clone(),
                    counts: c,
                })
                .collect();
            if kept.is_empty() {
                None
            } else {
                Some(CensoredDataset::new(spec.product_count, kept)?)
            }
        }
        MenuMode::PerTransaction => None,
    };
    let (purchases, valuations): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .filter(|r| r.0.choice() > 0)
        .map(|r| (r.0, r.1))
        .unzip();
    Ok(Generated {
        dataset: Dataset::new(spec.product_count, purchases)?,
        valuations,
        complete,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_ic_polyhedron;

    #[test]
    fn truth_entries_in_range() {
        let p = generate_ground_truth(2, 4).unwrap();
        assert_eq!(p, generate_ground_truth(2, 4).unwrap());
        for x in p.sigma().iter() {
            assert!((2.0..=8.0).contains(x));
        }
        assert!(p.mu().iter().all(|m| (10.0..50.0).contains(m)));
    }

    #[test]
    fn gumbel_scale_matches_variance() {
        let b = gumbel_scale_for_variance(6.0);
        assert!((b - 6.0 / core::f64::consts::PI).abs() < 1e-15);
        let var = core::f64::consts::PI.powi(2) * b * b / 6.0;
        assert!((var - 6.0).abs() < 1e-12);
    }

    #[test]
    fn generated_choices_lie_in_their_regions() {
        let truth = generate_ground_truth(4, 1).unwrap();
        let g = generate_dataset(&GenSpec::new(GroundTruth::Gaussian(truth), 300, 2)).unwrap();
        for (t, v) in g.dataset.transactions().iter().zip(&g.valuations) {
            assert!(build_ic_polyhedron(t).unwrap().contains(v).unwrap());
            assert_eq!(t.menu().best_response(v), t.choice());
        }
    }

    #[test]
    fn prices_far_above_valuations_give_no_purchases() {
        let truth = GaussianParams::from_slices(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let menu = PriceMenu::new(vec![
            (Bundle::single(2, 0).unwrap(), 100.0),
            (Bundle::from_products(2, &[0, 1]).unwrap(), 200.0),
        ])
        .unwrap();
        let mut spec = GenSpec::new(GroundTruth::Gaussian(truth), 50, 0);
        spec.discount_range = (0.0, 0.0);
        spec.menu_mode = MenuMode::Fixed(vec![menu]);
        let g = generate_dataset(&spec).unwrap();
        assert!(g.dataset.transactions().iter().all(|t| t.choice() == 0));
    }

    #[test]
    fn bundle_price_is_sum_minus_discount() {
        // Zero-width price and discount ranges pin every price.
        let truth =
            GaussianParams::from_slices(&[10.0, 20.0, 30.0], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let mut spec = GenSpec::new(GroundTruth::Gaussian(truth), 1, 0);
        spec.consideration_prob = 1.0;
        spec.price_halfwidth = 0.0;
        spec.discount_range = (2.0, 2.0);
        spec.bundle_sizes = vec![3];
        let menu = random_menu(&spec, &[10.0, 20.0, 30.0], &mut rng::stream(0, &[0])).unwrap();
        assert_eq!(menu.price(4), 58.0);
    }
}
