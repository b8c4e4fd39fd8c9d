//! EM when no-purchase customers are not recorded.
//!
//! For every menu only the purchase counts `N_1..N_J` are known. Each
//! iteration imputes the total arrival count `N′` from its negative-binomial
//! posterior, simulates the `N′ − N` invisible customers inside the
//! no-purchase region, and refits on the completed sample.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::domain::{ic_polyhedron, PriceMenu};
use crate::em::{initial_params_from_menus, m_step, EmConfig, FitReport, InitStrategy};
use crate::error::{check_dim, invalid, Error, Result};
use crate::gaussian::{GaussianParams, Mvn};
use crate::math::{exp, lgamma, ln};
use crate::rng::{self, fold_path, tag, ContentHasher};
use crate::sampler::{draw_conditional, sample_negative_binomial_total, DrawMethod, DrawPool};

/// Default number of imputed-total instances per menu and iteration.
pub const DEFAULT_MC_INSTANCES: usize = 20;

/// Above this no-purchase probability the purchases carry no information.
pub const MAX_CENSORED_PROBABILITY: f64 = 1.0 - 1e-9;

/// One menu with the number of purchases of each alternative.
#[derive(Clone, Debug, PartialEq)]
pub struct MenuCounts {
    pub menu: PriceMenu,
    /// `counts[j - 1]` is `N_j`.
    pub counts: Vec<u64>,
}

impl MenuCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CensoredDataset {
    product_count: usize,
    menus: Vec<MenuCounts>,
}

impl CensoredDataset {
    pub fn new(product_count: usize, menus: Vec<MenuCounts>) -> Result<Self> {
        if product_count == 0 {
            return Err(invalid("product_count must be at least 1"));
        }
        if menus.is_empty() {
            return Err(invalid("censored dataset needs at least one menu"));
        }
        for (m, mc) in menus.iter().enumerate() {
            if mc.menu.is_empty() {
                return Err(invalid(format!("menus[{m}].menu is empty")));
            }
            for (b, _) in mc.menu.entries() {
                if b.product_count() != product_count {
                    return Err(invalid(format!(
                        "menus[{m}].menu: mask length {} differs from product_count {product_count}",
                        b.product_count()
                    )));
                }
            }
            if mc.counts.len() != mc.menu.len() {
                return Err(invalid(format!(
                    "menus[{m}].counts has {} entries for {} alternatives",
                    mc.counts.len(),
                    mc.menu.len()
                )));
            }
            if mc.total() == 0 {
                return Err(invalid(format!("menus[{m}].counts has no purchases")));
            }
        }
        Ok(Self { product_count, menus })
    }

    pub fn product_count(&self) -> usize {
        self.product_count
    }

    pub fn menus(&self) -> &[MenuCounts] {
        &self.menus
    }
}

/// Censored fit with the per-iteration imputation diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CensoredFitReport {
    pub report: FitReport,
    pub mc_instances: usize,
    /// `p0[t][m]`: estimated no-purchase probability of menu `m` at iteration `t`.
    pub p0_trace: Vec<Vec<f64>>,
    /// `mean_totals[t][m]`: mean imputed `N′` of menu `m` at iteration `t`.
    pub mean_totals: Vec<Vec<f64>>,
}

/// `P(N′ = n | N, p) = C(n, N) p^{n−N} (1 − p)^{N+1}`.
pub fn censored_posterior_pmf(n: u64, n_observed: u64, p_censored: f64) -> Result<f64> {
    if n < n_observed {
        return Err(invalid("n must be at least the observed count"));
    }
    if !(0.0..1.0).contains(&p_censored) {
        return Err(invalid("censoring probability must lie in [0, 1)"));
    }
    let k = n - n_observed;
    if p_censored == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let (nf, of, kf) = (n as f64, n_observed as f64, k as f64);
    let log_c = lgamma(nf + 1.0) - lgamma(of + 1.0) - lgamma(kf + 1.0);
    Ok(exp(log_c + kf * ln(p_censored) + (of + 1.0) * ln(1.0 - p_censored)))
}

fn menu_key(menu: &PriceMenu) -> u64 {
    let mut h = ContentHasher::default();
    menu.hash_into(&mut h);
    h.finish()
}

/// Runs the censored-demand EM with `mc_instances` imputed totals per menu
/// and iteration.
pub fn fit_censored(dataset: &CensoredDataset, config: &EmConfig, mc_instances: usize) -> Result<CensoredFitReport> {
    config.validate()?;
    if mc_instances == 0 {
        return Err(invalid("mc_instances must be at least 1"));
    }
    let dim = dataset.product_count();
    let init = match &config.init {
        InitStrategy::FromPrices => initial_params_from_menus(dim, dataset.menus().iter().map(|m| &m.menu))?,
        InitStrategy::Given(p) => {
            check_dim(dim, p.dim())?;
            p.clone()
        }
    };
    // Menus keyed by content and occurrence, processed in key order.
    let mut seen: BTreeMap<u64, u64> = BTreeMap::new();
    let mut keyed: Vec<(u64, usize)> = dataset
        .menus()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let content = menu_key(&m.menu);
            let occ = seen.entry(content).or_insert(0);
            let key = fold_path(&[content, *occ]);
            *occ += 1;
            (key, i)
        })
        .collect();
    keyed.sort();
    let regions: Vec<Vec<_>> = keyed
        .iter()
        .map(|&(_, i)| {
            let menu = &dataset.menus()[i].menu;
            (0..=menu.len())
                .map(|j| ic_polyhedron(menu, j))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut current = init.clone();
    let mut out = CensoredFitReport {
        report: FitReport {
            params: init.clone(),
            iterations: 0,
            error_trace: Vec::new(),
            converged: false,
            trajectory: Vec::new(),
            initial: init,
            importance_batches: Vec::new(),
            config: config.clone(),
        },
        mc_instances,
        p0_trace: Vec::new(),
        mean_totals: Vec::new(),
    };
    for t in 0..config.max_iterations {
        let params_key = current.content_key();
        let pool = DrawPool::generate(
            &current,
            config.effective_pool_size(),
            config.seed,
            &[tag::POOL, t as u64, params_key],
        )?;
        let mvn = Mvn::new(&current)?;
        let mut p0s = Vec::with_capacity(keyed.len());
        let mut totals = Vec::with_capacity(keyed.len());
        let mut batches = Vec::new();
        let mut fallbacks = 0;
        for (slot, &(key, i)) in keyed.iter().enumerate() {
            let mc = &dataset.menus()[i];
            let regs = &regions[slot];
            let p0 = pool.fraction_in(&regs[0]);
            if p0 >= MAX_CENSORED_PROBABILITY {
                return Err(Error::DegenerateCensoring { p0 });
            }
            p0s.push(p0);
            let n_obs = mc.total();
            let per_instance = crate::par::try_map(mc_instances, |l| {
                let mut rng = rng::stream(config.seed, &[tag::CENSOR, t as u64, params_key, key, l as u64]);
                let n_total = sample_negative_binomial_total(n_obs, p0, &mut rng)?;
                let mut parts = Vec::new();
                let mut fb = 0;
                let wanted = core::iter::once(n_total - n_obs).chain(mc.counts.iter().copied());
                for (j, count) in wanted.enumerate() {
                    if count == 0 {
                        continue;
                    }
                    let (b, how) = draw_conditional(
                        &pool,
                        &regs[j],
                        &current,
                        &mvn,
                        count as usize,
                        config.acceptance_threshold,
                        &mut rng,
                    )?;
                    fb += usize::from(how == DrawMethod::Importance);
                    parts.push(b.with_mass(count as f64));
                }
                Ok::<_, Error>((n_total, parts, fb))
            })?;
            let mut total_sum = 0.0;
            for (n_total, parts, fb) in per_instance {
                total_sum += n_total as f64;
                fallbacks += fb;
                batches.extend(parts);
            }
            totals.push(total_sum / mc_instances as f64);
        }
        let next = m_step(&batches)?;
        let err = next.l1_distance(&current);
        let r = &mut out.report;
        r.error_trace.push(err);
        r.importance_batches.push(fallbacks);
        r.trajectory.push(next.clone());
        r.iterations = t + 1;
        out.p0_trace.push(unsort(&keyed, p0s));
        out.mean_totals.push(unsort(&keyed, totals));
        current = next;
        if err <= config.tolerance_eps {
            r.converged = true;
            break;
        }
    }
    out.report.params = current;
    Ok(out)
}

/// Reorders per-menu values from key order back to dataset order.
fn unsort(keyed: &[(u64, usize)], values: Vec<f64>) -> Vec<f64> {
    let mut v = alloc::vec![0.0; values.len()];
    for (&(_, i), x) in keyed.iter().zip(values) {
        v[i] = x;
    }
    v
}

/// No-purchase probability of `menu` under `params`, from a fresh pool.
pub fn no_purchase_probability(menu: &PriceMenu, params: &GaussianParams, count: usize, seed: u64) -> Result<f64> {
    let pool = DrawPool::generate(params, count, seed, &[tag::CENSOR, menu_key(menu)])?;
    Ok(pool.fraction_in(&ic_polyhedron(menu, 0)?))
}
