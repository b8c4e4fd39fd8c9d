//! Products, bundles, price menus, transactions and their incentive-compatible
//! (IC) polyhedra.
//!
//! A customer with additive valuations `v` facing a menu buys the alternative
//! with the largest nonnegative surplus `Σ_{i∈j} v_i − p_j`, or nothing. The
//! set of `v` consistent with an observed choice is an intersection of closed
//! half-spaces; the `J + 1` such sets of one menu tile the valuation space.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Result};
use crate::math::dot;
use crate::rng::ContentHasher;

/// A nonempty subset of the products, sold at a single price.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bundle {
    mask: Vec<bool>,
}

impl Bundle {
    pub fn new(mask: Vec<bool>) -> Result<Self> {
        if !mask.iter().any(|&b| b) {
            return Err(invalid("bundle must contain at least one product"));
        }
        Ok(Self { mask })
    }

    /// Bundle from zero-based product indices.
    pub fn from_products(product_count: usize, products: &[usize]) -> Result<Self> {
        let mut mask = alloc::vec![false; product_count];
        for &i in products {
            if i >= product_count {
                return Err(invalid(format!(
                    "product {i} out of range for {product_count} products"
                )));
            }
            mask[i] = true;
        }
        Self::new(mask)
    }

    pub fn single(product_count: usize, product: usize) -> Result<Self> {
        Self::from_products(product_count, &[product])
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn product_count(&self) -> usize {
        self.mask.len()
    }

    pub fn size(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, product: usize) -> bool {
        self.mask.get(product).copied().unwrap_or(false)
    }

    pub fn products(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Additive valuation of the bundle.
    pub fn value(&self, v: &[f64]) -> f64 {
        self.mask.iter().zip(v).filter(|(&b, _)| b).map(|(_, x)| x).sum()
    }

    /// Indicator vector as reals.
    pub fn indicator(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Offered alternatives with their prices. Alternative `j` (1-based) is
/// `entries[j - 1]`; index 0 is reserved for no purchase. Bundles that are
/// not offered are simply absent.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceMenu {
    entries: Vec<(Bundle, f64)>,
}

impl PriceMenu {
    pub fn new(entries: Vec<(Bundle, f64)>) -> Result<Self> {
        if let Some((first, _)) = entries.first() {
            let n = first.product_count();
            for (k, (b, p)) in entries.iter().enumerate() {
                check_dim(n, b.product_count())?;
                if !p.is_finite() || *p <= 0.0 {
                    return Err(invalid(format!(
                        "menu entry {k}: price must be finite and positive, got {p}"
                    )));
                }
                if entries[..k].iter().any(|(other, _)| other == b) {
                    return Err(invalid(format!("menu entry {k}: duplicate bundle")));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(Bundle, f64)] {
        &self.entries
    }

    /// Number of offered alternatives `J`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bundle(&self, alternative: usize) -> &Bundle {
        &self.entries[alternative - 1].0
    }

    pub fn price(&self, alternative: usize) -> f64 {
        self.entries[alternative - 1].1
    }

    /// Surplus of alternative `j ≥ 1`; the no-purchase surplus is 0.
    pub fn surplus(&self, alternative: usize, v: &[f64]) -> f64 {
        if alternative == 0 {
            0.0
        } else {
            let (b, p) = &self.entries[alternative - 1];
            b.value(v) - p
        }
    }

    /// Surplus-maximizing alternative. Exact ties go to the lower index, so a
    /// zero best surplus means no purchase.
    pub fn best_response(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_surplus = 0.0;
        for (k, (b, p)) in self.entries.iter().enumerate() {
            let s = b.value(v) - p;
            if s > best_surplus {
                best = k + 1;
                best_surplus = s;
            }
        }
        best
    }

    pub(crate) fn hash_into(&self, h: &mut ContentHasher) {
        h.write_u64(self.entries.len() as u64);
        for (b, p) in &self.entries {
            for &bit in b.mask() {
                h.write_u64(u64::from(bit));
            }
            h.write_f64(*p);
        }
    }
}

/// One customer's menu and choice (`0` = no purchase).
#[derive(Clone, Debug, PartialEq)]
pub struct Transaction {
    menu: PriceMenu,
    choice: usize,
}

impl Transaction {
    pub fn new(menu: PriceMenu, choice: usize) -> Result<Self> {
        if choice > menu.len() {
            return Err(invalid(format!(
                "choice {choice} exceeds the {} offered alternatives",
                menu.len()
            )));
        }
        Ok(Self { menu, choice })
    }

    pub fn menu(&self) -> &PriceMenu {
        &self.menu
    }

    pub fn choice(&self) -> usize {
        self.choice
    }
}

/// Transactions over a fixed product set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    product_count: usize,
    transactions: Vec<Transaction>,
}

impl Dataset {
    pub fn new(product_count: usize, transactions: Vec<Transaction>) -> Result<Self> {
        if product_count == 0 {
            return Err(invalid("product_count must be at least 1"));
        }
        for (n, t) in transactions.iter().enumerate() {
            for (k, (b, _)) in t.menu().entries().iter().enumerate() {
                if b.product_count() != product_count {
                    return Err(invalid(format!(
                        "transactions[{n}].menu[{k}]: mask length {} differs from product_count {product_count}",
                        b.product_count()
                    )));
                }
            }
        }
        Ok(Self {
            product_count,
            transactions,
        })
    }

    pub fn product_count(&self) -> usize {
        self.product_count
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Dataset restricted to the given transaction indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            product_count: self.product_count,
            transactions: indices.iter().map(|&i| self.transactions[i].clone()).collect(),
        }
    }
}

/// Intersection of closed half-spaces `{v : a·v ≥ b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

impl Polyhedron {
    /// The whole space (no constraints).
    pub fn whole_space(dim: usize) -> Self {
        Self {
            dim,
            normals: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn from_halfspaces(dim: usize, halfspaces: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut p = Self::whole_space(dim);
        for (a, b) in halfspaces {
            p.push(a, *b)?;
        }
        Ok(p)
    }

    /// Adds `a·v ≥ b`.
    pub fn push(&mut self, normal: &[f64], offset: f64) -> Result<()> {
        check_dim(self.dim, normal.len())?;
        if !offset.is_finite() || normal.iter().any(|x| !x.is_finite()) {
            return Err(invalid("half-space coefficients must be finite"));
        }
        self.normals.extend_from_slice(normal);
        self.offsets.push(offset);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspace_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn halfspace(&self, k: usize) -> (&[f64], f64) {
        (&self.normals[k * self.dim..(k + 1) * self.dim], self.offsets[k])
    }

    pub fn halfspaces(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.halfspace_count()).map(move |k| self.halfspace(k))
    }

    /// Closed membership test.
    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        check_dim(self.dim, v.len())?;
        Ok(self.contains_point(v))
    }

    /// Membership test without the dimension check.
    #[inline]
    pub fn contains_point(&self, v: &[f64]) -> bool {
        debug_assert_eq!(v.len(), self.dim);
        self.normals
            .chunks_exact(self.dim)
            .zip(&self.offsets)
            .all(|(a, &b)| dot(a, v) >= b)
    }

    /// Strict membership: every inequality holds with positive slack.
    pub fn interior_contains(&self, v: &[f64]) -> bool {
        self.normals
            .chunks_exact(self.dim)
            .zip(&self.offsets)
            .all(|(a, &b)| dot(a, v) > b)
    }

    /// Smallest `a·v − b` over the half-spaces (`+∞` for the whole space).
    pub fn min_slack(&self, v: &[f64]) -> f64 {
        self.normals
            .chunks_exact(self.dim)
            .zip(&self.offsets)
            .map(|(a, &b)| dot(a, v) - b)
            .fold(f64::INFINITY, f64::min)
    }

    /// Content hash of the exact coefficient bits.
    pub fn content_key(&self) -> u64 {
        let mut h = ContentHasher::default();
        h.write_u64(self.dim as u64);
        h.write_u64(self.offsets.len() as u64);
        for x in self.normals.iter().chain(&self.offsets) {
            h.write_f64(*x);
        }
        h.finish()
    }
}

/// IC polyhedron of the alternative `choice` on `menu`.
///
/// For a purchase of `j`: one constraint per competing alternative `j'`
/// (`(1_j − 1_j')·v ≥ p_j − p_j'`, in menu order) followed by participation
/// `1_j·v ≥ p_j`. For no purchase: `−1_j'·v ≥ −p_j'` for every alternative.
pub fn ic_polyhedron(menu: &PriceMenu, choice: usize) -> Result<Polyhedron> {
    if choice > menu.len() {
        return Err(invalid(format!("choice {choice} exceeds menu size {}", menu.len())));
    }
    let dim = match menu.entries().first() {
        Some((b, _)) => b.product_count(),
        None => return Err(invalid("menu has no alternatives")),
    };
    let mut poly = Polyhedron::whole_space(dim);
    if choice == 0 {
        for (b, p) in menu.entries() {
            let a: Vec<f64> = b.indicator().iter().map(|x| -x).collect();
            poly.push(&a, -p)?;
        }
    } else {
        let (chosen, pc) = &menu.entries()[choice - 1];
        let own = chosen.indicator();
        for (k, (b, p)) in menu.entries().iter().enumerate() {
            if k + 1 == choice {
                continue;
            }
            let a: Vec<f64> = own.iter().zip(b.indicator()).map(|(x, y)| x - y).collect();
            poly.push(&a, pc - p)?;
        }
        poly.push(&own, *pc)?;
    }
    Ok(poly)
}

/// IC polyhedron of the transaction's observed choice.
pub fn build_ic_polyhedron(txn: &Transaction) -> Result<Polyhedron> {
    ic_polyhedron(txn.menu(), txn.choice())
}

/// All `J + 1` IC polyhedra of a menu, indexed by alternative.
pub fn menu_partition(menu: &PriceMenu) -> Result<Vec<Polyhedron>> {
    (0..=menu.len()).map(|j| ic_polyhedron(menu, j)).collect()
}

/// Checks that every probe lies in at least one of the menu's IC polyhedra
/// and in the interior of at most one of them.
pub fn partition_check(menu: &PriceMenu, probes: &[Vec<f64>]) -> bool {
    let regions = match menu_partition(menu) {
        Ok(r) => r,
        Err(_) => return probes.is_empty(),
    };
    probes.iter().all(|v| {
        if v.len() != regions[0].dim() {
            return false;
        }
        let covering = regions.iter().filter(|r| r.contains_point(v)).count();
        let interiors = regions.iter().filter(|r| r.interior_contains(v)).count();
        covering >= 1 && interiors <= 1
    })
}
