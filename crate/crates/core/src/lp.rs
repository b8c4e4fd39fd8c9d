//! Small dense linear programs: `maximize c·x subject to A x ≤ b` with free
//! variables, solved by a two-phase tableau simplex using Bland's rule.
//!
//! Sized for IC polyhedra (a handful of variables, tens of constraints).

use alloc::vec;
use alloc::vec::Vec;

use crate::math::abs;

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `(rows + 1) × (cols + 1)`, last row is the reduced-cost row, last
    /// column the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for j in 0..w {
            self.t[pr * w + j] /= p;
        }
        for i in 0..=self.rows {
            if i == pr {
                continue;
            }
            let f = self.t[i * w + pc];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[pr * w + j];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimizes the objective row over columns `< allowed`. Returns false
    /// when unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        loop {
            let entering = (0..allowed).find(|&j| self.at(self.rows, j) < -EPS);
            let Some(pc) = entering else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return false,
            }
        }
    }
}

/// Solves `max c·x s.t. a[k]·x ≤ b[k]` over free `x`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    debug_assert_eq!(m, b.len());
    if m == 0 {
        return if c.iter().all(|&x| x == 0.0) {
            LpOutcome::Optimal {
                x: vec![0.0; n],
                value: 0.0,
            }
        } else {
            LpOutcome::Unbounded
        };
    }
    // Columns: x⁺ (n), x⁻ (n), slack (m), artificial (m).
    let real = 2 * n + m;
    let cols = real + m;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign * row[j];
            t[i * w + n + j] = -sign * row[j];
        }
        t[i * w + 2 * n + i] = sign;
        t[i * w + real + i] = 1.0;
        t[i * w + cols] = sign * bi;
    }
    // Phase 1 reduced costs: minimize the sum of artificials.
    for j in 0..real {
        let s: f64 = (0..m).map(|i| t[i * w + j]).sum();
        t[m * w + j] = -s;
    }
    let s: f64 = (0..m).map(|i| t[i * w + cols]).sum();
    t[m * w + cols] = -s;
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (real..cols).collect(),
    };
    tab.run(real);
    let infeasibility = -tab.at(m, cols);
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, x| acc.max(abs(*x)));
    if infeasibility > 1e-8 * scale {
        return LpOutcome::Infeasible;
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..m {
        if tab.basis[i] >= real {
            if let Some(j) = (0..real).find(|&j| abs(tab.at(i, j)) > EPS) {
                tab.pivot(i, j);
            }
        }
    }
    // Phase 2: minimize −c·x.
    let cost = |j: usize| -> f64 {
        if j < n {
            -c[j]
        } else if j < 2 * n {
            c[j - n]
        } else {
            0.0
        }
    };
    for j in 0..=cols {
        let base = if j < cols { cost(j) } else { 0.0 };
        let mut d = base;
        for i in 0..m {
            let cb = if tab.basis[i] < real { cost(tab.basis[i]) } else { 0.0 };
            d -= cb * tab.at(i, j);
        }
        tab.t[m * w + j] = d;
    }
    if !tab.run(real) {
        return LpOutcome::Unbounded;
    }
    let mut y = vec![0.0; cols];
    for i in 0..m {
        y[tab.basis[i]] = tab.rhs(i);
    }
    let x: Vec<f64> = (0..n).map(|j| y[j] - y[n + j]).collect();
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}
