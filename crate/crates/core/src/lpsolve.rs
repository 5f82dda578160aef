//! Dense two-phase simplex for `min cᵀp  s.t.  A p ≥ b, p ≥ 0`.
//!
//! Each row gets a surplus variable and an artificial variable; rows with a
//! negative right-hand side are negated first so the artificial basis is
//! feasible. Entering and leaving variables follow Bland's rule. After the
//! final pivot the basic solution and the duals are recomputed from an LU
//! solve with the original data, which removes most of the rounding that
//! accumulates in the tableau.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Matrix;

const PIVOT_TOL: f64 = 1e-9;
const TINY_PIVOT: f64 = 1e-12;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl LpProblem {
    pub fn new(c: Vec<f64>, a: Matrix, b: Vec<f64>) -> Result<Self> {
        if c.is_empty() || b.is_empty() {
            return Err(Error::dim("LP needs at least one variable and one row"));
        }
        if a.nrows() != b.len() || a.ncols() != c.len() {
            return Err(Error::dim(format!(
                "LP matrix is {}x{} but c has {} and b has {} entries",
                a.nrows(),
                a.ncols(),
                c.len(),
                b.len()
            )));
        }
        if !(c.iter().chain(b.iter()).chain(a.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFinite("LP data"));
        }
        Ok(Self { c, a, b })
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }
    pub fn vars(&self) -> usize {
        self.c.len()
    }

    /// Largest violation of `A p ≥ b` and `p ≥ 0` at `p`.
    pub fn max_violation(&self, p: &[f64]) -> f64 {
        let ap = &self.a * DVector::from_column_slice(p);
        let rows = (0..self.rows()).map(|i| self.b[i] - ap[i]);
        let bounds = p.iter().map(|v| -v);
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub solution: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Dual multipliers `y ≥ 0` of the rows, with `Aᵀy ≤ c` (optimal case).
    pub duals: Option<Vec<f64>>,
    /// Row weights `y ≥ 0` with `Aᵀy ≤ 0` and `bᵀy > 0` (infeasible case).
    pub farkas: Option<Vec<f64>>,
}

impl LpOutcome {
    fn status_only(status: LpStatus) -> Self {
        Self {
            status,
            solution: None,
            objective: None,
            duals: None,
            farkas: None,
        }
    }
}

/// Column layout: `n` structural, `m` surplus, `m` artificial, then the rhs.
struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    t: Vec<f64>,
    /// Reduced-cost row (last entry holds minus the objective).
    cost: Vec<f64>,
    basis: Vec<usize>,
    sign: Vec<f64>,
}

impl Tableau {
    fn new(p: &LpProblem) -> Self {
        let (m, n) = (p.rows(), p.vars());
        let width = n + 2 * m + 1;
        let mut t = vec![0.0; m * width];
        let sign: Vec<f64> = p.b.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        for i in 0..m {
            let row = &mut t[i * width..(i + 1) * width];
            for (j, v) in row[..n].iter_mut().enumerate() {
                *v = sign[i] * p.a[(i, j)];
            }
            row[n + i] = -sign[i];
            row[n + m + i] = 1.0;
            row[width - 1] = sign[i] * p.b[i];
        }
        Self {
            m,
            n,
            width,
            t,
            cost: vec![0.0; width],
            basis: (0..m).map(|i| n + m + i).collect(),
            sign,
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.m && j < self.width - 1
    }

    /// Loads reduced costs `c_j - c_Bᵀ B⁻¹ a_j` for the given cost vector.
    fn load_costs(&mut self, costs: &[f64]) {
        self.cost[..costs.len()].copy_from_slice(costs);
        self.cost[costs.len()..].iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.m {
            let cb = self.cost_of(costs, self.basis[r]);
            if cb != 0.0 {
                for j in 0..self.width {
                    self.cost[j] -= cb * self.t[r * self.width + j];
                }
            }
        }
    }

    fn cost_of(&self, costs: &[f64], j: usize) -> f64 {
        costs.get(j).copied().unwrap_or(0.0)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        self.t[r * w + c] = 1.0;
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for (v, &pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * w + c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, &pr) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule iterations over the allowed columns. Returns `false`
    /// when the objective is unbounded below.
    fn optimise(&mut self, allow_artificial: bool) -> Result<bool> {
        let limit = 1000 * (self.width + self.m);
        for _ in 0..limit {
            let entering = (0..self.width - 1).find(|&j| {
                (allow_artificial || !self.is_artificial(j)) && self.cost[j] < -COST_TOL
            });
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            let mut saw_tiny = false;
            for r in 0..self.m {
                let a = self.at(r, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                            if ratio < bratio && !tie
                                || tie && self.basis[r] < self.basis[br]
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                } else if a > TINY_PIVOT {
                    saw_tiny = true;
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None if saw_tiny => {
                    return Err(Error::DegeneratePivot(format!(
                        "column {c} has only pivots below {PIVOT_TOL:e}"
                    )))
                }
                None => return Ok(false),
            }
        }
        Err(Error::NoConvergence("simplex iteration limit reached".into()))
    }

    /// Full-width column `j` of the sign-adjusted constraint matrix.
    fn original_column(&self, p: &LpProblem, j: usize) -> DVector<f64> {
        let (m, n) = (self.m, self.n);
        DVector::from_fn(m, |i, _| {
            if j < n {
                self.sign[i] * p.a[(i, j)]
            } else if j < n + m {
                if j - n == i {
                    -self.sign[i]
                } else {
                    0.0
                }
            } else if j - n - m == i {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Solves the LP; see the module notes for the method.
pub fn solve(p: &LpProblem) -> Result<LpOutcome> {
    let mut tab = Tableau::new(p);
    let (m, n) = (tab.m, tab.n);

    let mut phase1 = vec![0.0; n + 2 * m];
    phase1[n + m..].iter_mut().for_each(|v| *v = 1.0);
    tab.load_costs(&phase1);
    tab.optimise(true)?;

    let infeasibility = -tab.cost[tab.width - 1];
    let b_scale = 1.0 + p.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeasibility > 1e-9 * b_scale {
        let farkas = (0..m).map(|i| tab.cost[n + i].max(0.0)).collect();
        return Ok(LpOutcome {
            farkas: Some(farkas),
            ..LpOutcome::status_only(LpStatus::Infeasible)
        });
    }

    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if tab.is_artificial(tab.basis[r]) {
            if let Some(c) = (0..n + m).find(|&j| tab.at(r, j).abs() > PIVOT_TOL) {
                tab.pivot(r, c);
            }
        }
    }

    let mut phase2 = p.c.clone();
    phase2.resize(n + 2 * m, 0.0);
    tab.load_costs(&phase2);
    if !tab.optimise(false)? {
        return Ok(LpOutcome::status_only(LpStatus::Unbounded));
    }

    let (x, duals) = polish(p, &tab, &phase2)?;
    let objective = p.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        solution: Some(x),
        objective: Some(objective),
        duals: Some(duals),
        farkas: None,
    })
}

/// Recomputes the basic solution and the duals from the final basis.
fn polish(p: &LpProblem, tab: &Tableau, costs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = tab.m;
    let n = tab.n;
    let mut basis_matrix = DMatrix::zeros(m, m);
    for (r, &j) in tab.basis.iter().enumerate() {
        basis_matrix.set_column(r, &tab.original_column(p, j));
    }
    let rhs = DVector::from_fn(m, |i, _| tab.sign[i] * p.b[i]);
    let c_b = DVector::from_fn(m, |r, _| costs[tab.basis[r]]);
    let lu = basis_matrix.clone().lu();
    let tableau_x = || {
        let mut x = vec![0.0; n];
        for (r, &j) in tab.basis.iter().enumerate() {
            if j < n {
                x[j] = tab.rhs(r).max(0.0);
            }
        }
        x
    };
    let full = lu.solve(&rhs).filter(|xb| xb.iter().all(|v| v.is_finite())).map(|xb| {
        let mut x = vec![0.0; n];
        for (r, &j) in tab.basis.iter().enumerate() {
            if j < n {
                x[j] = xb[r].max(0.0);
            }
        }
        x
    });
    // Candidates: tableau values, the full basis solve, and a solve over the
    // tight rows only. The last avoids mixing in slack values of rows with
    // large right-hand sides, which costs digits in the small components.
    let mut x = tableau_x();
    for cand in [full, tight_solve(p, tab)].into_iter().flatten() {
        if p.max_violation(&cand) <= p.max_violation(&x) {
            x = cand;
        }
    }
    let duals = match basis_matrix.transpose().lu().solve(&c_b) {
        Some(u) if u.iter().all(|v| v.is_finite()) => {
            (0..m).map(|i| (tab.sign[i] * u[i]).max(0.0)).collect()
        }
        _ => (0..m).map(|i| tab.cost[n + i].max(0.0)).collect(),
    };
    Ok((x, duals))
}

/// Basic structural values from the rows whose surplus is nonbasic, when
/// those rows determine them uniquely.
fn tight_solve(p: &LpProblem, tab: &Tableau) -> Option<Vec<f64>> {
    let (m, n) = (tab.m, tab.n);
    if tab.basis.iter().any(|&j| tab.is_artificial(j)) {
        return None;
    }
    let structural: Vec<usize> = tab.basis.iter().copied().filter(|&j| j < n).collect();
    let tight: Vec<usize> = (0..m).filter(|&i| !tab.basis.contains(&(n + i))).collect();
    if tight.len() != structural.len() {
        return None;
    }
    if structural.is_empty() {
        return Some(vec![0.0; n]);
    }
    let k = structural.len();
    let a = DMatrix::from_fn(k, k, |r, c| p.a[(tight[r], structural[c])]);
    let b = DVector::from_fn(k, |r, _| p.b[tight[r]]);
    let xs = a.lu().solve(&b)?;
    if !xs.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (c, &j) in structural.iter().enumerate() {
        x[j] = xs[c].max(0.0);
    }
    Some(x)
}
