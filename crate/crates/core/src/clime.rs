//! CLIME precision-matrix estimation.
//!
//! For each column `i` the estimator solves
//!
//! ```text
//! minimize |β|_1  subject to  |Σ̃ β - e_i|_∞ <= λ1,      Σ̃ = Σ̂ + εI
//! ```
//!
//! and the column solutions are symmetrized by keeping, for every pair, the
//! entry of smaller magnitude. An optional hard threshold `ξ` can be applied
//! afterwards.
//!
//! Each column problem is a linear program solved exactly by a dual simplex
//! method. Along a λ path the optimal basis of the previous λ is reused, so
//! only the pivots needed to adjust the support are paid for. Columns are
//! independent and run in parallel; results do not depend on the worker
//! count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epsilon {
    /// `ε = n^{-1/2}`, resolved from the sample size.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimeConfig {
    pub lambda1: f64,
    pub epsilon: Epsilon,
    pub xi: Option<f64>,
    /// Primal feasibility tolerance of the simplex solver.
    pub solver_tol: f64,
    /// Pivot limit per column and λ.
    pub max_iter: usize,
}

impl ClimeConfig {
    pub fn new(lambda1: f64) -> Self {
        Self {
            lambda1,
            epsilon: Epsilon::Auto,
            xi: None,
            solver_tol: 1e-9,
            max_iter: 10_000,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Epsilon::Fixed(epsilon);
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = Some(xi);
        self
    }

    pub fn with_tolerance(mut self, solver_tol: f64, max_iter: usize) -> Self {
        self.solver_tol = solver_tol;
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) || !self.lambda1.is_finite() {
            return Err(Error::BadParam(format!("lambda1 = {} must be > 0", self.lambda1)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-3) {
            return Err(Error::BadParam(format!(
                "solver_tol = {} must lie in (0, 1e-3]",
                self.solver_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::BadParam("max_iter must be positive".into()));
        }
        if let Epsilon::Fixed(e) = self.epsilon {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::BadParam(format!("epsilon = {e} must be >= 0")));
            }
        }
        if let Some(xi) = self.xi {
            if !(xi >= 0.0) {
                return Err(Error::BadParam(format!("xi = {xi} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn resolve_epsilon(&self, n: Option<usize>) -> Result<f64> {
        match (self.epsilon, n) {
            (Epsilon::Fixed(e), _) => Ok(e),
            (Epsilon::Auto, Some(n)) if n > 0 => Ok(1.0 / (n as f64).sqrt()),
            (Epsilon::Auto, _) => Err(Error::BadParam(
                "epsilon = auto requires the sample size n".into(),
            )),
        }
    }
}

/// `Σ̂ + εI`.
pub fn perturb(s: &SymmetricMatrix, epsilon: f64) -> Result<SymmetricMatrix> {
    if !(epsilon >= 0.0) {
        return Err(Error::BadParam(format!("epsilon = {epsilon} must be >= 0")));
    }
    s.add_identity(epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    pub beta: Vec<f64>,
    /// `|Σ̃ β - e_i|_∞` at the returned point.
    pub constraint_max: f64,
    /// Simplex pivots spent on this solve.
    pub iterations: usize,
}

impl ColumnSolution {
    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|v| v.abs()).sum()
    }
}

/// Pivots between unconditional refactorizations of the basis inverse.
const REFACTOR_EVERY: usize = 1000;
/// Basis residual that triggers a refactorization at an optimum.
const DRIFT_TOL: f64 = 1e-9;
/// Smallest pivot magnitude accepted in the ratio test.
const PIVOT_TOL: f64 = 1e-9;

/// Column LP in standard form. Variables are `u` (`0..p`), `v` (`p..2p`),
/// `s` (`2p..3p`) and `t` (`3p..4p`) with `β = u - v`; rows `0..p` read
/// `Σ̃β + s = e_i + λ` and rows `p..2p` read `-Σ̃β + t = λ - e_i`. Only the
/// right-hand side depends on λ, so an optimal basis stays dual feasible
/// when λ changes and dual simplex pivots restore primal feasibility.
#[derive(Debug, Clone)]
struct ColumnLp<'a> {
    a: &'a DMatrix<f64>,
    col: usize,
    basis: Vec<usize>,
    /// Basis position of each variable, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    binv: DMatrix<f64>,
    /// Reduced costs.
    d: Vec<f64>,
    xb: DVector<f64>,
    since_refactor: usize,
}

impl<'a> ColumnLp<'a> {
    /// Slack basis, optimal for every λ ≥ 1.
    fn new(a: &'a DMatrix<f64>, col: usize) -> Self {
        let p = a.nrows();
        let m = 2 * p;
        let mut d = vec![0.0; 4 * p];
        d[..m].fill(1.0);
        Self {
            a,
            col,
            basis: (m..2 * m).collect(),
            pos: (0..2 * m).map(|j| if j < m { usize::MAX } else { j - m }).collect(),
            binv: DMatrix::identity(m, m),
            d,
            xb: DVector::zeros(m),
            since_refactor: 0,
        }
    }

    fn p(&self) -> usize {
        self.a.nrows()
    }

    fn cost(&self, j: usize) -> f64 {
        if j < 2 * self.p() {
            1.0
        } else {
            0.0
        }
    }

    fn rhs(&self, lambda1: f64) -> DVector<f64> {
        let p = self.p();
        DVector::from_fn(2 * p, |i, _| {
            let e = if i % p == self.col { 1.0 } else { 0.0 };
            if i < p {
                lambda1 + e
            } else {
                lambda1 - e
            }
        })
    }

    fn column(&self, j: usize) -> DVector<f64> {
        let p = self.p();
        let mut c = DVector::zeros(2 * p);
        match j / p {
            0 | 1 => {
                let sign = if j < p { 1.0 } else { -1.0 };
                let aj = self.a.column(j % p);
                for r in 0..p {
                    c[r] = sign * aj[r];
                    c[p + r] = -sign * aj[r];
                }
            }
            k => c[(k - 2) * p + j % p] = 1.0,
        }
        c
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> DVector<f64> {
        let p = self.p();
        let m = 2 * p;
        match j / p {
            0 | 1 => {
                let sign = if j < p { 1.0 } else { -1.0 };
                let aj = self.a.column(j % p);
                let bs = self.binv.as_slice();
                let mut out = vec![0.0; m];
                for c in 0..p {
                    let coef = sign * aj[c];
                    if coef == 0.0 {
                        continue;
                    }
                    let top = &bs[c * m..(c + 1) * m];
                    let bot = &bs[(p + c) * m..(p + c + 1) * m];
                    for ((o, t), b) in out.iter_mut().zip(top).zip(bot) {
                        *o += coef * (t - b);
                    }
                }
                DVector::from_vec(out)
            }
            k => self.binv.column((k - 2) * p + j % p).into_owned(),
        }
    }

    /// Row `r` of `B^{-1} [columns]` for every variable.
    fn pivot_row(&self, r: usize) -> Vec<f64> {
        let p = self.p();
        let m = 2 * p;
        let rho: Vec<f64> = (0..m).map(|k| self.binv[(r, k)]).collect();
        let diff: Vec<f64> = (0..p).map(|k| rho[k] - rho[p + k]).collect();
        let a = self.a.as_slice();
        let g: Vec<f64> = (0..p)
            .map(|c| a[c * p..(c + 1) * p].iter().zip(&diff).map(|(x, y)| x * y).sum())
            .collect();
        let mut out = Vec::with_capacity(4 * p);
        out.extend(g.iter().copied());
        out.extend(g.iter().map(|v| -v));
        out.extend(rho);
        out
    }

    /// `|B x_B - b(λ)|_∞`.
    fn basis_residual(&self, lambda1: f64) -> f64 {
        let mut r = -self.rhs(lambda1);
        for (k, &j) in self.basis.iter().enumerate() {
            r.axpy(self.xb[k], &self.column(j), 1.0);
        }
        r.amax()
    }

    fn refactor(&mut self, lambda1: f64) -> Result<()> {
        let m = 2 * self.p();
        let mut b = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            b.set_column(k, &self.column(j));
        }
        self.binv = b.lu().try_inverse().ok_or(Error::NotConverged {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
        let cb = DVector::from_fn(m, |k, _| self.cost(self.basis[k]));
        let y = self.binv.tr_mul(&cb);
        for j in 0..2 * m {
            self.d[j] = if self.pos[j] == usize::MAX {
                self.cost(j) - y.dot(&self.column(j))
            } else {
                0.0
            };
        }
        self.xb = &self.binv * self.rhs(lambda1);
        self.since_refactor = 0;
        Ok(())
    }

    /// Dual simplex pivots at level `lambda1`; returns the pivot count.
    fn solve(&mut self, lambda1: f64, tol: f64, max_pivots: usize) -> Result<usize> {
        self.xb = &self.binv * self.rhs(lambda1);
        let mut pivots = 0;
        loop {
            let (r, xr) = self
                .xb
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty basis");
            if xr >= -tol {
                if self.since_refactor > 0 && self.basis_residual(lambda1) > DRIFT_TOL {
                    self.refactor(lambda1)?;
                    continue;
                }
                return Ok(pivots);
            }
            if pivots >= max_pivots {
                return Err(Error::NotConverged {
                    iterations: pivots,
                    residual: -xr,
                });
            }
            let alpha = self.pivot_row(r);
            let scale = alpha.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut enter: Option<(usize, f64, f64)> = None;
            for (j, &aj) in alpha.iter().enumerate() {
                if self.pos[j] != usize::MAX || aj >= -PIVOT_TOL * scale {
                    continue;
                }
                let ratio = self.d[j].max(0.0) / -aj;
                let better = match enter {
                    None => true,
                    Some((_, best, amag)) => ratio < best - 1e-12 || (ratio <= best + 1e-12 && -aj > amag),
                };
                if better {
                    enter = Some((j, ratio, -aj));
                }
            }
            let Some((q, _, _)) = enter else {
                return Err(Error::Infeasible { lambda1 });
            };
            let colq = self.ftran(q);
            let piv = colq[r];
            let theta_p = xr / piv;
            self.xb.axpy(-theta_p, &colq, 1.0);
            self.xb[r] = theta_p;
            let theta_d = self.d[q] / alpha[q];
            for (j, &aj) in alpha.iter().enumerate() {
                if self.pos[j] == usize::MAX {
                    self.d[j] -= theta_d * aj;
                }
            }
            let leaving = self.basis[r];
            self.d[leaving] = -theta_d;
            self.d[q] = 0.0;
            let m = 2 * self.p();
            let colq = colq.as_slice();
            for colk in self.binv.as_mut_slice().chunks_exact_mut(m) {
                let brk = colk[r] / piv;
                if brk == 0.0 {
                    continue;
                }
                for (x, q) in colk.iter_mut().zip(colq) {
                    *x -= q * brk;
                }
                colk[r] = brk;
            }
            self.pos[leaving] = usize::MAX;
            self.pos[q] = r;
            self.basis[r] = q;
            pivots += 1;
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor(lambda1)?;
            }
        }
    }

    fn beta(&self) -> Vec<f64> {
        let p = self.p();
        let mut beta = vec![0.0; p];
        for (k, &j) in self.basis.iter().enumerate() {
            if j < p {
                beta[j] += self.xb[k].max(0.0);
            } else if j < 2 * p {
                beta[j - p] -= self.xb[k].max(0.0);
            }
        }
        beta
    }
}

/// Exact CLIME column solver for one `Σ̃`.
#[derive(Debug, Clone)]
pub struct ClimeSolver {
    a: DMatrix<f64>,
}

impl ClimeSolver {
    pub fn new(sigma_eps: &SymmetricMatrix) -> Self {
        Self {
            a: sigma_eps.as_matrix().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn constraint_max(&self, beta: &[f64], col: usize) -> f64 {
        let mut r = &self.a * DVector::from_column_slice(beta);
        r[col] -= 1.0;
        r.amax()
    }

    /// Solves column `col` at each λ in `order`, warm-starting every solve
    /// from the previous optimal basis.
    fn solve_sequence(&self, col: usize, lambdas: &[f64], order: &[usize], tol: f64, max_iter: usize) -> Vec<Result<ColumnSolution>> {
        let mut lp = ColumnLp::new(&self.a, col);
        let mut out: Vec<Option<Result<ColumnSolution>>> = vec![None; lambdas.len()];
        let mut broken: Option<Error> = None;
        for &li in order {
            let lambda1 = lambdas[li];
            if let Some(e) = &broken {
                out[li] = Some(Err(e.clone()));
                continue;
            }
            out[li] = Some(match lp.solve(lambda1, tol, max_iter) {
                Ok(iterations) => {
                    let beta = lp.beta();
                    Ok(ColumnSolution {
                        constraint_max: self.constraint_max(&beta, col),
                        beta,
                        iterations,
                    })
                }
                Err(e) => {
                    // smaller λ can only be harder once feasibility is lost
                    if matches!(e, Error::Infeasible { .. }) {
                        broken = Some(e.clone());
                    } else {
                        lp = ColumnLp::new(&self.a, col);
                    }
                    Err(e)
                }
            });
        }
        out.into_iter().map(|o| o.expect("every λ visited")).collect()
    }

    /// One column, cold start.
    pub fn solve_column(&self, col: usize, lambda1: f64, tol: f64, max_iter: usize) -> Result<ColumnSolution> {
        if col >= self.dim() {
            return Err(Error::BadInput(format!("column {col} out of range")));
        }
        self.solve_sequence(col, &[lambda1], &[0], tol, max_iter)
            .pop()
            .expect("one λ")
    }

    /// All columns along a path of λ values; each column traverses the path
    /// from the largest λ down. Results are indexed `[λ][column]` in the
    /// order of `lambdas`.
    fn solve_path(&self, lambdas: &[f64], tol: f64, max_iter: usize) -> Vec<Vec<Result<ColumnSolution>>> {
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&i, &j| lambdas[j].total_cmp(&lambdas[i]));
        let per_col: Vec<Vec<Result<ColumnSolution>>> = (0..self.dim())
            .into_par_iter()
            .map(|col| self.solve_sequence(col, lambdas, &order, tol, max_iter))
            .collect();
        (0..lambdas.len())
            .map(|li| per_col.iter().map(|c| c[li].clone()).collect())
            .collect()
    }
}

/// β̂ for column `i` of `Σ̃`. `lambda1` overrides `cfg.lambda1`.
pub fn clime_column(
    sigma_eps: &SymmetricMatrix,
    i: usize,
    lambda1: f64,
    cfg: &ClimeConfig,
) -> Result<ColumnSolution> {
    ClimeConfig { lambda1, ..*cfg }.validate()?;
    ClimeSolver::new(sigma_eps).solve_column(i, lambda1, cfg.solver_tol, cfg.max_iter)
}

/// Keeps, for each pair, the entry of smaller absolute value. `raw[(i, j)]`
/// is entry `i` of the column-`j` solution; on ties the upper-triangle entry
/// (`i < j`) wins.
pub fn symmetrize_min_abs(raw: &DMatrix<f64>) -> SymmetricMatrix {
    let p = raw.nrows();
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            let a = raw[(i, j)];
            let b = raw[(j, i)];
            m[(i, j)] = if a.abs() <= b.abs() { a } else { b };
        }
    }
    SymmetricMatrix::from_upper(m)
}

/// `ω̃_ij = ω̂_ij 1(|ω̂_ij| > ξ)`.
pub fn clime_hard_threshold(omega: &SymmetricMatrix, xi: f64) -> Result<SymmetricMatrix> {
    if !(xi >= 0.0) {
        return Err(Error::BadParam(format!("xi = {xi} must be >= 0")));
    }
    omega.map_entries(|_, _, v| if v.abs() > xi { v } else { 0.0 })
}

#[derive(Debug, Clone)]
pub struct ClimeFit {
    /// Symmetrized (and, when `xi` is set, thresholded) estimate.
    pub omega: SymmetricMatrix,
    /// Column solutions before symmetrization.
    pub raw: DMatrix<f64>,
    pub lambda1: f64,
    pub epsilon: f64,
    /// `|Σ̃ Ω̂* - I|_∞`
    pub max_residual: f64,
    pub iterations_per_column: Vec<usize>,
}

fn assemble(
    sols: Vec<Result<ColumnSolution>>,
    lambda1: f64,
    epsilon: f64,
    xi: Option<f64>,
) -> Result<ClimeFit> {
    let p = sols.len();
    let mut raw = DMatrix::zeros(p, p);
    let mut iters = Vec::with_capacity(p);
    let mut max_residual = 0.0f64;
    for (j, sol) in sols.into_iter().enumerate() {
        let sol = sol.map_err(|e| Error::Column {
            index: j,
            source: Box::new(e),
        })?;
        for (i, v) in sol.beta.iter().enumerate() {
            raw[(i, j)] = *v;
        }
        max_residual = max_residual.max(sol.constraint_max);
        iters.push(sol.iterations);
    }
    let mut omega = symmetrize_min_abs(&raw);
    if let Some(xi) = xi {
        omega = clime_hard_threshold(&omega, xi)?;
    }
    Ok(ClimeFit {
        omega,
        raw,
        lambda1,
        epsilon,
        max_residual,
        iterations_per_column: iters,
    })
}

/// CLIME estimate from a covariance estimate `s` computed on `n` samples
/// (`n` is only needed when `cfg.epsilon` is `Auto`).
pub fn clime_estimate(s: &SymmetricMatrix, n: Option<usize>, cfg: &ClimeConfig) -> Result<ClimeFit> {
    clime_path(s, n, &[cfg.lambda1], cfg)?
        .pop()
        .expect("one lambda")
}

/// CLIME estimates for several λ1 values sharing one factorization and
/// warm starts. `cfg.lambda1` is ignored.
pub fn clime_path(
    s: &SymmetricMatrix,
    n: Option<usize>,
    lambdas: &[f64],
    cfg: &ClimeConfig,
) -> Result<Vec<Result<ClimeFit>>> {
    for &l in lambdas {
        ClimeConfig { lambda1: l, ..*cfg }.validate()?;
    }
    let epsilon = cfg.resolve_epsilon(n)?;
    let solver = ClimeSolver::new(&perturb(s, epsilon)?);
    let results = solver.solve_path(lambdas, cfg.solver_tol, cfg.max_iter);
    Ok(results
        .into_iter()
        .zip(lambdas)
        .map(|(sols, &l)| assemble(sols, l, epsilon, cfg.xi))
        .collect())
}
