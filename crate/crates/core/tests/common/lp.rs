//! Dense two-phase simplex (Bland's rule) for small LPs:
//! minimize c^T x subject to A x <= b, x >= 0.

const EPS: f64 = 1e-11;

struct Tableau {
    /// rows: constraints, last column is the rhs
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost . x` over the current basis, entering only columns
    /// with `allowed[j]`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        let ncols = cost.len();
        loop {
            // reduced costs
            let mut entering = None;
            for j in 0..ncols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for (i, row) in self.rows.iter().enumerate() {
                    rc -= cost[self.basis[i]] * row[j];
                }
                if rc < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[ncols] / row[c];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS
                                || ((ratio - lr).abs() <= EPS && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
    }
}

/// Returns `(objective, x)` or `None` if infeasible or unbounded.
pub fn solve_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let m = a.len();
    let n = c.len();
    // columns: x (n) | slack (m) | artificial (m) | rhs
    let ncols = n + 2 * m;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; ncols + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[n + m + i] = 1.0;
        row[ncols] = sign * b[i];
        rows.push(row);
        basis.push(n + m + i);
    }
    let mut t = Tableau { rows, basis };

    let mut phase1 = vec![0.0; ncols];
    for v in phase1.iter_mut().skip(n + m) {
        *v = 1.0;
    }
    let all = vec![true; ncols];
    t.optimize(&phase1, &all);
    let infeas: f64 = t
        .basis
        .iter()
        .zip(&t.rows)
        .filter(|(bv, _)| **bv >= n + m)
        .map(|(_, row)| row[ncols])
        .sum();
    if infeas > 1e-8 {
        return None;
    }
    // drive remaining artificials out of the basis
    for r in 0..m {
        if t.basis[r] >= n + m {
            if let Some(c) = (0..n + m).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(r, c);
            }
        }
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(c);
    let mut allowed = vec![true; ncols];
    for v in allowed.iter_mut().skip(n + m) {
        *v = false;
    }
    if !t.optimize(&cost, &allowed) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (r, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rows[r][ncols];
        }
    }
    let obj = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Some((obj, x))
}

/// CLIME column problem as an LP in split variables `β = β⁺ - β⁻`:
/// minimize 1^T(β⁺ + β⁻) s.t. ±(A(β⁺ - β⁻) - e_i) <= λ.
pub fn clime_column_lp(a: &[Vec<f64>], col: usize, lambda: f64) -> Option<(f64, Vec<f64>)> {
    let p = a.len();
    let c = vec![1.0; 2 * p];
    let mut rows = Vec::with_capacity(2 * p);
    let mut rhs = Vec::with_capacity(2 * p);
    for k in 0..p {
        let e = if k == col { 1.0 } else { 0.0 };
        let mut up = vec![0.0; 2 * p];
        let mut lo = vec![0.0; 2 * p];
        for j in 0..p {
            up[j] = a[k][j];
            up[p + j] = -a[k][j];
            lo[j] = -a[k][j];
            lo[p + j] = a[k][j];
        }
        rows.push(up);
        rhs.push(lambda + e);
        rows.push(lo);
        rhs.push(lambda - e);
    }
    let (obj, x) = solve_lp(&c, &rows, &rhs)?;
    let beta = (0..p).map(|j| x[j] - x[p + j]).collect();
    Some((obj, beta))
}
