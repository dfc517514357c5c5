#![allow(dead_code)]

pub mod lp;

use nalgebra::DMatrix;
use pddcov::SymmetricMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `B B^T / p + ridge I` for a Gaussian `p x p` matrix `B`.
pub fn random_spd(p: usize, ridge: f64, seed: u64) -> SymmetricMatrix {
    let mut r = rng(seed);
    let b: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut r));
    let m: DMatrix<f64> = &b * b.transpose() / p as f64 + DMatrix::<f64>::identity(p, p) * ridge;
    SymmetricMatrix::from_dense((&m + m.transpose()) * 0.5).unwrap()
}

/// Sample correlation of `n` i.i.d. Gaussian draws in dimension `p`,
/// mixed so the off-diagonals are not all small.
pub fn random_correlation(p: usize, n: usize, seed: u64) -> SymmetricMatrix {
    let mut r = rng(seed);
    let z: DMatrix<f64> = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut r));
    let mix: DMatrix<f64> = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.3 / (1.0 + (i as f64 - j as f64).abs()) });
    let x = mix * z;
    let panel = pddcov::TimeSeriesPanel::new(x).unwrap();
    pddcov::moments::sample_correlation(&panel).unwrap()
}

pub fn to_rows(m: &SymmetricMatrix) -> Vec<Vec<f64>> {
    m.rows()
}

/// Proximal gradient with backtracking on the 2x2 objective
/// `a + c + 2bρ - log(ac - b²) + 2λ|b|`.
pub fn prox_gradient_2x2(rho: f64, lambda: f64) -> (f64, f64, f64) {
    let f = |a: f64, b: f64, c: f64| {
        let det = a * c - b * b;
        if a <= 0.0 || det <= 0.0 {
            f64::INFINITY
        } else {
            a + c + 2.0 * b * rho - det.ln()
        }
    };
    let (mut a, mut b, mut c) = (1.0, 0.0, 1.0);
    let mut step = 1.0;
    for _ in 0..200_000 {
        let det = a * c - b * b;
        let (ga, gb, gc) = (1.0 - c / det, 2.0 * rho + 2.0 * b / det, 1.0 - a / det);
        let f0 = f(a, b, c);
        loop {
            let na = a - step * ga;
            let nc = c - step * gc;
            let zb = b - step * gb;
            let t = step * 2.0 * lambda;
            let nb = zb.signum() * (zb.abs() - t).max(0.0);
            let (da, db, dc) = (na - a, nb - b, nc - c);
            let quad = f0 + ga * da + gb * db + gc * dc + (da * da + db * db + dc * dc) / (2.0 * step);
            if f(na, nb, nc) <= quad {
                let moved = da.abs().max(db.abs()).max(dc.abs());
                a = na;
                b = nb;
                c = nc;
                step *= 1.5;
                if moved < 1e-14 {
                    return (a, b, c);
                }
                break;
            }
            step *= 0.5;
        }
    }
    (a, b, c)
}

/// Largest violation of the stationarity conditions of the penalized
/// likelihood at `k`, computed from an explicit inverse.
pub fn kkt_residual(r: &SymmetricMatrix, k: &SymmetricMatrix, lambda: f64) -> f64 {
    let w = k.inverse().unwrap();
    let p = r.dim();
    let mut worst = 0.0f64;
    for i in 0..p {
        worst = worst.max((w.get(i, i) - r.get(i, i)).abs());
        for j in 0..p {
            if i == j {
                continue;
            }
            let g = r.get(i, j) - w.get(i, j);
            let kij = k.get(i, j);
            let v = if kij != 0.0 {
                (g + lambda * kij.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}
