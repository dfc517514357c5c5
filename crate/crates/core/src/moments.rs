//! Sample moments of a multivariate time series with unknown mean.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// `p x n` panel of observations; column `t` is the observation at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    data: DMatrix<f64>,
}

impl TimeSeriesPanel {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::DegenerateInput("panel has no variables".into()));
        }
        if data.ncols() < 2 {
            return Err(Error::DegenerateInput(format!(
                "panel needs n >= 2 observations, got {}",
                data.ncols()
            )));
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                if !data[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { data })
    }

    /// One inner vector per variable (row), each of length `n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::BadInput("ragged panel rows".into()));
        }
        Self::new(DMatrix::from_fn(p, n, |i, t| rows[i][t]))
    }

    pub fn p(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.p()).map(|i| self.series(i)).collect()
    }

    /// Sub-panel built from the given time indices, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n()) {
            return Err(Error::BadInput(format!(
                "column {bad} out of range for n = {}",
                self.n()
            )));
        }
        Self::new(self.data.select_columns(cols))
    }

    /// Index of the first variable with (numerically) zero variance.
    pub fn first_constant_series(&self) -> Option<usize> {
        (0..self.p()).find(|&i| {
            let row = self.data.row(i);
            let first = row[0];
            row.iter().all(|&v| v == first)
        })
    }
}

/// `(1/n) Σ_t (X_t - X̄)(X_t - X̄)^T`, which equals `(1/n) Σ_t X_t X_t^T - X̄ X̄^T`.
pub fn sample_covariance(x: &TimeSeriesPanel) -> Result<SymmetricMatrix> {
    let n = x.n();
    if n < 2 {
        return Err(Error::DegenerateInput("sample covariance needs n >= 2".into()));
    }
    let mean: DVector<f64> = x.data.column_mean();
    let mut centered = x.data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut gram = &centered * centered.transpose() / n as f64;
    // exact zeros for constant series, which rounding in the mean would miss
    for i in 0..x.p() {
        let row = x.data.row(i);
        if row.iter().all(|&v| v == row[0]) {
            gram.row_mut(i).fill(0.0);
            gram.column_mut(i).fill(0.0);
        }
    }
    Ok(SymmetricMatrix::from_upper(gram))
}

/// Rescales a covariance matrix to unit diagonal.
pub fn correlation_from_covariance(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let diag = s.diagonal();
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroVariance(i));
    }
    let sd: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    s.map_entries(|i, j, v| if i == j { 1.0 } else { v / (sd[i] * sd[j]) })
}

pub fn sample_correlation(x: &TimeSeriesPanel) -> Result<SymmetricMatrix> {
    if let Some(i) = x.first_constant_series() {
        return Err(Error::ZeroVariance(i));
    }
    correlation_from_covariance(&sample_covariance(x)?)
}

/// Biased (divisor `n`) sample autocorrelations `ρ̂(0..=max_lag)`.
pub fn sample_autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag < 1 || max_lag + 1 > n {
        return Err(Error::BadLag { lag: max_lag, n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let gamma0: f64 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(gamma0 > 0.0) || series.iter().all(|&v| v == series[0]) {
        return Err(Error::ZeroVariance(0));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for lag in 1..=max_lag {
        let g: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        out.push(g / gamma0);
    }
    Ok(out)
}
