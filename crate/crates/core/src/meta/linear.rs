//! Ridge-regularised linear and logistic regression on standardised features.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use super::Task;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { l2: 1e-4, tolerance: 1e-8, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub task: Task,
    pub means: Vec<f64>,
    /// Standard deviation per feature; 1 for constant columns.
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        let mut m = self.bias;
        for k in 0..self.weights.len() {
            m += self.weights[k] * (row[k] - self.means[k]) / self.scales[k];
        }
        m
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let m = self.margin(row);
        match self.task {
            Task::Classify => sigmoid(m),
            Task::Regress => m.clamp(0.0, 1.0),
        }
    }
}

fn standardise(x: &[f64], n_rows: usize, n_features: usize) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let mut means = vec![0.0; n_features];
    let mut scales = vec![0.0; n_features];
    for f in 0..n_features {
        let mean = (0..n_rows).map(|r| x[r * n_features + f]).sum::<f64>() / n_rows as f64;
        let var = (0..n_rows).map(|r| (x[r * n_features + f] - mean).powi(2)).sum::<f64>() / n_rows as f64;
        means[f] = mean;
        scales[f] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z = DMatrix::from_fn(n_rows, n_features, |r, f| (x[r * n_features + f] - means[f]) / scales[f]);
    (means, scales, z)
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    match a.clone().cholesky() {
        Some(c) => c.solve(&b),
        None => a.lu().solve(&b).unwrap_or_else(|| DVector::zeros(b.len())),
    }
}

pub fn fit(x: &[f64], n_features: usize, y: &[f64], task: Task, params: &LinearParams) -> LinearModel {
    let n_rows = y.len();
    let (means, scales, z) = standardise(x, n_rows, n_features);
    let (weights, bias) = match task {
        Task::Regress => {
            let ybar = y.iter().sum::<f64>() / n_rows as f64;
            let yc = DVector::from_iterator(n_rows, y.iter().map(|v| v - ybar));
            let mut a = z.transpose() * &z;
            for k in 0..n_features {
                a[(k, k)] += params.l2 * n_rows as f64;
            }
            let w = solve(a, z.transpose() * yc);
            (w.iter().copied().collect(), ybar)
        }
        Task::Classify => {
            // Newton–Raphson on the penalised log-likelihood; column 0 is the bias
            let d = n_features + 1;
            let zb = DMatrix::from_fn(n_rows, d, |r, c| if c == 0 { 1.0 } else { z[(r, c - 1)] });
            let mut beta = DVector::zeros(d);
            for _ in 0..params.max_iter {
                let margins = &zb * &beta;
                let p: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
                let resid = DVector::from_iterator(n_rows, p.iter().zip(y).map(|(p, y)| p - y));
                let mut g = zb.transpose() * resid;
                let mut weighted = zb.clone();
                for (r, mut row) in weighted.row_iter_mut().enumerate() {
                    row *= (p[r] * (1.0 - p[r])).max(1e-12).sqrt();
                }
                let mut hmat = weighted.transpose() * &weighted;
                for c in 1..d {
                    g[c] += params.l2 * n_rows as f64 * beta[c];
                    hmat[(c, c)] += params.l2 * n_rows as f64;
                }
                let step = solve(hmat, g);
                beta -= &step;
                if step.amax() < params.tolerance {
                    break;
                }
            }
            (beta.iter().skip(1).copied().collect(), beta[0])
        }
    };
    LinearModel { task, means, scales, weights, bias }
}
