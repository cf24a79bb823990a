//! Gram (example-by-example similarity) matrices and the centering transform.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reprdata::ActivationMatrix;

/// RBF bandwidth fractions used for the standard RBF CKA variants.
pub const RBF_BANDWIDTH_PRESETS: [f64; 3] = [0.2, 0.4, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `sigma = bandwidth_fraction * median pairwise distance`.
    Rbf { bandwidth_fraction: f64 },
}

impl KernelSpec {
    pub fn rbf(bandwidth_fraction: f64) -> Result<Self> {
        if !(bandwidth_fraction.is_finite() && bandwidth_fraction > 0.0) {
            return Err(Error::validation(format!(
                "RBF bandwidth fraction must be positive and finite, got {bandwidth_fraction}"
            )));
        }
        Ok(KernelSpec::Rbf { bandwidth_fraction })
    }

    pub fn gram(&self, x: &ActivationMatrix) -> Result<GramMatrix> {
        match *self {
            KernelSpec::Linear => Ok(gram_linear(x)),
            KernelSpec::Rbf { bandwidth_fraction } => gram_rbf(x, bandwidth_fraction),
        }
    }
}

/// Symmetric `n x n` kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    centered: bool,
}

impl GramMatrix {
    /// Wraps a square, symmetric matrix (relative asymmetry at most 1e-12).
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::validation(format!(
                "Gram matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("Gram matrix has non-finite entries"));
        }
        let scale = values.amax().max(f64::MIN_POSITIVE);
        let asym = (&values - values.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::validation(format!(
                "Gram matrix not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self {
            values,
            centered: false,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }
}

/// `K = X X^T`.
pub fn gram_linear(x: &ActivationMatrix) -> GramMatrix {
    let xd = x.data();
    GramMatrix {
        values: xd * xd.transpose(),
        centered: x.is_centered(),
    }
}

fn squared_distances(x: &ActivationMatrix) -> DMatrix<f64> {
    let n = x.n();
    let xd = x.data();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = xd
                .row(i)
                .iter()
                .zip(xd.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }
    d2
}

fn median_of_upper(d2: &DMatrix<f64>) -> Result<f64> {
    let n = d2.nrows();
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(d2[(i, j)].sqrt());
        }
    }
    if dists.iter().all(|&d| d == 0.0) {
        return Err(Error::degenerate(
            "all pairwise distances are zero; RBF bandwidth undefined",
        ));
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    Ok(if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    })
}

/// Median Euclidean distance over the `n(n-1)/2` distinct example pairs.
pub fn median_pairwise_distance(x: &ActivationMatrix) -> Result<f64> {
    median_of_upper(&squared_distances(x))
}

/// `K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2))` with `sigma` a fraction of the median distance.
pub fn gram_rbf(x: &ActivationMatrix, bandwidth_fraction: f64) -> Result<GramMatrix> {
    KernelSpec::rbf(bandwidth_fraction)?;
    let d2 = squared_distances(x);
    let sigma = bandwidth_fraction * median_of_upper(&d2)?;
    let denom = 2.0 * sigma * sigma;
    Ok(GramMatrix {
        values: d2.map(|v| (-v / denom).exp()),
        centered: false,
    })
}

/// `H K H` with `H = I - 11^T / n`, via row, column and grand mean subtraction.
pub fn center_gram(k: &GramMatrix) -> GramMatrix {
    let n = k.n();
    let nf = n as f64;
    let v = &k.values;
    let row_means: Vec<f64> = (0..n).map(|i| v.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| v.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let values = DMatrix::from_fn(n, n, |i, j| v[(i, j)] - row_means[i] - col_means[j] + grand);
    GramMatrix {
        values,
        centered: true,
    }
}
