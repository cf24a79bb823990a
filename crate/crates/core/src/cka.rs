//! HSIC and centered kernel alignment (CKA).
//!
//! Gram-space forms work on any pair of kernels; the feature-space linear
//! forms avoid the `n x n` products when features are fewer than examples.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{center_gram, gram_linear, GramMatrix, KernelSpec};
use crate::linalg::frobenius_sq;
use crate::reprdata::{center_columns, check_same_n, require_centered, ActivationMatrix, Spectrum};

/// A similarity value tagged with the index that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityScore {
    pub value: f64,
    /// Value before clamping of tiny negative round-off (equal to `value` otherwise).
    pub raw_value: f64,
    pub index_name: String,
    /// Whether the index is bounded to [0, 1].
    pub normalized: bool,
}

/// Normalized values in `[-NEG_CLAMP_TOL, 0)` are reported as exactly 0.
pub const NEG_CLAMP_TOL: f64 = 1e-8;

impl SimilarityScore {
    pub fn normalized(index_name: &str, raw: f64) -> Self {
        let value = if (-NEG_CLAMP_TOL..0.0).contains(&raw) {
            0.0
        } else {
            raw
        };
        Self {
            value,
            raw_value: raw,
            index_name: index_name.to_string(),
            normalized: true,
        }
    }

    pub fn unnormalized(index_name: &str, value: f64) -> Self {
        Self {
            value,
            raw_value: value,
            index_name: index_name.to_string(),
            normalized: false,
        }
    }
}

fn check_gram_pair(k: &GramMatrix, l: &GramMatrix) -> Result<()> {
    if k.n() != l.n() {
        return Err(Error::ExampleCountMismatch {
            left: k.n(),
            right: l.n(),
        });
    }
    if k.n() < 2 {
        return Err(Error::validation("HSIC needs at least 2 examples"));
    }
    Ok(())
}

fn centered(k: &GramMatrix) -> GramMatrix {
    if k.is_centered() {
        k.clone()
    } else {
        center_gram(k)
    }
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Biased empirical HSIC, `tr(K H L H) / (n - 1)^2`.
pub fn hsic(k: &GramMatrix, l: &GramMatrix) -> Result<SimilarityScore> {
    check_gram_pair(k, l)?;
    let nm1 = (k.n() - 1) as f64;
    let v = frob_dot(centered(k).values(), centered(l).values()) / (nm1 * nm1);
    Ok(SimilarityScore::unnormalized("hsic", v))
}

/// `HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L))`.
pub fn cka(k: &GramMatrix, l: &GramMatrix) -> Result<SimilarityScore> {
    check_gram_pair(k, l)?;
    let kc = centered(k);
    let lc = centered(l);
    let kk = frobenius_sq(kc.values());
    let ll = frobenius_sq(lc.values());
    // Relative test: a constant kernel centers to round-off, not exact zero.
    if kk <= 1e-24 * frobenius_sq(k.values()) || kk == 0.0 {
        return Err(Error::degenerate("first kernel is constant after centering"));
    }
    if ll <= 1e-24 * frobenius_sq(l.values()) || ll == 0.0 {
        return Err(Error::degenerate("second kernel is constant after centering"));
    }
    let kl = frob_dot(kc.values(), lc.values());
    Ok(SimilarityScore::normalized("cka", kl / (kk.sqrt() * ll.sqrt())))
}

/// Which formula evaluates linear CKA/HSIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPath {
    /// `p x p` cross products; cost independent of `n^2`.
    Features,
    /// `n x n` Gram matrices.
    Gram,
    /// Features when `n > max(p1, p2)`, Gram otherwise.
    Auto,
}

fn linear_pair_checks(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<()> {
    check_same_n(x, y)?;
    require_centered(x, "X")?;
    require_centered(y, "Y")
}

fn resolve(path: EvalPath, x: &ActivationMatrix, y: &ActivationMatrix) -> EvalPath {
    match path {
        EvalPath::Auto if x.n() > x.p().max(y.p()) => EvalPath::Features,
        EvalPath::Auto => EvalPath::Gram,
        p => p,
    }
}

/// Linear CKA `||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F)` on centered inputs.
pub fn linear_cka_feature(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<SimilarityScore> {
    linear_cka_with_path(x, y, EvalPath::Auto)
}

pub fn linear_cka_with_path(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    path: EvalPath,
) -> Result<SimilarityScore> {
    linear_pair_checks(x, y)?;
    if frobenius_sq(x.data()) == 0.0 {
        return Err(Error::degenerate("X is all zeros after centering"));
    }
    if frobenius_sq(y.data()) == 0.0 {
        return Err(Error::degenerate("Y is all zeros after centering"));
    }
    match resolve(path, x, y) {
        EvalPath::Gram => {
            let s = cka(&gram_linear(x), &gram_linear(y))?;
            Ok(SimilarityScore::normalized("cka-linear", s.raw_value))
        }
        _ => {
            let (xd, yd) = (x.data(), y.data());
            let cross = frobenius_sq(&(yd.transpose() * xd));
            let xx = frobenius_sq(&(xd.transpose() * xd)).sqrt();
            let yy = frobenius_sq(&(yd.transpose() * yd)).sqrt();
            Ok(SimilarityScore::normalized("cka-linear", cross / (xx * yy)))
        }
    }
}

/// Linear HSIC `||Y^T X||_F^2 / (n - 1)^2` on centered inputs.
pub fn linear_hsic_feature(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<SimilarityScore> {
    linear_hsic_with_path(x, y, EvalPath::Auto)
}

pub fn linear_hsic_with_path(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    path: EvalPath,
) -> Result<SimilarityScore> {
    linear_pair_checks(x, y)?;
    match resolve(path, x, y) {
        EvalPath::Gram => {
            let s = hsic(&gram_linear(x), &gram_linear(y))?;
            Ok(SimilarityScore::unnormalized("hsic-linear", s.value))
        }
        _ => {
            let nm1 = (x.n() - 1) as f64;
            let cross = frobenius_sq(&(y.data().transpose() * x.data()));
            Ok(SimilarityScore::unnormalized("hsic-linear", cross / (nm1 * nm1)))
        }
    }
}

/// Centers both inputs, builds Gram matrices under `kernel` and returns CKA.
///
/// RBF distances are taken between centered rows; centering does not change
/// pairwise distances, so this only matters for bookkeeping.
pub fn kernel_cka(x: &ActivationMatrix, y: &ActivationMatrix, kernel: KernelSpec) -> Result<SimilarityScore> {
    check_same_n(x, y)?;
    let (xc, yc) = (center_columns(x), center_columns(y));
    match kernel {
        KernelSpec::Linear => linear_cka_feature(&xc, &yc),
        KernelSpec::Rbf { .. } => {
            let s = cka(&kernel.gram(&xc)?, &kernel.gram(&yc)?)?;
            Ok(SimilarityScore::normalized("cka-rbf", s.raw_value))
        }
    }
}

/// Kernel HSIC counterpart of [`kernel_cka`].
pub fn kernel_hsic(x: &ActivationMatrix, y: &ActivationMatrix, kernel: KernelSpec) -> Result<SimilarityScore> {
    check_same_n(x, y)?;
    let (xc, yc) = (center_columns(x), center_columns(y));
    match kernel {
        KernelSpec::Linear => linear_hsic_feature(&xc, &yc),
        KernelSpec::Rbf { .. } => {
            let s = hsic(&kernel.gram(&xc)?, &kernel.gram(&yc)?)?;
            Ok(SimilarityScore::unnormalized("hsic-rbf", s.value))
        }
    }
}

/// Linear CKA from eigen-decompositions of `XX^T` and `YY^T`:
/// eigenvector overlaps `<u_X^i, u_Y^j>^2` weighted by `lambda_X^i lambda_Y^j`.
pub fn cka_from_spectra(sx: &Spectrum, sy: &Spectrum) -> Result<SimilarityScore> {
    if sx.is_empty() || sy.is_empty() {
        return Err(Error::degenerate("empty spectrum"));
    }
    if sx.n() != sy.n() {
        return Err(Error::ExampleCountMismatch {
            left: sx.n(),
            right: sy.n(),
        });
    }
    let overlap = sx.eigenvectors.transpose() * &sy.eigenvectors;
    let mut num = 0.0;
    for (i, lx) in sx.eigenvalues.iter().enumerate() {
        for (j, ly) in sy.eigenvalues.iter().enumerate() {
            let o = overlap[(i, j)];
            num += lx * ly * o * o;
        }
    }
    let nx = sx.eigenvalues.iter().map(|l| l * l).sum::<f64>().sqrt();
    let ny = sy.eigenvalues.iter().map(|l| l * l).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::degenerate("all-zero spectrum"));
    }
    Ok(SimilarityScore::normalized("cka-linear", num / (nx * ny)))
}
