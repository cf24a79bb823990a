//! Canonical correlation analysis and the indexes built on it.
//!
//! Canonical correlations are the singular values of `Q_X^T Q_Y`, where
//! `Q_X`, `Q_Y` are rank-truncated orthonormal bases of the (centered)
//! column spaces. SVCCA truncates to leading principal components first,
//! PWCCA weights correlations by how much of `X` each canonical variable
//! carries, and canonical ridge shrinks small eigen-directions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cka::SimilarityScore;
use crate::error::{Error, Result};
use crate::linalg::{effective_rank, frobenius_sq, nuclear_norm, sorted_svd};
use crate::reprdata::{
    basis_of, check_same_n, require_centered, spectrum_of, ActivationMatrix, DEFAULT_RANK_TOL,
};

fn pair_checks(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<()> {
    check_same_n(x, y)?;
    require_centered(x, "X")?;
    require_centered(y, "Y")
}

#[derive(Debug, Clone)]
pub struct CcaResult {
    /// Canonical correlations, descending; `effective_rank` of them.
    pub rhos: Vec<f64>,
    /// `p1 x r`; `X * weights_x = canonical_x`.
    pub weights_x: DMatrix<f64>,
    /// `p2 x r`; `Y * weights_y = canonical_y`.
    pub weights_y: DMatrix<f64>,
    /// `n x r` canonical variables of `X`, mutually orthogonal with unit sample variance.
    pub canonical_x: DMatrix<f64>,
    pub canonical_y: DMatrix<f64>,
    pub rank_x: usize,
    pub rank_y: usize,
    /// `min(rank_x, rank_y)`.
    pub effective_rank: usize,
}

impl CcaResult {
    /// Denominator used by the summary statistics: the smaller effective rank.
    pub fn p1(&self) -> usize {
        self.effective_rank
    }

    pub fn r2(&self) -> SimilarityScore {
        r2_cca(self, self.p1())
    }

    pub fn rho_bar(&self) -> SimilarityScore {
        rho_bar_cca(self, self.p1())
    }
}

/// Thresholded SVD of `X` pieces needed to map between `X` and `Q_X`.
struct Whitening {
    q: DMatrix<f64>,
    /// `V_r Sigma_r^{-1}`, so that `X * to_basis = Q`.
    to_basis: DMatrix<f64>,
}

fn whiten(m: &DMatrix<f64>, rank_tol: f64, what: &str) -> Result<Whitening> {
    let svd = sorted_svd(m);
    let rank = effective_rank(&svd.s, rank_tol);
    if rank == 0 {
        return Err(Error::RankZero(format!("{what} has rank zero")));
    }
    let mut to_basis = svd.v.columns(0, rank).into_owned();
    for (k, mut col) in to_basis.column_iter_mut().enumerate() {
        col /= svd.s[k];
    }
    Ok(Whitening {
        q: svd.u.columns(0, rank).into_owned(),
        to_basis,
    })
}

/// CCA with the default rank tolerance.
pub fn cca(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<CcaResult> {
    cca_with_tol(x, y, DEFAULT_RANK_TOL)
}

pub fn cca_with_tol(x: &ActivationMatrix, y: &ActivationMatrix, rank_tol: f64) -> Result<CcaResult> {
    pair_checks(x, y)?;
    let wx = whiten(x.data(), rank_tol, "X")?;
    let wy = whiten(y.data(), rank_tol, "Y")?;
    let a = wx.q.transpose() * &wy.q;
    let svd = sorted_svd(&a);
    let r = svd.s.len();
    let scale = ((x.n() - 1) as f64).sqrt();
    let weights_x = &wx.to_basis * &svd.u * scale;
    let weights_y = &wy.to_basis * &svd.v * scale;
    Ok(CcaResult {
        rhos: svd.s,
        canonical_x: x.data() * &weights_x,
        canonical_y: y.data() * &weights_y,
        weights_x,
        weights_y,
        rank_x: wx.q.ncols(),
        rank_y: wy.q.ncols(),
        effective_rank: r,
    })
}

/// Mean squared canonical correlation, `sum rho_i^2 / p1`.
pub fn r2_cca(res: &CcaResult, p1: usize) -> SimilarityScore {
    let s: f64 = res.rhos.iter().map(|r| r * r).sum();
    SimilarityScore::normalized("cca-r2", s / p1 as f64)
}

/// Mean canonical correlation, `sum rho_i / p1`.
pub fn rho_bar_cca(res: &CcaResult, p1: usize) -> SimilarityScore {
    let s: f64 = res.rhos.iter().sum();
    SimilarityScore::normalized("cca-rho", s / p1 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvccaParams {
    pub variance_threshold: f64,
}

impl SvccaParams {
    pub fn new(variance_threshold: f64) -> Result<Self> {
        if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
            return Err(Error::validation(format!(
                "variance threshold must lie in (0, 1], got {variance_threshold}"
            )));
        }
        Ok(Self { variance_threshold })
    }
}

impl Default for SvccaParams {
    fn default() -> Self {
        Self {
            variance_threshold: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvccaResult {
    pub r2: SimilarityScore,
    pub rho_bar: SimilarityScore,
    pub kept_x: usize,
    pub kept_y: usize,
}

/// Smallest leading count whose cumulative variance share reaches `threshold`.
pub(crate) fn components_for_threshold(singular_values: &[f64], rank: usize, threshold: f64) -> usize {
    let vars: Vec<f64> = singular_values[..rank].iter().map(|s| s * s).collect();
    let total: f64 = vars.iter().sum();
    let mut cum = 0.0;
    for (k, v) in vars.iter().enumerate() {
        cum += v;
        if cum / total >= threshold {
            return k + 1;
        }
    }
    rank
}

fn leading_components(m: &DMatrix<f64>, threshold: f64, rank_tol: f64, what: &str) -> Result<DMatrix<f64>> {
    let svd = sorted_svd(m);
    let rank = effective_rank(&svd.s, rank_tol);
    if rank == 0 {
        return Err(Error::RankZero(format!("{what} has rank zero")));
    }
    let keep = components_for_threshold(&svd.s, rank, threshold);
    Ok(svd.u.columns(0, keep).into_owned())
}

/// SVCCA: CCA between the principal subspaces explaining `variance_threshold` of each input.
pub fn svcca(x: &ActivationMatrix, y: &ActivationMatrix, params: SvccaParams) -> Result<SvccaResult> {
    svcca_with_tol(x, y, params, DEFAULT_RANK_TOL)
}

pub(crate) fn svcca_with_tol(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    params: SvccaParams,
    rank_tol: f64,
) -> Result<SvccaResult> {
    pair_checks(x, y)?;
    SvccaParams::new(params.variance_threshold)?;
    let ux = leading_components(x.data(), params.variance_threshold, rank_tol, "X")?;
    let uy = leading_components(y.data(), params.variance_threshold, rank_tol, "Y")?;
    let m = uy.transpose() * &ux;
    let denom = ux.ncols().min(uy.ncols()) as f64;
    Ok(SvccaResult {
        r2: SimilarityScore::normalized("svcca-r2", frobenius_sq(&m) / denom),
        rho_bar: SimilarityScore::normalized("svcca-rho", nuclear_norm(&m) / denom),
        kept_x: ux.ncols(),
        kept_y: uy.ncols(),
    })
}

/// Fraction of the variance of `target` explained by least squares on `design`:
/// `||Q_design^T target||_F^2 / ||target||_F^2`.
pub fn linear_regression_r2(target: &ActivationMatrix, design: &ActivationMatrix) -> Result<SimilarityScore> {
    linear_regression_r2_with_tol(target, design, DEFAULT_RANK_TOL)
}

pub(crate) fn linear_regression_r2_with_tol(
    target: &ActivationMatrix,
    design: &ActivationMatrix,
    rank_tol: f64,
) -> Result<SimilarityScore> {
    pair_checks(target, design)?;
    let total = frobenius_sq(target.data());
    if total == 0.0 {
        return Err(Error::degenerate("regression target is all zeros"));
    }
    let q = basis_of(design.data(), rank_tol)?.q;
    let fit = frobenius_sq(&(q.transpose() * target.data()));
    Ok(SimilarityScore::normalized("linreg", fit / total))
}

/// Canonical variables of `X` (unit norm, one per column of `Q_X`) and their correlations.
///
/// When `rank_x > rank_y` the basis is completed with directions whose
/// correlation is zero, so the variables always span the column space of `X`.
fn x_side_canonical(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    rank_tol: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let qx = basis_of(x.data(), rank_tol)?.q;
    let qy = basis_of(y.data(), rank_tol)?.q;
    let (rx, ry) = (qx.ncols(), qy.ncols());
    let mut a = DMatrix::zeros(rx, rx.max(ry));
    a.columns_mut(0, ry).copy_from(&(qx.transpose() * &qy));
    let svd = sorted_svd(&a);
    let mut rhos = svd.s;
    rhos.truncate(rx);
    Ok((&qx * svd.u, rhos))
}

pub(crate) fn pwcca_impl(x: &ActivationMatrix, y: &ActivationMatrix, squared: bool, rank_tol: f64) -> Result<f64> {
    pair_checks(x, y)?;
    let (h, rhos) = x_side_canonical(x, y, rank_tol)?;
    // (X^T H)_{ji} = <h_i, x_j>
    let proj = x.data().transpose() * &h;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, rho) in rhos.iter().enumerate() {
        let col = proj.column(i);
        let (alpha, r) = if squared {
            (col.iter().map(|v| v * v).sum::<f64>(), rho * rho)
        } else {
            (col.iter().map(|v| v.abs()).sum::<f64>(), *rho)
        };
        num += alpha * r;
        den += alpha;
    }
    if den == 0.0 {
        return Err(Error::degenerate("all projection weights are zero"));
    }
    Ok(num / den)
}

/// Projection-weighted CCA. Weights come from `x` only, so the index is asymmetric.
pub fn pwcca(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<SimilarityScore> {
    Ok(SimilarityScore::normalized("pwcca", pwcca_impl(x, y, false, DEFAULT_RANK_TOL)?))
}

/// PWCCA with squared projections and squared correlations; equals
/// `linear_regression_r2(x, y)`.
pub fn modified_pwcca(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<SimilarityScore> {
    Ok(SimilarityScore::normalized("pwcca-modified", pwcca_impl(x, y, true, DEFAULT_RANK_TOL)?))
}

/// Which upper bound normalizes the canonical ridge statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RidgeNormalization {
    /// Paired shrunken eigenvalue products (von Neumann trace bound).
    VnTrace,
    /// Cauchy-Schwarz on the paired bound, over the first `min(r_x, r_y)` terms.
    CauchySchwarzMin,
    /// Product of root-sum-squares over all terms; separable in X and Y.
    Separable,
}

impl RidgeNormalization {
    pub fn name(&self) -> &'static str {
        match self {
            RidgeNormalization::VnTrace => "vn-trace",
            RidgeNormalization::CauchySchwarzMin => "cauchy-schwarz-min",
            RidgeNormalization::Separable => "separable",
        }
    }
}

impl std::str::FromStr for RidgeNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vn-trace" => Ok(Self::VnTrace),
            "cauchy-schwarz-min" => Ok(Self::CauchySchwarzMin),
            "separable" => Ok(Self::Separable),
            other => Err(Error::validation(format!("unknown ridge normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeParams {
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub normalization: RidgeNormalization,
}

impl RidgeParams {
    pub fn new(kappa_x: f64, kappa_y: f64, normalization: RidgeNormalization) -> Result<Self> {
        for (name, k) in [("kappa_x", kappa_x), ("kappa_y", kappa_y)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be finite and nonnegative, got {k}"
                )));
            }
        }
        Ok(Self {
            kappa_x,
            kappa_y,
            normalization,
        })
    }
}

/// Normalized sum of squared canonical-ridge singular values.
///
/// Numerator: `sum_ij f_X^i f_Y^j <u_X^i, u_Y^j>^2` with shrinkage factors
/// `f = lambda / (lambda + kappa)` over the nonzero eigenpairs of `XX^T`, `YY^T`.
pub fn canonical_ridge_similarity(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    params: RidgeParams,
) -> Result<SimilarityScore> {
    canonical_ridge_with_tol(x, y, params, DEFAULT_RANK_TOL)
}

pub(crate) fn canonical_ridge_with_tol(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    params: RidgeParams,
    rank_tol: f64,
) -> Result<SimilarityScore> {
    pair_checks(x, y)?;
    let params = RidgeParams::new(params.kappa_x, params.kappa_y, params.normalization)?;
    let sx = spectrum_of(x.data(), usize::MAX, rank_tol);
    let sy = spectrum_of(y.data(), usize::MAX, rank_tol);
    if sx.is_empty() || sy.is_empty() {
        return Err(Error::degenerate("zero spectrum"));
    }
    let shrink = |ls: &[f64], kappa: f64| -> Vec<f64> { ls.iter().map(|l| l / (l + kappa)).collect() };
    let fx = shrink(&sx.eigenvalues, params.kappa_x);
    let fy = shrink(&sy.eigenvalues, params.kappa_y);
    let overlap = sx.eigenvectors.transpose() * &sy.eigenvectors;
    let mut num = 0.0;
    for (i, a) in fx.iter().enumerate() {
        for (j, b) in fy.iter().enumerate() {
            let o = overlap[(i, j)];
            num += a * b * o * o;
        }
    }
    let p1 = fx.len().min(fy.len());
    let rss = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = match params.normalization {
        RidgeNormalization::VnTrace => fx.iter().zip(&fy).map(|(a, b)| a * b).sum::<f64>(),
        RidgeNormalization::CauchySchwarzMin => rss(&fx[..p1]) * rss(&fy[..p1]),
        RidgeNormalization::Separable => rss(&fx) * rss(&fy),
    };
    if den == 0.0 {
        return Err(Error::degenerate("ridge normalizer is zero"));
    }
    Ok(SimilarityScore::normalized("ridge", num / den))
}

/// Nuclear norm `||Y^T X||_*`, the optimum of the orthogonal Procrustes trace objective.
pub fn procrustes_nuclear(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<SimilarityScore> {
    pair_checks(x, y)?;
    Ok(SimilarityScore::unnormalized(
        "procrustes",
        nuclear_norm(&(y.data().transpose() * x.data())),
    ))
}

/// Maximizer of `tr(Y^T X Q)` over `Q` with orthonormal columns: `U V^T` where `X^T Y = U S V^T`.
pub fn procrustes_rotation(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<DMatrix<f64>> {
    check_same_n(x, y)?;
    let svd = sorted_svd(&(x.data().transpose() * y.data()));
    Ok(&svd.u * svd.v.transpose())
}
