//! Small dense helpers on top of nalgebra shared by the index modules.
//!
//! Singular value decompositions go through faer: nalgebra's bidiagonal SVD
//! can return factors that reconstruct the input only to ~1e-4 on some
//! well-conditioned inputs, far outside the tolerances the indexes need.

use nalgebra::{DMatrix, DVector};

/// Thin SVD with singular values in descending order.
///
/// Each left singular vector is sign-normalized so its largest-magnitude
/// entry is positive; the matching right singular vector is flipped with it.
pub(crate) struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return SortedSvd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let (u, sv, v) = thin_svd(m);

    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps the earlier index first on ties.
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let mut out_u = DMatrix::zeros(rows, k);
    let mut out_v = DMatrix::zeros(cols, k);
    let mut out_s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u.column(src).into_owned();
        let mut vc = v.column(src).into_owned();
        if sign_flip_needed(&uc) {
            uc.neg_mut();
            vc.neg_mut();
        }
        out_u.set_column(dst, &uc);
        out_v.set_column(dst, &vc);
        out_s.push(sv[src].max(0.0));
    }
    SortedSvd {
        u: out_u,
        s: out_s,
        v: out_v,
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `(U, s, V)` with `k = min(rows, cols)` columns; faer first, nalgebra if it does not converge.
fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    match to_faer(m).thin_svd() {
        Ok(svd) => {
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            (
                DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
                (0..s.nrows()).map(|i| s[i]).collect(),
                DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
            )
        }
        Err(_) => {
            let svd = m.clone().svd(true, true);
            let u = svd.u.expect("left singular vectors requested");
            let v_t = svd.v_t.expect("right singular vectors requested");
            (u, svd.singular_values.iter().copied().collect(), v_t.transpose())
        }
    }
}

/// True when the largest-magnitude entry is negative. Magnitudes within a
/// relative 1e-12 of the maximum count as tied and the first one wins, so
/// rounding noise cannot flip the choice.
fn sign_flip_needed(v: &DVector<f64>) -> bool {
    let max = v.amax();
    v.iter()
        .find(|x| x.abs() >= max * (1.0 - 1e-12))
        .is_some_and(|&x| x < 0.0)
}

/// Number of leading singular values strictly above `tol * s[0]`.
pub(crate) fn effective_rank(s: &[f64], tol: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().take_while(|&&x| x > tol * top).count(),
        _ => 0,
    }
}

/// Sum of singular values.
pub(crate) fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    match to_faer(m).singular_values() {
        Ok(s) => s.iter().sum(),
        Err(_) => m.singular_values().iter().sum(),
    }
}

pub(crate) fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}
