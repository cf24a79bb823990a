//! Activation matrices, column centering, orthonormal bases and spectra.
//!
//! Every index in this crate consumes [`ActivationMatrix`] values: `n`
//! examples (rows) by `p` features (columns), float64, with a flag that
//! records whether [`center_columns`] has been applied.

mod io;

pub use io::{load_matrix, write_csv, write_rsm, MatrixFormat, RSM_MAGIC};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{effective_rank, sorted_svd};

/// Singular directions at or below `DEFAULT_RANK_TOL * sigma_max` are dropped.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// An `n x p` matrix of layer responses, rows = examples, columns = features.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    data: DMatrix<f64>,
    centered: bool,
}

impl ActivationMatrix {
    /// Validates and wraps `data`. The result is marked uncentered.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 examples, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::validation("need at least 1 feature"));
        }
        if let Some(idx) = data.iter().position(|x| !x.is_finite()) {
            let (r, c) = (idx % data.nrows(), idx / data.nrows());
            return Err(Error::validation(format!(
                "non-finite entry at row {r}, column {c}"
            )));
        }
        Ok(Self {
            data,
            centered: false,
        })
    }

    /// Builds from row-major values.
    pub fn from_row_major(n: usize, p: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * p {
            return Err(Error::validation(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::validation(format!(
                "row {i} has {} entries, expected {p}",
                rows[i].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(n, p, &flat)
    }

    /// Convenience for single-feature fixtures.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::from_row_major(values.len(), 1, values)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n() * self.p());
        for r in 0..self.n() {
            out.extend(self.data.row(r).iter());
        }
        out
    }

    /// Right-multiplies by a `p x q` feature map, `X -> XA`.
    ///
    /// Centering is preserved: column means of `XA` are the means of `X` mapped by `A`.
    pub fn map_features(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.p() {
            return Err(Error::validation(format!(
                "feature map has {} rows, matrix has {} features",
                a.nrows(),
                self.p()
            )));
        }
        let mut out = Self::new(&self.data * a)?;
        out.centered = self.centered;
        Ok(out)
    }

    /// `X -> alpha X`. Centering is preserved.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        let mut out = Self::new(&self.data * alpha)?;
        out.centered = self.centered;
        Ok(out)
    }

    /// Stacks features of `self` and `other` side by side.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        check_same_n(self, other)?;
        let mut data = DMatrix::zeros(self.n(), self.p() + other.p());
        data.columns_mut(0, self.p()).copy_from(&self.data);
        data.columns_mut(self.p(), other.p()).copy_from(&other.data);
        let mut out = Self::new(data)?;
        out.centered = self.centered && other.centered;
        Ok(out)
    }

    #[cfg(test)]
    pub(crate) fn from_centered_data(data: DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(data)?;
        out.centered = true;
        Ok(out)
    }
}

pub(crate) fn check_same_n(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<()> {
    if x.n() != y.n() {
        return Err(Error::ExampleCountMismatch {
            left: x.n(),
            right: y.n(),
        });
    }
    Ok(())
}

pub(crate) fn require_centered(x: &ActivationMatrix, what: &str) -> Result<()> {
    if !x.is_centered() {
        return Err(Error::validation(format!(
            "{what} must be column-centered (apply center_columns first)"
        )));
    }
    Ok(())
}

/// Subtracts each column's mean. Already-centered input is returned unchanged.
pub fn center_columns(x: &ActivationMatrix) -> ActivationMatrix {
    if x.centered {
        return x.clone();
    }
    let n = x.n() as f64;
    let mut data = x.data.clone();
    for mut col in data.column_iter_mut() {
        // Constant columns become exact zeros rather than round-off.
        if col.iter().all(|&v| v == col[0]) {
            col.fill(0.0);
            continue;
        }
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    ActivationMatrix {
        data,
        centered: true,
    }
}

/// Orthonormal basis `Q` (`n x r`) for the column space of a matrix.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    pub q: DMatrix<f64>,
    pub rank: usize,
    pub source_p: usize,
}

impl OrthonormalBasis {
    /// `Q Q^T`, the orthogonal projector onto the column space.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }
}

/// Orthonormal basis of the column space via thresholded SVD.
///
/// Directions with singular value `<= rank_tol * sigma_max` are dropped, so
/// duplicated or collinear features do not inflate the rank.
pub fn orthonormal_basis(x: &ActivationMatrix, rank_tol: f64) -> Result<OrthonormalBasis> {
    basis_of(&x.data, rank_tol)
}

pub(crate) fn basis_of(m: &DMatrix<f64>, rank_tol: f64) -> Result<OrthonormalBasis> {
    let svd = sorted_svd(m);
    let rank = effective_rank(&svd.s, rank_tol);
    if rank == 0 {
        return Err(Error::RankZero("matrix has no nonzero singular value".into()));
    }
    Ok(OrthonormalBasis {
        q: svd.u.columns(0, rank).into_owned(),
        rank,
        source_p: m.ncols(),
    })
}

/// Eigenpairs of `X X^T` in descending eigenvalue order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// `n x r`, one unit-norm eigenvector per column.
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn n(&self) -> usize {
        self.eigenvectors.nrows()
    }
}

/// Leading eigenpairs of `X X^T`, computed from the SVD of `X`.
///
/// Only numerically nonzero eigenvalues are kept (singular value above
/// [`DEFAULT_RANK_TOL`] relative to the largest); at most `max_components`.
/// Eigenvectors follow the largest-magnitude-entry-positive sign convention.
pub fn spectrum(x: &ActivationMatrix, max_components: usize) -> Spectrum {
    spectrum_of(&x.data, max_components, DEFAULT_RANK_TOL)
}

pub(crate) fn spectrum_of(m: &DMatrix<f64>, max_components: usize, rank_tol: f64) -> Spectrum {
    let svd = sorted_svd(m);
    let keep = effective_rank(&svd.s, rank_tol).min(max_components);
    Spectrum {
        eigenvalues: svd.s[..keep].iter().map(|s| s * s).collect(),
        eigenvectors: svd.u.columns(0, keep).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rm(n: usize, p: usize, v: &[f64]) -> ActivationMatrix {
        ActivationMatrix::from_row_major(n, p, v).unwrap()
    }

    #[test]
    fn centering_examples() {
        let c = center_columns(&rm(2, 2, &[1., 2., 3., 4.]));
        assert!(c.is_centered());
        assert_eq!(c.to_row_major(), vec![-1., -1., 1., 1.]);

        let c = center_columns(&rm(2, 1, &[5., 5.]));
        assert_eq!(c.to_row_major(), vec![0., 0.]);

        let again = center_columns(&c);
        assert_eq!(again, c);
    }

    #[test]
    fn centering_recomputed_on_numerically_centered_input() {
        let x = rm(3, 1, &[1., -1., 0.]);
        let c = center_columns(&x);
        for (a, b) in c.to_row_major().iter().zip(x.to_row_major()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ActivationMatrix::from_row_major(1, 2, &[1., 2.]).is_err());
        assert!(ActivationMatrix::from_row_major(2, 1, &[1., f64::NAN]).is_err());
        assert!(ActivationMatrix::from_row_major(2, 1, &[1., f64::INFINITY]).is_err());
        assert!(ActivationMatrix::from_rows(&[vec![1., 2.], vec![3.]]).is_err());
    }

    #[test]
    fn basis_of_single_column() {
        let x = center_columns(&ActivationMatrix::column(&[1., -1., 0.]).unwrap());
        let b = orthonormal_basis(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.rank, 1);
        let s = 1.0 / 2f64.sqrt();
        let q = b.q.column(0);
        let sign = q[0].signum();
        assert_abs_diff_eq!(q[0] * sign, s, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1] * sign, -s, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn basis_drops_duplicated_column() {
        let x = center_columns(&rm(4, 2, &[1., 1., 2., 2., -0.5, -0.5, 3., 3.]));
        let b = orthonormal_basis(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.rank, 1);
        assert_eq!(b.source_p, 2);
    }

    #[test]
    fn basis_of_orthonormal_columns_spans_same_space() {
        let s = 1.0 / 2f64.sqrt();
        let t = 1.0 / 6f64.sqrt();
        // Two orthonormal, centered columns in R^3.
        let x = ActivationMatrix::from_centered_data(DMatrix::from_row_slice(
            3,
            2,
            &[s, t, -s, t, 0.0, -2.0 * t],
        ))
        .unwrap();
        let b = orthonormal_basis(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.rank, 2);
        let diff = b.projector() - x.data() * x.data().transpose();
        assert!(diff.amax() <= 1e-12);
    }

    #[test]
    fn zero_matrix_is_rank_zero() {
        let x = center_columns(&rm(3, 2, &[0.; 6]));
        assert!(matches!(
            orthonormal_basis(&x, DEFAULT_RANK_TOL),
            Err(Error::RankZero(_))
        ));
    }

    #[test]
    fn spectrum_rank_one() {
        let x = ActivationMatrix::column(&[1., -1.]).unwrap();
        let s = spectrum(&x, 10);
        assert_eq!(s.len(), 1);
        assert_abs_diff_eq!(s.eigenvalues[0], 2.0, epsilon = 1e-14);
        let u = s.eigenvectors.column(0);
        // largest-magnitude entry positive; entries tie so the first wins
        assert_abs_diff_eq!(u[0], 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(u[1], -1.0 / 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn spectrum_of_isometry_is_all_ones() {
        let s = 1.0 / 2f64.sqrt();
        let t = 1.0 / 6f64.sqrt();
        let x = rm(3, 2, &[s, t, -s, t, 0.0, -2.0 * t]);
        let sp = spectrum(&x, 5);
        assert_eq!(sp.len(), 2);
        for l in &sp.eigenvalues {
            assert_abs_diff_eq!(*l, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectrum_truncates_to_max_components() {
        let x = rm(3, 2, &[1., 0., 0., 2., -1., -2.]);
        assert_eq!(spectrum(&x, 1).len(), 1);
        assert_eq!(spectrum(&x, 0).len(), 0);
    }
}
