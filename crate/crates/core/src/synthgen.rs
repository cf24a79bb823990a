//! Seeded generators of related representations.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`),
//! a counter-based stream cipher whose output is identical on every platform.
//! Standard normals use the Box-Muller transform on pairs of 53-bit uniforms:
//! `u1 = (a + 1) / 2^53` in (0, 1], `u2 = b / 2^53` in [0, 1), then
//! `sqrt(-2 ln u1) * cos(2 pi u2)` followed by the matching `sin` value.
//! Matrices are filled in row-major order.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{effective_rank, sorted_svd};
use crate::reprdata::{center_columns, ActivationMatrix, DEFAULT_RANK_TOL};

/// Default signal rank per layer in [`gen_layer_stack`].
pub const DEFAULT_SIGNAL_RANK: usize = 4;
/// Default noise level in [`gen_layer_stack`].
pub const DEFAULT_NOISE_LEVEL: f64 = 0.1;
/// Invertible transforms with a larger condition number are resampled.
pub const MAX_CONDITION_NUMBER: f64 = 1e6;
const MAX_RESAMPLES: usize = 16;

/// Mixes a base seed with a stream tag (SplitMix64 finalizer), for deriving
/// independent sub-streams such as per-network seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard-normal stream over ChaCha20.
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `rows x cols` matrix of standard normals, filled row by row.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let values: Vec<f64> = (0..rows * cols).map(|_| self.next_normal()).collect();
        DMatrix::from_row_slice(rows, cols, &values)
    }

    /// Haar-distributed orthogonal matrix: Q of the QR of a Gaussian matrix,
    /// with column signs fixed so that diag(R) is positive.
    pub fn orthogonal(&mut self, p: usize) -> DMatrix<f64> {
        let qr = self.matrix(p, p).qr();
        let r = qr.r();
        let mut q = qr.q();
        for (j, mut col) in q.column_iter_mut().enumerate() {
            if r[(j, j)] < 0.0 {
                col.neg_mut();
            }
        }
        q
    }

    /// `rows x k` matrix with orthonormal columns spanning a random subspace.
    pub fn orthonormal_columns(&mut self, rows: usize, k: usize) -> DMatrix<f64> {
        let g = self.matrix(rows, k);
        orthonormalize(g)
    }
}

fn orthonormalize(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = sorted_svd(m).s;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// `n x p` i.i.d. standard normal entries, column-centered.
pub fn gen_random(n: usize, p: usize, seed: u64) -> Result<ActivationMatrix> {
    if n < 2 || p < 1 {
        return Err(Error::validation(format!(
            "gen_random needs n >= 2 and p >= 1, got {n}x{p}"
        )));
    }
    let data = GaussianStream::new(seed).matrix(n, p);
    Ok(center_columns(&ActivationMatrix::new(data)?))
}

/// How a second representation is derived from a first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Relation {
    /// A fresh, unrelated matrix of the same shape.
    Independent,
    /// `X U` with `U` Haar-orthogonal.
    OrthogonalTransform,
    /// `X A` with `A` a Gaussian matrix of bounded condition number.
    InvertibleTransform,
    /// `alpha X`.
    IsotropicScale { alpha: f64 },
    /// A pair built from a shared component dictionary; see [`gen_shared_subspace_pair`].
    SharedSubspace {
        shared_indices: Vec<usize>,
        spectrum_decay: f64,
        noise_level: f64,
    },
}

/// Recipe for a generated pair: dimensions, seed and relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub relation: Relation,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 2 {
            return Err(Error::validation(format!(
                "dimensions must be >= 2, got n={} p={}",
                self.n, self.p
            )));
        }
        match &self.relation {
            Relation::IsotropicScale { alpha } if !(alpha.is_finite() && *alpha != 0.0) => Err(
                Error::validation(format!("scale must be finite and nonzero, got {alpha}")),
            ),
            Relation::SharedSubspace {
                shared_indices,
                spectrum_decay,
                noise_level,
            } => {
                if !(*noise_level >= 0.0 && noise_level.is_finite()) {
                    return Err(Error::validation("noise_level must be >= 0"));
                }
                if !(*spectrum_decay > 0.0 && *spectrum_decay <= 1.0) {
                    return Err(Error::validation("spectrum_decay must lie in (0, 1]"));
                }
                if shared_indices.len() > self.p {
                    return Err(Error::validation(format!(
                        "{} shared indices but only {} components",
                        shared_indices.len(),
                        self.p
                    )));
                }
                if let Some(&bad) = shared_indices.iter().find(|&&i| i >= self.p) {
                    return Err(Error::validation(format!(
                        "shared index {bad} out of range for {} components",
                        self.p
                    )));
                }
                let mut sorted = shared_indices.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != shared_indices.len() {
                    return Err(Error::validation("shared indices must be distinct"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelationOutput {
    pub matrix: ActivationMatrix,
    /// Condition number of the sampled invertible map, when one was used.
    pub condition_number: Option<f64>,
}

/// Derives a related matrix from `x`.
pub fn apply_relation(x: &ActivationMatrix, relation: &Relation, seed: u64) -> Result<RelationOutput> {
    let mut stream = GaussianStream::new(seed);
    let p = x.p();
    match relation {
        Relation::Independent => Ok(RelationOutput {
            matrix: gen_random(x.n(), p, seed)?,
            condition_number: None,
        }),
        Relation::OrthogonalTransform => Ok(RelationOutput {
            matrix: x.map_features(&stream.orthogonal(p))?,
            condition_number: Some(1.0),
        }),
        Relation::InvertibleTransform => {
            for _ in 0..MAX_RESAMPLES {
                let a = stream.matrix(p, p);
                let cond = condition_number(&a);
                if cond <= MAX_CONDITION_NUMBER {
                    return Ok(RelationOutput {
                        matrix: x.map_features(&a)?,
                        condition_number: Some(cond),
                    });
                }
            }
            Err(Error::degenerate(format!(
                "no invertible map with condition number <= {MAX_CONDITION_NUMBER:e} after {MAX_RESAMPLES} draws"
            )))
        }
        Relation::IsotropicScale { alpha } => {
            if !(alpha.is_finite() && *alpha != 0.0) {
                return Err(Error::validation(format!(
                    "scale must be finite and nonzero, got {alpha}"
                )));
            }
            Ok(RelationOutput {
                matrix: x.scaled(*alpha)?,
                condition_number: Some(1.0),
            })
        }
        Relation::SharedSubspace { .. } => Err(Error::validation(
            "shared-subspace is a pair recipe; use gen_shared_subspace_pair",
        )),
    }
}

#[derive(Debug, Clone)]
pub struct SharedSubspacePair {
    pub x: ActivationMatrix,
    pub y: ActivationMatrix,
    /// Eigenvalues of `XX^T` (and `YY^T`) before noise: `decay^(i+1)`.
    pub spectrum: Vec<f64>,
}

/// Builds `X`, `Y` (`n x p`) whose column `i` is `sqrt(decay^(i+1))` times a
/// unit direction. Directions at `shared_indices` are common to both; all
/// other directions are private to one matrix and orthogonal to everything
/// else. The dictionary lives in the centered subspace, so `n - 1 >= 2p - s`
/// is required (`s` shared components).
pub fn gen_shared_subspace_pair(spec: &SynthSpec) -> Result<SharedSubspacePair> {
    spec.validate()?;
    let Relation::SharedSubspace {
        shared_indices,
        spectrum_decay,
        noise_level,
    } = &spec.relation
    else {
        return Err(Error::validation("spec relation must be shared-subspace"));
    };
    let (n, p) = (spec.n, spec.p);
    let needed = 2 * p - shared_indices.len();
    if needed > n - 1 {
        return Err(Error::validation(format!(
            "need n - 1 >= {needed} centered directions, have n = {n}"
        )));
    }
    let mut stream = GaussianStream::new(spec.seed);
    let raw = stream.matrix(n, needed);
    let centered = center_columns(&ActivationMatrix::new(raw)?);
    let dict = orthonormalize(centered.into_data());

    let spectrum: Vec<f64> = (1..=p).map(|i| spectrum_decay.powi(i as i32)).collect();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DMatrix::zeros(n, p);
    let mut next = 0;
    let mut shared_dir = vec![None; p];
    for &i in shared_indices {
        shared_dir[i] = Some(next);
        next += 1;
    }
    for (i, lambda) in spectrum.iter().enumerate() {
        let scale = lambda.sqrt();
        let (dx, dy) = match shared_dir[i] {
            Some(d) => (d, d),
            None => {
                next += 2;
                (next - 2, next - 1)
            }
        };
        x.set_column(i, &(dict.column(dx) * scale));
        y.set_column(i, &(dict.column(dy) * scale));
    }
    if *noise_level > 0.0 {
        x += stream.matrix(n, p) * *noise_level;
        y += stream.matrix(n, p) * *noise_level;
    }
    Ok(SharedSubspacePair {
        x: center_columns(&ActivationMatrix::new(x)?),
        y: center_columns(&ActivationMatrix::new(y)?),
        spectrum,
    })
}

/// Invertible `A` (`p x p`) with `XA = Y` for full-row-rank `n x p` inputs, `p >= n`.
///
/// Each input is completed to a square matrix by stacking an orthonormal
/// basis of its row null space below it; then `A = X'^{-1} Y'`.
pub fn theorem1_transform(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<DMatrix<f64>> {
    if x.n() != y.n() || x.p() != y.p() {
        return Err(Error::validation(format!(
            "shape mismatch: {}x{} vs {}x{}",
            x.n(),
            x.p(),
            y.n(),
            y.p()
        )));
    }
    let (n, p) = (x.n(), x.p());
    if p < n {
        return Err(Error::validation(format!("need p >= n, got n={n} p={p}")));
    }
    let xs = completed_square(x.data(), "X")?;
    let ys = completed_square(y.data(), "Y")?;
    xs.lu()
        .solve(&ys)
        .ok_or_else(|| Error::degenerate("completed X is singular"))
}

fn completed_square(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (n, p) = m.shape();
    let svd = sorted_svd(m);
    if effective_rank(&svd.s, DEFAULT_RANK_TOL) < n {
        return Err(Error::degenerate(format!("{what} is rank deficient (rank < {n})")));
    }
    let mut out = DMatrix::zeros(p, p);
    out.rows_mut(0, n).copy_from(m);
    if p > n {
        // Null space of the rows: leading left singular vectors of I - V V^T.
        let proj = DMatrix::identity(p, p) - &svd.v * svd.v.transpose();
        let null = sorted_svd(&proj).u.columns(0, p - n).into_owned();
        out.rows_mut(n, p - n).copy_from(&null.transpose());
    }
    Ok(out)
}

/// Recipe for a stack of layers from one synthetic "network".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStackSpec {
    pub layers: usize,
    pub n: usize,
    pub p: usize,
    pub signal_rank: usize,
    /// Shared across networks: fixes each layer's signal subspace.
    pub structural_seed: u64,
    /// Per network: mixing weights and noise.
    pub network_seed: u64,
    pub noise_level: f64,
}

impl LayerStackSpec {
    pub fn new(layers: usize, n: usize, p: usize, structural_seed: u64, network_seed: u64) -> Self {
        Self {
            layers,
            n,
            p,
            signal_rank: DEFAULT_SIGNAL_RANK,
            structural_seed,
            network_seed,
            noise_level: DEFAULT_NOISE_LEVEL,
        }
    }
}

/// Layer `l` is `sqrt(n) S_l M_l + noise_level N_l`.
///
/// `S_l` (`n x k`, orthonormal columns) comes from the structural seed and
/// the blocks for different layers are mutually orthogonal, so it requires
/// `layers * k <= n`. `M_l` (`k x p`) and `N_l` (`n x p`) are Gaussian and
/// drawn from the network seed. Layers are returned uncentered with rank `n`.
pub fn gen_layer_stack(spec: &LayerStackSpec) -> Result<Vec<ActivationMatrix>> {
    let LayerStackSpec {
        layers,
        n,
        p,
        signal_rank: k,
        structural_seed,
        network_seed,
        noise_level,
    } = *spec;
    if layers < 2 {
        return Err(Error::validation("need at least 2 layers"));
    }
    if n < 2 {
        return Err(Error::validation("need at least 2 examples"));
    }
    if p < n {
        return Err(Error::validation(format!("need p >= n for full rank, got n={n} p={p}")));
    }
    if k == 0 || k >= n {
        return Err(Error::validation(format!("signal rank must satisfy 0 < k < n, got k={k}")));
    }
    if layers * k > n {
        return Err(Error::validation(format!(
            "{layers} layers x rank {k} exceeds n = {n} orthogonal directions"
        )));
    }
    if !(noise_level > 0.0 && noise_level.is_finite()) {
        return Err(Error::validation("noise_level must be positive to keep every layer full rank"));
    }
    let signals = GaussianStream::new(structural_seed).orthonormal_columns(n, layers * k);
    let mut net = GaussianStream::new(network_seed);
    let amp = (n as f64).sqrt();
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let s = signals.columns(l * k, k);
        let m = net.matrix(k, p);
        let noise = net.matrix(n, p);
        let data = s * m * amp + noise * noise_level;
        let sv = sorted_svd(&data).s;
        if sv[n - 1] <= 1e-8 * sv[0] {
            return Err(Error::degenerate(format!("layer {l} is not full rank")));
        }
        out.push(ActivationMatrix::new(data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccafam::cca;
    use crate::cka::linear_cka_feature;
    use crate::kernels::gram_linear;
    use crate::reprdata::orthonormal_basis;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_stream_is_reproducible() {
        let a = gen_random(4, 2, 7).unwrap();
        let b = gen_random(4, 2, 7).unwrap();
        assert_eq!(a.to_row_major(), b.to_row_major());
        let c = gen_random(4, 2, 8).unwrap();
        assert_ne!(a.to_row_major(), c.to_row_major());
        for col in a.data().column_iter() {
            assert!(col.sum().abs() / 4.0 <= 1e-12);
        }
    }

    #[test]
    fn gaussian_moments_are_plausible() {
        let mut s = GaussianStream::new(1);
        let v: Vec<f64> = (0..20_000).map(|_| s.next_normal()).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn orthogonal_draw_is_orthogonal() {
        let q = GaussianStream::new(3).orthogonal(5);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).amax() <= 1e-12);
    }

    #[test]
    fn relations() {
        let x = gen_random(10, 4, 1).unwrap();
        let s = apply_relation(&x, &Relation::IsotropicScale { alpha: 2.0 }, 0).unwrap();
        let twice: Vec<f64> = x.to_row_major().iter().map(|v| 2.0 * v).collect();
        assert_eq!(s.matrix.to_row_major(), twice);

        let o = apply_relation(&x, &Relation::OrthogonalTransform, 5).unwrap();
        let diff = gram_linear(&x).values() - gram_linear(&o.matrix).values();
        assert!(diff.amax() <= 1e-10);

        let a = apply_relation(&x, &Relation::InvertibleTransform, 6).unwrap();
        assert!(a.condition_number.unwrap() <= MAX_CONDITION_NUMBER);
        let px = orthonormal_basis(&x, DEFAULT_RANK_TOL).unwrap().projector();
        let pa = orthonormal_basis(&a.matrix, DEFAULT_RANK_TOL).unwrap().projector();
        assert!((px - pa).amax() <= 1e-8);

        assert!(apply_relation(&x, &Relation::IsotropicScale { alpha: 0.0 }, 0).is_err());
    }

    fn shared(p: usize, idx: Vec<usize>) -> SynthSpec {
        SynthSpec {
            n: 32,
            p,
            seed: 11,
            relation: Relation::SharedSubspace {
                shared_indices: idx,
                spectrum_decay: 0.5,
                noise_level: 0.0,
            },
        }
    }

    #[test]
    fn shared_subspace_extremes() {
        let all = gen_shared_subspace_pair(&shared(4, vec![0, 1, 2, 3])).unwrap();
        assert_abs_diff_eq!(linear_cka_feature(&all.x, &all.y).unwrap().value, 1.0, epsilon = 1e-8);
        let none = gen_shared_subspace_pair(&shared(4, vec![])).unwrap();
        assert!(linear_cka_feature(&none.x, &none.y).unwrap().value <= 1e-8);
    }

    #[test]
    fn top_versus_bottom_sharing() {
        let top = gen_shared_subspace_pair(&shared(8, vec![0, 1])).unwrap();
        let bottom = gen_shared_subspace_pair(&shared(8, vec![6, 7])).unwrap();
        let r_top = cca(&top.x, &top.y).unwrap().r2().value;
        let r_bot = cca(&bottom.x, &bottom.y).unwrap().r2().value;
        assert_abs_diff_eq!(r_top, r_bot, epsilon = 1e-6);
        let c_top = linear_cka_feature(&top.x, &top.y).unwrap().value;
        let c_bot = linear_cka_feature(&bottom.x, &bottom.y).unwrap().value;
        assert!(c_top - c_bot >= 0.5, "{c_top} vs {c_bot}");
    }

    #[test]
    fn shared_subspace_spec_errors() {
        assert!(gen_shared_subspace_pair(&shared(4, vec![0, 4])).is_err());
        assert!(gen_shared_subspace_pair(&shared(2, vec![0, 1, 1])).is_err());
        let mut s = shared(20, vec![]);
        s.n = 30;
        assert!(gen_shared_subspace_pair(&s).is_err());
    }

    #[test]
    fn transform_identity_case() {
        let x = ActivationMatrix::from_row_major(2, 2, &[1., 0., 0., 1.]).unwrap();
        let y = ActivationMatrix::from_row_major(2, 2, &[2., 1., 1., 3.]).unwrap();
        let a = theorem1_transform(&x, &y).unwrap();
        assert!((a - y.data()).amax() <= 1e-12);
    }

    #[test]
    fn transform_wide_random() {
        let mut s = GaussianStream::new(4);
        let x = ActivationMatrix::new(s.matrix(3, 5)).unwrap();
        let y = ActivationMatrix::new(s.matrix(3, 5)).unwrap();
        let a = theorem1_transform(&x, &y).unwrap();
        assert!((x.data() * &a - y.data()).amax() <= 1e-8);
        assert_eq!(effective_rank(&sorted_svd(&a).s, 1e-12), 5);

        let same = theorem1_transform(&x, &x).unwrap();
        assert!((x.data() * same - x.data()).amax() <= 1e-10);
    }

    #[test]
    fn transform_rejects_rank_deficiency() {
        let x = ActivationMatrix::from_row_major(2, 3, &[1., 2., 3., 2., 4., 6.]).unwrap();
        let y = ActivationMatrix::from_row_major(2, 3, &[1., 0., 0., 0., 1., 0.]).unwrap();
        assert!(matches!(theorem1_transform(&x, &y), Err(Error::Degenerate(_))));
        let tall = ActivationMatrix::from_row_major(3, 2, &[1., 0., 0., 1., 1., 1.]).unwrap();
        assert!(theorem1_transform(&tall, &tall).is_err());
    }

    #[test]
    fn layer_stack_properties() {
        let spec = LayerStackSpec::new(4, 16, 20, 1, 2);
        let a = gen_layer_stack(&spec).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, gen_layer_stack(&spec).unwrap());
        for l in &a {
            let s = sorted_svd(l.data()).s;
            assert!(s[15] > 1e-8 * s[0]);
        }
        let mut bad = spec.clone();
        bad.signal_rank = 16;
        assert!(gen_layer_stack(&bad).is_err());
        bad = spec.clone();
        bad.layers = 5;
        assert!(gen_layer_stack(&bad).is_err());
        bad = spec;
        bad.p = 10;
        assert!(gen_layer_stack(&bad).is_err());
    }

    #[test]
    fn derive_seed_spreads() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }
}
