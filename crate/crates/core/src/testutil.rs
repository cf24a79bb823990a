//! Seeded fixtures for unit tests. Independent of `synthgen`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::reprdata::{center_columns, ActivationMatrix};

pub(crate) fn random_dmatrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0))
}

pub(crate) fn random_matrix(n: usize, p: usize, seed: u64) -> ActivationMatrix {
    ActivationMatrix::new(random_dmatrix(n, p, seed)).unwrap()
}

pub(crate) fn random_centered(n: usize, p: usize, seed: u64) -> ActivationMatrix {
    center_columns(&random_matrix(n, p, seed))
}

/// Q factor of a random square matrix.
pub(crate) fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    random_dmatrix(p, p, seed ^ 0x9e37_79b9).qr().q()
}
