//! Random instance generators for unit tests.

use nalgebra::DMatrix;
use rand::Rng;

use crate::metrics::BeamformerSet;
use crate::model::ChannelMatrixSet;
use crate::C64;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    })
}

pub fn random_channels<R: Rng>(rng: &mut R, m: usize, j: usize, k: usize, q: usize, scale: f64) -> ChannelMatrixSet {
    ChannelMatrixSet {
        idr: (0..k).map(|_| random_matrix(rng, m, j, scale)).collect(),
        ehr: (0..q).map(|_| random_matrix(rng, m, j, scale)).collect(),
    }
}

pub fn random_beams<R: Rng>(rng: &mut R, k: usize, m: usize, nd: usize, scale: f64) -> BeamformerSet {
    BeamformerSet((0..k).map(|_| random_matrix(rng, m, nd, scale)).collect())
}

pub fn random_hpd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let b = random_matrix(rng, n, n, 1.0);
    &b * b.adjoint() + DMatrix::<C64>::identity(n, n).scale(0.05)
}
