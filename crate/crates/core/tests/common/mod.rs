#![allow(dead_code)]

use mzvms::meshproj::{Discretization, Mesh1D, ModalField, ScaleSplit};
use mzvms::operators::{FluxKind, LinearOperator1D, Physics, Scheme, SemiDiscreteProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dg_advection(n_elem: usize, p: usize, n: usize, c: f64, flux: FluxKind) -> SemiDiscreteProblem<f64> {
    let mesh = Mesh1D::new(0.0, 1.0, n_elem, true).unwrap();
    let disc = Discretization::new(mesh, ScaleSplit::legendre(p, n).unwrap()).unwrap();
    let op = LinearOperator1D::new(c, 0.0).unwrap();
    SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::Dg(flux)).unwrap()
}

pub fn dg_burgers(n_elem: usize, p: usize, n: usize, flux: FluxKind) -> SemiDiscreteProblem<f64> {
    let mesh = Mesh1D::new(0.0, 1.0, n_elem, true).unwrap();
    let disc = Discretization::new(mesh, ScaleSplit::legendre(p, n).unwrap()).unwrap();
    SemiDiscreteProblem::new(disc, Physics::Burgers { nu: 0.0 }, Scheme::Dg(flux)).unwrap()
}

pub fn spectral_burgers(k_coarse: usize, k_full: usize, nu: f64) -> SemiDiscreteProblem<f64> {
    let mesh = Mesh1D::new(0.0, 2.0 * std::f64::consts::PI, 1, true).unwrap();
    let disc = Discretization::new(mesh, ScaleSplit::fourier(k_coarse, k_full).unwrap()).unwrap();
    SemiDiscreteProblem::new(disc, Physics::Burgers { nu }, Scheme::Spectral).unwrap()
}

pub fn spectral_advection(k_coarse: usize, k_full: usize, c: f64, nu: f64) -> SemiDiscreteProblem<f64> {
    let mesh = Mesh1D::new(0.0, 2.0 * std::f64::consts::PI, 1, true).unwrap();
    let disc = Discretization::new(mesh, ScaleSplit::fourier(k_coarse, k_full).unwrap()).unwrap();
    let op = LinearOperator1D::new(c, nu).unwrap();
    SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::Spectral).unwrap()
}

/// Coarse state with coefficients uniform in `[-1, 1] / (j + 1)`.
pub fn random_coarse(problem: &SemiDiscreteProblem<f64>, rng: &mut ChaCha8Rng) -> ModalField<f64> {
    let mut a = problem.coarse_zero();
    for k in 0..a.n_elem {
        for j in a.modes.clone() {
            a.set(k, j, rng.gen_range(-1.0..1.0) / (j as f64 + 1.0));
        }
    }
    a
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
