#![allow(dead_code)]

use gravojcm::config::{coherent_weights, parse_config, PhysicalParams, RunConfig};
use gravojcm::oracle::{build_hamiltonian, initial_density};
use gravojcm::C64;
use nalgebra::DMatrix;

pub fn reference() -> RunConfig {
    parse_config(include_str!("../../../../configs/reference.json")).unwrap()
}

/// ρ(t) for H frozen at time t: in the eigenbasis of H, element (i, j)
/// picks up exp(-iΔE t - γ t ΔE²).
pub fn frozen_density(params: &PhysicalParams, p: f64, t: f64, n_max: usize, n_photons: usize) -> DMatrix<C64> {
    let h = build_hamiltonian(p, t, params, n_photons).to_dense();
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors;
    let e = eig.eigenvalues;
    let rho0 = initial_density(&coherent_weights(params.alpha, n_max), n_photons);
    let mut r = v.adjoint() * rho0 * &v;
    let g = params.gamma_seconds();
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            let de = e[i] - e[j];
            r[(i, j)] *= C64::new(-g * t * de * de, -de * t).exp();
        }
    }
    &v * r * v.adjoint()
}

pub fn trace_norm_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = a - b;
    d.symmetric_eigenvalues().iter().map(|x| x.abs()).sum()
}
