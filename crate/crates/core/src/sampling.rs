//! Random generators for states, channels and chains.
//!
//! Used by the Lipschitz diagnostic and by the property suites. All generators
//! take the RNG explicitly so runs are reproducible from a seed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::operator::{ComplexMatrix, DensityOperator, KrausFamily, DEFAULT_TOL};
use crate::stochastic::{Orientation, StochasticMatrix};

/// Standard normal via Box–Muller.
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(normal(rng), normal(rng))
}

/// `rows × cols` matrix of i.i.d. complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = ginibre(rng, n, n);
    ComplexMatrix::from_dmatrix(g.clone() + g.adjoint()).expect("square")
}

/// Random PSD matrix `G G†`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = ginibre(rng, n, n);
    ComplexMatrix::from_dmatrix(&g * g.adjoint()).expect("square")
}

/// Random full-rank density operator (Hilbert–Schmidt ensemble).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityOperator {
    let m = random_psd(rng, n);
    let tr = m.trace().re;
    DensityOperator::new(m.scale(1.0 / tr).hermitian_part(), DEFAULT_TOL).expect("valid random state")
}

/// Random unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n).map(|_| complex_normal(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Random pure state.
pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityOperator {
    DensityOperator::pure(&random_unit_vector(rng, n), DEFAULT_TOL).expect("valid pure state")
}

/// Random `rows × cols` isometry (`Q†Q = I`) via QR of a Ginibre matrix.
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let qr = ginibre(rng, rows, cols).qr();
    qr.q()
}

/// Random unitary.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_dmatrix(random_isometry(rng, n, n)).expect("square")
}

/// Random trace-preserving Kraus family (`Σ V†V = I`) from a stacked isometry.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> KrausFamily {
    let iso = random_isometry(rng, n * k, n);
    let ops = (0..k)
        .map(|b| ComplexMatrix::from_dmatrix(iso.rows(b * n, n).into_owned()).expect("square"))
        .collect();
    KrausFamily::new(ops).expect("nonempty")
}

/// Random trace-preserving family of rank-one operators `V_i = |a_i><b_i|`.
///
/// Every branch image `V_i ρ V_i† / tr(·)` is the fixed pure state `|a_i><a_i|`,
/// so the induced Markov operator keeps atomic measures on a finite support.
pub fn random_rank_one_kraus<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> KrausFamily {
    assert!(k >= n, "need k >= n for Σ |b_i><b_i| = I");
    let iso = random_isometry(rng, k, n);
    let ops = (0..k)
        .map(|i| {
            let a = random_unit_vector(rng, n);
            // <b_i| = row i of the isometry
            ComplexMatrix::from_fn(n, |r, c| a[r] * iso[(i, c)])
        })
        .collect();
    KrausFamily::new(ops).expect("nonempty")
}

/// Random probability vector with entries bounded away from zero.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random stochastic matrix in the given orientation.
pub fn random_stochastic<R: Rng + ?Sized>(rng: &mut R, m: usize, orientation: Orientation) -> StochasticMatrix {
    let lines: Vec<Vec<f64>> = (0..m).map(|_| random_simplex(rng, m)).collect();
    let entries = DMatrix::from_fn(m, m, |i, j| match orientation {
        Orientation::Row => lines[i][j],
        Orientation::Column => lines[j][i],
    });
    StochasticMatrix::new(entries, orientation).expect("stochastic by construction")
}
