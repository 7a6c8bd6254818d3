//! Dense complex matrices specialized to Hermitian and positive semidefinite
//! operators, density operators, Kraus families and the three state metrics.
//!
//! Matrices are small (N ≤ 8 in practice) and stored densely. The Hermitian
//! eigensolver and singular value decompositions are delegated to `nalgebra`.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default validation tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One entry of the matrix literal format: either a `[re, im]` pair or a bare real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryLiteral {
    Pair([f64; 2]),
    Real(f64),
}

impl From<EntryLiteral> for Complex64 {
    fn from(e: EntryLiteral) -> Self {
        match e {
            EntryLiteral::Pair([re, im]) => Complex64::new(re, im),
            EntryLiteral::Real(re) => Complex64::new(re, 0.0),
        }
    }
}

/// Row-major matrix literal: `[[[re, im], ...], ...]`.
pub type MatrixLiteral = Vec<Vec<EntryLiteral>>;

/// Square complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixLiteral", into = "MatrixLiteral")]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>())).finish()
    }
}

impl TryFrom<MatrixLiteral> for ComplexMatrix {
    type Error = Error;

    fn try_from(rows: MatrixLiteral) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::NotSquare { rows: 0, cols: 0 });
        }
        for r in &rows {
            if r.len() != n {
                return Err(Error::NotSquare { rows: n, cols: r.len() });
            }
        }
        Ok(Self(DMatrix::from_fn(n, n, |i, j| rows[i][j].into())))
    }
}

impl From<ComplexMatrix> for MatrixLiteral {
    fn from(m: ComplexMatrix) -> Self {
        m.0.row_iter()
            .map(|r| r.iter().map(|z| EntryLiteral::Pair([z.re, z.im])).collect())
            .collect()
    }
}

impl ComplexMatrix {
    /// Wraps a nalgebra matrix, rejecting non-square input.
    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        Ok(Self(m))
    }

    /// Builds from row-major complex rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let lit: MatrixLiteral = rows
            .iter()
            .map(|r| r.iter().map(|z| EntryLiteral::Pair([z.re, z.im])).collect())
            .collect();
        Self::try_from(lit)
    }

    /// Builds from row-major real rows.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let lit: MatrixLiteral =
            rows.iter().map(|r| r.iter().map(|&x| EntryLiteral::Real(x)).collect()).collect();
        Self::try_from(lit)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::from_element(n, n, ZERO))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(n, n, f))
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(values[i], 0.0) } else { ZERO }))
    }

    /// Matrix unit `E_ij` (0-based) scaled by `value`.
    pub fn unit(n: usize, i: usize, j: usize, value: f64) -> Self {
        let mut m = Self::zeros(n);
        m.0[(i, j)] = Complex64::new(value, 0.0);
        m
    }

    /// Projector `|e_i><e_i|` onto the i-th canonical basis vector (0-based).
    pub fn basis_projector(n: usize, i: usize) -> Self {
        Self::unit(n, i, i, 1.0)
    }

    /// Pauli matrices σ₁, σ₂, σ₃.
    pub fn pauli() -> [Self; 3] {
        let i = Complex64::new(0.0, 1.0);
        [
            Self(DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])),
            Self(DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO])),
            Self(DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])),
        ]
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// `V · self · V†`.
    pub fn conjugate_by(&self, v: &Self) -> Self {
        Self(&v.0 * &self.0 * v.0.adjoint())
    }

    /// Real part of `tr(V · self · V†)` without forming the product.
    pub fn sandwich_trace(&self, v: &Self) -> f64 {
        // tr(V ρ V†) = Σ_{a,c,d} V_ac ρ_cd conj(V_ad)
        let n = self.dim();
        let mut acc = 0.0;
        for a in 0..n {
            for c in 0..n {
                let vac = v.0[(a, c)];
                if vac == ZERO {
                    continue;
                }
                for d in 0..n {
                    acc += (vac * self.0[(c, d)] * v.0[(a, d)].conj()).re;
                }
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest `|m_ij - conj(m_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Row-major vectorization.
    pub fn vectorize(&self) -> Vec<Complex64> {
        self.0.transpose().iter().copied().collect()
    }

    /// Inverse of [`ComplexMatrix::vectorize`].
    pub fn from_vectorized(n: usize, v: &[Complex64]) -> Self {
        Self(DMatrix::from_fn(n, n, |i, j| v[i * n + j]))
    }
}

/// Checks Hermiticity against a tolerance scaled by the matrix magnitude.
fn ensure_hermitian(m: &ComplexMatrix, tol: f64) -> Result<()> {
    let scale = 1.0 + m.0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let deviation = m.hermitian_deviation();
    if deviation > tol * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Spectral decomposition `m = Q diag(λ) Q†` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    /// Rebuilds `Q f(Λ) Q†` for a scalar function of the eigenvalues.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let q = &self.eigenvectors.0;
        let n = q.nrows();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(f(self.eigenvalues[i]), 0.0)
            } else {
                ZERO
            }
        });
        ComplexMatrix(q * d * q.adjoint())
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(m, DEFAULT_TOL)?;
    let h = m.hermitian_part();
    let n = h.dim();
    let eig = SymmetricEigen::try_new(h.0, f64::EPSILON, 10_000)
        .ok_or(Error::NotConverged { iterations: 10_000, residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { eigenvalues, eigenvectors: ComplexMatrix(eigenvectors) })
}

/// Principal square root of a PSD matrix, using the default tolerance.
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    psd_sqrt_with_tol(m, DEFAULT_TOL)
}

/// Principal square root; eigenvalues in `[-tol·scale, 0)` are clamped to zero.
pub fn psd_sqrt_with_tol(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(m)?;
    let scale = 1.0_f64.max(eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs())));
    if let Some(&lo) = eig.eigenvalues.first() {
        if lo < -tol * scale {
            return Err(Error::NotPsd { eigenvalue: lo });
        }
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
    #[serde(skip)]
    tol: f64,
}

impl DensityOperator {
    /// Validates all three invariants and wraps the matrix.
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self> {
        validate_density(m, tol)
    }

    /// Wraps an operator known to be a state up to rounding, symmetrizing it.
    ///
    /// Used for outputs of completely positive maps whose positivity is structural.
    pub(crate) fn from_trusted(m: ComplexMatrix, tol: f64) -> Self {
        Self { matrix: m.hermitian_part(), tol }
    }

    /// Trace-normalizes and symmetrizes a trusted PSD operator.
    pub(crate) fn normalized_trusted(m: ComplexMatrix, tol: f64) -> Result<Self> {
        let tr = m.trace().re;
        if tr <= tol {
            return Err(Error::TraceCollapse { trace: tr });
        }
        Ok(Self::from_trusted(m.scale(1.0 / tr), tol))
    }

    /// The maximally mixed state `I/N`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self { matrix: ComplexMatrix::identity(n).scale(1.0 / n as f64), tol: DEFAULT_TOL }
    }

    /// Pure basis state `|i><i|` (0-based).
    pub fn basis(n: usize, i: usize) -> Self {
        Self { matrix: ComplexMatrix::basis_projector(n, i), tol: DEFAULT_TOL }
    }

    /// Diagonal state from a probability vector.
    pub fn diagonal(p: &[f64], tol: f64) -> Result<Self> {
        Self::new(ComplexMatrix::diag(p), tol)
    }

    /// Pure state `|ψ><ψ|` for a normalized vector.
    pub fn pure(psi: &[Complex64], tol: f64) -> Result<Self> {
        let n = psi.len();
        Self::new(ComplexMatrix::from_fn(n, |i, j| psi[i] * psi[j].conj()), tol)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Real diagonal entries.
    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix.get(i, i).re).collect()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        self.matrix.mul(&self.matrix).trace().re
    }
}

/// Checks Hermiticity, positivity and unit trace, reporting the violating quantity.
pub fn validate_density(m: ComplexMatrix, tol: f64) -> Result<DensityOperator> {
    if tol < 0.0 {
        return Err(Error::InvalidParameter(format!("negative tolerance {tol}")));
    }
    let deviation = m.hermitian_deviation();
    if deviation > tol {
        return Err(Error::NotHermitian { deviation });
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(Error::TraceNotOne { trace: tr.re });
    }
    let eig = eig_hermitian(&m)?;
    let lo = eig.eigenvalues[0];
    if lo < -tol {
        return Err(Error::NotPsd { eigenvalue: lo });
    }
    Ok(DensityOperator { matrix: m, tol })
}

/// The three distances on density operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// `sqrt(tr[(ρ₁−ρ₂)²])` (Hilbert–Schmidt).
    D1,
    /// `tr sqrt((ρ₁−ρ₂)²)` (trace norm).
    D2,
    /// `sqrt(2(1 − tr[(ρ₁^{1/2} ρ₂ ρ₁^{1/2})^{1/2}]))` (Bures).
    D3,
}

/// Distance between two density operators under the given metric.
pub fn distance(metric: Metric, a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    if a.matrix == b.matrix {
        return Ok(0.0);
    }
    let tol = a.tol.max(b.tol);
    let d = match metric {
        Metric::D1 => a.matrix.sub(&b.matrix).frobenius_norm(),
        Metric::D2 => {
            let eig = eig_hermitian(&a.matrix.sub(&b.matrix))?;
            eig.eigenvalues.iter().map(|l| l.abs()).sum()
        }
        Metric::D3 => {
            let ra = psd_sqrt_with_tol(&a.matrix, tol)?;
            let inner = b.matrix.conjugate_by(&ra);
            let fidelity = psd_sqrt_with_tol(&inner, tol)?.trace().re;
            let gap = 1.0 - fidelity;
            if gap < -tol {
                return Err(Error::NotPsd { eigenvalue: gap });
            }
            (2.0 * gap.max(0.0)).sqrt()
        }
    };
    Ok(d.max(0.0))
}

/// Hilbert–Schmidt distance on raw matrices, used for convergence tests.
pub fn d1(a: &DensityOperator, b: &DensityOperator) -> f64 {
    a.matrix.sub(&b.matrix).frobenius_norm()
}

/// Ordered list of Kraus-type operators with normalization flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrausFamily {
    dim: usize,
    ops: Vec<ComplexMatrix>,
    /// `Σ V_i† V_i = I` within tolerance.
    normalized: bool,
    /// `Σ V_i V_i† = I` within tolerance.
    unital: bool,
    #[serde(skip)]
    tol: f64,
}

impl KrausFamily {
    pub fn new(ops: Vec<ComplexMatrix>) -> Result<Self> {
        Self::with_tol(ops, DEFAULT_TOL)
    }

    pub fn with_tol(ops: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptyFamily)?;
        let dim = first.dim();
        if let Some(bad) = ops.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        let mut fam = Self { dim, ops, normalized: false, unital: false, tol };
        fam.normalized = fam.normalization_deviation() <= tol;
        fam.unital = fam.unitality_deviation() <= tol;
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    /// 0-based access.
    pub fn op(&self, i: usize) -> &ComplexMatrix {
        &self.ops[i]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_unital(&self) -> bool {
        self.unital
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `max |Σ V_i† V_i − I|` entrywise.
    pub fn normalization_deviation(&self) -> f64 {
        let sum = self.ops.iter().fold(ComplexMatrix::zeros(self.dim), |acc, v| acc.add(&v.adjoint().mul(v)));
        sum.max_abs_diff(&ComplexMatrix::identity(self.dim))
    }

    /// `max |Σ V_i V_i† − I|` entrywise.
    pub fn unitality_deviation(&self) -> f64 {
        let sum = self.ops.iter().fold(ComplexMatrix::zeros(self.dim), |acc, v| acc.add(&v.mul(&v.adjoint())));
        sum.max_abs_diff(&ComplexMatrix::identity(self.dim))
    }

    /// `Σ V_i ρ V_i†` on a raw matrix.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        self.ops.iter().fold(ComplexMatrix::zeros(self.dim), |acc, v| acc.add(&rho.conjugate_by(v)))
    }
}
