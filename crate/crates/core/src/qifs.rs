//! Quantum iterated function systems.
//!
//! A system pairs a dynamics family `{V_i}` (branch maps
//! `F_i(ρ) = V_i ρ V_i† / tr(V_i ρ V_i†)`) with a probability family `{W_i}`
//! (weights `p_i(ρ) = tr(W_i ρ W_i†)`). The induced channel is
//! `Λ(ρ) = Σ p_i(ρ) F_i(ρ)`, which reduces to `Σ V_i ρ V_i†` when `W_i = V_i`.
//!
//! Degenerate branches: when `tr(V_i ρ V_i†) ≤ tol` the branch image is taken to
//! be `V_i V_i† / tr(V_i V_i†)`, the image of the maximally mixed state. This
//! keeps every `F_i` total, which the entropy objective needs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{d1, ComplexMatrix, DensityOperator, KrausFamily, DEFAULT_TOL};
use crate::sampling;
use crate::stochastic::{Orientation, StochasticMatrix};

/// Singular values at or below this count as zero in rank decisions.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct QifsSystem {
    dim: usize,
    dynamics: KrausFamily,
    probabilities: KrausFamily,
    homogeneous: bool,
    #[serde(skip)]
    tol: f64,
}

impl QifsSystem {
    /// General system; the homogeneity flag is recomputed entrywise.
    pub fn new(dynamics: KrausFamily, probabilities: KrausFamily) -> Result<Self> {
        let tol = dynamics.tol().max(probabilities.tol());
        if dynamics.dim() != probabilities.dim() {
            return Err(Error::DimensionMismatch { expected: dynamics.dim(), found: probabilities.dim() });
        }
        if dynamics.len() != probabilities.len() {
            return Err(Error::InvalidParameter(format!(
                "dynamics has {} operators but probabilities has {}",
                dynamics.len(),
                probabilities.len()
            )));
        }
        let homogeneous =
            dynamics.ops().iter().zip(probabilities.ops()).all(|(v, w)| v.max_abs_diff(w) <= tol);
        Ok(Self { dim: dynamics.dim(), dynamics, probabilities, homogeneous, tol })
    }

    /// Homogeneous system (`W_i = V_i`).
    pub fn homogeneous(dynamics: KrausFamily) -> Self {
        let tol = dynamics.tol();
        Self { dim: dynamics.dim(), probabilities: dynamics.clone(), dynamics, homogeneous: true, tol }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of branches `k`.
    pub fn k(&self) -> usize {
        self.dynamics.len()
    }

    pub fn dynamics(&self) -> &KrausFamily {
        &self.dynamics
    }

    pub fn probabilities(&self) -> &KrausFamily {
        &self.probabilities
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn check_branch(&self, i: usize) -> Result<usize> {
        if i == 0 || i > self.k() {
            return Err(Error::InvalidBranch { index: i, k: self.k() });
        }
        Ok(i - 1)
    }

    fn check_dim(&self, rho: &DensityOperator) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        Ok(())
    }

    /// `V_i V_i† / tr(V_i V_i†)`, the image used for zero-trace branches.
    pub fn degenerate_image(&self, i: usize) -> Result<DensityOperator> {
        let idx = self.check_branch(i)?;
        let v = self.dynamics.op(idx);
        let vv = v.mul(&v.adjoint());
        let tr = vv.trace().re;
        if tr <= 0.0 {
            return Err(Error::DegenerateBranch { index: i });
        }
        Ok(DensityOperator::from_trusted(vv.scale(1.0 / tr), self.tol))
    }

    /// Branch map `F_i(ρ)` (1-based `i`).
    pub fn branch_apply(&self, i: usize, rho: &DensityOperator) -> Result<DensityOperator> {
        let idx = self.check_branch(i)?;
        self.check_dim(rho)?;
        let img = rho.matrix().conjugate_by(self.dynamics.op(idx));
        let tr = img.trace().re;
        if tr <= self.tol {
            return self.degenerate_image(i);
        }
        Ok(DensityOperator::from_trusted(img.scale(1.0 / tr), self.tol))
    }

    /// Branch weight `p_i(ρ) = tr(W_i ρ W_i†)` (1-based `i`).
    ///
    /// Values within `tol` outside `[0, 1]` are clamped; larger excursions (from
    /// non-normalized families) are returned unchanged.
    pub fn branch_prob(&self, i: usize, rho: &DensityOperator) -> Result<f64> {
        let idx = self.check_branch(i)?;
        self.check_dim(rho)?;
        Ok(clamp_unit(rho.matrix().sandwich_trace(self.probabilities.op(idx)), self.tol))
    }

    /// Raw `Σ p_i(ρ) F_i(ρ)` before any normalization.
    pub fn lambda_raw(&self, rho: &DensityOperator) -> Result<ComplexMatrix> {
        self.check_dim(rho)?;
        if self.homogeneous {
            return Ok(self.dynamics.apply(rho.matrix()));
        }
        let mut acc = ComplexMatrix::zeros(self.dim);
        for i in 1..=self.k() {
            let p = self.branch_prob(i, rho)?;
            if p <= 0.0 {
                continue;
            }
            acc = acc.add(&self.branch_apply(i, rho)?.matrix().scale(p));
        }
        Ok(acc)
    }

    /// The channel `Λ`.
    ///
    /// With a normalized probability family the output already has unit trace;
    /// otherwise it is trace-normalized (the projective action on states).
    pub fn lambda_apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let raw = self.lambda_raw(rho)?;
        let tr = raw.trace().re;
        if tr <= self.tol {
            return Err(Error::TraceCollapse { trace: tr });
        }
        if self.probabilities.is_normalized() {
            Ok(DensityOperator::from_trusted(raw, self.tol))
        } else {
            DensityOperator::normalized_trusted(raw, self.tol)
        }
    }

    /// D1 distance between `ρ` and `Λ(ρ)` computed without renormalization.
    pub fn fixed_point_residual(&self, rho: &DensityOperator) -> Result<f64> {
        Ok(self.lambda_raw(rho)?.sub(rho.matrix()).frobenius_norm())
    }

    /// Kraus operators of `Λ` when it is linear in `ρ`.
    ///
    /// Homogeneous systems return `{V_i}`. Otherwise, when every
    /// `W_i† W_i = c_i V_i† V_i`, the channel is `Σ c_i V_i ρ V_i†` and the
    /// family `{√c_i V_i}` is returned.
    pub fn linear_kraus(&self) -> Result<KrausFamily> {
        if self.homogeneous {
            return Ok(self.dynamics.clone());
        }
        let mut ops = Vec::with_capacity(self.k());
        for (v, w) in self.dynamics.ops().iter().zip(self.probabilities.ops()) {
            let vv = v.adjoint().mul(v);
            let ww = w.adjoint().mul(w);
            let denom = vv.frobenius_norm().powi(2);
            if denom == 0.0 {
                return Err(Error::NotLinear);
            }
            // c = <VV, WW> / <VV, VV>
            let inner: f64 = vv.as_dmatrix().iter().zip(ww.as_dmatrix().iter()).map(|(a, b)| (a.conj() * b).re).sum();
            let c = inner / denom;
            if c < 0.0 || ww.max_abs_diff(&vv.scale(c)) > self.tol * (1.0 + ww.frobenius_norm()) {
                return Err(Error::NotLinear);
            }
            ops.push(v.scale(c.sqrt()));
        }
        KrausFamily::with_tol(ops, self.tol)
    }

    /// Spectral fixed point of the channel (requires a linear `Λ`).
    pub fn fixed_point_spectral(&self) -> Result<SpectralFixedPoint> {
        fixed_point_spectral(&self.linear_kraus()?)
    }

    /// Largest observed `D1(F_i ρ, F_i σ) / D1(ρ, σ)` per branch over random state pairs.
    ///
    /// A ratio below one on every branch is consistent with (but does not prove)
    /// the branch maps being contractions.
    pub fn lipschitz_estimate(&self, samples: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ratios = vec![0.0_f64; self.k()];
        for _ in 0..samples {
            let a = sampling::random_density(&mut rng, self.dim);
            let b = sampling::random_density(&mut rng, self.dim);
            let base = d1(&a, &b);
            if base <= self.tol {
                continue;
            }
            for (i, r) in ratios.iter_mut().enumerate() {
                let fa = self.branch_apply(i + 1, &a)?;
                let fb = self.branch_apply(i + 1, &b)?;
                *r = r.max(d1(&fa, &fb) / base);
            }
        }
        Ok(ratios)
    }
}

fn clamp_unit(x: f64, tol: f64) -> f64 {
    if x < 0.0 && x >= -tol {
        0.0
    } else if x > 1.0 && x <= 1.0 + tol {
        1.0
    } else {
        x
    }
}

pub(crate) fn clamp_probability(x: f64, tol: f64) -> f64 {
    clamp_unit(x, tol)
}

/// Outcome of the power iteration `ρ ← Λ(ρ)`.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointIteration {
    pub rho: DensityOperator,
    pub iterations: usize,
    /// D1 size of the final step.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates `Λ` until the D1 step is at most `tol`.
///
/// Non-convergence is reported through `converged = false` with the last iterate.
pub fn fixed_point_iterate(
    sys: &QifsSystem,
    rho0: &DensityOperator,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointIteration> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let mut rho = rho0.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = sys.lambda_apply(&rho)?;
        residual = d1(&next, &rho);
        rho = next;
        if residual <= tol {
            return Ok(FixedPointIteration { rho, iterations: it, residual, converged: true });
        }
    }
    Ok(FixedPointIteration { rho, iterations: max_iter, residual, converged: false })
}

/// Default start state, iteration cap and tolerance for [`fixed_point_iterate`].
pub fn fixed_point_iterate_default(sys: &QifsSystem) -> Result<FixedPointIteration> {
    fixed_point_iterate(sys, &DensityOperator::maximally_mixed(sys.dim()), 1e-12, 10_000)
}

/// Vectorized superoperator `Σ V_i ⊗ conj(V_i)` acting on row-major `vec(ρ)`.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    /// Underlying state dimension `N`; the matrix is `N² × N²`.
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
}

impl SuperOperator {
    pub fn from_kraus(ops: &KrausFamily) -> Self {
        let n = ops.dim();
        let mut m = DMatrix::from_element(n * n, n * n, Complex64::new(0.0, 0.0));
        for v in ops.ops() {
            m += v.kron(&v.conj()).into_dmatrix();
        }
        Self { dim: n, matrix: m }
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let v = nalgebra::DVector::from_vec(rho.vectorize());
        let out = &self.matrix * v;
        ComplexMatrix::from_vectorized(self.dim, out.as_slice())
    }

    /// Eigenvalues from a complex Schur decomposition.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let schur = self.matrix.clone().schur();
        let (_, t) = schur.unpack();
        (0..t.nrows()).map(|i| t[(i, i)]).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralFixedPoint {
    pub rho: DensityOperator,
    /// `1 − max |λ|` over eigenvalues not equal to one; `None` if every eigenvalue is one.
    pub eigenvalue_gap: Option<f64>,
    /// Dimension of the eigenvalue-1 eigenspace; above one the fixed point is not unique.
    pub multiplicity: usize,
}

/// Fixed point of `ρ ↦ Σ V_i ρ V_i†` from the eigenvalue-1 eigenspace of its superoperator.
///
/// The eigenspace is the null space of `S − I` (singular values ≤ [`RANK_TOL`]
/// relative to `‖S‖`). When it is larger than one dimension, the representative
/// is the orthogonal projection of `I/N` onto it.
pub fn fixed_point_spectral(dynamics: &KrausFamily) -> Result<SpectralFixedPoint> {
    let n = dynamics.dim();
    let tol = dynamics.tol();
    let sup = SuperOperator::from_kraus(dynamics);
    let nn = n * n;
    let shifted = &sup.matrix - DMatrix::<Complex64>::identity(nn, nn);
    let scale = 1.0_f64.max(sup.matrix.norm());
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let null_rows: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= RANK_TOL * scale).collect();

    let eigenvalues = sup.eigenvalues();
    let near_one = |z: &Complex64| (z - Complex64::new(1.0, 0.0)).norm() <= 1e-6;
    if null_rows.is_empty() {
        let distance = eigenvalues.iter().map(|z| (z - Complex64::new(1.0, 0.0)).norm()).fold(f64::INFINITY, f64::min);
        return Err(Error::NoUnitEigenvalue { distance });
    }
    let multiplicity = null_rows.len();
    let eigenvalue_gap = eigenvalues.iter().filter(|z| !near_one(z)).map(|z| 1.0 - z.norm()).reduce(f64::min);

    // Null-space basis vectors are the conjugated rows of V^T.
    let basis: Vec<Vec<Complex64>> =
        null_rows.iter().map(|&r| (0..nn).map(|c| v_t[(r, c)].conj()).collect()).collect();
    let vec_candidate: Vec<Complex64> = if multiplicity == 1 {
        basis[0].clone()
    } else {
        let target = ComplexMatrix::identity(n).scale(1.0 / n as f64).vectorize();
        let mut proj = vec![Complex64::new(0.0, 0.0); nn];
        for b in &basis {
            let coef: Complex64 = b.iter().zip(&target).map(|(x, y)| x.conj() * y).sum();
            for (p, x) in proj.iter_mut().zip(b) {
                *p += coef * x;
            }
        }
        proj
    };
    let mut m = ComplexMatrix::from_vectorized(n, &vec_candidate);
    let tr = m.trace();
    if tr.norm() <= tol {
        // Projection of I/N vanished; fall back to the first basis vector's phase-fixed form.
        m = ComplexMatrix::from_vectorized(n, &basis[0]);
    }
    let tr = m.trace();
    if tr.norm() <= tol {
        return Err(Error::TraceCollapse { trace: tr.norm() });
    }
    let m = m.scale_complex(Complex64::new(1.0, 0.0) / tr).hermitian_part();
    let rho = DensityOperator::new(m, tol.max(1e-8))?;
    Ok(SpectralFixedPoint { rho, eigenvalue_gap, multiplicity })
}

/// Dimension of the commutant `{M : M U_i = U_i M, M U_i† = U_i† M ∀i}`.
///
/// Equal to one exactly when the family has no common block structure, which for
/// unitary families with strictly positive weights makes `I/N` the unique
/// invariant state. The weights themselves are not inspected.
pub fn commutant_dimension(ops: &KrausFamily) -> usize {
    let n = ops.dim();
    let nn = n * n;
    let id = ComplexMatrix::identity(n);
    let mut blocks: Vec<DMatrix<Complex64>> = Vec::new();
    for u in ops.ops() {
        // Row-major vec: vec(MU) = (I ⊗ Uᵀ) vec(M), vec(UM) = (U ⊗ I) vec(M).
        let ut = ComplexMatrix::from_dmatrix(u.as_dmatrix().transpose()).expect("square");
        let ud = u.adjoint();
        let udt = ComplexMatrix::from_dmatrix(ud.as_dmatrix().transpose()).expect("square");
        blocks.push(id.kron(&ut).sub(&u.kron(&id)).into_dmatrix());
        blocks.push(id.kron(&udt).sub(&ud.kron(&id)).into_dmatrix());
    }
    let rows = blocks.len() * nn;
    let mut stacked = DMatrix::from_element(rows, nn, Complex64::new(0.0, 0.0));
    for (b, blk) in blocks.iter().enumerate() {
        stacked.rows_mut(b * nn, nn).copy_from(blk);
    }
    let scale = 1.0_f64.max(stacked.norm());
    let svd = stacked.svd(false, false);
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * scale).count();
    nn - rank
}

fn require_column(p: &StochasticMatrix) -> Result<()> {
    if p.orientation() != Orientation::Column {
        return Err(Error::NotStochastic {
            detail: "embedding expects a column-stochastic matrix; convert with to_column()".into(),
        });
    }
    Ok(())
}

/// Two-map embedding of a 2×2 column-stochastic chain:
/// `V₁ = [[√p₁₁, √p₁₂], [0, 0]]`, `V₂ = [[0, 0], [√p₂₁, √p₂₂]]`, `W_i = √q_i V_i`.
///
/// With `q₁ = q₂ = 1` the system is homogeneous and its fixed point is `diag(π)`.
pub fn build_classical_2map(p: &StochasticMatrix, q1: f64, q2: f64) -> Result<QifsSystem> {
    require_column(p)?;
    if p.size() != 2 {
        return Err(Error::NotStochastic { detail: format!("two-map embedding needs a 2x2 matrix, got {}", p.size()) });
    }
    if !(q1 >= 0.0 && q2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("weights must be nonnegative, got ({q1}, {q2})")));
    }
    let s = |i, j| p.get(i, j).sqrt();
    let v1 = ComplexMatrix::from_real_rows(&[vec![s(0, 0), s(0, 1)], vec![0.0, 0.0]])?;
    let v2 = ComplexMatrix::from_real_rows(&[vec![0.0, 0.0], vec![s(1, 0), s(1, 1)]])?;
    let w = vec![v1.scale(q1.sqrt()), v2.scale(q2.sqrt())];
    QifsSystem::new(KrausFamily::new(vec![v1, v2])?, KrausFamily::new(w)?)
}

/// Matrix-unit embedding of an `m × m` column-stochastic chain:
/// `k = m²` operators `V_(i,j) = √p_ij E_ij`, ordered row-major in `(i, j)`.
///
/// For `m = 2` this is the four-map system whose branch images are the basis
/// projectors independently of the input state.
pub fn build_classical_diagmap(p: &StochasticMatrix) -> Result<QifsSystem> {
    require_column(p)?;
    let m = p.size();
    let mut ops = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            ops.push(ComplexMatrix::unit(m, i, j, p.get(i, j).sqrt()));
        }
    }
    Ok(QifsSystem::homogeneous(KrausFamily::new(ops)?))
}

/// Depolarizing channel: `U = (I, σ₁, σ₂, σ₃)` with weights `(1−p, p/3, p/3, p/3)`
/// carried by `W_i = √w_i U_i`.
pub fn build_depolarizing(p: f64) -> Result<QifsSystem> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("depolarizing parameter must lie in [0, 1], got {p}")));
    }
    let [sx, sy, sz] = ComplexMatrix::pauli();
    let u = vec![ComplexMatrix::identity(2), sx, sy, sz];
    let weights = [1.0 - p, p / 3.0, p / 3.0, p / 3.0];
    let w = u.iter().zip(weights).map(|(m, wt)| m.scale(wt.sqrt())).collect();
    QifsSystem::new(KrausFamily::new(u)?, KrausFamily::new(w)?)
}

/// Unitary system with state-independent weights: `V_i = U_i`, `W_i = √w_i U_i`.
pub fn build_unitary(unitaries: Vec<ComplexMatrix>, weights: &[f64]) -> Result<QifsSystem> {
    if unitaries.len() != weights.len() {
        return Err(Error::InvalidParameter("one weight per unitary required".into()));
    }
    let w = unitaries.iter().zip(weights).map(|(u, &wt)| u.scale(wt.max(0.0).sqrt())).collect();
    QifsSystem::new(KrausFamily::new(unitaries)?, KrausFamily::new(w)?)
}

/// Default tolerance re-export for builders that accept one.
pub const fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference_chain() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.5, 0.25], vec![0.5, 0.75]], Orientation::Column).unwrap()
    }

    #[test]
    fn identity_branch_returns_input() {
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![ComplexMatrix::identity(2)]).unwrap());
        let rho = DensityOperator::diagonal(&[0.2, 0.8], 1e-9).unwrap();
        assert!(sys.branch_apply(1, &rho).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert_abs_diff_eq!(sys.branch_prob(1, &rho).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn branch_index_checked() {
        let sys = build_depolarizing(0.3).unwrap();
        let rho = DensityOperator::maximally_mixed(2);
        assert!(matches!(sys.branch_apply(0, &rho), Err(Error::InvalidBranch { .. })));
        assert!(matches!(sys.branch_prob(5, &rho), Err(Error::InvalidBranch { index: 5, k: 4 })));
    }

    #[test]
    fn four_map_images_do_not_depend_on_state() {
        let sys = build_classical_diagmap(&reference_chain()).unwrap();
        let e1 = DensityOperator::basis(2, 0);
        let rho = DensityOperator::diagonal(&[0.4, 0.6], 1e-9).unwrap();
        // V₂ = √p₁₂ E₁₂ maps anything with ρ₂₂ > 0 to |1><1|
        assert!(sys.branch_apply(2, &rho).unwrap().matrix().max_abs_diff(e1.matrix()) < 1e-15);
        // and |1><1| itself (zero trace) via the degenerate convention
        assert!(sys.branch_apply(2, &e1).unwrap().matrix().max_abs_diff(e1.matrix()) < 1e-15);
        assert_abs_diff_eq!(sys.branch_prob(1, &e1).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(sys.branch_prob(2, &e1).unwrap(), 0.0);
    }

    #[test]
    fn zero_operator_is_degenerate() {
        let sys = QifsSystem::homogeneous(
            KrausFamily::new(vec![ComplexMatrix::identity(2), ComplexMatrix::zeros(2)]).unwrap(),
        );
        let rho = DensityOperator::maximally_mixed(2);
        assert!(matches!(sys.branch_apply(2, &rho), Err(Error::DegenerateBranch { index: 2 })));
    }

    #[test]
    fn depolarizing_lambda_matches_closed_form() {
        let sys = build_depolarizing(0.3).unwrap();
        assert!(!sys.is_homogeneous());
        let rho = DensityOperator::diagonal(&[0.9, 0.1], 1e-9).unwrap();
        let out = sys.lambda_apply(&rho).unwrap();
        let [sx, sy, sz] = ComplexMatrix::pauli();
        let expected = rho
            .matrix()
            .scale(0.7)
            .add(&rho.matrix().conjugate_by(&sx).add(&rho.matrix().conjugate_by(&sy)).add(&rho.matrix().conjugate_by(&sz)).scale(0.1));
        assert!(out.matrix().max_abs_diff(&expected) < 1e-14);
        let mixed = DensityOperator::maximally_mixed(2);
        assert!(sys.lambda_apply(&mixed).unwrap().matrix().max_abs_diff(mixed.matrix()) < 1e-15);
    }

    #[test]
    fn depolarizing_zero_is_identity_channel() {
        let sys = build_depolarizing(0.0).unwrap();
        let rho = DensityOperator::diagonal(&[0.9, 0.1], 1e-9).unwrap();
        assert!(sys.lambda_apply(&rho).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!(build_depolarizing(1.5).is_err());
    }

    #[test]
    fn unitary_pair_fixes_maximally_mixed() {
        let sys = build_unitary(vec![ComplexMatrix::pauli()[0].clone(), ComplexMatrix::pauli()[1].clone()], &[0.5, 0.5])
            .unwrap();
        let mixed = DensityOperator::maximally_mixed(2);
        assert!(sys.lambda_apply(&mixed).unwrap().matrix().max_abs_diff(mixed.matrix()) < 1e-15);
    }

    #[test]
    fn normalized_diagonal_pair_has_stated_fixed_point() {
        let v1 = ComplexMatrix::diag(&[(1.0f64 / 3.0).sqrt(), 0.0]);
        let v2 = ComplexMatrix::diag(&[(2.0f64 / 3.0).sqrt(), 1.0]);
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![v1, v2]).unwrap());
        let rho = DensityOperator::diagonal(&[0.25, 0.75], 1e-9).unwrap();
        assert!(sys.lambda_apply(&rho).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);
    }

    #[test]
    fn iterate_depolarizing_from_pure() {
        let sys = build_depolarizing(0.3).unwrap();
        let fp = fixed_point_iterate(&sys, &DensityOperator::basis(2, 0), 1e-13, 10_000).unwrap();
        assert!(fp.converged);
        assert!(fp.rho.matrix().max_abs_diff(DensityOperator::maximally_mixed(2).matrix()) < 1e-10);
    }

    #[test]
    fn iterate_classical_embedding() {
        let sys = build_classical_2map(&reference_chain(), 1.0, 1.0).unwrap();
        assert!(sys.is_homogeneous());
        let fp = fixed_point_iterate_default(&sys).unwrap();
        assert!(fp.converged);
        assert!(fp.rho.matrix().max_abs_diff(&ComplexMatrix::diag(&[1.0 / 3.0, 2.0 / 3.0])) < 1e-11);
    }

    #[test]
    fn iterate_identity_stops_after_one_step() {
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![ComplexMatrix::identity(2)]).unwrap());
        let rho = DensityOperator::diagonal(&[0.3, 0.7], 1e-9).unwrap();
        let fp = fixed_point_iterate(&sys, &rho, 1e-12, 5).unwrap();
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.residual, 0.0);
        assert!(matches!(fixed_point_iterate(&sys, &rho, 1e-12, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn iterate_flags_non_convergence() {
        // σ₁ alone swaps |1> and |2>: a period-two orbit.
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![ComplexMatrix::pauli()[0].clone()]).unwrap());
        let fp = fixed_point_iterate(&sys, &DensityOperator::basis(2, 0), 1e-12, 7).unwrap();
        assert!(!fp.converged);
        assert_eq!(fp.iterations, 7);
    }

    #[test]
    fn spectral_depolarizing() {
        let sys = build_depolarizing(0.3).unwrap();
        let fp = sys.fixed_point_spectral().unwrap();
        assert_eq!(fp.multiplicity, 1);
        assert!(fp.rho.matrix().max_abs_diff(DensityOperator::maximally_mixed(2).matrix()) < 1e-12);
        // Pauli channel eigenvalues 1 and 1 − 4p/3 (threefold).
        assert_abs_diff_eq!(fp.eigenvalue_gap.unwrap(), 0.4, epsilon = 1e-10);
    }

    #[test]
    fn spectral_classical_embedding_matches_closed_form() {
        let sys = build_classical_2map(&reference_chain(), 1.0, 1.0).unwrap();
        let fp = fixed_point_spectral(sys.dynamics()).unwrap();
        assert_eq!(fp.multiplicity, 1);
        assert!(fp.rho.matrix().max_abs_diff(&ComplexMatrix::diag(&[1.0 / 3.0, 2.0 / 3.0])) < 1e-12);
    }

    #[test]
    fn spectral_identity_reports_full_multiplicity() {
        let fp = fixed_point_spectral(&KrausFamily::new(vec![ComplexMatrix::identity(2)]).unwrap()).unwrap();
        assert_eq!(fp.multiplicity, 4);
        assert!(fp.eigenvalue_gap.is_none());
        assert!(fp.rho.matrix().max_abs_diff(DensityOperator::maximally_mixed(2).matrix()) < 1e-12);
    }

    #[test]
    fn spectral_absorbing_chain_has_two_fixed_states() {
        let p = StochasticMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], Orientation::Column).unwrap();
        let sys = build_classical_2map(&p, 1.0, 1.0).unwrap();
        assert!(sys.dynamics().op(0).max_abs_diff(&ComplexMatrix::diag(&[1.0, 0.0])) < 1e-15);
        assert!(sys.dynamics().op(1).max_abs_diff(&ComplexMatrix::unit(2, 1, 1, 1.0)) < 1e-15);
        let fp = fixed_point_spectral(sys.dynamics()).unwrap();
        assert_eq!(fp.multiplicity, 2);
    }

    #[test]
    fn spectral_without_unit_eigenvalue() {
        let fam = KrausFamily::new(vec![ComplexMatrix::identity(2).scale(0.5)]).unwrap();
        assert!(matches!(fixed_point_spectral(&fam), Err(Error::NoUnitEigenvalue { .. })));
    }

    #[test]
    fn weighted_two_map_is_linear_with_scaled_kraus() {
        let sys = build_classical_2map(&reference_chain(), 0.5, 2.0).unwrap();
        assert!(!sys.is_homogeneous());
        let lin = sys.linear_kraus().unwrap();
        assert!(lin.op(0).max_abs_diff(&sys.dynamics().op(0).scale(0.5f64.sqrt())) < 1e-12);
        assert!(lin.op(1).max_abs_diff(&sys.dynamics().op(1).scale(2f64.sqrt())) < 1e-12);
    }

    #[test]
    fn nonlinear_system_rejected_by_spectral_route() {
        let v = KrausFamily::new(vec![ComplexMatrix::diag(&[1.0, 0.0]), ComplexMatrix::diag(&[0.0, 1.0])]).unwrap();
        let s = 0.5f64.sqrt();
        let w = KrausFamily::new(vec![ComplexMatrix::identity(2).scale(s), ComplexMatrix::identity(2).scale(s)]).unwrap();
        let sys = QifsSystem::new(v, w).unwrap();
        assert!(matches!(sys.linear_kraus(), Err(Error::NotLinear)));
    }

    #[test]
    fn diagmap_structure() {
        let sys = build_classical_diagmap(&reference_chain()).unwrap();
        assert_eq!(sys.k(), 4);
        assert!(sys.dynamics().is_normalized());
        assert!(sys.dynamics().op(1).max_abs_diff(&ComplexMatrix::unit(2, 0, 1, 0.5)) < 1e-15);
        assert!(sys.dynamics().op(2).max_abs_diff(&ComplexMatrix::unit(2, 1, 0, 0.5f64.sqrt())) < 1e-15);
        let row = reference_chain().to_row();
        assert!(build_classical_diagmap(&row).is_err());
    }

    #[test]
    fn commutant_examples() {
        let [sx, sy, sz] = ComplexMatrix::pauli();
        let paulis = KrausFamily::new(vec![ComplexMatrix::identity(2), sx, sy, sz.clone()]).unwrap();
        assert_eq!(commutant_dimension(&paulis), 1);
        assert_eq!(commutant_dimension(&KrausFamily::new(vec![ComplexMatrix::identity(2)]).unwrap()), 4);
        assert_eq!(commutant_dimension(&KrausFamily::new(vec![sz]).unwrap()), 2);
    }

    #[test]
    fn lipschitz_of_contracting_pair() {
        // G_i(ρ) = (ρ + 2ρ_i)/3 has constant 1/3; realized here only for the identity branch bound.
        let sys = build_depolarizing(0.3).unwrap();
        let ratios = sys.lipschitz_estimate(50, 7).unwrap();
        // Unitary branches are isometries in D1.
        for r in ratios {
            assert_abs_diff_eq!(r, 1.0, epsilon = 1e-9);
        }
    }
}
