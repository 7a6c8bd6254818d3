//! Variational entropy of invariant atomic measures, its classical shift-space
//! counterpart, and the pressure functional.
//!
//! For an invariant atomic `ν = Σ_j w_j δ_{ρ_j}` only the values of `f` on the
//! branch images `S = {F_i(ρ_j)}` enter, and the entropy becomes
//!
//! `h₀(ν) = inf_c Σ_j w_j [ log Σ_i c_{s(i,j)} − Σ_i p_i(ρ_j) log c_{s(i,j)} ]`,
//!
//! a log-sum-exp minus linear function of `θ = log c`, hence convex. Both this
//! and the shift-space objective are minimized by the same projected gradient
//! descent with backtracking.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{barycenter, classical_invariant_measure, transport_gap, pushforward, AtomicMeasure};
use crate::operator::{d1, ComplexMatrix, DensityOperator};
use crate::qifs::{build_classical_diagmap, QifsSystem};
use crate::stochastic::{Orientation, StochasticMatrix};

/// Gradient tolerance used when callers do not pick one.
pub const DEFAULT_GRADIENT_TOL: f64 = 1e-10;
/// Iteration cap used when callers do not pick one.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// `Σ_g w_g log Σ_{e∈g} exp(θ_{v_e} + ℓ_e) − Σ_v b_v θ_v`.
#[derive(Debug, Clone)]
struct LogSumExpProgram {
    vars: usize,
    /// `(weight, [(variable, log multiplicity)])` per group.
    groups: Vec<(f64, Vec<(usize, f64)>)>,
    linear: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Minimum {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

impl LogSumExpProgram {
    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut f: f64 = -self.linear.iter().zip(theta).map(|(b, t)| b * t).sum::<f64>();
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            for (gv, b) in g.iter_mut().zip(&self.linear) {
                *gv = -b;
            }
        }
        for (w, entries) in &self.groups {
            if *w == 0.0 {
                continue;
            }
            let top = entries.iter().map(|&(v, l)| theta[v] + l).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = entries.iter().map(|&(v, l)| (theta[v] + l - top).exp()).sum();
            f += w * (top + z.ln());
            if let Some(g) = grad.as_deref_mut() {
                for &(v, l) in entries {
                    g[v] += w * (theta[v] + l - top).exp() / z;
                }
            }
        }
        f
    }

    /// Gradient descent with step doubling and Armijo backtracking.
    ///
    /// With `center` the gradient is projected onto `Σθ = 0`. Once objective
    /// differences fall below rounding, a step is accepted only if it does not
    /// pass the minimum along the search line (sign of the new directional derivative).
    fn minimize(&self, theta0: Vec<f64>, tol: f64, max_iter: usize, center: bool) -> Minimum {
        let n = self.vars;
        let mut theta = theta0;
        let mut grad = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial_grad = vec![0.0; n];
        let project = |g: &mut [f64]| {
            if center && !g.is_empty() {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                g.iter_mut().for_each(|x| *x -= mean);
            }
        };
        let mut value = self.eval(&theta, Some(&mut grad));
        project(&mut grad);
        let mut step: f64 = 1.0;
        let mut iterations = 0;
        loop {
            let gnorm = grad.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if gnorm <= tol || iterations >= max_iter {
                return Minimum { theta, value, iterations, gradient_norm: gnorm, converged: gnorm <= tol };
            }
            iterations += 1;
            let g2: f64 = grad.iter().map(|x| x * x).sum();
            let noise = 8.0 * f64::EPSILON * value.abs().max(1.0);
            step = (2.0 * step).min(1e12);
            let accepted = loop {
                for ((t, x), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                    *t = x - step * g;
                }
                let f = self.eval(&trial, Some(&mut trial_grad));
                project(&mut trial_grad);
                let decrease = 0.5 * step * g2;
                let ok = if decrease > noise {
                    f <= value - decrease
                } else {
                    f <= value + noise && trial_grad.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() >= 0.0
                };
                if ok {
                    break Some(f);
                }
                step *= 0.5;
                if step < 1e-30 {
                    break None;
                }
            };
            match accepted {
                Some(f) => {
                    std::mem::swap(&mut theta, &mut trial);
                    std::mem::swap(&mut grad, &mut trial_grad);
                    value = f;
                }
                None => {
                    return Minimum { theta, value, iterations, gradient_norm: gnorm, converged: false };
                }
            }
        }
    }
}

/// Atomic invariant measure together with its branch-image structure.
#[derive(Debug, Clone)]
pub struct EntropyProblem {
    system: QifsSystem,
    measure: AtomicMeasure,
    images: Vec<DensityOperator>,
    /// `image_index[j][i]`: index in `images` of `F_{i+1}(ρ_j)`, `None` for zero operators.
    image_index: Vec<Vec<Option<usize>>>,
    /// `probs[j][i] = p_{i+1}(ρ_j)`.
    probs: Vec<Vec<f64>>,
    program: LogSumExpProgram,
}

impl EntropyProblem {
    /// Requires a normalized probability family and `transport_gap(ν, Pν) ≤ tol`.
    ///
    /// Branches whose operator is identically zero have no image anywhere and
    /// are left out of the objective.
    pub fn new(system: QifsSystem, measure: AtomicMeasure, tol: f64) -> Result<Self> {
        if !system.probabilities().is_normalized() {
            return Err(Error::NotNormalized { deviation: system.probabilities().normalization_deviation() });
        }
        if measure.dim() != system.dim() {
            return Err(Error::DimensionMismatch { expected: system.dim(), found: measure.dim() });
        }
        let gap = transport_gap(&measure, &pushforward(&system, &measure)?);
        if gap > tol {
            return Err(Error::NotInvariant { gap });
        }
        let k = system.k();
        let live: Vec<bool> = system.dynamics().ops().iter().map(|v| v.frobenius_norm() > 0.0).collect();
        let mut images: Vec<DensityOperator> = Vec::new();
        let mut image_index = Vec::with_capacity(measure.len());
        let mut probs = Vec::with_capacity(measure.len());
        for atom in measure.atoms() {
            let mut idx = Vec::with_capacity(k);
            let mut row = Vec::with_capacity(k);
            for i in 1..=k {
                row.push(system.branch_prob(i, &atom.state)?);
                if !live[i - 1] {
                    idx.push(None);
                    continue;
                }
                let img = system.branch_apply(i, &atom.state)?;
                let pos = match images.iter().position(|s| d1(s, &img) <= measure.dedup_tol()) {
                    Some(p) => p,
                    None => {
                        images.push(img);
                        images.len() - 1
                    }
                };
                idx.push(Some(pos));
            }
            image_index.push(idx);
            probs.push(row);
        }
        let mut linear = vec![0.0; images.len()];
        let mut groups = Vec::with_capacity(measure.len());
        for ((atom, idx), row) in measure.atoms().iter().zip(&image_index).zip(&probs) {
            let mut counts: Vec<(usize, f64)> = Vec::new();
            for (s, p) in idx.iter().zip(row) {
                let Some(s) = *s else { continue };
                linear[s] += atom.weight * p;
                match counts.iter_mut().find(|(v, _)| *v == s) {
                    Some(entry) => entry.1 += 1.0,
                    None => counts.push((s, 1.0)),
                }
            }
            groups.push((atom.weight, counts.into_iter().map(|(v, c)| (v, c.ln())).collect()));
        }
        let program = LogSumExpProgram { vars: images.len(), groups, linear };
        Ok(Self { system, measure, images, image_index, probs, program })
    }

    pub fn system(&self) -> &QifsSystem {
        &self.system
    }

    pub fn measure(&self) -> &AtomicMeasure {
        &self.measure
    }

    /// The deduplicated image set `S`.
    pub fn images(&self) -> &[DensityOperator] {
        &self.images
    }

    /// `s(i, j)` with 0-based atom `j` and 1-based branch `i`.
    pub fn image_index(&self, j: usize, i: usize) -> Option<usize> {
        self.image_index[j][i - 1]
    }

    /// `p_i(ρ_j)` with 0-based atom `j` and 1-based branch `i`.
    pub fn branch_prob(&self, j: usize, i: usize) -> f64 {
        self.probs[j][i - 1]
    }
}

/// Objective at positive values `c` indexed like [`EntropyProblem::images`].
pub fn entropy_objective(prob: &EntropyProblem, c: &[f64]) -> Result<f64> {
    if c.len() != prob.images.len() {
        return Err(Error::DimensionMismatch { expected: prob.images.len(), found: c.len() });
    }
    if let Some((index, &value)) = c.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::NonPositiveValue { index, value });
    }
    let theta: Vec<f64> = c.iter().map(|x| x.ln()).collect();
    Ok(prob.program.eval(&theta, None))
}

/// Objective in log coordinates `θ = log c`.
pub fn entropy_objective_log(prob: &EntropyProblem, theta: &[f64]) -> Result<f64> {
    if theta.len() != prob.images.len() {
        return Err(Error::DimensionMismatch { expected: prob.images.len(), found: theta.len() });
    }
    Ok(prob.program.eval(theta, None))
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyResult {
    pub value: f64,
    /// Minimizing `c`, scaled to geometric mean one.
    pub minimizer: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Minimizes the entropy objective from `c ≡ 1`.
///
/// Stops when the gradient sup-norm in `θ` is at most `tol`; if `max_iter` is
/// reached first the best iterate is returned with `converged = false`.
pub fn entropy_atomic(prob: &EntropyProblem, tol: f64, max_iter: usize) -> Result<EntropyResult> {
    let n = prob.images.len();
    let min = prob.program.minimize(vec![0.0; n], tol, max_iter, true);
    let mean = if n > 0 { min.theta.iter().sum::<f64>() / n as f64 } else { 0.0 };
    Ok(EntropyResult {
        value: min.value,
        minimizer: min.theta.iter().map(|t| (t - mean).exp()).collect(),
        iterations: min.iterations,
        gradient_norm: min.gradient_norm,
        converged: min.converged,
    })
}

/// Stationary chain whose Markov measure is the target of the shift computation.
#[derive(Debug, Clone)]
pub struct ShiftEntropyProblem {
    p: StochasticMatrix,
    pi: Vec<f64>,
    depth: usize,
}

impl ShiftEntropyProblem {
    /// Uses the unique stationary vector of `p`.
    pub fn new(p: StochasticMatrix) -> Result<Self> {
        let pi = p.stationary()?;
        Ok(Self { p, pi, depth: 2 })
    }

    /// Uses a supplied stationary vector, checked within `tol`.
    pub fn with_stationary(p: StochasticMatrix, pi: Vec<f64>, tol: f64) -> Result<Self> {
        check_stationary(&p, &pi, tol)?;
        Ok(Self { p, pi, depth: 2 })
    }

    pub fn matrix(&self) -> &StochasticMatrix {
        &self.p
    }

    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

fn check_stationary(p: &StochasticMatrix, pi: &[f64], tol: f64) -> Result<()> {
    if pi.len() != p.size() {
        return Err(Error::DimensionMismatch { expected: p.size(), found: pi.len() });
    }
    let sum: f64 = pi.iter().sum();
    if pi.iter().any(|x| !(*x >= -tol)) || (sum - 1.0).abs() > tol {
        return Err(Error::NotStationary { residual: (sum - 1.0).abs() });
    }
    let residual = p.stationarity_residual(pi);
    if residual > tol {
        return Err(Error::NotStationary { residual });
    }
    Ok(())
}

/// `H(P) = −Σ π_i p_ij log p_ij` in the row convention, with `0 log 0 = 0`.
pub fn shannon_entropy(p: &StochasticMatrix, pi: &[f64]) -> Result<f64> {
    check_stationary(p, pi, 1e-8)?;
    let r = p.to_row();
    let m = r.size();
    let mut h = 0.0;
    for i in 0..m {
        for j in 0..m {
            let x = r.get(i, j);
            if x > 0.0 {
                h -= pi[i] * x * x.ln();
            }
        }
    }
    Ok(h)
}

/// Starting point for [`shift_entropy_with_start`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftStart {
    /// All free entries equal.
    Uniform,
    /// `a_ij = π_i p_ij / π_j` (row convention), the analytic minimizer.
    ReversedKernel,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftEntropyResult {
    pub value: f64,
    /// Minimizing `a` in the orientation of the input matrix, each column of
    /// the row-convention form scaled to sum to one.
    pub minimizer: Vec<Vec<f64>>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Depth-2 shift-space entropy from the reversed-kernel warm start.
pub fn shift_entropy(prob: &ShiftEntropyProblem, tol: f64) -> Result<ShiftEntropyResult> {
    shift_entropy_with_start(prob, tol, DEFAULT_MAX_ITER, ShiftStart::ReversedKernel)
}

/// Minimizes `Σ_i π_i log Σ_l a_li − Σ_ij π_i p_ij log a_ij` (row convention) over `a > 0`.
///
/// Entries with `π_i p_ij = 0` are held at zero. The objective is unchanged by
/// scaling any column of `a`, so the reported minimizer has unit column sums.
pub fn shift_entropy_with_start(
    prob: &ShiftEntropyProblem,
    tol: f64,
    max_iter: usize,
    start: ShiftStart,
) -> Result<ShiftEntropyResult> {
    let r = prob.p.to_row();
    let m = r.size();
    let pi = &prob.pi;
    // Variable per free entry (l, i); groups are columns i.
    let mut var_of = vec![vec![None; m]; m];
    let mut linear = Vec::new();
    let mut theta0 = Vec::new();
    for l in 0..m {
        for i in 0..m {
            let b = pi[l] * r.get(l, i);
            if b > 0.0 {
                var_of[l][i] = Some(linear.len());
                linear.push(b);
                theta0.push(match start {
                    ShiftStart::Uniform => 0.0,
                    ShiftStart::ReversedKernel => (b / pi[i]).ln(),
                });
            }
        }
    }
    let groups = (0..m)
        .map(|i| (pi[i], (0..m).filter_map(|l| var_of[l][i].map(|v| (v, 0.0))).collect::<Vec<_>>()))
        .filter(|(w, e)| *w > 0.0 && !e.is_empty())
        .collect();
    let program = LogSumExpProgram { vars: linear.len(), groups, linear };
    let min = program.minimize(theta0, tol, max_iter, false);
    let mut a = vec![vec![0.0; m]; m];
    for l in 0..m {
        for i in 0..m {
            if let Some(v) = var_of[l][i] {
                a[l][i] = min.theta[v].exp();
            }
        }
    }
    for i in 0..m {
        let col: f64 = (0..m).map(|l| a[l][i]).sum();
        if col > 0.0 {
            for row in a.iter_mut() {
                row[i] /= col;
            }
        }
    }
    let minimizer = match prob.p.orientation() {
        Orientation::Row => a,
        Orientation::Column => (0..m).map(|i| (0..m).map(|j| a[j][i]).collect()).collect(),
    };
    Ok(ShiftEntropyResult {
        value: min.value,
        minimizer,
        iterations: min.iterations,
        gradient_norm: min.gradient_norm,
        converged: min.converged,
    })
}

/// Hamiltonian and temperature.
#[derive(Debug, Clone)]
pub struct PressureProblem {
    hamiltonian: ComplexMatrix,
    temperature: f64,
}

impl PressureProblem {
    pub fn new(hamiltonian: ComplexMatrix, temperature: f64, tol: f64) -> Result<Self> {
        let dev = hamiltonian.hermitian_deviation();
        if dev > tol {
            return Err(Error::NotHermitian { deviation: dev });
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { hamiltonian: hamiltonian.hermitian_part(), temperature })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// `tr(H ρ)`.
    pub fn energy(&self, rho: &DensityOperator) -> f64 {
        self.hamiltonian.mul(rho.matrix()).trace().re
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureValue {
    pub value: f64,
    pub entropy: EntropyResult,
    pub energy: f64,
}

/// `F₀ = h₀ − tr(H ρ̄) / T` with `ρ̄` the barycenter of the problem's measure.
pub fn pressure_value(prob: &PressureProblem, eprob: &EntropyProblem) -> Result<PressureValue> {
    if prob.hamiltonian.dim() != eprob.system.dim() {
        return Err(Error::DimensionMismatch { expected: eprob.system.dim(), found: prob.hamiltonian.dim() });
    }
    let entropy = entropy_atomic(eprob, DEFAULT_GRADIENT_TOL, DEFAULT_MAX_ITER)?;
    let energy = prob.energy(&barycenter(&eprob.measure)?);
    Ok(PressureValue { value: entropy.value - energy / prob.temperature, entropy, energy })
}

/// Grid over column-stochastic `P = [[p₁₁, p₁₂], [1−p₁₁, 1−p₁₂]]` with
/// `p₁₁, p₁₂ ∈ {0, 1/(G−1), …, 1}`.
#[derive(Debug, Clone, Copy)]
pub struct PressureGrid {
    pub points_per_axis: usize,
    /// Keep every evaluated point in the result.
    pub record: bool,
}

impl PressureGrid {
    pub fn new(points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::InvalidParameter(format!("grid needs at least 2 points per axis, got {points_per_axis}")));
        }
        Ok(Self { points_per_axis, record: false })
    }

    /// Grid with the given spacing, e.g. `1e−3` for 1001 points per axis.
    pub fn with_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidParameter(format!("grid step must lie in (0, 1], got {step}")));
        }
        Self::new((1.0 / step).round() as usize + 1)
    }

    pub fn recording(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn value(&self, i: usize) -> f64 {
        i as f64 / (self.points_per_axis - 1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRecord {
    pub p11: f64,
    pub p12: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureSearch {
    pub best_pi: Vec<f64>,
    pub best_value: f64,
    pub best_p: [[f64; 2]; 2],
    pub evaluated: usize,
    /// Grid points without a unique stationary vector.
    pub skipped: usize,
    /// Points whose entropy optimization hit the iteration cap.
    pub unconverged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridRecord>>,
}

/// Pressure of the matrix-unit embedding of a 2×2 column-stochastic `P` at its invariant `η(π)`.
pub fn classical_pressure(prob: &PressureProblem, p: &StochasticMatrix) -> Result<(Vec<f64>, PressureValue)> {
    let sys = build_classical_diagmap(p)?;
    let eta = classical_invariant_measure(p)?;
    let pi = p.stationary()?;
    let eprob = EntropyProblem::new(sys, eta, 1e-9)?;
    Ok((pi, pressure_value(prob, &eprob)?))
}

/// Maximizes `F₀` over the grid; the first maximizer in row-major `(p₁₁, p₁₂)` order wins.
pub fn pressure_search(prob: &PressureProblem, grid: &PressureGrid) -> Result<PressureSearch> {
    if prob.hamiltonian.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: prob.hamiltonian.dim() });
    }
    let g = grid.points_per_axis;
    let mut best: Option<(f64, Vec<f64>, [[f64; 2]; 2])> = None;
    let mut records = grid.record.then(Vec::new);
    let (mut evaluated, mut skipped, mut unconverged) = (0, 0, 0);
    for a in 0..g {
        let p11 = grid.value(a);
        for b in 0..g {
            let p12 = grid.value(b);
            let rows = [[p11, p12], [1.0 - p11, 1.0 - p12]];
            let p = StochasticMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()], Orientation::Column)?;
            let (pi, val) = match classical_pressure(prob, &p) {
                Ok(x) => x,
                Err(Error::NonUniqueStationary { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            evaluated += 1;
            if !val.entropy.converged {
                unconverged += 1;
            }
            if let Some(r) = records.as_mut() {
                r.push(GridRecord { p11, p12, pi1: pi[0], pi2: pi[1], value: val.value });
            }
            if best.as_ref().is_none_or(|(v, _, _)| val.value > *v) {
                best = Some((val.value, pi, rows));
            }
        }
    }
    let (best_value, best_pi, best_p) =
        best.ok_or_else(|| Error::InvalidParameter("grid contains no chain with a unique stationary vector".into()))?;
    Ok(PressureSearch { best_pi, best_value, best_p, evaluated, skipped, unconverged, grid: records })
}
