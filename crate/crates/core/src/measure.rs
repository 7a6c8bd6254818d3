//! Atomic measures on the state space and the Markov operator they induce.
//!
//! The pushforward of `μ = Σ_j w_j δ_{ρ_j}` is `Σ_j Σ_i w_j p_i(ρ_j) δ_{F_i(ρ_j)}`.
//! Atoms closer than `dedup_tol` in D1 are merged so repeated pushforwards stay
//! small when branch images coincide. The chaos game samples the same Markov
//! operator along a single seeded trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{d1, ComplexMatrix, DensityOperator, DEFAULT_TOL};
use crate::qifs::QifsSystem;
use crate::stochastic::StochasticMatrix;

/// Default D1 radius under which two atoms are the same point.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-8;

/// Name of the pseudorandom generator behind [`chaos_game`].
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub weight: f64,
    #[serde(rename = "matrix")]
    pub state: DensityOperator,
}

/// Wire form of one atom: `{ "weight": w, "matrix": [[...]] }`.
#[derive(Debug, Clone, Deserialize)]
pub struct AtomLiteral {
    pub weight: f64,
    pub matrix: ComplexMatrix,
}

/// Finite weighted sum of point masses at density operators.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    #[serde(skip)]
    dedup_tol: f64,
}

impl AtomicMeasure {
    /// Validates weights (positive, summing to one within `1e−9`) and merges close atoms.
    pub fn new(atoms: Vec<(f64, DensityOperator)>) -> Result<Self> {
        Self::with_dedup_tol(atoms, DEFAULT_DEDUP_TOL)
    }

    pub fn with_dedup_tol(atoms: Vec<(f64, DensityOperator)>, dedup_tol: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure { detail: "no atoms".into() });
        }
        let dim = atoms[0].1.dim();
        let mut total = 0.0;
        let mut mu = Self { atoms: Vec::with_capacity(atoms.len()), dedup_tol };
        for (w, rho) in atoms {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure { detail: format!("weight {w} is not positive") });
            }
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: rho.dim() });
            }
            total += w;
            mu.add_mass(w, rho);
        }
        if (total - 1.0).abs() > DEFAULT_TOL {
            return Err(Error::InvalidMeasure { detail: format!("weights sum to {total}") });
        }
        Ok(mu)
    }

    /// Parses and validates the wire form.
    pub fn from_literals(atoms: Vec<AtomLiteral>, tol: f64) -> Result<Self> {
        let parsed = atoms
            .into_iter()
            .map(|a| Ok((a.weight, DensityOperator::new(a.matrix, tol)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parsed)
    }

    pub fn dirac(rho: DensityOperator) -> Self {
        Self { atoms: vec![Atom { weight: 1.0, state: rho }], dedup_tol: DEFAULT_DEDUP_TOL }
    }

    fn add_mass(&mut self, w: f64, rho: DensityOperator) {
        if let Some(a) = self.atoms.iter_mut().find(|a| d1(&a.state, &rho) <= self.dedup_tol) {
            a.weight += w;
        } else {
            self.atoms.push(Atom { weight: w, state: rho });
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].state.dim()
    }

    pub fn dedup_tol(&self) -> f64 {
        self.dedup_tol
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// `η = Σ_i π_i δ_{|i><i|}`, the invariant measure of the matrix-unit embedding of `P`.
pub fn classical_invariant_measure(p: &StochasticMatrix) -> Result<AtomicMeasure> {
    let pi = p.stationary()?;
    let m = pi.len();
    let atoms = pi
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (w, DensityOperator::basis(m, i)))
        .collect();
    AtomicMeasure::new(atoms)
}

/// Markov operator on atomic measures.
///
/// Branches with `p_i(ρ_j) ≤ tol` are dropped. With a normalized probability
/// family a total mass off by more than `100·tol` is a [`Error::MassLeak`];
/// otherwise the result is renormalized to a probability measure.
pub fn pushforward(sys: &QifsSystem, mu: &AtomicMeasure) -> Result<AtomicMeasure> {
    if mu.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: mu.dim() });
    }
    let tol = sys.tol();
    let mut out = AtomicMeasure { atoms: Vec::new(), dedup_tol: mu.dedup_tol };
    let mut total = 0.0;
    for atom in &mu.atoms {
        for i in 1..=sys.k() {
            let p = sys.branch_prob(i, &atom.state)?;
            if p <= tol {
                continue;
            }
            let w = atom.weight * p;
            total += w;
            out.add_mass(w, sys.branch_apply(i, &atom.state)?);
        }
    }
    if sys.probabilities().is_normalized() && (total - 1.0).abs() > 100.0 * tol {
        return Err(Error::MassLeak { total });
    }
    if total <= 0.0 {
        return Err(Error::MassLeak { total });
    }
    for a in out.atoms.iter_mut() {
        a.weight /= total;
    }
    Ok(out)
}

/// Greedy matching distance: atoms are paired when within the D1 merge radius,
/// and the gap is the L1 difference of paired weights plus all unpaired mass.
pub fn transport_gap(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let radius = a.dedup_tol.max(b.dedup_tol);
    let mut used = vec![false; b.atoms.len()];
    let mut gap = 0.0;
    for x in &a.atoms {
        let hit = b
            .atoms
            .iter()
            .enumerate()
            .filter(|(j, y)| !used[*j] && d1(&x.state, &y.state) <= radius)
            .min_by(|(_, y1), (_, y2)| d1(&x.state, &y1.state).total_cmp(&d1(&x.state, &y2.state)))
            .map(|(j, _)| j);
        match hit {
            Some(j) => {
                used[j] = true;
                gap += (x.weight - b.atoms[j].weight).abs();
            }
            None => gap += x.weight,
        }
    }
    gap + b.atoms.iter().zip(&used).filter(|(_, u)| !**u).map(|(y, _)| y.weight).sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub invariant: bool,
    pub transport_gap: f64,
}

/// Compares `μ` with its pushforward.
pub fn check_invariance(sys: &QifsSystem, mu: &AtomicMeasure, tol: f64) -> Result<InvarianceReport> {
    let gap = transport_gap(mu, &pushforward(sys, mu)?);
    Ok(InvarianceReport { invariant: gap <= tol, transport_gap: gap })
}

/// `Σ_j w_j ρ_j`, revalidated.
pub fn barycenter(mu: &AtomicMeasure) -> Result<DensityOperator> {
    let n = mu.dim();
    let sum = mu.atoms.iter().fold(ComplexMatrix::zeros(n), |acc, a| acc.add(&a.state.matrix().scale(a.weight)));
    DensityOperator::new(sum.hermitian_part(), 1e-8)
}

/// Seeded sample path of the Markov operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub generator: String,
    /// `states[0]` is the start; `states[t + 1] = F_{symbols[t]}(states[t])`.
    pub states: Vec<DensityOperator>,
    /// 1-based branch indices.
    pub symbols: Vec<usize>,
    pub burn_in: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Relative frequency of each symbol after the burn-in.
    pub fn symbol_frequencies(&self, k: usize) -> Vec<f64> {
        let tail = &self.symbols[self.burn_in.min(self.symbols.len())..];
        let mut counts = vec![0.0; k];
        for &s in tail {
            counts[s - 1] += 1.0;
        }
        let n = tail.len().max(1) as f64;
        counts.into_iter().map(|c| c / n).collect()
    }
}

/// Runs `steps` steps of the chaos game from `rho_init`.
///
/// Each step draws branch `i` with probability `p_i(ρ_t)` from a
/// `ChaCha8Rng` seeded with `seed`, so equal seeds give identical paths.
pub fn chaos_game(
    sys: &QifsSystem,
    rho_init: &DensityOperator,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Trajectory> {
    if rho_init.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: rho_init.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(steps + 1);
    let mut symbols = Vec::with_capacity(steps);
    let mut rho = rho_init.clone();
    let mut probs = vec![0.0; sys.k()];
    for step in 0..steps {
        for (i, p) in probs.iter_mut().enumerate() {
            *p = sys.branch_prob(i + 1, &rho)?;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::ProbabilityLeak { step, total });
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let next = sys.branch_apply(pick + 1, &rho)?;
        states.push(std::mem::replace(&mut rho, next));
        symbols.push(pick + 1);
    }
    states.push(rho);
    Ok(Trajectory { seed, generator: GENERATOR.to_string(), states, symbols, burn_in })
}

/// Mean of `states[burn_in..]`, revalidated.
pub fn empirical_barycenter(traj: &Trajectory, burn_in: usize) -> Result<DensityOperator> {
    let len = traj.states.len();
    if burn_in >= len {
        return Err(Error::EmptyWindow { burn_in, len });
    }
    let n = traj.states[0].dim();
    let window = &traj.states[burn_in..];
    let sum = window.iter().fold(ComplexMatrix::zeros(n), |acc, s| acc.add(s.matrix()));
    DensityOperator::new(sum.scale(1.0 / window.len() as f64).hermitian_part(), 1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::KrausFamily;
    use crate::qifs::{build_classical_diagmap, build_depolarizing};
    use crate::stochastic::Orientation;
    use approx::assert_abs_diff_eq;

    fn chain() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.5, 0.25], vec![0.5, 0.75]], Orientation::Column).unwrap()
    }

    #[test]
    fn construction_validates_and_merges() {
        let a = DensityOperator::basis(2, 0);
        let mu = AtomicMeasure::new(vec![(0.25, a.clone()), (0.75, a.clone())]).unwrap();
        assert_eq!(mu.len(), 1);
        assert!(AtomicMeasure::new(vec![(0.5, a.clone())]).is_err());
        assert!(AtomicMeasure::new(vec![(1.5, a.clone()), (-0.5, DensityOperator::basis(2, 1))]).is_err());
        assert!(AtomicMeasure::new(vec![]).is_err());
    }

    #[test]
    fn eta_is_invariant_for_four_map_embedding() {
        let p = chain();
        let sys = build_classical_diagmap(&p).unwrap();
        let eta = classical_invariant_measure(&p).unwrap();
        let report = check_invariance(&sys, &eta, 1e-10).unwrap();
        assert!(report.invariant, "{report:?}");
        let bar = barycenter(&eta).unwrap();
        assert!(bar.matrix().max_abs_diff(&ComplexMatrix::diag(&[1.0 / 3.0, 2.0 / 3.0])) < 1e-14);
    }

    #[test]
    fn identity_system_leaves_measures_alone() {
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![ComplexMatrix::identity(2)]).unwrap());
        let mu =
            AtomicMeasure::new(vec![(0.4, DensityOperator::basis(2, 0)), (0.6, DensityOperator::maximally_mixed(2))])
                .unwrap();
        assert_eq!(transport_gap(&mu, &pushforward(&sys, &mu).unwrap()), 0.0);
        assert!(check_invariance(&sys, &mu, 1e-12).unwrap().invariant);
    }

    #[test]
    fn depolarizing_merges_to_one_atom() {
        let sys = build_depolarizing(0.3).unwrap();
        let mixed = AtomicMeasure::dirac(DensityOperator::maximally_mixed(2));
        let out = pushforward(&sys, &mixed).unwrap();
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out.atoms()[0].weight, 1.0, epsilon = 1e-15);
        let pure = AtomicMeasure::dirac(DensityOperator::basis(2, 0));
        let report = check_invariance(&sys, &pure, 1e-9).unwrap();
        assert!(!report.invariant);
        assert_abs_diff_eq!(report.transport_gap, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn barycenter_of_single_atom() {
        let rho = DensityOperator::diagonal(&[0.2, 0.8], 1e-9).unwrap();
        assert_eq!(barycenter(&AtomicMeasure::dirac(rho.clone())).unwrap().matrix(), rho.matrix());
    }

    #[test]
    fn iterated_pushforward_reaches_eta() {
        let p = chain();
        let sys = build_classical_diagmap(&p).unwrap();
        let mut mu = AtomicMeasure::dirac(DensityOperator::maximally_mixed(2));
        for _ in 0..50 {
            mu = pushforward(&sys, &mu).unwrap();
        }
        assert!(transport_gap(&mu, &classical_invariant_measure(&p).unwrap()) <= 1e-6);
    }

    #[test]
    fn zero_steps_and_determinism() {
        let sys = build_depolarizing(0.3).unwrap();
        let rho = DensityOperator::basis(2, 0);
        let t0 = chaos_game(&sys, &rho, 0, 0, 1).unwrap();
        assert_eq!(t0.states, vec![rho.clone()]);
        let a = chaos_game(&sys, &rho, 200, 0, 42).unwrap();
        let b = chaos_game(&sys, &rho, 200, 0, 42).unwrap();
        assert_eq!(a, b);
        for t in 0..200 {
            let expect = sys.branch_apply(a.symbols[t], &a.states[t]).unwrap();
            assert!(expect.matrix().max_abs_diff(a.states[t + 1].matrix()) < 1e-15);
        }
    }

    #[test]
    fn leak_detected_for_unnormalized_weights() {
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![ComplexMatrix::identity(2).scale(0.5)]).unwrap());
        assert!(matches!(
            chaos_game(&sys, &DensityOperator::maximally_mixed(2), 3, 0, 0),
            Err(Error::ProbabilityLeak { step: 0, .. })
        ));
    }

    #[test]
    fn empirical_barycenter_window() {
        let rho = DensityOperator::diagonal(&[0.3, 0.7], 1e-9).unwrap();
        let sys = QifsSystem::homogeneous(KrausFamily::new(vec![ComplexMatrix::identity(2)]).unwrap());
        let t = chaos_game(&sys, &rho, 10, 2, 3).unwrap();
        assert!(empirical_barycenter(&t, 2).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!(matches!(empirical_barycenter(&t, 11), Err(Error::EmptyWindow { burn_in: 11, len: 11 })));
    }

    #[test]
    fn measure_wire_form() {
        let mu = classical_invariant_measure(&chain()).unwrap();
        let text = serde_json::to_string(&mu).unwrap();
        let lits: Vec<AtomLiteral> = serde_json::from_str(&text).unwrap();
        let back = AtomicMeasure::from_literals(lits, 1e-9).unwrap();
        assert_eq!(transport_gap(&mu, &back), 0.0);
    }
}
