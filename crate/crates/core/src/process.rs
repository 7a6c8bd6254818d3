//! Cylinder measures of the quantum stochastic process driven by a system.
//!
//! For a homogeneous system the measure of the cylinder `x₁ … x_n` is
//! `tr(V_{x_n} ⋯ V_{x_1} ρ₀ V_{x_1}† ⋯ V_{x_n}†)`. For a nonhomogeneous one it is
//! the product `Π_t p_{x_t}(σ_t)` along the normalized trajectory
//! `σ₁ = ρ₀`, `σ_{t+1} = F_{x_t}(σ_t)`, which is the telescoping ratio of
//! `W`-traces over `V`-traces.
//!
//! Words are 1-based to match the usual symbol notation. Word tables are flat
//! vectors in lexicographic order: the word `x₁ … x_n` sits at index
//! `Σ (x_t − 1) k^{n−t}`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{d1, ComplexMatrix, DensityOperator};
use crate::qifs::{clamp_probability, QifsSystem};

/// Cap on the number of words any enumeration may visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Nonempty word over `{1, …, k}`; the wire form is `"1,2,1"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CylinderWord(Vec<usize>);

impl CylinderWord {
    pub fn new(symbols: Vec<usize>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::EmptyWord);
        }
        if let Some(&s) = symbols.iter().find(|&&s| s == 0) {
            return Err(Error::SymbolOutOfRange { symbol: s, k: 0 });
        }
        Ok(Self(symbols))
    }

    /// Validates against the alphabet size as well.
    pub fn with_alphabet(symbols: Vec<usize>, k: usize) -> Result<Self> {
        let w = Self::new(symbols)?;
        w.check_alphabet(k)?;
        Ok(w)
    }

    pub fn check_alphabet(&self, k: usize) -> Result<()> {
        match self.0.iter().find(|&&s| s == 0 || s > k) {
            Some(&symbol) => Err(Error::SymbolOutOfRange { symbol, k }),
            None => Ok(()),
        }
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_prefix_of(&self, other: &Self) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Position in the lexicographic word table of its length.
    pub fn table_index(&self, k: usize) -> usize {
        self.0.iter().fold(0, |acc, &s| acc * k + (s - 1))
    }

    /// Inverse of [`table_index`](Self::table_index).
    pub fn from_table_index(mut index: usize, len: usize, k: usize) -> Self {
        let mut symbols = vec![0; len];
        for slot in symbols.iter_mut().rev() {
            *slot = index % k + 1;
            index /= k;
        }
        Self(symbols)
    }
}

impl fmt::Display for CylinderWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for CylinderWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            return Err(Error::EmptyWord);
        }
        let symbols = s
            .split(',')
            .map(str::trim)
            .map(|t| t.parse::<usize>().map_err(|_| Error::InvalidParameter(format!("bad symbol {t:?} in word {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(symbols)
    }
}

impl TryFrom<String> for CylinderWord {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CylinderWord> for String {
    fn from(w: CylinderWord) -> Self {
        w.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Homogeneous,
    Nonhomogeneous,
}

/// System, pre-measurement state and the choice of cylinder measure.
#[derive(Debug, Clone)]
pub struct ProcessSpec {
    system: QifsSystem,
    rho0: DensityOperator,
    kind: ProcessKind,
    strict: bool,
}

impl ProcessSpec {
    pub fn new(system: QifsSystem, rho0: DensityOperator, kind: ProcessKind) -> Result<Self> {
        if rho0.dim() != system.dim() {
            return Err(Error::DimensionMismatch { expected: system.dim(), found: rho0.dim() });
        }
        if kind == ProcessKind::Homogeneous && !system.is_homogeneous() {
            return Err(Error::NotHomogeneous);
        }
        Ok(Self { system, rho0, kind, strict: false })
    }

    /// Homogeneous systems get the homogeneous measure, others the nonhomogeneous one.
    pub fn natural(system: QifsSystem, rho0: DensityOperator) -> Result<Self> {
        let kind = if system.is_homogeneous() { ProcessKind::Homogeneous } else { ProcessKind::Nonhomogeneous };
        Self::new(system, rho0, kind)
    }

    /// In strict mode the nonhomogeneous measure refuses a non-normalized `{W_i}`.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn system(&self) -> &QifsSystem {
        &self.system
    }

    pub fn rho0(&self) -> &DensityOperator {
        &self.rho0
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.system.k()
    }

    fn tol(&self) -> f64 {
        self.system.tol()
    }

    fn root(&self) -> Result<Node> {
        match self.kind {
            ProcessKind::Homogeneous => Ok(Node::Hom(self.rho0.matrix().clone())),
            ProcessKind::Nonhomogeneous => {
                if self.strict && !self.system.probabilities().is_normalized() {
                    return Err(Error::NormalizationViolated {
                        deviation: self.system.probabilities().normalization_deviation(),
                    });
                }
                Ok(Node::Non { sigma: self.rho0.clone(), mass: 1.0 })
            }
        }
    }

    /// D1 residual `‖Λ(ρ₀) − ρ₀‖`.
    pub fn invariance_residual(&self) -> Result<f64> {
        Ok(d1(&self.system.lambda_apply(&self.rho0)?, &self.rho0))
    }

    fn require_invariant(&self, tol: f64) -> Result<()> {
        let residual = self.invariance_residual()?;
        if residual > tol {
            return Err(Error::RhoNotInvariant { residual });
        }
        Ok(())
    }
}

/// Running state after a prefix.
#[derive(Debug, Clone)]
enum Node {
    /// `V_w ρ₀ V_w†`; the mass is its trace.
    Hom(ComplexMatrix),
    /// Normalized state `σ` after the prefix together with the prefix mass.
    Non { sigma: DensityOperator, mass: f64 },
}

impl Node {
    fn mass(&self) -> f64 {
        match self {
            Node::Hom(m) => m.trace().re,
            Node::Non { mass, .. } => *mass,
        }
    }

    fn extend(&self, sys: &QifsSystem, symbol: usize) -> Result<Node> {
        match self {
            Node::Hom(m) => Ok(Node::Hom(m.conjugate_by(sys.dynamics().op(symbol - 1)))),
            Node::Non { sigma, mass } => {
                let p = sys.branch_prob(symbol, sigma)?;
                let next_mass = mass * p;
                // Zero-mass branches never contribute; skip the (possibly degenerate) image.
                if next_mass == 0.0 {
                    return Ok(Node::Non { sigma: sigma.clone(), mass: 0.0 });
                }
                Ok(Node::Non { sigma: sys.branch_apply(symbol, sigma)?, mass: next_mass })
            }
        }
    }
}

fn check_enumeration(k: usize, len: usize) -> Result<()> {
    let terms = (k as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if terms > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { terms, limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

fn walk(spec: &ProcessSpec, symbols: &[usize]) -> Result<Node> {
    let k = spec.k();
    let mut node = spec.root()?;
    for &s in symbols {
        if s == 0 || s > k {
            return Err(Error::SymbolOutOfRange { symbol: s, k });
        }
        node = node.extend(&spec.system, s)?;
    }
    Ok(node)
}

/// Cylinder measure using the kind stored in the process.
pub fn measure(spec: &ProcessSpec, w: &CylinderWord) -> Result<f64> {
    w.check_alphabet(spec.k())?;
    Ok(clamp_probability(walk(spec, w.symbols())?.mass(), spec.tol()))
}

/// Nested-product cylinder measure; requires a homogeneous spec.
pub fn measure_homogeneous(spec: &ProcessSpec, w: &CylinderWord) -> Result<f64> {
    if spec.kind != ProcessKind::Homogeneous {
        return Err(Error::NotHomogeneous);
    }
    measure(spec, w)
}

/// Telescoping-product cylinder measure.
///
/// Accepts homogeneous systems too; on them it agrees with the nested product.
pub fn measure_nonhomogeneous(spec: &ProcessSpec, w: &CylinderWord) -> Result<f64> {
    let spec = ProcessSpec { kind: ProcessKind::Nonhomogeneous, ..spec.clone() };
    measure(&spec, w)
}

/// Depth-first enumeration from `node`, writing the mass of every word of each
/// length `1..=tables.len()` into the matching lexicographic table.
fn fill_tables(sys: &QifsSystem, node: &Node, index: usize, depth: usize, tables: &mut [Vec<f64>]) -> Result<()> {
    if depth == tables.len() {
        return Ok(());
    }
    let k = sys.k();
    for s in 1..=k {
        let child = node.extend(sys, s)?;
        let idx = index * k + (s - 1);
        tables[depth][idx] = child.mass();
        fill_tables(sys, &child, idx, depth + 1, tables)?;
    }
    Ok(())
}

fn tables_from(spec: &ProcessSpec, node: &Node, max_len: usize) -> Result<Vec<Vec<f64>>> {
    let k = spec.k();
    check_enumeration(k, max_len)?;
    let mut tables: Vec<Vec<f64>> = (1..=max_len).map(|n| vec![0.0; k.pow(n as u32)]).collect();
    fill_tables(&spec.system, node, 0, 0, &mut tables)?;
    let tol = spec.tol();
    for t in tables.iter_mut() {
        for x in t.iter_mut() {
            *x = clamp_probability(*x, tol);
        }
    }
    Ok(tables)
}

/// Measures of all words of lengths `1..=max_len`; entry `n − 1` is the length-`n` table.
pub fn word_tables(spec: &ProcessSpec, max_len: usize) -> Result<Vec<Vec<f64>>> {
    tables_from(spec, &spec.root()?, max_len)
}

/// Measures of all words of length `n` in lexicographic order.
pub fn word_table(spec: &ProcessSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyWord);
    }
    Ok(word_tables(spec, n)?.pop().expect("n >= 1"))
}

/// Sums a length-`n` table over its first `drop` symbols, giving the joint law of the last `n − drop`.
pub fn marginalize_prefix(table: &[f64], k: usize, n: usize, drop: usize) -> Vec<f64> {
    let keep = k.pow((n - drop) as u32);
    let mut out = vec![0.0; keep];
    for (idx, &x) in table.iter().enumerate() {
        out[idx % keep] += x;
    }
    out
}

/// `μ(w) / μ(given)` for a prefix `given` of `w` (equal words give 1).
pub fn conditional_prob(spec: &ProcessSpec, w: &CylinderWord, given: &CylinderWord) -> Result<f64> {
    if !given.is_prefix_of(w) {
        return Err(Error::NotAPrefix);
    }
    let denom = measure(spec, given)?;
    if denom <= spec.tol() {
        return Err(Error::ZeroConditioningEvent { measure: denom });
    }
    if given.len() == w.len() {
        return Ok(1.0);
    }
    Ok(measure(spec, w)? / denom)
}

/// Word pair realizing the worst gap of a check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub word: CylinderWord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub given: Option<CylinderWord>,
}

/// Outcome of a property check over enumerated words.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub holds: bool,
    pub max_gap: f64,
    pub witness: Option<Witness>,
    /// Conditioning events at or below the tolerance that were not compared.
    pub skipped: usize,
    pub parameters: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<Vec<Vec<Option<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<Vec<Option<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0_invariant: Option<bool>,
}

impl CheckReport {
    fn new(check: &str, params: &[(&str, f64)]) -> Self {
        Self {
            check: check.to_string(),
            holds: true,
            max_gap: 0.0,
            witness: None,
            skipped: 0,
            parameters: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lhs: None,
            rhs: None,
            rho0_invariant: None,
        }
    }

    fn record(&mut self, gap: f64, witness: impl FnOnce() -> Witness) {
        if gap > self.max_gap || (self.witness.is_none() && gap.is_nan()) {
            self.max_gap = gap;
            self.witness = Some(witness());
        }
    }

    fn finish(mut self, tol: f64) -> Self {
        self.holds = self.max_gap <= tol;
        self
    }
}

/// Compares `μ(X_n | X_1 … X_{n−1})` with `μ(X_n | X_{n−1})` for `3 ≤ n ≤ depth`.
///
/// The one-step conditional uses the marginal law of `(X_{n−1}, X_n)` summed
/// over all earlier symbols. `holds` is the Markov verdict and `max_gap` the
/// worst violation.
pub fn check_markov(spec: &ProcessSpec, depth: usize, tol: f64) -> Result<CheckReport> {
    if depth < 3 {
        return Err(Error::InvalidParameter(format!("Markov check needs depth >= 3, got {depth}")));
    }
    let k = spec.k();
    let tables = word_tables(spec, depth)?;
    let mut report = CheckReport::new("markov", &[("depth", depth as f64), ("tol", tol)]);
    for n in 3..=depth {
        let full = &tables[n - 1];
        let prefix = &tables[n - 2];
        let pair = marginalize_prefix(full, k, n, n - 2);
        let single = marginalize_prefix(prefix, k, n - 1, n - 2);
        for (idx, &mw) in full.iter().enumerate() {
            let pidx = idx / k;
            let mp = prefix[pidx];
            let a = pidx % k;
            let b = idx % k;
            if mp <= tol || single[a] <= tol {
                if idx % k == 0 {
                    report.skipped += 1;
                }
                continue;
            }
            let gap = (mw / mp - pair[a * k + b] / single[a]).abs();
            report.record(gap, || Witness {
                word: CylinderWord::from_table_index(idx, n, k),
                given: Some(CylinderWord::from_table_index(pidx, n - 1, k)),
            });
        }
    }
    Ok(report.finish(tol))
}

/// Compares the law of `(X_m, …, X_{m+n−1})` with that of `(X_1, …, X_n)`.
///
/// Requires `ρ₀` to be a fixed point of `Λ` within `tol`.
pub fn check_stationarity(spec: &ProcessSpec, m: usize, n: usize, tol: f64) -> Result<CheckReport> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("shift and window length must be at least 1".into()));
    }
    spec.require_invariant(tol)?;
    let k = spec.k();
    check_enumeration(k, m - 1 + n)?;
    let tables = word_tables(spec, m - 1 + n)?;
    let base = &tables[n - 1];
    let shifted = marginalize_prefix(&tables[m + n - 2], k, m - 1 + n, m - 1);
    let mut report = CheckReport::new("stationarity", &[("m", m as f64), ("n", n as f64), ("tol", tol)]);
    for (idx, (a, b)) in base.iter().zip(&shifted).enumerate() {
        report.record((a - b).abs(), || Witness { word: CylinderWord::from_table_index(idx, n, k), given: None });
    }
    Ok(report.finish(tol))
}

/// Checks that the measures of all words of length `n` sum to one within `1e−9·kⁿ`.
pub fn check_partition(spec: &ProcessSpec, n: usize) -> Result<CheckReport> {
    let table = word_table(spec, n)?;
    let total: f64 = table.iter().sum();
    let bound = 1e-9 * table.len() as f64;
    let mut report = CheckReport::new("partition", &[("n", n as f64), ("total", total), ("tol", bound)]);
    report.max_gap = (total - 1.0).abs();
    Ok(report.finish(bound))
}

fn check_symbol(s: usize, k: usize) -> Result<()> {
    if s == 0 || s > k {
        return Err(Error::SymbolOutOfRange { symbol: s, k });
    }
    Ok(())
}

/// Row `i` of the `n`-step transition matrix anchored at time 1:
/// `μ(X₁ = i, X_{1+n} = j) / μ(X₁ = i)` for every `j`.
///
/// No invariance requirement; see [`transition_prob`] for the checked form.
pub fn transition_row_from_origin(spec: &ProcessSpec, i: usize, n: usize) -> Result<Vec<f64>> {
    let k = spec.k();
    check_symbol(i, k)?;
    if n == 0 {
        return Err(Error::InvalidParameter("transition step must be at least 1".into()));
    }
    let first = spec.root()?.extend(&spec.system, i)?;
    let mi = clamp_probability(first.mass(), spec.tol());
    if mi <= spec.tol() {
        return Err(Error::ZeroConditioningEvent { measure: mi });
    }
    let tables = tables_from(spec, &first, n)?;
    let last = marginalize_prefix(&tables[n - 1], k, n, n - 1);
    Ok(last.into_iter().map(|x| x / mi).collect())
}

/// `μ(X₁ = i, X_{1+n} = j) / μ(X₁ = i)` without an invariance requirement.
pub fn transition_prob_from_origin(spec: &ProcessSpec, i: usize, j: usize, n: usize) -> Result<f64> {
    check_symbol(j, spec.k())?;
    Ok(transition_row_from_origin(spec, i, n)?[j - 1])
}

/// `n`-step transition probability `μ_ij(n)`.
///
/// Requires `ρ₀` to be a fixed point of `Λ` (within the system tolerance), which
/// makes the value independent of the time it is anchored at.
pub fn transition_prob(spec: &ProcessSpec, i: usize, j: usize, n: usize) -> Result<f64> {
    spec.require_invariant(spec.tol().max(1e-9))?;
    transition_prob_from_origin(spec, i, j, n)
}

/// Compares `μ_ij(m + n)` with `Σ_l μ_il(m) μ_lj(n)` for all `i, j`.
///
/// Transitions are anchored at time 1 so the identity can be tested for any
/// `ρ₀`; whether `ρ₀` is `Λ`-invariant is reported alongside. Rows with
/// `μ(X₁ = i) ≤ tol` are skipped, and intermediate states with
/// `μ(X₁ = l) ≤ tol` contribute nothing to the sum.
pub fn check_chapman_kolmogorov(spec: &ProcessSpec, m: usize, n: usize, tol: f64) -> Result<CheckReport> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("step counts must be at least 1".into()));
    }
    let k = spec.k();
    let rows = |steps: usize| -> Result<Vec<Option<Vec<f64>>>> {
        (1..=k)
            .map(|i| match transition_row_from_origin(spec, i, steps) {
                Ok(r) => Ok(Some(r)),
                Err(Error::ZeroConditioningEvent { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    };
    let tm = rows(m)?;
    let tn = rows(n)?;
    let tmn = rows(m + n)?;
    let mut report = CheckReport::new("chapman-kolmogorov", &[("m", m as f64), ("n", n as f64), ("tol", tol)]);
    let mut lhs = vec![vec![None; k]; k];
    let mut rhs = vec![vec![None; k]; k];
    for i in 0..k {
        let (Some(row_m), Some(row_mn)) = (&tm[i], &tmn[i]) else {
            report.skipped += 1;
            continue;
        };
        for j in 0..k {
            let sum: f64 = (0..k).filter_map(|l| tn[l].as_ref().map(|row_n| row_m[l] * row_n[j])).sum();
            lhs[i][j] = Some(sum);
            rhs[i][j] = Some(row_mn[j]);
            report.record((sum - row_mn[j]).abs(), || Witness {
                word: CylinderWord(vec![i + 1, j + 1]),
                given: None,
            });
        }
    }
    report.lhs = Some(lhs);
    report.rhs = Some(rhs);
    report.rho0_invariant = Some(spec.invariance_residual().map(|r| r <= tol).unwrap_or(false));
    Ok(report.finish(tol))
}

/// Complete family of orthogonal projections.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectiveInstrument {
    projections: Vec<ComplexMatrix>,
}

impl ProjectiveInstrument {
    pub fn new(projections: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        let first = projections.first().ok_or_else(|| Error::InvalidInstrument { detail: "no projections".into() })?;
        let n = first.dim();
        let mut sum = ComplexMatrix::zeros(n);
        for (i, p) in projections.iter().enumerate() {
            if p.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: p.dim() });
            }
            if p.hermitian_deviation() > tol {
                return Err(Error::InvalidInstrument { detail: format!("P_{} is not Hermitian", i + 1) });
            }
            if p.mul(p).max_abs_diff(p) > tol {
                return Err(Error::InvalidInstrument { detail: format!("P_{} is not idempotent", i + 1) });
            }
            sum = sum.add(p);
        }
        let dev = sum.max_abs_diff(&ComplexMatrix::identity(n));
        if dev > tol {
            return Err(Error::InvalidInstrument { detail: format!("projections sum to I only within {dev:e}") });
        }
        Ok(Self { projections })
    }

    /// Projections onto the computational basis vectors.
    pub fn computational(n: usize) -> Self {
        Self { projections: (0..n).map(|i| ComplexMatrix::basis_projector(n, i)).collect() }
    }

    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dim()
    }

    pub fn projections(&self) -> &[ComplexMatrix] {
        &self.projections
    }

    /// `I(E) ρ = Σ_{i ∈ E} P_i ρ P_i` for a 1-based index set.
    pub fn apply(&self, set: &[usize], rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_set(set)?;
        Ok(set.iter().fold(ComplexMatrix::zeros(rho.dim()), |acc, &i| acc.add(&rho.conjugate_by(&self.projections[i - 1]))))
    }

    fn check_set(&self, set: &[usize]) -> Result<()> {
        if set.is_empty() {
            return Err(Error::InvalidIndexSet { detail: "empty set".into() });
        }
        let mut seen = vec![false; self.len()];
        for &i in set {
            if i == 0 || i > self.len() {
                return Err(Error::InvalidIndexSet { detail: format!("index {i} outside 1..={}", self.len()) });
            }
            if std::mem::replace(&mut seen[i - 1], true) {
                return Err(Error::InvalidIndexSet { detail: format!("index {i} repeated") });
            }
        }
        Ok(())
    }
}

/// Joint probability that successive measurements land in the given index sets.
pub fn instrument_fdd(instr: &ProjectiveInstrument, rho: &DensityOperator, sets: &[Vec<usize>]) -> Result<f64> {
    if rho.dim() != instr.dim() {
        return Err(Error::DimensionMismatch { expected: instr.dim(), found: rho.dim() });
    }
    if sets.is_empty() {
        return Err(Error::InvalidIndexSet { detail: "no sets given".into() });
    }
    let mut m = rho.matrix().clone();
    for set in sets {
        m = instr.apply(set, &m)?;
    }
    Ok(clamp_probability(m.trace().re, rho.tol()))
}
