use thiserror::Error;

/// Everything that can go wrong inside the laboratory.
///
/// Each variant carries the quantity that violated its invariant so callers can
/// report it verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max |m_ij - conj(m_ji)| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("trace is not one (trace = {trace})")]
    TraceNotOne { trace: f64 },

    #[error("empty operator family")]
    EmptyFamily,

    #[error("branch index {index} out of range 1..={k}")]
    InvalidBranch { index: usize, k: usize },

    #[error("branch {index} is the zero operator; its normalized image is undefined")]
    DegenerateBranch { index: usize },

    #[error("output trace collapsed to {trace:e}")]
    TraceCollapse { trace: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("superoperator has no eigenvalue 1 (closest eigenvalue distance {distance:e})")]
    NoUnitEigenvalue { distance: f64 },

    #[error("channel is not linear in the state: probability weights are not proportional to the dynamics")]
    NotLinear,

    #[error("matrix is not stochastic: {detail}")]
    NotStochastic { detail: String },

    #[error("vector is not stationary for the chain (residual {residual:e})")]
    NotStationary { residual: f64 },

    #[error("stationary vector is not unique (eigenvalue-1 multiplicity {multiplicity})")]
    NonUniqueStationary { multiplicity: usize },

    #[error("empty word")]
    EmptyWord,

    #[error("symbol {symbol} out of range 1..={k}")]
    SymbolOutOfRange { symbol: usize, k: usize },

    #[error("process kind requires a homogeneous system (V_i = W_i)")]
    NotHomogeneous,

    #[error("sum of W_i^dagger W_i deviates from the identity by {deviation:e}")]
    NormalizationViolated { deviation: f64 },

    #[error("probability family is not normalized (deviation {deviation:e})")]
    NotNormalized { deviation: f64 },

    #[error("conditioning event has measure {measure:e}")]
    ZeroConditioningEvent { measure: f64 },

    #[error("conditioning word is not a prefix of the event word")]
    NotAPrefix,

    #[error("enumeration of {terms} terms exceeds the limit {limit}")]
    EnumerationTooLarge { terms: u128, limit: u128 },

    #[error("initial state is not a fixed point of the channel (D1 residual {residual:e})")]
    RhoNotInvariant { residual: f64 },

    #[error("invalid index set: {detail}")]
    InvalidIndexSet { detail: String },

    #[error("invalid instrument: {detail}")]
    InvalidInstrument { detail: String },

    #[error("unknown sample point {0:?}")]
    UnknownPoint(String),

    #[error("invalid measure: {detail}")]
    InvalidMeasure { detail: String },

    #[error("pushforward leaked mass: total {total}")]
    MassLeak { total: f64 },

    #[error("branch probabilities sum to {total} at step {step}")]
    ProbabilityLeak { step: usize, total: f64 },

    #[error("empty averaging window (burn-in {burn_in}, length {len})")]
    EmptyWindow { burn_in: usize, len: usize },

    #[error("measure is not invariant (transport gap {gap:e})")]
    NotInvariant { gap: f64 },

    #[error("value at index {index} is not positive: {value}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
