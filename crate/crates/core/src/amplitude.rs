//! Finite quantum probability spaces.
//!
//! A space assigns a complex amplitude `a(ω)` to each labelled point. Sets get
//! amplitude `A(B) = Σ_{ω∈B} a(ω)` and probability `|A(B)|²`, which is not
//! additive over disjoint sets. Amplitude transition matrices compose by matrix
//! multiplication, so the `n`-step matrix is the `n`-th power.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{ComplexMatrix, EntryLiteral, MatrixLiteral};

/// Amplitudes at or below this modulus count as zero when conditioning.
pub const AMPLITUDE_ZERO_TOL: f64 = 1e-12;

/// Wire form: `{ "points": ["a", "b"], "amplitudes": [[re, im], ...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeLiteral {
    pub points: Vec<String>,
    pub amplitudes: Vec<EntryLiteral>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "AmplitudeLiteral", into = "AmplitudeLiteral")]
pub struct AmplitudeSpace {
    points: Vec<String>,
    amps: Vec<Complex64>,
    index: HashMap<String, usize>,
}

impl TryFrom<AmplitudeLiteral> for AmplitudeSpace {
    type Error = Error;

    fn try_from(lit: AmplitudeLiteral) -> Result<Self> {
        Self::new(lit.points, lit.amplitudes.into_iter().map(Complex64::from).collect())
    }
}

impl From<AmplitudeSpace> for AmplitudeLiteral {
    fn from(s: AmplitudeSpace) -> Self {
        AmplitudeLiteral {
            points: s.points,
            amplitudes: s.amps.iter().map(|z| EntryLiteral::Pair([z.re, z.im])).collect(),
        }
    }
}

impl AmplitudeSpace {
    pub fn new(points: Vec<String>, amps: Vec<Complex64>) -> Result<Self> {
        if points.len() != amps.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} amplitudes",
                points.len(),
                amps.len()
            )));
        }
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("point {p:?} listed twice")));
            }
        }
        Ok(Self { points, amps, index })
    }

    /// Points labelled `"1"`, `"2"`, … in order.
    pub fn numbered(amps: Vec<Complex64>) -> Self {
        let points = (1..=amps.len()).map(|i| i.to_string()).collect();
        Self::new(points, amps).expect("labels are distinct")
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn amplitude_of(&self, point: &str) -> Result<Complex64> {
        self.index.get(point).map(|&i| self.amps[i]).ok_or_else(|| Error::UnknownPoint(point.to_string()))
    }

    /// Index set of the given labels (duplicates collapse).
    pub fn resolve<S: AsRef<str>>(&self, subset: &[S]) -> Result<BTreeSet<usize>> {
        subset
            .iter()
            .map(|p| self.index.get(p.as_ref()).copied().ok_or_else(|| Error::UnknownPoint(p.as_ref().to_string())))
            .collect()
    }

    fn sum(&self, set: &BTreeSet<usize>) -> Complex64 {
        set.iter().map(|&i| self.amps[i]).sum()
    }
}

/// `A(B) = Σ_{ω∈B} a(ω)`; the empty set has amplitude 0.
pub fn set_amplitude<S: AsRef<str>>(space: &AmplitudeSpace, subset: &[S]) -> Result<Complex64> {
    Ok(space.sum(&space.resolve(subset)?))
}

/// `A(B₁ | B₂) = A(B₁ ∩ B₂) / A(B₂)`, or 0 when `|A(B₂)| ≤ 1e−12`.
pub fn conditional_amplitude<S: AsRef<str>, T: AsRef<str>>(
    space: &AmplitudeSpace,
    b1: &[S],
    b2: &[T],
) -> Result<Complex64> {
    let s1 = space.resolve(b1)?;
    let s2 = space.resolve(b2)?;
    let denom = space.sum(&s2);
    if denom.norm() <= AMPLITUDE_ZERO_TOL {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let inter: BTreeSet<usize> = s1.intersection(&s2).copied().collect();
    Ok(space.sum(&inter) / denom)
}

/// `μ = |z|²`.
pub fn amplitude_to_prob(z: Complex64) -> f64 {
    z.norm_sqr()
}

/// One-step amplitude matrix `a_ij = A(X_{n+1} = j | X_n = i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixLiteral", into = "MatrixLiteral")]
pub struct AmplitudeTransition {
    matrix: ComplexMatrix,
}

impl TryFrom<MatrixLiteral> for AmplitudeTransition {
    type Error = Error;

    fn try_from(lit: MatrixLiteral) -> Result<Self> {
        Ok(Self::new(ComplexMatrix::try_from(lit)?))
    }
}

impl From<AmplitudeTransition> for MatrixLiteral {
    fn from(t: AmplitudeTransition) -> Self {
        t.matrix.into()
    }
}

impl AmplitudeTransition {
    pub fn new(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// 1-based entry `a_ij`.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i - 1, j - 1)
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { matrix: self.matrix.mul(&other.matrix) }
    }
}

/// `Aⁿ` by repeated squaring; entry `(i, j)` is the `n`-step amplitude.
pub fn amplitude_power(t: &AmplitudeTransition, n: usize) -> Result<AmplitudeTransition> {
    if n == 0 {
        return Err(Error::InvalidParameter("amplitude power needs n >= 1".into()));
    }
    let dim = t.dim();
    let mut base: DMatrix<Complex64> = t.matrix.as_dmatrix().clone();
    let mut acc: Option<DMatrix<Complex64>> = None;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = Some(match acc {
                Some(a) => a * &base,
                None => base.clone(),
            });
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    let m = acc.unwrap_or_else(|| DMatrix::identity(dim, dim));
    Ok(AmplitudeTransition { matrix: ComplexMatrix::from_dmatrix(m)? })
}
