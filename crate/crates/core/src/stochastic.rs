//! Stochastic matrices with an explicit orientation tag.
//!
//! The column convention (`Σ_i p_ij = 1`, `Pπ = π`) drives the quantum
//! embeddings; the row convention (`Σ_j p_ij = 1`, `πP = π`) drives the
//! classical shift-space computations. Callers state which one they mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Row,
    Column,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(Self::Row),
            "column" | "col" => Ok(Self::Column),
            other => Err(Error::InvalidParameter(format!("orientation must be row|column, got {other:?}"))),
        }
    }
}

/// Wire form: `{ "matrix": [[...]], "orientation": "row" | "column" }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StochasticLiteral {
    pub matrix: Vec<Vec<f64>>,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StochasticLiteral", into = "StochasticLiteral")]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
    orientation: Orientation,
}

impl TryFrom<StochasticLiteral> for StochasticMatrix {
    type Error = Error;

    fn try_from(lit: StochasticLiteral) -> Result<Self> {
        Self::from_rows(&lit.matrix, lit.orientation)
    }
}

impl From<StochasticMatrix> for StochasticLiteral {
    fn from(p: StochasticMatrix) -> Self {
        StochasticLiteral {
            matrix: p.entries.row_iter().map(|r| r.iter().copied().collect()).collect(),
            orientation: p.orientation,
        }
    }
}

/// Tolerance for column/row sums.
const SUM_TOL: f64 = 1e-9;

impl StochasticMatrix {
    pub fn from_rows(rows: &[Vec<f64>], orientation: Orientation) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::NotStochastic { detail: "matrix must be square and nonempty".into() });
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]), orientation)
    }

    pub fn new(entries: DMatrix<f64>, orientation: Orientation) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::NotStochastic { detail: "matrix must be square and nonempty".into() });
        }
        if let Some(bad) = entries.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::NotStochastic { detail: format!("entry {bad} is negative or not finite") });
        }
        let m = entries.nrows();
        for a in 0..m {
            let sum: f64 = match orientation {
                Orientation::Column => entries.column(a).sum(),
                Orientation::Row => entries.row(a).sum(),
            };
            if (sum - 1.0).abs() > SUM_TOL {
                let what = if orientation == Orientation::Column { "column" } else { "row" };
                return Err(Error::NotStochastic { detail: format!("{what} {} sums to {sum}", a + 1) });
            }
        }
        Ok(Self { entries, orientation })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// 0-based entry `p_ij` as stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Same chain expressed in the column convention.
    pub fn to_column(&self) -> Self {
        match self.orientation {
            Orientation::Column => self.clone(),
            Orientation::Row => Self { entries: self.entries.transpose(), orientation: Orientation::Column },
        }
    }

    /// Same chain expressed in the row convention.
    pub fn to_row(&self) -> Self {
        match self.orientation {
            Orientation::Row => self.clone(),
            Orientation::Column => Self { entries: self.entries.transpose(), orientation: Orientation::Row },
        }
    }

    /// Unique stationary probability vector.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let col = self.to_column();
        let m = self.size();
        let a = &col.entries - DMatrix::identity(m, m);
        let svd = a.clone().svd(false, false);
        let multiplicity = svd.singular_values.iter().filter(|&&s| s <= 1e-10).count();
        if multiplicity > 1 {
            return Err(Error::NonUniqueStationary { multiplicity });
        }
        // Replace one balance equation by the normalization Σπ = 1.
        let mut sys = a;
        let mut rhs = DVector::zeros(m);
        for j in 0..m {
            sys[(m - 1, j)] = 1.0;
        }
        rhs[m - 1] = 1.0;
        let pi = sys
            .lu()
            .solve(&rhs)
            .ok_or(Error::NonUniqueStationary { multiplicity: multiplicity.max(2) })?;
        Ok(pi.iter().map(|x| x.max(0.0)).collect())
    }

    /// `max |Pπ − π|` (column) or `max |πP − π|` (row).
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        let col = self.to_column();
        let m = self.size();
        (0..m)
            .map(|i| ((0..m).map(|j| col.entries[(i, j)] * pi[j]).sum::<f64>() - pi[i]).abs())
            .fold(0.0, f64::max)
    }
}
