//! Declarative system configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qifs_lab::qifs::{build_classical_2map, build_classical_diagmap, build_depolarizing};
use qifs_lab::{
    ComplexMatrix, DensityOperator, Error, KrausFamily, Orientation, QifsSystem, StochasticMatrix, DEFAULT_TOL,
};

use crate::Failure;

pub const SCHEMA: u32 = 1;

/// How a stochastic matrix is turned into a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Embedding {
    /// Two operators, 2×2 chains only, weights `q`.
    #[default]
    TwoMap,
    /// One matrix unit per entry, `m²` operators.
    Diagonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticConfig {
    pub matrix: Vec<Vec<f64>>,
    pub orientation: Orientation,
    #[serde(default)]
    pub embedding: Embedding,
    /// Weights `(q₁, q₂)` of the two-map embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Builtin {
    Depolarizing { p: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema: u32,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_v: Option<Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_w: Option<Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic_p: Option<StochasticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub system: QifsSystem,
    pub rho0: DensityOperator,
    /// Source chain and its embedding when the dynamics came from `stochastic_p`.
    pub chain: Option<(StochasticMatrix, Embedding)>,
    pub seed: Option<u64>,
    pub tol: f64,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

impl SystemConfig {
    pub fn load(path: &Path) -> Result<Loaded, Failure> {
        let cfg: SystemConfig = read_json(path)?;
        cfg.validate().map_err(|f| Failure::validation(format!("{}: {}", path.display(), f.message)))
    }

    pub fn validate(self) -> Result<Loaded, Failure> {
        if self.schema != SCHEMA {
            return Err(Failure::validation(format!("schema must be {SCHEMA}, got {}", self.schema)));
        }
        let tol = self.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Failure::validation(format!("tol must be positive, got {tol}")));
        }
        let sources = [self.kraus_v.is_some(), self.stochastic_p.is_some(), self.builtin.is_some()];
        let count = sources.iter().filter(|s| **s).count();
        if count != 1 {
            return Err(Failure::validation(format!(
                "exactly one of kraus_v, stochastic_p, builtin must supply the dynamics, found {count}"
            )));
        }
        if self.kraus_w.is_some() && self.kraus_v.is_none() {
            return Err(Failure::validation("kraus_w requires kraus_v".into()));
        }
        let chain = match &self.stochastic_p {
            Some(sp) => Some((StochasticMatrix::from_rows(&sp.matrix, sp.orientation)?, sp.embedding)),
            None => None,
        };
        let system = if let Some(v) = self.kraus_v {
            let v = KrausFamily::with_tol(v, tol)?;
            match self.kraus_w {
                Some(w) => QifsSystem::new(v, KrausFamily::with_tol(w, tol)?)?,
                None => QifsSystem::homogeneous(v),
            }
        } else if let (Some(sp), Some((p, _))) = (&self.stochastic_p, &chain) {
            let p = p.to_column();
            match sp.embedding {
                Embedding::TwoMap => {
                    let [q1, q2] = sp.q.unwrap_or([1.0, 1.0]);
                    build_classical_2map(&p, q1, q2)?
                }
                Embedding::Diagonal => {
                    if sp.q.is_some() {
                        return Err(Failure::validation("q applies only to the two-map embedding".into()));
                    }
                    build_classical_diagmap(&p)?
                }
            }
        } else {
            match self.builtin.as_ref().expect("one source present") {
                Builtin::Depolarizing { p } => build_depolarizing(*p)?,
            }
        };
        if system.dim() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: system.dim() }.into());
        }
        let rho0 = match self.rho0 {
            Some(m) => DensityOperator::new(m, tol)?,
            None => match &chain {
                Some((p, _)) => DensityOperator::diagonal(&p.stationary()?, tol)?,
                None => DensityOperator::maximally_mixed(self.dimension),
            },
        };
        if rho0.dim() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: rho0.dim() }.into());
        }
        Ok(Loaded { system, rho0, chain, seed: self.seed, tol })
    }
}
