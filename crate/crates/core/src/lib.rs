//! Quantum iterated function systems and their classical shadows.
//!
//! Density operators and Kraus families live in [`operator`]; the system type,
//! its channel and fixed-point solvers in [`qifs`]. Cylinder measures on words
//! and the Markov, stationarity and Chapman–Kolmogorov checks are in
//! [`process`], complex amplitudes in [`amplitude`], atomic invariant measures
//! and the chaos game in [`measure`], and the entropy and pressure optimizers
//! in [`entropy`].

pub mod amplitude;
pub mod entropy;
pub mod error;
pub mod measure;
pub mod operator;
pub mod process;
pub mod qifs;
pub mod sampling;
pub mod stochastic;

pub use error::{Error, Result};
pub use operator::{ComplexMatrix, DensityOperator, KrausFamily, Metric, DEFAULT_TOL};
pub use process::{CylinderWord, ProcessKind, ProcessSpec};
pub use qifs::QifsSystem;
pub use stochastic::{Orientation, StochasticMatrix};
