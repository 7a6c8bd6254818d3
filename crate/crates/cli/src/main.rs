//! Batch front-end for the laboratory: one command per process, one document on stdout.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "qifs-lab", version, about = "Quantum iterated function systems: fixed points, cylinder measures, entropy")]
pub struct Cli {
    /// System configuration (JSON, `schema: 1`).
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Emit the tabular payload as CSV instead of a JSON document.
    #[arg(long, global = true)]
    pub csv: bool,

    /// Exit with status 4 when a property check fails; refuse unnormalized weights.
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Iterate,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Markov,
    Ck,
    Stationarity,
    Partition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartKind {
    Reversed,
    Uniform,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed point of the averaged channel.
    FixedPoint {
        #[arg(long, value_enum, default_value = "spectral")]
        method: Method,
        /// Iteration cap for `--method iterate`.
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Cylinder measure of one word.
    Measure {
        /// Comma-separated 1-based symbols, e.g. `1,2,1`.
        #[arg(long)]
        word: String,
        /// Use the nonhomogeneous measure even for homogeneous systems.
        #[arg(long)]
        nonhomogeneous: bool,
    },
    /// Exhaustive property check over enumerated words.
    Check {
        #[arg(value_enum)]
        kind: CheckKind,
        /// Word length for `markov` and `partition`.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Start time for `ck` and `stationarity`.
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Step count for `ck` and `stationarity`.
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Entropy of an invariant atomic measure.
    Entropy {
        /// Atoms `[{ "weight": w, "matrix": [[...]] }, ...]`; computed from the system when absent.
        #[arg(long, value_name = "FILE")]
        measure: Option<PathBuf>,
        /// Pushforward iterations allowed when the measure is computed.
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
    },
    /// Depth-2 shift-space entropy of a stochastic matrix.
    EntropyShift {
        /// Plain real matrix `[[...], ...]`.
        #[arg(long, value_name = "FILE")]
        matrix: PathBuf,
        #[arg(long, default_value = "row")]
        orientation: String,
        #[arg(long, value_enum, default_value = "reversed")]
        start: StartKind,
        /// Gradient sup-norm at which the descent stops.
        #[arg(long, default_value_t = 1e-10)]
        gradient_tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Seeded chaos-game trajectory.
    Sample {
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Overrides the config seed.
        #[arg(long, env = "QIFS_LAB_SEED")]
        seed: Option<u64>,
        /// Include every visited state in the JSON document.
        #[arg(long)]
        states: bool,
    },
    /// Grid search of the pressure over 2×2 chains.
    Pressure {
        /// Hermitian 2×2 matrix literal.
        #[arg(long, value_name = "FILE")]
        hamiltonian: PathBuf,
        #[arg(long)]
        temperature: f64,
        /// Points per axis of the `(p₁₁, p₁₂)` grid.
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
    /// Set and conditional amplitudes on a finite sample space.
    Amplitude {
        /// `{ "points": [...], "amplitudes": [[re, im], ...] }`.
        #[arg(long, value_name = "FILE")]
        space: PathBuf,
        /// Comma-separated point labels.
        #[arg(long, allow_hyphen_values = true)]
        set: String,
        /// Conditioning set, comma-separated.
        #[arg(long)]
        given: Option<String>,
    },
    /// Joint law of successive projective measurements on the config state.
    InstrumentFdd {
        /// List of projection matrix literals.
        #[arg(long, value_name = "FILE")]
        projections: PathBuf,
        /// Semicolon-separated groups of comma-separated 1-based indices, e.g. `1;2`.
        #[arg(long)]
        sets: String,
    },
}

/// Error carrying the process exit status.
#[derive(Debug, Clone)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: String) -> Self {
        Self { code: EXIT_VALIDATION, message }
    }

    pub fn not_converged(message: String) -> Self {
        Self { code: EXIT_NOT_CONVERGED, message }
    }
}

impl From<qifs_lab::Error> for Failure {
    fn from(e: qifs_lab::Error) -> Self {
        let code = match e {
            qifs_lab::Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

/// Rows of the CSV rendering.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Result of one command: a document, its table, and the status to exit with.
pub struct Report {
    pub document: serde_json::Value,
    pub table: Table,
    pub status: u8,
    pub note: Option<String>,
}

impl Report {
    pub fn new<T: Serialize>(document: &T, table: Table) -> Result<Self, Failure> {
        let document = serde_json::to_value(document).map_err(|e| Failure::validation(e.to_string()))?;
        Ok(Self { document, table, status: 0, note: None })
    }

    pub fn with_status(mut self, status: u8, note: String) -> Self {
        if status != 0 {
            self.status = status;
            self.note = Some(note);
        }
        self
    }
}

fn emit(report: &Report, csv: bool) -> std::io::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if csv {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&report.table.headers)?;
        for row in &report.table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    } else {
        serde_json::to_writer_pretty(&mut out, &report.document)?;
        writeln!(out)?;
    }
    out.flush()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(report) => {
            if let Err(e) = emit(&report, cli.csv) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            if let Some(note) = &report.note {
                eprintln!("{note}");
            }
            ExitCode::from(report.status)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
