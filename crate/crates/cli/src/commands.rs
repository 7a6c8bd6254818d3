//! Subcommand implementations.

use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use qifs_lab::amplitude::{amplitude_to_prob, conditional_amplitude, set_amplitude, AmplitudeSpace};
use qifs_lab::entropy::{
    entropy_atomic, pressure_search, shannon_entropy, shift_entropy_with_start, EntropyProblem, PressureGrid,
    PressureProblem, ShiftEntropyProblem, ShiftStart, DEFAULT_GRADIENT_TOL, DEFAULT_MAX_ITER,
};
use qifs_lab::measure::{
    chaos_game, classical_invariant_measure, empirical_barycenter, pushforward, transport_gap, AtomLiteral,
    AtomicMeasure,
};
use qifs_lab::process::{
    check_chapman_kolmogorov, check_markov, check_partition, check_stationarity, instrument_fdd, measure,
    CheckReport, ProjectiveInstrument,
};
use qifs_lab::qifs::fixed_point_iterate;
use qifs_lab::{
    ComplexMatrix, CylinderWord, DensityOperator, Error, Orientation, ProcessKind, ProcessSpec, StochasticMatrix,
};

use crate::config::{read_json, Embedding, Loaded, SystemConfig};
use crate::{CheckKind, Cli, Command, Failure, Method, Report, StartKind, Table, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED};

/// Transport gap below which the pushforward iteration counts as settled.
const SETTLE_GAP: f64 = 1e-13;

pub fn run(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::FixedPoint { method, max_iter } => fixed_point(&load(cli)?, *method, *max_iter),
        Command::Measure { word, nonhomogeneous } => measure_word(&load(cli)?, word, *nonhomogeneous, cli.strict),
        Command::Check { kind, depth, m, n } => check(&load(cli)?, *kind, *depth, *m, *n, cli.strict),
        Command::Entropy { measure, max_iter } => entropy(&load(cli)?, measure.as_deref(), *max_iter),
        Command::EntropyShift { matrix, orientation, start, gradient_tol, max_iter } => {
            entropy_shift(matrix, orientation, *start, *gradient_tol, *max_iter)
        }
        Command::Sample { steps, burn_in, seed, states } => sample(&load(cli)?, *steps, *burn_in, *seed, *states),
        Command::Pressure { hamiltonian, temperature, grid } => pressure(hamiltonian, *temperature, *grid, cli.csv),
        Command::Amplitude { space, set, given } => amplitude(space, set, given.as_deref()),
        Command::InstrumentFdd { projections, sets } => instrument(&load(cli)?, projections, sets),
    }
}

fn load(cli: &Cli) -> Result<Loaded, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::validation("this command needs a system configuration (--config FILE)".into()))?;
    SystemConfig::load(path)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn matrix_headers(prefix: &str, n: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * n * n);
    for i in 1..=n {
        for j in 1..=n {
            h.push(format!("{prefix}re_{i}_{j}"));
            h.push(format!("{prefix}im_{i}_{j}"));
        }
    }
    h
}

fn matrix_cells(m: &ComplexMatrix) -> Vec<String> {
    let n = m.dim();
    let mut cells = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let z = m.get(i, j);
            cells.push(num(z.re));
            cells.push(num(z.im));
        }
    }
    cells
}

fn matrix_table(leading: &[(&str, String)], m: &ComplexMatrix) -> Table {
    let mut headers: Vec<String> = leading.iter().map(|(h, _)| h.to_string()).collect();
    headers.extend(matrix_headers("", m.dim()));
    let mut row: Vec<String> = leading.iter().map(|(_, v)| v.clone()).collect();
    row.extend(matrix_cells(m));
    Table { headers, rows: vec![row] }
}

#[derive(Serialize)]
struct FixedPointDoc {
    method: &'static str,
    rho: ComplexMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    multiplicity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eigenvalue_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    converged: bool,
    invariance_residual: f64,
}

fn fixed_point(cfg: &Loaded, method: Method, max_iter: usize) -> Result<Report, Failure> {
    let doc = match method {
        Method::Spectral => {
            let fp = cfg.system.fixed_point_spectral()?;
            FixedPointDoc {
                method: "spectral",
                invariance_residual: cfg.system.fixed_point_residual(&fp.rho)?,
                rho: fp.rho.matrix().clone(),
                multiplicity: Some(fp.multiplicity),
                eigenvalue_gap: fp.eigenvalue_gap,
                iterations: None,
                residual: None,
                converged: true,
            }
        }
        Method::Iterate => {
            let it = fixed_point_iterate(&cfg.system, &cfg.rho0, cfg.tol, max_iter)?;
            FixedPointDoc {
                method: "iterate",
                invariance_residual: cfg.system.fixed_point_residual(&it.rho)?,
                rho: it.rho.matrix().clone(),
                multiplicity: None,
                eigenvalue_gap: None,
                iterations: Some(it.iterations),
                residual: Some(it.residual),
                converged: it.converged,
            }
        }
    };
    let table = matrix_table(
        &[
            ("method", doc.method.to_string()),
            ("multiplicity", doc.multiplicity.map(|m| m.to_string()).unwrap_or_default()),
            ("converged", doc.converged.to_string()),
        ],
        &doc.rho,
    );
    let status = if doc.converged { 0 } else { EXIT_NOT_CONVERGED };
    let note = format!("fixed-point iteration did not converge within {max_iter} iterations");
    Ok(Report::new(&doc, table)?.with_status(status, note))
}

fn process_spec(cfg: &Loaded, nonhomogeneous: bool, strict: bool) -> Result<ProcessSpec, Failure> {
    let spec = if nonhomogeneous {
        ProcessSpec::new(cfg.system.clone(), cfg.rho0.clone(), ProcessKind::Nonhomogeneous)?
    } else {
        ProcessSpec::natural(cfg.system.clone(), cfg.rho0.clone())?
    };
    Ok(spec.strict(strict))
}

#[derive(Serialize)]
struct MeasureDoc {
    word: CylinderWord,
    kind: ProcessKind,
    value: f64,
}

fn measure_word(cfg: &Loaded, word: &str, nonhomogeneous: bool, strict: bool) -> Result<Report, Failure> {
    let spec = process_spec(cfg, nonhomogeneous, strict)?;
    let word: CylinderWord = word.parse()?;
    let doc = MeasureDoc { value: measure(&spec, &word)?, word, kind: spec.kind() };
    let mut table = Table::new(&["word", "kind", "value"]);
    table.push(vec![doc.word.to_string(), kind_name(doc.kind).into(), num(doc.value)]);
    Report::new(&doc, table)
}

fn kind_name(kind: ProcessKind) -> &'static str {
    match kind {
        ProcessKind::Homogeneous => "homogeneous",
        ProcessKind::Nonhomogeneous => "nonhomogeneous",
    }
}

fn check(cfg: &Loaded, kind: CheckKind, depth: usize, m: usize, n: usize, strict: bool) -> Result<Report, Failure> {
    let spec = process_spec(cfg, false, false)?;
    let report: CheckReport = match kind {
        CheckKind::Markov => check_markov(&spec, depth, cfg.tol)?,
        CheckKind::Ck => check_chapman_kolmogorov(&spec, m, n, cfg.tol)?,
        CheckKind::Stationarity => check_stationarity(&spec, m, n, cfg.tol)?,
        CheckKind::Partition => check_partition(&spec, depth)?,
    };
    let table = match (&report.lhs, &report.rhs) {
        (Some(lhs), Some(rhs)) => {
            let mut t = Table::new(&["check", "i", "j", "lhs", "rhs"]);
            for (i, (l, r)) in lhs.iter().zip(rhs).enumerate() {
                for (j, (a, b)) in l.iter().zip(r).enumerate() {
                    t.push(vec![report.check.clone(), (i + 1).to_string(), (j + 1).to_string(), opt_num(*a), opt_num(*b)]);
                }
            }
            t
        }
        _ => {
            let mut t = Table::new(&["check", "holds", "max_gap", "skipped", "witness_word", "witness_given"]);
            let (w, g) = match &report.witness {
                Some(w) => (w.word.to_string(), w.given.as_ref().map(|g| g.to_string()).unwrap_or_default()),
                None => (String::new(), String::new()),
            };
            t.push(vec![report.check.clone(), report.holds.to_string(), num(report.max_gap), report.skipped.to_string(), w, g]);
            t
        }
    };
    let status = if strict && !report.holds { EXIT_CHECK_FAILED } else { 0 };
    let note = format!("check {} failed: max gap {:e}", report.check, report.max_gap);
    Ok(Report::new(&report, table)?.with_status(status, note))
}

/// Pushforward iteration from `δ_{ρ₀}` until the measure stops moving.
fn settle_measure(cfg: &Loaded, max_iter: usize) -> Result<AtomicMeasure, Failure> {
    let mut mu = AtomicMeasure::dirac(cfg.rho0.clone());
    let mut gap = f64::INFINITY;
    for _ in 0..max_iter {
        let next = pushforward(&cfg.system, &mu)?;
        gap = transport_gap(&mu, &next);
        mu = next;
        if gap <= SETTLE_GAP {
            return Ok(mu);
        }
    }
    Err(Failure::not_converged(format!(
        "pushforward from the initial state did not reach an invariant atomic measure in {max_iter} steps (last gap {gap:e}); pass --measure"
    )))
}

#[derive(Serialize)]
struct EntropyDoc {
    value: f64,
    minimizer: Vec<f64>,
    images: Vec<ComplexMatrix>,
    measure: AtomicMeasure,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

fn entropy(cfg: &Loaded, file: Option<&Path>, max_iter: usize) -> Result<Report, Failure> {
    let mu = match (file, &cfg.chain) {
        (Some(path), _) => AtomicMeasure::from_literals(read_json::<Vec<AtomLiteral>>(path)?, cfg.tol)?,
        (None, Some((p, Embedding::Diagonal))) => classical_invariant_measure(&p.to_column())?,
        (None, _) => settle_measure(cfg, max_iter)?,
    };
    let prob = EntropyProblem::new(cfg.system.clone(), mu, cfg.tol)?;
    let res = entropy_atomic(&prob, DEFAULT_GRADIENT_TOL, DEFAULT_MAX_ITER)?;
    let images: Vec<ComplexMatrix> = prob.images().iter().map(|s| s.matrix().clone()).collect();
    let n = cfg.system.dim();
    let mut headers = vec!["image".to_string(), "c".to_string()];
    headers.extend(matrix_headers("", n));
    let mut table = Table { headers, rows: Vec::new() };
    for (i, (c, img)) in res.minimizer.iter().zip(&images).enumerate() {
        let mut row = vec![(i + 1).to_string(), num(*c)];
        row.extend(matrix_cells(img));
        table.push(row);
    }
    let doc = EntropyDoc {
        value: res.value,
        minimizer: res.minimizer,
        images,
        measure: prob.measure().clone(),
        iterations: res.iterations,
        gradient_norm: res.gradient_norm,
        converged: res.converged,
    };
    let status = if doc.converged { 0 } else { EXIT_NOT_CONVERGED };
    let note = format!("entropy minimization stopped with gradient norm {:e}", doc.gradient_norm);
    Ok(Report::new(&doc, table)?.with_status(status, note))
}

#[derive(Serialize)]
struct ShiftDoc {
    value: f64,
    shannon: f64,
    stationary: Vec<f64>,
    orientation: Orientation,
    minimizer: Vec<Vec<f64>>,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

fn entropy_shift(
    file: &Path,
    orientation: &str,
    start: StartKind,
    gradient_tol: f64,
    max_iter: usize,
) -> Result<Report, Failure> {
    let orientation: Orientation = orientation.parse()?;
    let rows: Vec<Vec<f64>> = read_json(file)?;
    let p = StochasticMatrix::from_rows(&rows, orientation)?;
    let prob = ShiftEntropyProblem::new(p.clone())?;
    let start = match start {
        StartKind::Reversed => ShiftStart::ReversedKernel,
        StartKind::Uniform => ShiftStart::Uniform,
    };
    let res = shift_entropy_with_start(&prob, gradient_tol, max_iter, start)?;
    let doc = ShiftDoc {
        value: res.value,
        shannon: shannon_entropy(&p, prob.stationary())?,
        stationary: prob.stationary().to_vec(),
        orientation,
        minimizer: res.minimizer,
        iterations: res.iterations,
        gradient_norm: res.gradient_norm,
        converged: res.converged,
    };
    let mut table = Table::new(&["i", "j", "a"]);
    for (i, row) in doc.minimizer.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            table.push(vec![(i + 1).to_string(), (j + 1).to_string(), num(*a)]);
        }
    }
    let status = if doc.converged { 0 } else { EXIT_NOT_CONVERGED };
    let note = format!("shift entropy minimization stopped with gradient norm {:e}", doc.gradient_norm);
    Ok(Report::new(&doc, table)?.with_status(status, note))
}

#[derive(Serialize)]
struct SampleDoc {
    seed: u64,
    generator: String,
    steps: usize,
    burn_in: usize,
    symbols: Vec<usize>,
    frequencies: Vec<f64>,
    barycenter: ComplexMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<Vec<DensityOperator>>,
}

fn sample(cfg: &Loaded, steps: usize, burn_in: usize, seed: Option<u64>, states: bool) -> Result<Report, Failure> {
    let seed = seed
        .or(cfg.seed)
        .ok_or_else(|| Failure::validation("no seed: pass --seed, set QIFS_LAB_SEED, or add seed to the config".into()))?;
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()).into());
    }
    let traj = chaos_game(&cfg.system, &cfg.rho0, steps, burn_in, seed)?;
    let barycenter = empirical_barycenter(&traj, burn_in)?;
    let mut headers = vec!["step".to_string(), "symbol".to_string()];
    headers.extend(matrix_headers("", cfg.system.dim()));
    let mut table = Table { headers, rows: Vec::with_capacity(traj.states.len()) };
    for (t, state) in traj.states.iter().enumerate() {
        let symbol = if t == 0 { String::new() } else { traj.symbols[t - 1].to_string() };
        let mut row = vec![t.to_string(), symbol];
        row.extend(matrix_cells(state.matrix()));
        table.push(row);
    }
    let doc = SampleDoc {
        seed,
        frequencies: traj.symbol_frequencies(cfg.system.k()),
        generator: traj.generator,
        steps,
        burn_in,
        symbols: traj.symbols,
        barycenter: barycenter.matrix().clone(),
        states: states.then_some(traj.states),
    };
    Report::new(&doc, table)
}

fn pressure(file: &Path, temperature: f64, grid: usize, record: bool) -> Result<Report, Failure> {
    let h: ComplexMatrix = read_json(file)?;
    let prob = PressureProblem::new(h, temperature, qifs_lab::DEFAULT_TOL)?;
    let search = pressure_search(&prob, &PressureGrid::new(grid)?.recording(record))?;
    let mut table = Table::new(&["p11", "p12", "pi1", "pi2", "value"]);
    if let Some(records) = &search.grid {
        for r in records {
            table.push(vec![num(r.p11), num(r.p12), num(r.pi1), num(r.pi2), num(r.value)]);
        }
    }
    let status = if search.unconverged == 0 { 0 } else { EXIT_NOT_CONVERGED };
    let note = format!("{} grid points did not reach the gradient tolerance", search.unconverged);
    Ok(Report::new(&search, table)?.with_status(status, note))
}

fn labels(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

#[derive(Serialize)]
struct AmplitudeDoc {
    set: Vec<String>,
    amplitude: [f64; 2],
    probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    given: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditional: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditional_probability: Option<f64>,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn amplitude(file: &Path, set: &str, given: Option<&str>) -> Result<Report, Failure> {
    let space: AmplitudeSpace = read_json(file)?;
    let set = labels(set);
    let a = set_amplitude(&space, &set)?;
    let given = given.map(labels);
    let cond = match &given {
        Some(g) => Some(conditional_amplitude(&space, &set, g)?),
        None => None,
    };
    let doc = AmplitudeDoc {
        amplitude: pair(a),
        probability: amplitude_to_prob(a),
        conditional: cond.map(pair),
        conditional_probability: cond.map(amplitude_to_prob),
        set,
        given,
    };
    let mut table = Table::new(&["set", "re", "im", "probability", "given", "cond_re", "cond_im", "cond_probability"]);
    let c = doc.conditional;
    table.push(vec![
        doc.set.join(","),
        num(doc.amplitude[0]),
        num(doc.amplitude[1]),
        num(doc.probability),
        doc.given.as_ref().map(|g| g.join(",")).unwrap_or_default(),
        opt_num(c.map(|z| z[0])),
        opt_num(c.map(|z| z[1])),
        opt_num(doc.conditional_probability),
    ]);
    Report::new(&doc, table)
}

fn parse_sets(spec: &str) -> Result<Vec<Vec<usize>>, Failure> {
    spec.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Failure::validation(format!("index {s:?} in set {group:?} is not a positive integer")))
                })
                .collect()
        })
        .collect()
}

#[derive(Serialize)]
struct FddDoc {
    sets: Vec<Vec<usize>>,
    probability: f64,
}

fn instrument(cfg: &Loaded, file: &Path, sets: &str) -> Result<Report, Failure> {
    let projections: Vec<ComplexMatrix> = read_json(file)?;
    let instr = ProjectiveInstrument::new(projections, cfg.tol)?;
    let sets = parse_sets(sets)?;
    let probability = instrument_fdd(&instr, &cfg.rho0, &sets)?;
    let mut table = Table::new(&["sets", "probability"]);
    let rendered: Vec<String> =
        sets.iter().map(|s| s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")).collect();
    table.push(vec![rendered.join(";"), num(probability)]);
    let doc = FddDoc { sets, probability };
    Report::new(&doc, table)
}
