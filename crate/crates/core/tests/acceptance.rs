//! Acceptance gate: runs the eleven criteria at their stated tolerances and
//! prints one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use qifs_lab::amplitude::{amplitude_power, AmplitudeTransition};
use qifs_lab::entropy::{
    entropy_atomic, pressure_search, shannon_entropy, shift_entropy_with_start, EntropyProblem, PressureGrid,
    PressureProblem, ShiftEntropyProblem, ShiftStart,
};
use qifs_lab::measure::{
    barycenter, chaos_game, classical_invariant_measure, empirical_barycenter, pushforward, transport_gap,
    AtomicMeasure,
};
use qifs_lab::operator::d1;
use qifs_lab::process::{check_chapman_kolmogorov, measure_homogeneous, word_table, CylinderWord};
use qifs_lab::qifs::{build_classical_2map, build_classical_diagmap, build_depolarizing, fixed_point_spectral};
use qifs_lab::sampling::{ginibre, random_density, random_kraus, random_rank_one_kraus, random_stochastic};
use qifs_lab::{ComplexMatrix, DensityOperator, KrausFamily, Orientation, ProcessKind, ProcessSpec, QifsSystem,
    StochasticMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: qifs_lab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Stationary vector of a 2×2 column-stochastic matrix by Cramer's rule on
/// `(p₁₁ − 1) π₁ + p₁₂ π₂ = 0`, `π₁ + π₂ = 1`.
fn stationary_2x2(p: &StochasticMatrix) -> [f64; 2] {
    let (a, b) = (p.get(0, 0) - 1.0, p.get(0, 1));
    let det = a - b;
    [-b / det, a / det]
}

fn c1_fixed_point_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_stochastic(&mut rng, 2, Orientation::Column);
        let pi = stationary_2x2(&p);
        let sys = lib(build_classical_2map(&p, 1.0, 1.0))?;
        let fp = lib(fixed_point_spectral(sys.dynamics()))?;
        ensure(fp.multiplicity == 1, || format!("multiplicity {}", fp.multiplicity))?;
        let expect = ComplexMatrix::diag(&pi);
        worst = worst.max(fp.rho.matrix().max_abs_diff(&expect));
    }
    ensure(worst <= 1e-9, || format!("max entry gap {worst:e}"))?;
    Ok(format!("100 chains, max entry gap {worst:.2e}"))
}

fn c2_classical_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut words = 0;
    for _ in 0..20 {
        let p = random_stochastic(&mut rng, 2, Orientation::Column);
        let pi = stationary_2x2(&p);
        let sys = lib(build_classical_2map(&p, 1.0, 1.0))?;
        let rho = lib(DensityOperator::diagonal(&pi, 1e-9))?;
        let spec = lib(ProcessSpec::new(sys, rho, ProcessKind::Homogeneous))?;
        for n in 1..=6 {
            for idx in 0..(1usize << n) {
                let w = CylinderWord::from_table_index(idx, n, 2);
                let s = w.symbols();
                let mut expect = pi[s[0] - 1];
                for t in 1..n {
                    expect *= p.get(s[t] - 1, s[t - 1] - 1);
                }
                let got = lib(measure_homogeneous(&spec, &w))?;
                worst = worst.max((got - expect).abs());
                words += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max gap {worst:e}"))?;
    Ok(format!("{words} words over 20 chains, max gap {worst:.2e}"))
}

fn c3_chapman_kolmogorov_failure() -> Outcome {
    let pair = |v1: &[f64], v2: &[f64], rho: DensityOperator| -> Result<ProcessSpec, String> {
        let fam = lib(KrausFamily::new(vec![ComplexMatrix::diag(v1), ComplexMatrix::diag(v2)]))?;
        lib(ProcessSpec::new(QifsSystem::homogeneous(fam), rho, ProcessKind::Homogeneous))
    };
    let mut lines = Vec::new();
    let cases = [
        (pair(&[1.0, 0.0], &[1.0, 2.0], DensityOperator::maximally_mixed(2))?, 1.2, 2.0),
        (
            pair(
                &[(1.0f64 / 3.0).sqrt(), 0.0],
                &[(2.0f64 / 3.0).sqrt(), 1.0],
                lib(DensityOperator::diagonal(&[0.25, 0.75], 1e-9))?,
            )?,
            5.0 / 33.0,
            1.0 / 3.0,
        ),
    ];
    for (spec, lhs_expect, rhs_expect) in cases {
        let report = lib(check_chapman_kolmogorov(&spec, 1, 1, 1e-9))?;
        let lhs = report.lhs.as_ref().and_then(|m| m[0][0]).ok_or("missing lhs")?;
        let rhs = report.rhs.as_ref().and_then(|m| m[0][0]).ok_or("missing rhs")?;
        ensure((lhs - lhs_expect).abs() <= 1e-12, || format!("sum side {lhs} vs {lhs_expect}"))?;
        ensure((rhs - rhs_expect).abs() <= 1e-12, || format!("direct side {rhs} vs {rhs_expect}"))?;
        ensure(!report.holds, || "identity reported as holding".into())?;
        lines.push(format!("{lhs:.12} vs {rhs:.12}"));
    }
    Ok(lines.join("; "))
}

fn c4_entropy_golden() -> Outcome {
    let p = StochasticMatrix::from_rows(&[vec![0.5, 0.25], vec![0.5, 0.75]], Orientation::Column)
        .map_err(|e| e.to_string())?;
    let pi = stationary_2x2(&p);
    ensure((pi[0] - 1.0 / 3.0).abs() < 1e-15, || format!("π = {pi:?}"))?;
    let sys = lib(build_classical_diagmap(&p))?;
    let prob = lib(EntropyProblem::new(sys, lib(classical_invariant_measure(&p))?, 1e-9))?;
    let res = lib(entropy_atomic(&prob, 1e-10, 100_000))?;
    let golden = 2f64.ln() - pi[0] * pi[0].ln() - pi[1] * pi[1].ln();
    ensure((res.value - golden).abs() <= 1e-6, || format!("h0 {} vs {golden}", res.value))?;
    let sx = prob.images().iter().position(|s| s.matrix().get(0, 0).re > 0.5).ok_or("no |1><1| image")?;
    let ratio = res.minimizer[sx] / res.minimizer[1 - sx];
    ensure((ratio - pi[0] / pi[1]).abs() <= 1e-6, || format!("ratio {ratio} vs {}", pi[0] / pi[1]))?;
    Ok(format!("h0 = {:.9} (golden {golden:.9}), c_x/c_y = {ratio:.9}", res.value))
}

fn c5_shift_entropy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = random_stochastic(&mut rng, 2, Orientation::Row);
        let prob = lib(ShiftEntropyProblem::new(p.clone()))?;
        let h = lib(shannon_entropy(&p, prob.stationary()))?;
        let res = lib(shift_entropy_with_start(&prob, 1e-12, 100_000, ShiftStart::Uniform))?;
        worst = worst.max((res.value - h).abs());
    }
    ensure(worst <= 1e-6, || format!("random chains: max gap {worst:e}"))?;
    let mut perm_worst: f64 = 0.0;
    for perm in [vec![1usize, 0], vec![1, 2, 0], vec![2, 0, 1], vec![1, 0, 3, 2]] {
        let m = perm.len();
        let rows: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if perm[i] == j { 1.0 } else { 0.0 }).collect()).collect();
        let p = lib(StochasticMatrix::from_rows(&rows, Orientation::Row))?;
        let prob = lib(ShiftEntropyProblem::with_stationary(p, vec![1.0 / m as f64; m], 1e-12))?;
        let res = lib(shift_entropy_with_start(&prob, 1e-12, 100_000, ShiftStart::Uniform))?;
        perm_worst = perm_worst.max(res.value.abs());
    }
    ensure(perm_worst <= 1e-9, || format!("permutations: max |h| {perm_worst:e}"))?;
    Ok(format!("50 chains max gap {worst:.2e}; permutations max |h| {perm_worst:.2e}"))
}

/// Random invariant atomic measure: iterate the pushforward from `δ_{I/N}` to a fixed point.
fn random_invariant(rng: &mut ChaCha8Rng) -> Result<(QifsSystem, AtomicMeasure), String> {
    let sys = if rng.random::<f64>() < 0.2 {
        lib(build_classical_diagmap(&random_stochastic(rng, 2, Orientation::Column)))?
    } else {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(n..=8);
        QifsSystem::homogeneous(random_rank_one_kraus(rng, n, k))
    };
    let mut mu = AtomicMeasure::dirac(DensityOperator::maximally_mixed(sys.dim()));
    for _ in 0..100_000 {
        let next = lib(pushforward(&sys, &mu))?;
        let gap = transport_gap(&mu, &next);
        mu = next;
        if gap <= 1e-13 {
            return Ok((sys, mu));
        }
    }
    Err("pushforward iteration did not settle".into())
}

fn c6_entropy_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut lo, mut hi_margin) = (f64::INFINITY, f64::INFINITY);
    for case in 0..200 {
        let (sys, mu) = random_invariant(&mut rng)?;
        let k = sys.k();
        let prob = lib(EntropyProblem::new(sys, mu, 1e-10))?;
        let res = lib(entropy_atomic(&prob, 1e-10, 100_000))?;
        let cap = (k as f64).ln();
        ensure(res.value >= 0.0 && res.value <= cap + 1e-9, || {
            format!("case {case}: h0 = {} outside [0, log {k}]", res.value)
        })?;
        lo = lo.min(res.value);
        hi_margin = hi_margin.min(cap - res.value);
    }
    Ok(format!("200 measures, min h0 {lo:.4}, min (log k - h0) {hi_margin:.2e}"))
}

fn c7_barycenter_intertwining() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(1..=4);
        let sys = QifsSystem::homogeneous(random_kraus(&mut rng, n, k));
        for _ in 0..10 {
            let atoms = rng.random_range(1..=5);
            let raw: Vec<f64> = (0..atoms).map(|_| 0.05 + rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mu = lib(AtomicMeasure::new(
                raw.iter().map(|w| (w / total, random_density(&mut rng, n))).collect(),
            ))?;
            let lhs = lib(barycenter(&lib(pushforward(&sys, &mu))?))?;
            let rhs = lib(sys.lambda_apply(&lib(barycenter(&mu))?))?;
            worst = worst.max(d1(&lhs, &rhs));
        }
    }
    ensure(worst <= 1e-9, || format!("max D1 gap {worst:e}"))?;
    Ok(format!("100 measures over 10 systems, max D1 gap {worst:.2e}"))
}

fn c8_monte_carlo() -> Outcome {
    let sys = lib(build_depolarizing(0.3))?;
    let start = DensityOperator::basis(2, 0);
    let seed = 20_261_016;
    let a = lib(chaos_game(&sys, &start, 50_000, 1_000, seed))?;
    let b = lib(chaos_game(&sys, &start, 50_000, 1_000, seed))?;
    ensure(a == b, || "reruns differ".into())?;
    let bar = lib(empirical_barycenter(&a, 1_000))?;
    let gap = d1(&bar, &DensityOperator::maximally_mixed(2));
    ensure(gap <= 0.02, || format!("D1 to I/2 = {gap}"))?;
    Ok(format!("D1(empirical, I/2) = {gap:.5}, rerun bit-identical"))
}

fn c9_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_ratio: f64 = 0.0;
    let mut check = |spec: &ProcessSpec, label: &str| -> Result<(), String> {
        let k = spec.k();
        for n in 1..=6 {
            let total: f64 = lib(word_table(spec, n))?.iter().sum();
            let bound = 1e-9 * (k as f64).powi(n as i32);
            let gap = (total - 1.0).abs();
            ensure(gap <= bound, || format!("{label}: n = {n}, total {total}"))?;
            worst_ratio = worst_ratio.max(gap / bound);
        }
        Ok(())
    };
    for _ in 0..10 {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(1..=4);
        let sys = QifsSystem::homogeneous(random_kraus(&mut rng, n, k));
        let rho = random_density(&mut rng, n);
        check(&lib(ProcessSpec::new(sys, rho, ProcessKind::Homogeneous))?, "normalized homogeneous")?;
    }
    for _ in 0..10 {
        let p = random_stochastic(&mut rng, 2, Orientation::Column);
        let sys = lib(build_classical_2map(&p, 1.0, 1.0))?;
        let u = rng.random::<f64>();
        let rho = lib(DensityOperator::diagonal(&[u, 1.0 - u], 1e-9))?;
        check(&lib(ProcessSpec::new(sys, rho, ProcessKind::Homogeneous))?, "two-map embedding")?;
    }
    for i in 0..10 {
        let sys = if i < 3 {
            lib(build_depolarizing(rng.random::<f64>()))?
        } else {
            let n = rng.random_range(2..=4);
            let k = rng.random_range(2..=4);
            let v: Vec<ComplexMatrix> =
                (0..k).map(|_| ComplexMatrix::from_dmatrix(ginibre(&mut rng, n, n)).expect("square")).collect();
            lib(QifsSystem::new(lib(KrausFamily::new(v))?, random_kraus(&mut rng, n, k)))?
        };
        let rho = random_density(&mut rng, sys.dim());
        check(&lib(ProcessSpec::new(sys, rho, ProcessKind::Nonhomogeneous))?, "nonhomogeneous")?;
    }
    Ok(format!("30 systems, n <= 6, worst gap/bound {worst_ratio:.2e}"))
}

fn c10_amplitude_semigroup() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=4);
        let g = ginibre(&mut rng, d, d);
        let scale = g.norm();
        let a = AmplitudeTransition::new(ComplexMatrix::from_dmatrix(g.map(|z| z / scale)).expect("square"));
        let powers: Vec<ComplexMatrix> = (1..=16).map(|n| amplitude_power(&a, n).map(|t| t.matrix().clone()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        // Naive left-to-right products as the independent reference.
        let mut naive = vec![a.matrix().clone()];
        for n in 1..16 {
            naive.push(naive[n - 1].mul(a.matrix()));
        }
        for m in 1..=8 {
            for n in 1..=8 {
                let lhs = &powers[m + n - 1];
                worst = worst.max(lhs.max_abs_diff(&powers[m - 1].mul(&powers[n - 1])));
                worst = worst.max(lhs.max_abs_diff(&naive[m + n - 1]));
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max entry gap {worst:e}"))?;
    Ok(format!("100 matrices, m, n <= 8, max entry gap {worst:.2e}"))
}

fn c11_pressure() -> Outcome {
    let (h1, h2): (f64, f64) = (0.3, 1.1);
    let prob = lib(PressureProblem::new(ComplexMatrix::diag(&[h1, h2]), 1.0, 1e-9))?;
    let res = lib(pressure_search(&prob, &lib(PressureGrid::with_step(1e-3))?))?;
    let closed = 2f64.ln() + ((-h1).exp() + (-h2).exp()).ln();
    let z = (-h1).exp() + (-h2).exp();
    let gibbs = [(-h1).exp() / z, (-h2).exp() / z];
    let vgap = (res.best_value - closed).abs();
    let pgap = (res.best_pi[0] - gibbs[0]).abs().max((res.best_pi[1] - gibbs[1]).abs());
    ensure(vgap <= 5e-3, || format!("value {} vs {closed}", res.best_value))?;
    ensure(pgap <= 5e-3, || format!("argmax {:?} vs {gibbs:?}", res.best_pi))?;
    Ok(format!(
        "{} grid points, value {:.6} (closed {closed:.6}), argmax gap {pgap:.2e}",
        res.evaluated, res.best_value
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("fixed point vs stationary vector", c1_fixed_point_agreement),
        ("classical reduction of cylinder measures", c2_classical_reduction),
        ("Chapman-Kolmogorov failure values", c3_chapman_kolmogorov_failure),
        ("entropy golden value and minimizer", c4_entropy_golden),
        ("shift entropy equals Shannon entropy", c5_shift_entropy),
        ("entropy bounds on invariant measures", c6_entropy_bounds),
        ("barycenter intertwines pushforward and channel", c7_barycenter_intertwining),
        ("chaos game barycenter and determinism", c8_monte_carlo),
        ("partition normalization", c9_partition),
        ("amplitude semigroup law", c10_amplitude_semigroup),
        ("pressure search closed form", c11_pressure),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
