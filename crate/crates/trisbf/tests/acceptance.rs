//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line and then
//! asserts. The Monte Carlo studies behind criteria 5 to 7 run once and are
//! shared with criterion 8. Tests hold a common lock so that the runtime of
//! each criterion is measured without the others competing for the CPU.

mod support;

use std::path::Path;
use std::process::Command as Process;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use support::*;
use trisbf::config::{ExperimentConfig, Sweep, SystemSpec};
use trisbf::experiment::{self, OracleRecord, Study, SweepPoint, TrialRecord, TrialStatus};
use trisbf_core::linalg;
use trisbf_core::metrics::{self, LiftedPair};
use trisbf_core::optimizer::subproblem_solver_options;
use trisbf_core::oracle;
use trisbf_core::subproblem;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

struct Timed<T> {
    value: T,
    elapsed: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = f();
    Timed { value, elapsed: start.elapsed() }
}

fn base_config(n: usize, k: usize, g: usize, trials: usize, sweep: Sweep) -> ExperimentConfig {
    ExperimentConfig { system: SystemSpec { n, k, g, ..SystemSpec::default() }, trials, sweep, ..ExperimentConfig::default() }
}

fn tiny_study() -> &'static Timed<Vec<OracleRecord>> {
    static CELL: OnceLock<Timed<Vec<OracleRecord>>> = OnceLock::new();
    CELL.get_or_init(|| timed(|| experiment::oracle_check(&base_config(2, 1, 1, 10, Sweep::None)).unwrap()))
}

type Sweeps = (Vec<SweepPoint>, Vec<TrialRecord>);

fn convergence_study() -> &'static Timed<Sweeps> {
    static CELL: OnceLock<Timed<Sweeps>> = OnceLock::new();
    CELL.get_or_init(|| {
        timed(|| experiment::run_study(&base_config(8, 2, 2, 20, Sweep::Elements(vec![4, 8])), Study::Convergence).unwrap())
    })
}

fn power_study() -> &'static Timed<Sweeps> {
    static CELL: OnceLock<Timed<Sweeps>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = base_config(8, 2, 2, 50, Sweep::PowerDbm(vec![0.0, 5.0, 10.0, 15.0]));
        timed(|| experiment::run_study(&cfg, Study::PowerSweep).unwrap())
    })
}

fn distance_study() -> &'static Timed<Sweeps> {
    static CELL: OnceLock<Timed<Sweeps>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = base_config(8, 2, 2, 50, Sweep::DistanceM(vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0]));
        timed(|| experiment::run_study(&cfg, Study::DistanceSweep).unwrap())
    })
}

#[test]
fn criterion_1_lift_equivalence() {
    let _serial = serial();
    let t = timed(|| {
        let mut worst: f64 = 0.0;
        let mut failures = 0;
        for seed in 0..100u64 {
            let m = scenario_model(seed, 4, 2, 2);
            let bf = beams(&mut rng(1000 + seed), &m);
            let report = oracle::lift_equivalence_check(&bf, &m).unwrap();
            worst = worst.max(report.max_deviation());
            failures += usize::from(!report.passed());
        }
        (worst, failures)
    });
    let (worst, failures) = t.value;
    let secs = t.elapsed.as_secs_f64();
    let pass = worst <= 1e-10 && failures == 0 && secs < 5.0;
    verdict(1, "lift equivalence", pass, &format!("100 scenarios, worst relative deviation {worst:.2e}, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn criterion_2_gradient_finite_differences() {
    let _serial = serial();
    let t = timed(|| {
        let mut worst: f64 = 0.0;
        let mut checks = 0;
        for seed in 0..10u64 {
            let m = scenario_model(seed, 4, 2, 2);
            let mut r = rng(2000 + seed);
            let l0 = lift(&mut r, &m, 2);
            let scale = l0.f_i.norm() + l0.f_e.norm();
            for k in 0..m.cfg.k() {
                let grad = metrics::dc_gradient(&l0, &m, k).unwrap();
                for _ in 0..20 {
                    let mut d = LiftedPair { f_i: hermitian(&mut r, m.cfg.dim_i()), f_e: hermitian(&mut r, m.cfg.dim_e()) };
                    let s = Complex64::new(scale / (d.f_i.norm() + d.f_e.norm()), 0.0);
                    d = LiftedPair { f_i: d.f_i * s, f_e: d.f_e * s };
                    let at = |h: f64| {
                        let c = Complex64::new(h, 0.0);
                        let p = LiftedPair { f_i: &l0.f_i + &d.f_i * c, f_e: &l0.f_e + &d.f_e * c };
                        metrics::dc_parts(&p, &m, k).unwrap().1
                    };
                    let h = 1e-4;
                    let fd = (at(h) - at(-h)) / (2.0 * h);
                    let an = linalg::trace_product(&grad.g_i, &d.f_i) + linalg::trace_product(&grad.g_e, &d.f_e);
                    worst = worst.max(rel(fd, an));
                    checks += 1;
                }
            }
        }
        (worst, checks)
    });
    let (worst, checks) = t.value;
    let secs = t.elapsed.as_secs_f64();
    let pass = worst <= 1e-4 && secs < 10.0;
    verdict(2, "gradient suite", pass, &format!("{checks} directional derivatives, worst relative error {worst:.2e}, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn criterion_3_bounds() {
    let _serial = serial();
    let t = timed(|| {
        let tol = 1e-9;
        let mut bad = Vec::new();
        let mut r = rng(3000);
        let models: Vec<_> = (0..10u64).map(|s| scenario_model(s, 4, 2, 2)).collect();
        for i in 0..1000 {
            let d = r.random_range(1..=6usize);
            let (r0, r1) = (r.random_range(1..=3usize), r.random_range(0..=6usize));
            let f0 = psd(&mut r, d, r0);
            let f = psd(&mut r, d, r1);
            let spec = linalg::spectral_norm(&f);
            if metrics::spectral_minorant(&f, &f0) > spec + tol * (1.0 + spec) {
                bad.push(format!("minorant exceeds spectral norm at sample {i}"));
            }
            let s0 = linalg::spectral_norm(&f0);
            if (metrics::spectral_minorant(&f0, &f0) - s0).abs() > tol * (1.0 + s0) {
                bad.push(format!("minorant not tight at sample {i}"));
            }
            if metrics::rank_residual(&f) < -tol * (1.0 + spec) {
                bad.push(format!("negative penalty residual at sample {i}"));
            }

            let m = &models[i % models.len()];
            let (r0, r1) = (r.random_range(1..=3usize), r.random_range(1..=3usize));
            let l0 = lift(&mut r, m, r0);
            let l = lift(&mut r, m, r1);
            for k in 0..m.cfg.k() {
                let truth = metrics::dc_parts(&l, m, k).unwrap().1;
                if metrics::sca_rate_bound(&l, &l0, m, k).unwrap() < truth - tol * (1.0 + truth.abs()) {
                    bad.push(format!("rate bound below the rate term at sample {i}"));
                }
                let at0 = metrics::dc_parts(&l0, m, k).unwrap().1;
                if (metrics::sca_rate_bound(&l0, &l0, m, k).unwrap() - at0).abs() > tol * (1.0 + at0.abs()) {
                    bad.push(format!("rate bound not tight at sample {i}"));
                }
            }
        }
        bad
    });
    let secs = t.elapsed.as_secs_f64();
    let pass = t.value.is_empty() && secs < 10.0;
    let detail = match t.value.first() {
        None => format!("1000 PSD samples, no violation at 1e-9, {secs:.2} s"),
        Some(first) => format!("{} violations, first: {first}", t.value.len()),
    };
    verdict(3, "bound suite", pass, &detail);
    assert!(pass);
}

/// Random surrogate instance with blocks of size at most 6, expanded at a
/// random point that meets the element power limits.
fn random_surrogate(seed: u64) -> subproblem::SubproblemData {
    let mut r = rng(4000 + seed);
    let (n, k, g) = loop {
        let n = r.random_range(1..=3usize);
        let k = r.random_range(1..=2usize);
        let g = r.random_range(1..=2usize);
        if n * k <= 6 && n * g <= 6 {
            break (n, k, g);
        }
    };
    let m = unit_model(&mut r, n, k, g);
    let rank = r.random_range(1..=2usize);
    let mut l0 = lift(&mut r, &m, rank);
    let peak = (0..n).map(|i| metrics::per_antenna_power_lifted(&l0, &m.ops, i)).fold(0.0, f64::max);
    l0 = l0.scaled(0.8 / peak);
    let q_t = r.random_range(0.1..0.9) * metrics::total_harvest_lifted(&l0, &m).unwrap();
    let m = m.with_config(m.cfg.clone().with_q_t(q_t).unwrap()).unwrap();
    let rho = 10f64.powf(r.random_range(-2.0..0.0));
    subproblem::build_subproblem(&l0, &m, rho).unwrap()
}

#[test]
fn criterion_4_solver_matches_projected_gradient_oracle() {
    let _serial = serial();
    let t = timed(|| {
        let mut worst: f64 = 0.0;
        for seed in 0..50u64 {
            let sub = random_surrogate(seed);
            let ip = subproblem::solve(&sub, None, &subproblem_solver_options(), None).unwrap();
            let pg = PgProblem::from_subproblem(&sub);
            let x = pg.solve();
            let reference = sub.objective(&LiftedPair { f_i: x[0].clone(), f_e: x[1].clone() });
            worst = worst.max(rel(ip.objective, reference));
        }
        worst
    });
    let worst = t.value;
    let secs = t.elapsed.as_secs_f64();
    let pass = worst <= 1e-5 && secs < 60.0;
    verdict(4, "solver oracle", pass, &format!("50 instances, worst relative objective gap {worst:.2e}, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_5_tiny_instance_optimality() {
    let _serial = serial();
    let study = tiny_study();
    let mut problems = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_violation: f64 = 0.0;
    for rec in &study.value {
        let r = &rec.optimizer;
        if r.status != TrialStatus::Converged {
            problems.push(format!("seed {} ended {}", r.seed, r.status.as_str()));
            continue;
        }
        if !rec.oracle_sum_rate.is_finite() {
            problems.push(format!("seed {}: oracle found no feasible grid point", r.seed));
            continue;
        }
        worst_gap = worst_gap.max(rec.relative_gap());
        worst_violation = worst_violation.max(r.violation);
    }
    let secs = study.elapsed.as_secs_f64();
    let pass = problems.is_empty() && study.value.len() == 10 && worst_gap <= 0.02 && worst_violation <= 1e-6 && secs < 120.0;
    verdict(
        5,
        "tiny-instance optimality",
        pass,
        &format!(
            "10 seeds, worst shortfall vs oracle {:.3}%, worst constraint violation {worst_violation:.1e}, {secs:.1} s {problems:?}",
            100.0 * worst_gap
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_convergence() {
    let _serial = serial();
    let study = convergence_study();
    let (points, records) = &study.value;
    let mut medians = Vec::new();
    let mut non_monotone = Vec::new();
    let mut skipped = 0;
    for p in points {
        let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.point.index == p.index).collect();
        skipped += mine.iter().filter(|r| !r.status.has_beams()).count();
        let iters: Vec<f64> = mine.iter().map(|r| r.outer_iterations as f64).collect();
        medians.push((p.n, experiment::median(&iters)));
        for r in &mine {
            if r.trajectory.windows(2).any(|w| w[1].lifted_sum_rate < w[0].lifted_sum_rate - 1e-6) {
                non_monotone.push((p.n, r.seed));
            }
        }
    }
    let secs = study.elapsed.as_secs_f64();
    let pass = skipped == 0 && medians.iter().all(|(_, m)| *m <= 15.0) && non_monotone.is_empty() && secs < 600.0;
    verdict(
        6,
        "convergence",
        pass,
        &format!("median outer iterations (N, median) {medians:?}, non-monotone runs {non_monotone:?}, skipped {skipped}, {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_trends() {
    let _serial = serial();
    let power = power_study();
    let distance = distance_study();
    let ps = experiment::summarize(&power.value.0, &power.value.1);
    let ds = experiment::summarize(&distance.value.0, &distance.value.1);
    let p_means: Vec<f64> = ps.iter().map(|s| s.mean_sum_rate).collect();
    let d_means: Vec<f64> = ds.iter().map(|s| s.mean_sum_rate).collect();
    let drops = experiment::median_adjacent_drops(&distance.value.0, &distance.value.1);
    let used = ps.iter().chain(&ds).map(|s| s.used).min().unwrap();

    let power_ok = experiment::monotone_within_noise(&p_means, true);
    let distance_ok = experiment::monotone_within_noise(&d_means, false);
    let steepest_ok = experiment::steepest_drop_first(&drops);
    let secs = (power.elapsed + distance.elapsed).as_secs_f64();
    let pass = power_ok && distance_ok && steepest_ok && used >= 50 && secs < 1800.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    verdict(
        7,
        "trend reproduction",
        pass,
        &format!(
            "power means [{}] ({}), distance means [{}] ({}), median drops [{}] ({}), min trials used {used}, {secs:.0} s",
            fmt(&p_means),
            if power_ok { "non-decreasing" } else { "NOT non-decreasing" },
            fmt(&d_means),
            if distance_ok { "non-increasing" } else { "NOT non-increasing" },
            fmt(&drops),
            if steepest_ok { "first is largest" } else { "first is NOT largest" },
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_rank_one_recovery() {
    let _serial = serial();
    let mut runs: Vec<&TrialRecord> = tiny_study().value.iter().map(|r| &r.optimizer).collect();
    for s in [convergence_study(), power_study(), distance_study()] {
        runs.extend(s.value.1.iter());
    }
    let converged: Vec<&&TrialRecord> = runs.iter().filter(|r| r.status == TrialStatus::Converged).collect();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_rate: f64 = 0.0;
    for r in &converged {
        let (ri, re) = r.residual_ratios();
        worst_ratio = worst_ratio.max(ri).max(re);
        worst_rate = worst_rate.max((r.sum_rate - r.lifted_sum_rate).abs() / r.lifted_sum_rate.abs());
    }
    let pass = !converged.is_empty() && worst_ratio <= 1e-7 && worst_rate <= 0.01;
    verdict(
        8,
        "rank-one recovery",
        pass,
        &format!(
            "{} converged runs of {}, worst residual/trace {worst_ratio:.2e}, worst vector vs lifted rate gap {:.2e}%",
            converged.len(),
            runs.len(),
            100.0 * worst_rate
        ),
    );
    assert!(pass);
}

fn run_cli(args: &[&str], out: &Path) -> Vec<(String, Vec<u8>)> {
    let run = Process::new(env!("CARGO_BIN_EXE_trisbf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn trisbf");
    assert!(run.status.success(), "trisbf {args:?} failed: {}", String::from_utf8_lossy(&run.stderr));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_9_cli_determinism() {
    let _serial = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, r#"{ "system": { "n": 2, "k": 1, "g": 1 }, "trials": 3 }"#).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let invocations: [&[&str]; 4] = [
        &["converge", "--config", cfg, "--seed", "11", "--n", "3"],
        &["sweep-power", "--config", cfg, "--seed", "5"],
        &["sweep-distance", "--config", cfg, "--trials", "2"],
        &["oracle-check", "--config", cfg, "--trials", "2"],
    ];
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (i, args) in invocations.iter().enumerate() {
        let a = run_cli(args, &dir.path().join(format!("a{i}")));
        let b = run_cli(args, &dir.path().join(format!("b{i}")));
        if a.is_empty() || a != b {
            mismatches.push(args[0]);
        }
        compared += a.len();
    }
    let pass = mismatches.is_empty();
    verdict(9, "CLI determinism", pass, &format!("4 subcommands run twice, {compared} CSV files compared, mismatches {mismatches:?}"));
    assert!(pass);
}
