//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom; the process fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use graybox_core::controller::{theoretical_params_static, Mode};
use graybox_core::harness::checks::run_suite;
use graybox_core::harness::config::ControllerSpec;
use graybox_core::harness::runner::{build_static_problem, build_tv_problem, run_static_replicate, run_tv_replicate};
use graybox_core::harness::verification::{check_tracking_bound, verification_static_problem, ReducedQuadratic};
use graybox_core::harness::{ExperimentConfig, RunOptions};
use graybox_core::metrics::{avg_sq_grad_norm, regret_series, tail_mean_grad_norm_sq};
use graybox_core::{Result, SensitivitySpec, TrajectoryLog};

const SEED: u64 = 2024;
const REPLICATES: usize = 10;
const HORIZON: usize = 20_000;

type Check = Box<dyn Fn() -> Result<Outcome>>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Suites 1-4 from the `check` module, with their runtime budgets.
fn suite_criterion(id: u8, budget_secs: f64) -> Result<Outcome> {
    let report = run_suite(id).expect("suite exists");
    let failed: Vec<_> = report.details.iter().filter(|d| d.starts_with("[FAIL]")).cloned().collect();
    let in_time = report.seconds < budget_secs;
    Ok(Outcome {
        passed: report.passed && in_time,
        detail: format!(
            "{}: {} checks, {} failed, {:.2}s (budget {budget_secs}s){}",
            report.name,
            report.details.len(),
            failed.len(),
            report.seconds,
            if failed.is_empty() { String::new() } else { format!("; {}", failed.join("; ")) }
        ),
    })
}

/// First step whose squared gradient norm is at or below `target`.
fn first_passage(log: &TrajectoryLog, target: f64) -> Option<usize> {
    log.rows().iter().position(|r| r.grad_norm_sq <= target)
}

fn criterion_5() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::static_benchmark();
    cfg.seed = SEED;
    let problem = build_static_problem(&cfg)?;
    let spec = |label: &str| cfg.controllers.iter().find(|c| c.label == label).expect("preset label").clone();
    let labels = ["model-based-exact", "gray-box", "model-based-inexact", "model-free"];
    let mut logs: Vec<Vec<TrajectoryLog>> = Vec::new();
    for label in labels {
        let s = spec(label);
        let runs = (0..REPLICATES)
            .map(|r| run_static_replicate(&problem, &s, SEED, r, HORIZON, RunOptions::default()).map(|x| x.log))
            .collect::<Result<Vec<_>>>()?;
        logs.push(runs);
    }
    let tails: Vec<Vec<f64>> = logs
        .iter()
        .map(|runs| runs.iter().map(|l| tail_mean_grad_norm_sq(l, 0.1)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let med: Vec<f64> = tails.iter().map(|t| median(t)).collect();
    let (exact, gb, inexact, mf) = (med[0], med[1], med[2], med[3]);
    let ordering = exact < gb && gb < inexact;

    // Iterations to reach the model-free controller's own final accuracy, replicate by replicate.
    let mut gb_steps = Vec::new();
    let mut mf_steps = Vec::new();
    for r in 0..REPLICATES {
        let target = tails[3][r];
        let never = f64::INFINITY;
        let passage = |log: &TrajectoryLog| {
            if target.is_finite() {
                first_passage(log, target).map_or(never, |k| k as f64)
            } else {
                never
            }
        };
        gb_steps.push(passage(&logs[1][r]));
        mf_steps.push(passage(&logs[3][r]));
    }
    let (gb_k, mf_k) = (median(&gb_steps), median(&mf_steps));
    let faster = gb_k.is_finite() && gb_k < mf_k;
    Ok(Outcome {
        passed: ordering && faster,
        detail: format!(
            "median final-decade ||grad||^2: exact {exact:.3e}, gray-box {gb:.3e}, inexact {inexact:.3e}, model-free {mf:.3e}; \
             ordering {}; median steps to model-free accuracy: gray-box {gb_k}, model-free {mf_k}",
            if ordering { "holds" } else { "violated" }
        ),
    })
}

fn criterion_6() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::tv_benchmark();
    cfg.seed = SEED;
    let problem = build_tv_problem(&cfg)?;
    let opts = RunOptions { record_iterates: true };
    let mut infeasible = 0usize;
    let mut finals = Vec::new();
    for label in ["gray-box", "model-free", "model-based-inexact"] {
        let s = cfg.controllers.iter().find(|c| c.label == label).expect("preset label");
        let mut regrets = Vec::new();
        for r in 0..REPLICATES {
            let run = run_tv_replicate(&problem, s, SEED, r, HORIZON, opts)?;
            infeasible += run
                .log
                .rows()
                .iter()
                .filter(|row| !row.w.as_ref().is_some_and(|w| problem.constraint.contains(w, 0.0)))
                .count();
            let series = regret_series(&run.log, &problem.comparators)?;
            regrets.push(series.last().copied().unwrap_or(f64::NAN) / HORIZON as f64);
        }
        finals.push(median(&regrets));
    }
    let (gb, mf, inexact) = (finals[0], finals[1], finals[2]);
    let ordering = gb <= mf.min(inexact);
    Ok(Outcome {
        passed: ordering && infeasible == 0,
        detail: format!(
            "median time-averaged regret: gray-box {gb:.4e}, model-free {mf:.4e}, inexact {inexact:.4e}; \
             ordering {}; infeasible iterates {infeasible}",
            if ordering { "holds" } else { "violated" }
        ),
    })
}

fn criterion_7() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for horizon in [100, 1_000, 10_000] {
        for seed in 0..10 {
            let c = check_tracking_bound(seed, horizon)?;
            worst = worst.max(c.realized / c.bound);
            if !c.holds() {
                failures.push(format!("T={horizon} seed={seed}: {:.3e} > {:.3e}", c.realized, c.bound));
            }
        }
    }
    Ok(Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "30 runs, worst realized/bound ratio {worst:.3e}{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    })
}

fn criterion_8() -> Result<Outcome> {
    // The step size shrinks like T^(-1/3); the T^(-2/3) regime needs eta * mu * T > 1,
    // which on this instance starts around T = 3e4.
    let base = 50_000;
    let replicates = 10;
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let problem = verification_static_problem(seed)?;
        let quad = ReducedQuadratic::new(&problem.objective, &problem.plant)?;
        let (_, l) = quad.curvature_range();
        // Gradient bound along the descent: ||grad f(w)|| <= L ||w - u*|| from w_0 = 0.
        let m = l * quad.minimizer()?.norm();
        let p = problem.plant.dims().p;
        let measure = |t: usize| -> Result<f64> {
            let (eta, delta) = theoretical_params_static(l, m, p, t)?;
            let spec = ControllerSpec {
                label: "model-free".into(),
                mode: Mode::ModelFree,
                eta,
                delta,
                schedule: None,
                sensitivity: SensitivitySpec::Exact,
            };
            let mut total = 0.0;
            for r in 0..replicates {
                let run = run_static_replicate(&problem, &spec, seed, r, t, RunOptions::default())?;
                total += avg_sq_grad_norm(&run.log)?;
            }
            Ok(total / replicates as f64)
        };
        ratios.push(measure(base)? / measure(8 * base)?);
    }
    let med = median(&ratios);
    Ok(Outcome {
        passed: (2.0..=8.0).contains(&med),
        detail: format!("T={base} vs 8T: median decrease factor {med:.3} over 10 seeds (accepted range [2, 8])"),
    })
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_graybox")).args(args).output().expect("graybox binary runs")
}

fn criterion_9() -> Result<Outcome> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut csvs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let run = run_cli(&["run-static", "--seed", "7", "--replicates", "2", "--out", out.to_str().expect("utf-8 path")]);
        if !run.status.success() {
            return Ok(Outcome {
                passed: false,
                detail: format!("run-static failed: {}", String::from_utf8_lossy(&run.stderr)),
            });
        }
        csvs.push(read(&out.join("static.csv")));
    }
    let identical = csvs[0] == csvs[1] && !csvs[0].is_empty();
    let check = run_cli(&["check"]);
    Ok(Outcome {
        passed: identical && check.status.code() == Some(0),
        detail: format!(
            "two run-static invocations byte-identical: {identical} ({} bytes); check exit code {:?}",
            csvs[0].len(),
            check.status.code()
        ),
    })
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn main() {
    let criteria: [(u8, &str, Check, f64); 9] = [
        (1, "degeneration equivalence", Box::new(|| suite_criterion(1, 1.0)), 1.0),
        (2, "oracle agreement", Box::new(|| suite_criterion(2, 1.0)), 1.0),
        (3, "smoothing identities", Box::new(|| suite_criterion(3, 30.0)), 30.0),
        (4, "cumulative error envelope", Box::new(|| suite_criterion(4, 5.0)), 5.0),
        (5, "static benchmark ordering", Box::new(criterion_5), 300.0),
        (6, "time-varying regret ordering", Box::new(criterion_6), 600.0),
        (7, "tracking bound", Box::new(criterion_7), 120.0),
        (8, "model-free rate scaling", Box::new(criterion_8), 600.0),
        (9, "reproducibility", Box::new(criterion_9), f64::INFINITY),
    ];
    let mut all = true;
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!("error: {e}"),
        });
        let secs = start.elapsed().as_secs_f64();
        let passed = outcome.passed && secs < budget;
        all &= passed;
        println!(
            "criterion {id} ({name}): {} [{secs:.1}s] {}",
            if passed { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if !all {
        std::process::exit(1);
    }
}
