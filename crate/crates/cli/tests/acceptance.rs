//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use radialfeas::method::Method;
use radialfeas::oracles::OracleReport;
use radialfeas_cli::checks::{self, analytic_jacobian};
use radialfeas_cli::commands::{cmd_sweep, worker_count, RunOutcome};
use radialfeas_cli::{ExperimentConfig, Task};

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn from_reports(reports: &[OracleReport]) -> Outcome {
    let failed: Vec<&OracleReport> = reports.iter().filter(|r| !r.pass).collect();
    let worst = reports
        .iter()
        .filter(|r| r.tolerance > 0.0)
        .max_by(|a, b| (a.rel_err / a.tolerance).total_cmp(&(b.rel_err / b.tolerance)));
    let mut detail = format!("{} checks", reports.len());
    if let Some(w) = worst {
        detail.push_str(&format!(
            ", tightest {} rel_err {:.2e} (tol {:.0e})",
            w.quantity, w.rel_err, w.tolerance
        ));
    }
    for f in &failed {
        detail.push_str(&format!(
            "; FAILED {} analytic {:e} oracle {:e}",
            f.quantity, f.analytic, f.oracle
        ));
    }
    Outcome {
        pass: failed.is_empty(),
        detail,
    }
}

fn with_time_limit(mut o: Outcome, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail.push_str(&format!(
                "; runtime {:.1}s exceeds {:.0}s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            ));
        }
    }
    o
}

fn mean_of(runs: &[RunOutcome], method: Method, metric: &str) -> f64 {
    let v: Vec<f64> = runs
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.metric(metric))
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn portfolio_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.task = Task::Portfolio;
    cfg.methods = Method::ALL.to_vec();
    cfg.seeds = vec![0, 1, 2];
    cfg.assets = 10;
    cfg.periods = 500;
    cfg.gamma = 0.1;
    cfg.cap = 0.2;
    cfg.epochs = 50;
    cfg.out = out.to_path_buf();
    cfg
}

fn frozen_toy2d(path: &Path) -> Result<(f64, f64), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut soft = None;
    let mut orth = None;
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let (method, value) = line.split_once(',').ok_or_else(|| format!("bad line `{line}`"))?;
        let v: f64 = value.trim().parse().map_err(|e| format!("bad value `{value}`: {e}"))?;
        match method {
            "soft-radial" => soft = Some(v),
            "orthogonal" => orth = Some(v),
            _ => {}
        }
    }
    Ok((soft.ok_or("no soft-radial row")?, orth.ok_or("no orthogonal row")?))
}

fn criterion_6() -> Result<Outcome, String> {
    let contrast = checks::saturation_contrast().map_err(|e| e.to_string())?;
    let mut o = from_reports(&contrast);
    let (soft, orth) = checks::toy2d_final_losses(&ExperimentConfig::default().toy2d().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let reference = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy2d_reference.csv");
    let (ref_soft, ref_orth) = frozen_toy2d(&reference)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let reproduced = rel(soft, ref_soft) <= 1e-9 && rel(orth, ref_orth) <= 1e-9;
    o.pass &= soft < orth && reproduced;
    o.detail.push_str(&format!(
        "; toy2d final loss soft-radial {soft:.6e} < orthogonal {orth:.6e}: {}, matches frozen reference: {reproduced}",
        soft < orth
    ));
    Ok(o)
}

fn criterion_10(out: &Path) -> Result<Outcome, String> {
    let cfg = portfolio_config(out);
    let sweep = cmd_sweep(&cfg, worker_count()).map_err(|e| e.to_string())?;
    let s_sharpe = mean_of(&sweep.runs, Method::SoftRadial, "sharpe");
    let o_sharpe = mean_of(&sweep.runs, Method::Orthogonal, "sharpe");
    let s_turn = mean_of(&sweep.runs, Method::SoftRadial, "turnover");
    let o_turn = mean_of(&sweep.runs, Method::Orthogonal, "turnover");
    let violations: usize = sweep.runs.iter().map(|r| r.violations()).sum();
    let mut means: Vec<String> = Vec::new();
    for m in Method::ALL {
        means.push(format!("{m} {:.3}", mean_of(&sweep.runs, m, "sharpe")));
    }
    Ok(Outcome {
        pass: s_sharpe >= o_sharpe && s_turn <= o_turn && violations == 0,
        detail: format!(
            "mean net Sharpe soft-radial {s_sharpe:.4} vs orthogonal {o_sharpe:.4}; mean turnover {s_turn:.4} vs {o_turn:.4}; \
             infeasible weight vectors {violations}; all means [{}]",
            means.join(", ")
        ),
    })
}

fn criterion_11(out: &Path) -> Result<Outcome, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.task = Task::Dispatch;
    cfg.methods = vec![Method::SoftRadial, Method::Orthogonal, Method::HardNet, Method::Dc3];
    cfg.seeds = vec![0, 1, 2];
    cfg.zones = 20;
    cfg.hours = 1000;
    cfg.kappa = 0.1;
    cfg.out = out.to_path_buf();
    let sweep = cmd_sweep(&cfg, worker_count()).map_err(|e| e.to_string())?;
    let means: Vec<(Method, f64)> = cfg
        .methods
        .iter()
        .map(|m| (*m, mean_of(&sweep.runs, *m, "served_rate")))
        .collect();
    let best = means.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let soft = mean_of(&sweep.runs, Method::SoftRadial, "served_rate");
    let orth = mean_of(&sweep.runs, Method::Orthogonal, "served_rate");
    let soft_ok = best - soft <= 0.01;
    let orth_gap = best - orth;
    let outcome = if orth_gap >= 0.01 {
        "below best"
    } else {
        "tied with best"
    };
    let violations: usize = sweep.runs.iter().map(|r| r.violations()).sum();
    let cells: Vec<String> = means.iter().map(|(m, v)| format!("{m} {v:.4}")).collect();
    Ok(Outcome {
        pass: soft_ok && violations == 0,
        detail: format!(
            "mean served rate [{}]; soft-radial gap to best {:.4}; orthogonal gap {orth_gap:.4} ({outcome}); \
             softmax excluded (caps below 1)",
            cells.join(", "),
            best - soft
        ),
    })
}

fn criterion_12() -> Result<Outcome, String> {
    let (initial, fitted) = checks::universal_approximation(2000, SEED).map_err(|e| e.to_string())?;
    let ratio = fitted / initial;
    Ok(Outcome {
        pass: ratio <= 0.1,
        detail: format!("MSE {initial:.4e} -> {fitted:.4e} after 2000 steps, ratio {ratio:.4} (limit 0.1)"),
    })
}

fn criterion_13(first: &Path, second: &Path) -> Result<Outcome, String> {
    // Same sweep as criterion 10 with a different worker count.
    let cfg = portfolio_config(second);
    let workers = if worker_count() == 1 { 4 } else { 1 };
    cmd_sweep(&cfg, workers).map_err(|e| e.to_string())?;
    let a = std::fs::read(first.join("summary.csv")).map_err(|e| e.to_string())?;
    let b = std::fs::read(second.join("summary.csv")).map_err(|e| e.to_string())?;
    Ok(Outcome {
        pass: a == b,
        detail: format!(
            "summary.csv {} bytes, identical across runs ({} vs {workers} workers): {}",
            a.len(),
            worker_count(),
            a == b
        ),
    })
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let portfolio_a = scratch.path().join("portfolio_a");
    let portfolio_b = scratch.path().join("portfolio_b");
    let dispatch_out = scratch.path().join("dispatch");
    let reports = |r: radialfeas::Result<Vec<OracleReport>>| r.map(|v| from_reports(&v)).map_err(|e| e.to_string());

    type Criterion<'a> = (&'a str, Option<u64>, Box<dyn Fn() -> Result<Outcome, String> + 'a>);
    let criteria: Vec<Criterion> = vec![
        (
            "1 geometry exactness",
            Some(5),
            Box::new(|| reports(checks::geometry_exactness(1000, SEED))),
        ),
        (
            "2 jacobian correctness",
            Some(30),
            Box::new(|| reports(checks::jacobian_correctness(1000, SEED, &analytic_jacobian))),
        ),
        (
            "3 homeomorphism round trip",
            None,
            Box::new(|| reports(checks::round_trip(1000, SEED))),
        ),
        (
            "4 strict feasibility",
            None,
            Box::new(|| reports(checks::strict_feasibility(10_000, SEED))),
        ),
        ("5 PL counterexample law", None, Box::new(|| reports(checks::pl_law()))),
        ("6 saturation contrast", None, Box::new(criterion_6)),
        (
            "7 capped-simplex projection",
            None,
            Box::new(|| reports(checks::capped_projection(1000, SEED))),
        ),
        (
            "8 baseline contracts",
            None,
            Box::new(|| reports(checks::baseline_contracts(1000, SEED))),
        ),
        (
            "9 anchor identity",
            None,
            Box::new(|| reports(checks::anchor_identity(100, SEED))),
        ),
        (
            "10 portfolio directional",
            Some(600),
            Box::new(|| criterion_10(&portfolio_a)),
        ),
        (
            "11 dispatch directional",
            Some(600),
            Box::new(|| criterion_11(&dispatch_out)),
        ),
        ("12 universal approximation", None, Box::new(criterion_12)),
        (
            "13 sweep determinism",
            None,
            Box::new(|| criterion_13(&portfolio_a, &portfolio_b)),
        ),
    ];

    let mut failures = 0;
    for (name, limit, run) in &criteria {
        let start = Instant::now();
        let outcome = match run() {
            Ok(o) => o,
            Err(e) => Outcome {
                pass: false,
                detail: format!("error: {e}"),
            },
        };
        let elapsed = start.elapsed();
        let outcome = with_time_limit(outcome, elapsed, limit.map(Duration::from_secs));
        if !outcome.pass {
            failures += 1;
        }
        println!(
            "{} criterion {name} [{:.2}s]: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
