//! Subcommands. Each writes CSVs that open with the resolved config.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use radialfeas::autodiff::Tape;
use radialfeas::baselines::{
    dc3_on_tape, dc3_project, hardnet_correct, orth_projection_vjp, project_capped_simplex, AffineBounds, Dc3Config,
};
use radialfeas::method::Method;
use radialfeas::nets::{AdamState, Mlp};
use radialfeas::oracles::{bisect_boundary, fd_jacobian, qp_projection_oracle, OracleReport};
use radialfeas::sets::{Ball, LevelSet};
use radialfeas::tasks::data::{load_demand_csv, load_returns_csv, synth_demand, synth_market};
use radialfeas::tasks::dispatch::{self, DispatchTrainer};
use radialfeas::tasks::portfolio::{self, PortfolioTrainer, FEASIBILITY_TOL};
use radialfeas::tasks::toy2d::{run_toy2d, warp_grid};
use radialfeas::tasks::{
    drift_weights, pseudo_huber_turnover, scaled_capped_projection, served_rate, sharpe_objective, softmin,
    EpochRecord, ServedMode, SharpeSpec,
};
use radialfeas::{ContractionFamily, ConvexSet, RadialContraction, SoftRadialLayer};

use crate::checks::{self, JacobianFn};
use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, CsvFile};

/// Worker cap from `RADIALFEAS_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("RADIALFEAS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub struct Demo2dOutput {
    pub trajectory: PathBuf,
    pub warp: PathBuf,
    pub final_losses: Vec<(Method, f64)>,
}

/// Gradient descent traces for soft-radial and orthogonal, and the grid warp
/// for every contraction family, lambda and epsilon in the sweep.
pub fn cmd_demo2d(cfg: &ExperimentConfig) -> Result<Demo2dOutput> {
    ensure_dir(&cfg.out)?;
    let toy = cfg.toy2d()?;
    let mut traj = CsvFile::new(&cfg.header());
    traj.columns("method,step,u1,u2,p1,p2,loss");
    let mut final_losses = Vec::new();
    for method in [Method::SoftRadial, Method::Orthogonal] {
        let run = run_toy2d(&toy, method)?;
        for p in &run {
            traj.row([
                method.to_string(),
                p.step.to_string(),
                p.u[0].to_string(),
                p.u[1].to_string(),
                p.p[0].to_string(),
                p.p[1].to_string(),
                p.loss.to_string(),
            ]);
        }
        final_losses.push((method, run.last().map_or(f64::NAN, |p| p.loss)));
    }
    let mut warp = CsvFile::new(&cfg.header());
    warp.columns("family,lambda,epsilon,u1,u2,p1,p2");
    for s in warp_grid(cfg.half_width, cfg.warp_extent, cfg.warp_spacing)? {
        warp.row([
            s.family.to_string(),
            s.lambda.to_string(),
            s.epsilon.to_string(),
            s.u[0].to_string(),
            s.u[1].to_string(),
            s.p[0].to_string(),
            s.p[1].to_string(),
        ]);
    }
    Ok(Demo2dOutput {
        trajectory: traj.write(&cfg.out.join("trajectory.csv"))?,
        warp: warp.write(&cfg.out.join("warp.csv"))?,
        final_losses,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub method: Method,
    pub seed: u64,
    /// Final evaluation metrics in a fixed order per task.
    pub metrics: Vec<(&'static str, f64)>,
    pub metrics_path: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl RunOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn violations(&self) -> usize {
        self.metric("violations").unwrap_or(0.0) as usize
    }
}

fn run_name(method: Method, seed: u64) -> String {
    format!("{method}_seed{seed}")
}

/// Rejects method/task combinations before any work starts.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.methods.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::Config("at least one method and one seed are required".into()));
    }
    match cfg.task {
        Task::Toy2d => {
            if let Some(m) = cfg
                .methods
                .iter()
                .find(|m| !matches!(m, Method::SoftRadial | Method::Orthogonal))
            {
                return Err(CliError::Config(format!(
                    "the toy2d task supports soft-radial and orthogonal, not {m}"
                )));
            }
        }
        Task::Dispatch => {
            let caps = vec![cfg.kappa; cfg.zones.max(1)];
            for m in &cfg.methods {
                m.supports_caps(&caps)?;
            }
        }
        Task::Portfolio => {}
    }
    cfg.method_config()?;
    Ok(())
}

fn metrics_file(cfg: &ExperimentConfig, method: Method, seed: u64, notes: &[String], columns: &str) -> CsvFile {
    let mut f = CsvFile::new(&cfg.header());
    f.comment(&format!("run method={method} seed={seed}"));
    for n in notes {
        f.comment(n);
    }
    if cfg.task == Task::Portfolio {
        f.comment("sharpe is the per-period ratio on the held-out split, not annualized");
    }
    f.columns(columns);
    f
}

fn record_row(f: &mut CsvFile, r: &EpochRecord) {
    f.row([
        r.step.to_string(),
        r.loss.to_string(),
        r.objective.to_string(),
        r.secondary.to_string(),
        r.feasibility_margin.to_string(),
    ]);
}

fn save_checkpoint(cfg: &ExperimentConfig, net: &Mlp, path: &Path, note: &str) -> Result<PathBuf> {
    let mut text = cfg.header();
    text.push_str(&format!("# {note}\n"));
    text.push_str(&net.to_checkpoint());
    std::fs::write(path, text).map_err(crate::error::io_context(format!("cannot write {}", path.display())))?;
    Ok(path.to_path_buf())
}

/// Drives a trainer epoch by epoch. On a non-finite loss the parameters from
/// the last completed epoch are written next to the regular checkpoint.
fn drive<N, E>(
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
    metrics: &mut CsvFile,
    net: N,
    mut epoch: E,
) -> Result<Mlp>
where
    N: Fn() -> Mlp,
    E: FnMut() -> radialfeas::Result<EpochRecord>,
{
    let name = run_name(method, seed);
    let mut last_good = net();
    for _ in 0..cfg.epochs {
        match epoch() {
            Ok(r) if r.loss.is_finite() && r.objective.is_finite() => {
                record_row(metrics, &r);
                last_good = net();
            }
            Ok(r) => {
                return Err(diverged(
                    cfg,
                    &name,
                    metrics,
                    &last_good,
                    format!("epoch {} loss {} objective {}", r.step, r.loss, r.objective),
                ));
            }
            Err(radialfeas::Error::NonFinite(reason)) => {
                return Err(diverged(cfg, &name, metrics, &last_good, reason));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(last_good)
}

fn diverged(cfg: &ExperimentConfig, name: &str, metrics: &CsvFile, last_good: &Mlp, reason: String) -> CliError {
    let checkpoint = cfg.out.join(format!("model_{name}.last_good.ckpt"));
    let saved = save_checkpoint(cfg, last_good, &checkpoint, &format!("last good parameters of {name}"))
        .and_then(|_| metrics.write(&cfg.out.join(format!("metrics_{name}.csv"))));
    if let Err(e) = saved {
        return e;
    }
    CliError::Diverged {
        run: name.to_string(),
        reason,
        checkpoint,
    }
}

/// One training run: per-epoch metrics CSV, final checkpoint, final metrics.
pub fn run_one(cfg: &ExperimentConfig, method: Method, seed: u64) -> Result<RunOutcome> {
    let name = run_name(method, seed);
    let metrics_path = cfg.out.join(format!("metrics_{name}.csv"));
    let ckpt_path = cfg.out.join(format!("model_{name}.ckpt"));
    match cfg.task {
        Task::Toy2d => {
            let run = run_toy2d(&cfg.toy2d()?, method)?;
            let mut f = metrics_file(cfg, method, seed, &[], "step,loss,u1,u2,p1,p2");
            let h = cfg.half_width;
            let mut violations = 0usize;
            for p in &run {
                f.row([p.step as f64, p.loss, p.u[0], p.u[1], p.p[0], p.p[1]]);
                if p.p.iter().any(|v| v.abs() > h + FEASIBILITY_TOL) {
                    violations += 1;
                }
            }
            f.write(&metrics_path)?;
            Ok(RunOutcome {
                method,
                seed,
                metrics: vec![
                    ("final_loss", run.last().map_or(f64::NAN, |p| p.loss)),
                    ("violations", violations as f64),
                ],
                metrics_path,
                checkpoint: None,
            })
        }
        Task::Portfolio => {
            let market = match &cfg.data {
                Some(p) => load_returns_csv(p)?,
                None => synth_market(seed, cfg.assets, cfg.periods, cfg.factors)?,
            };
            let pcfg = cfg.portfolio()?;
            let batch = portfolio::build_batch(&market, &pcfg)?;
            let mut trainer = PortfolioTrainer::new(&batch, method, &pcfg, seed)?;
            let mut f = metrics_file(
                cfg,
                method,
                seed,
                &[],
                "step,loss,objective,turnover,feasibility_margin",
            );
            let trainer_cell = std::cell::RefCell::new(&mut trainer);
            let net = drive(
                cfg,
                method,
                seed,
                &mut f,
                || trainer_cell.borrow().net().clone(),
                || trainer_cell.borrow_mut().run_epoch(),
            )?;
            let eval = trainer.evaluate()?;
            f.write(&metrics_path)?;
            save_checkpoint(cfg, &net, &ckpt_path, &format!("final parameters of {name}"))?;
            Ok(RunOutcome {
                method,
                seed,
                metrics: vec![
                    ("sharpe", eval.sharpe),
                    ("turnover", eval.turnover),
                    ("violations", eval.violations as f64),
                    ("min_margin", eval.min_margin),
                ],
                metrics_path,
                checkpoint: Some(ckpt_path),
            })
        }
        Task::Dispatch => {
            let demand = match &cfg.data {
                Some(p) => load_demand_csv(p)?,
                None => synth_demand(seed, cfg.zones, cfg.hours)?,
            };
            let dcfg = cfg.dispatch()?;
            let batch = dispatch::build_batch(&demand, &dcfg)?;
            let mut trainer = DispatchTrainer::new(&batch, method, &dcfg, seed)?;
            let notes = [format!("softmin_tau resolved to {}", batch.softmin_tau)];
            let mut f = metrics_file(
                cfg,
                method,
                seed,
                &notes,
                "step,loss,objective,served_rate,feasibility_margin",
            );
            let trainer_cell = std::cell::RefCell::new(&mut trainer);
            let net = drive(
                cfg,
                method,
                seed,
                &mut f,
                || trainer_cell.borrow().net().clone(),
                || trainer_cell.borrow_mut().run_epoch(),
            )?;
            let eval = trainer.evaluate()?;
            f.write(&metrics_path)?;
            save_checkpoint(cfg, &net, &ckpt_path, &format!("final parameters of {name}"))?;
            Ok(RunOutcome {
                method,
                seed,
                metrics: vec![
                    ("served_rate", eval.served_rate),
                    ("violations", eval.violations as f64),
                    ("min_margin", eval.min_margin),
                ],
                metrics_path,
                checkpoint: Some(ckpt_path),
            })
        }
    }
}

/// Every method and seed, on up to `workers` threads. Results come back in
/// config order (methods as listed, seeds ascending) whatever the schedule.
pub fn cmd_train(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<RunOutcome>> {
    validate(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(Method, u64)> = cfg
        .methods
        .iter()
        .flat_map(|m| seeds.iter().map(move |s| (*m, *s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<RunOutcome>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(method, seed)) = jobs.get(i) else { break };
                let result = run_one(cfg, method, seed);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

pub struct SweepOutput {
    pub summary: PathBuf,
    pub runs: Vec<RunOutcome>,
}

/// Sample standard deviation; 0 for a single seed.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summary CSV `method,seed,metric,value`: per-seed rows, then `count`, `mean`
/// and `std` rows per method and metric.
pub fn summary_csv(cfg: &ExperimentConfig, runs: &[RunOutcome]) -> CsvFile {
    let mut f = CsvFile::new(&cfg.header());
    f.comment("std is the sample standard deviation over seeds");
    f.columns("method,seed,metric,value");
    for method in &cfg.methods {
        let mut mine: Vec<&RunOutcome> = runs.iter().filter(|r| r.method == *method).collect();
        mine.sort_by_key(|r| r.seed);
        let Some(first) = mine.first() else { continue };
        for r in &mine {
            for (k, v) in &r.metrics {
                f.row([method.to_string(), r.seed.to_string(), k.to_string(), v.to_string()]);
            }
        }
        f.row([
            method.to_string(),
            "count".into(),
            "seeds".into(),
            mine.len().to_string(),
        ]);
        for (k, _) in &first.metrics {
            let values: Vec<f64> = mine.iter().filter_map(|r| r.metric(k)).collect();
            let (mean, std) = mean_std(&values);
            f.row([method.to_string(), "mean".into(), k.to_string(), mean.to_string()]);
            f.row([method.to_string(), "std".into(), k.to_string(), std.to_string()]);
        }
    }
    f
}

pub fn cmd_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepOutput> {
    let runs = cmd_train(cfg, workers)?;
    let summary = summary_csv(cfg, &runs).write(&cfg.out.join("summary.csv"))?;
    Ok(SweepOutput { summary, runs })
}

pub struct ReportOutput {
    pub reports: Vec<OracleReport>,
    pub path: PathBuf,
}

impl ReportOutput {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&OracleReport> {
        self.reports.iter().filter(|r| !r.pass).collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

fn write_reports(cfg: &ExperimentConfig, name: &str, reports: Vec<OracleReport>) -> Result<ReportOutput> {
    ensure_dir(&cfg.out)?;
    let mut f = CsvFile::new(&cfg.header());
    f.columns(OracleReport::CSV_HEADER);
    for r in &reports {
        f.columns(&r.csv_row());
    }
    let path = f.write(&cfg.out.join(name))?;
    Ok(ReportOutput { reports, path })
}

/// Invariant suite with the analytic Jacobian.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<ReportOutput> {
    cmd_verify_with(cfg, &checks::analytic_jacobian)
}

/// Invariant suite with a substitute Jacobian, so the failure path can be
/// exercised.
pub fn cmd_verify_with(cfg: &ExperimentConfig, jacobian: &JacobianFn) -> Result<ReportOutput> {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    write_reports(cfg, "verify.csv", checks::invariant_suite(seed, jacobian)?)
}

fn vec_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worked examples, each compared against an independent computation.
pub fn oracle_reports() -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let ball = ConvexSet::ball(Ball::new(vec![0.0, 0.0], 1.0)?, vec![0.0, 0.0])?;
    let level = ConvexSet::level_set(
        LevelSet::new(
            2,
            std::sync::Arc::new(|x: &[f64]| (x[0] * x[0] + x[1] * x[1] - 1.0, vec![2.0 * x[0], 2.0 * x[1]])),
        ),
        vec![0.0, 0.0],
    )?;
    out.push(OracleReport::new(
        "ball_boundary_time_vs_bisection",
        ball.ray_boundary_time(&[2.0, 0.0])?,
        bisect_boundary(&ball, &[2.0, 0.0], 200)?,
        1e-12,
    ));
    out.push(OracleReport::new(
        "level_set_boundary_time_vs_ball",
        level.ray_boundary_time(&[2.0, 0.0])?,
        ball.ray_boundary_time(&[2.0, 0.0])?,
        1e-12,
    ));
    let lg = level.gauge_and_gradient(&[2.0, 0.0])?;
    let bg = ball.gauge_and_gradient(&[2.0, 0.0])?;
    out.push(OracleReport::error_only(
        "level_set_gauge_gradient_vs_ball",
        vec_err(&lg.gradient, &bg.gradient).max((lg.value - bg.value).abs()),
        1e-12,
    ));

    let rc = RadialContraction::new(ContractionFamily::Rational, 0.5, 1.0)?;
    let layer = SoftRadialLayer::new(ball.clone(), rc);
    out.push(OracleReport::error_only(
        "soft_project_exterior_example",
        vec_err(&layer.soft_project(&[2.0, 0.0])?, &[0.9, 0.0]),
        1e-12,
    ));
    out.push(OracleReport::error_only(
        "soft_project_interior_example",
        vec_err(&layer.soft_project(&[0.5, 0.0])?, &[0.3, 0.0]),
        1e-12,
    ));
    for (name, u) in [
        ("jacobian_interior_vs_fd", [0.5, 0.0]),
        ("jacobian_exterior_vs_fd", [2.0, 0.0]),
    ] {
        let j = layer.jacobian(&u)?.matrix;
        let fd = fd_jacobian(|x| layer.soft_project(x).expect("finite input"), &u, 1e-6);
        out.push(OracleReport::error_only(name, (&j - &fd).abs().max(), 1e-8));
    }
    let fd = fd_jacobian(|x| layer.soft_project(x).expect("finite input"), &[2.0, 0.0], 1e-6);
    let dense: Vec<f64> = (0..2).map(|c| fd[(0, c)] + fd[(1, c)]).collect();
    out.push(OracleReport::error_only(
        "vjp_exterior_vs_dense_transpose",
        vec_err(&layer.vjp(&[2.0, 0.0], &[1.0, 1.0])?, &dense),
        1e-8,
    ));
    let back = layer.inverse(&[0.9, 0.0])?;
    out.push(OracleReport::error_only(
        "inverse_example",
        vec_err(&back, &[2.0, 0.0]),
        1e-10,
    ));
    out.push(OracleReport::error_only(
        "inverse_then_project",
        vec_err(&layer.soft_project(&back)?, &[0.9, 0.0]),
        1e-10,
    ));
    out.extend(checks::pl_law()?);

    let caps = [0.5; 3];
    out.push(OracleReport::error_only(
        "capped_projection_vs_qp_oracle_example",
        vec_err(
            &project_capped_simplex(&[1.0, 0.0, 0.0], &caps)?,
            &qp_projection_oracle(&[1.0, 0.0, 0.0], &caps, 100_000)?,
        ),
        1e-7,
    ));
    let j = fd_jacobian(
        |x| project_capped_simplex(x, &caps).expect("finite input"),
        &[1.0, 0.0, 0.0],
        1e-7,
    );
    let fd_vjp: Vec<f64> = (0..3).map(|c| j[(0, c)]).collect();
    out.push(OracleReport::error_only(
        "orthogonal_vjp_vs_fd_example",
        vec_err(
            &orth_projection_vjp(&[1.0, 0.0, 0.0], &caps, &[1.0, 0.0, 0.0])?,
            &fd_vjp,
        ),
        1e-6,
    ));
    let unit = AffineBounds::new(nalgebra::DMatrix::from_element(1, 1, 1.0), vec![0.0], vec![1.0])?;
    out.push(OracleReport::new(
        "hardnet_scalar_above",
        hardnet_correct(&[1.5], &unit)?[0],
        1.0,
        1e-12,
    ));
    out.push(OracleReport::new(
        "hardnet_scalar_below",
        hardnet_correct(&[-0.25], &unit)?[0],
        0.0,
        1e-12,
    ));
    let dc3 = Dc3Config::new(1, 0.1, 0.0)?;
    let numeric = dc3_project(&[2.0, -1.0], &[1.0, 1.0], &dc3)?;
    let mut tape = Tape::new();
    let u = tape.leaf(vec![2.0, -1.0]);
    let traced = dc3_on_tape(&mut tape, u, &[1.0, 1.0], &dc3)?;
    out.push(OracleReport::error_only(
        "dc3_numeric_vs_tape_example",
        vec_err(&numeric, tape.value(traced)),
        1e-12,
    ));
    out.push(OracleReport::error_only(
        "dc3_hand_example",
        vec_err(&numeric, &[1.6, -0.6]),
        1e-12,
    ));
    out.push(OracleReport::error_only(
        "simplex_projection_example_sum",
        (project_capped_simplex(&[0.7, 0.7, -0.4], &[1.0; 3])?
            .iter()
            .sum::<f64>()
            - 1.0)
            .abs(),
        1e-12,
    ));

    let mut params = vec![vec![0.0]];
    let mut adam = AdamState::with_betas(0.1, 0.9, 0.999, 1e-8, &params);
    adam.step(&mut params, &[vec![1.0]])?;
    out.push(OracleReport::new("adam_first_step", params[0][0], -0.1, 1e-6));
    out.push(OracleReport::error_only(
        "drift_example",
        vec_err(&drift_weights(&[0.5, 0.5], &[2.0, 1.0])?, &[2.0 / 3.0, 1.0 / 3.0]),
        1e-15,
    ));
    // sqrt(10) - 1 + sqrt(17) - 1 via the cancellation-free form x^2 / (sqrt(x^2 + 1) + 1).
    let ph_oracle = 9.0 / (10f64.sqrt() + 1.0) + 16.0 / (17f64.sqrt() + 1.0);
    out.push(OracleReport::new(
        "pseudo_huber_example",
        pseudo_huber_turnover(&[3.0, 4.0], &[0.0, 0.0], 1.0),
        ph_oracle,
        1e-14,
    ));
    let spec = SharpeSpec {
        gamma: 0.0,
        delta: 1e-3,
        excess: false,
    };
    let static_w = vec![vec![1.0, 0.0]; 3];
    let y = vec![vec![1.1, 1.0], vec![0.9, 1.0]];
    out.push(OracleReport::new(
        "sharpe_two_step_example",
        sharpe_objective(&static_w, &y, &spec)?,
        1.0 / (0.1 + radialfeas::tasks::EPS_STD),
        1e-9,
    ));
    // log-sum-exp evaluated directly, with no shift: fine at these magnitudes.
    let sm_oracle = -((-1f64).exp() + (-2f64).exp()).ln();
    out.push(OracleReport::new(
        "softmin_example",
        softmin(1.0, 2.0, 1.0),
        sm_oracle,
        1e-14,
    ));
    out.push(OracleReport::new(
        "served_rate_hard_example",
        served_rate(&[2.0, 0.0], &[1.0, 1.0], 1.0, ServedMode::Hard)?,
        0.5,
        1e-15,
    ));
    let op = |x: &[f64]| project_capped_simplex(x, &[0.5; 3]);
    out.push(OracleReport::error_only(
        "scaled_projection_example",
        vec_err(
            &scaled_capped_projection(op, &[10.0, 0.0, 0.0], 10.0, 0.5)?,
            &[5.0, 2.5, 2.5],
        ),
        1e-12,
    ));
    Ok(out)
}

pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<ReportOutput> {
    write_reports(cfg, "oracle.csv", oracle_reports()?)
}
