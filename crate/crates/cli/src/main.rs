use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radialfeas_cli::commands::{self, ReportOutput};
use radialfeas_cli::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(
    name = "radialfeas",
    version,
    about = "Soft-radial feasibility layers: demos, training, sweeps and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 2D box demo: gradient descent traces and the grid warp.
    Demo2d(Common),
    /// Train every configured method and seed.
    Train(Common),
    /// Train every method and seed, then write summary.csv.
    Sweep(Common),
    /// Randomized invariant checks; exits nonzero on any failure.
    Verify(Common),
    /// Worked examples against independent oracles.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key=value` lines, or any CSV written by this tool.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated methods, or `all`.
    #[arg(long)]
    method: Option<String>,
    /// toy2d, portfolio or dispatch.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Returns CSV (portfolio) or demand CSV (dispatch) instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Any config key, repeatable: `--set epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| radialfeas_cli::CliError::Config(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(t) = &self.task {
            cfg.set("task", t)?;
        }
        if let Some(m) = &self.method {
            cfg.set("method", m)?;
        }
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(s) = &self.seeds {
            cfg.set("seeds", s)?;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }
}

fn report(kind: &str, out: &ReportOutput) -> ExitCode {
    let failures = out.failures();
    println!(
        "{kind}: {} of {} checks passed, report at {}",
        out.reports.len() - failures.len(),
        out.reports.len(),
        out.path.display()
    );
    for f in failures {
        eprintln!(
            "FAIL {}: analytic {:e} oracle {:e} rel_err {:e} > {:e}",
            f.quantity, f.analytic, f.oracle, f.rel_err, f.tolerance
        );
    }
    ExitCode::from(out.exit_code() as u8)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let workers = commands::worker_count();
    match cli.command {
        Command::Demo2d(c) => {
            let mut cfg = c.resolve()?;
            cfg.set("task", "toy2d")?;
            let out = commands::cmd_demo2d(&cfg)?;
            for (m, loss) in &out.final_losses {
                println!("{m}: final loss {loss:.6e}");
            }
            println!("wrote {} and {}", out.trajectory.display(), out.warp.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let runs = commands::cmd_train(&cfg, workers)?;
            let mut violations = 0;
            for r in &runs {
                let cells: Vec<String> = r
                    .metrics
                    .iter()
                    .map(|(k, v)| {
                        if *k == "violations" {
                            format!("{k}={v}")
                        } else {
                            format!("{k}={v:.6}")
                        }
                    })
                    .collect();
                println!("{} seed {}: {}", r.method, r.seed, cells.join(" "));
                violations += r.violations();
            }
            Ok(violation_exit(violations))
        }
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let out = commands::cmd_sweep(&cfg, workers)?;
            println!("{} runs, summary at {}", out.runs.len(), out.summary.display());
            Ok(violation_exit(out.runs.iter().map(|r| r.violations()).sum()))
        }
        Command::Verify(c) => Ok(report("verify", &commands::cmd_verify(&c.resolve()?)?)),
        Command::Oracle(c) => Ok(report("oracle", &commands::cmd_oracle(&c.resolve()?)?)),
    }
}

fn violation_exit(violations: usize) -> ExitCode {
    if violations > 0 {
        eprintln!("{violations} evaluation steps violated the constraints");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
