//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored, except that
//! `# config key=value` lines are read as settings. Every output file starts
//! with exactly those lines, so any CSV written by the tool can be passed back
//! through `--config` to reproduce it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use radialfeas::baselines::Dc3Config;
use radialfeas::method::{Method, MethodConfig};
use radialfeas::nets::Activation;
use radialfeas::tasks::dispatch::DispatchConfig;
use radialfeas::tasks::portfolio::PortfolioConfig;
use radialfeas::tasks::toy2d::Toy2dConfig;
use radialfeas::{ContractionFamily, RadialContraction};

use crate::error::{CliError, Result};

pub const HEADER_PREFIX: &str = "# config ";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Toy2d,
    Portfolio,
    Dispatch,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Toy2d => "toy2d",
            Task::Portfolio => "portfolio",
            Task::Dispatch => "dispatch",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy2d" => Ok(Task::Toy2d),
            "portfolio" => Ok(Task::Portfolio),
            "dispatch" => Ok(Task::Dispatch),
            _ => Err(CliError::Config(format!(
                "unknown task '{s}' (expected toy2d, portfolio or dispatch)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub contraction: ContractionFamily,
    pub epsilon: f64,
    pub lambda: f64,
    pub softmax_tau: f64,
    pub hardnet_steps: usize,
    pub dc3_steps: usize,
    pub dc3_lr: f64,
    pub dc3_momentum: f64,
    pub gamma: f64,
    pub delta: f64,
    pub excess_returns: bool,
    pub cap: f64,
    pub lookback: usize,
    pub kappa: f64,
    pub lags: usize,
    /// `None` is 0.05 times the mean training demand.
    pub softmin_tau: Option<f64>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: String,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub train_frac: f64,
    pub assets: usize,
    pub periods: usize,
    pub factors: usize,
    pub zones: usize,
    pub hours: usize,
    /// CSV input; synthetic data seeded per run when absent.
    pub data: Option<PathBuf>,
    pub half_width: f64,
    pub toy_target: [f64; 2],
    pub toy_init: [f64; 2],
    pub toy_steps: usize,
    pub toy_lr: f64,
    pub warp_extent: f64,
    pub warp_spacing: f64,
    /// Output directory. Not echoed into file headers.
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = PortfolioConfig::default();
        let d = DispatchConfig::default();
        let t = Toy2dConfig::default();
        let m = MethodConfig::default();
        Self {
            task: Task::Portfolio,
            methods: vec![Method::SoftRadial],
            seeds: vec![0],
            contraction: m.contraction.family(),
            epsilon: m.contraction.epsilon(),
            lambda: m.contraction.lambda(),
            softmax_tau: m.softmax_tau,
            hardnet_steps: m.hardnet_steps,
            dc3_steps: m.dc3.steps,
            dc3_lr: m.dc3.step_size,
            dc3_momentum: m.dc3.momentum,
            gamma: p.gamma,
            delta: p.delta,
            excess_returns: p.excess_returns,
            cap: p.cap,
            lookback: p.lookback,
            kappa: d.kappa,
            lags: d.lags,
            softmin_tau: d.softmin_tau,
            hidden: p.hidden.clone(),
            activation: p.activation,
            optimizer: "adam".into(),
            lr: p.lr,
            epochs: p.epochs,
            batch_size: p.window,
            dropout: p.dropout,
            train_frac: p.train_frac,
            assets: 10,
            periods: 500,
            factors: 3,
            zones: 20,
            hours: 1000,
            data: None,
            half_width: t.half_width,
            toy_target: t.target,
            toy_init: t.init,
            toy_steps: t.steps,
            toy_lr: t.lr,
            warp_extent: 3.0,
            warp_spacing: 0.25,
            out: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key}={value}: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let items = value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(bad(key, value, "expected a comma-separated list"));
    }
    Ok(items)
}

fn pair(key: &str, value: &str) -> Result<[f64; 2]> {
    match list::<f64>(key, value)?.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(bad(key, value, "expected two comma-separated numbers")),
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 44] = [
        "task",
        "method",
        "seeds",
        "contraction",
        "epsilon",
        "lambda",
        "softmax_tau",
        "hardnet_steps",
        "dc3_steps",
        "dc3_lr",
        "dc3_momentum",
        "gamma",
        "delta",
        "excess_returns",
        "cap",
        "lookback",
        "kappa",
        "lags",
        "softmin_tau",
        "hidden",
        "activation",
        "optimizer",
        "lr",
        "epochs",
        "batch_size",
        "dropout",
        "train_frac",
        "assets",
        "periods",
        "factors",
        "zones",
        "hours",
        "data",
        "half_width",
        "toy_target",
        "toy_init",
        "toy_steps",
        "toy_lr",
        "warp_extent",
        "warp_spacing",
        "out",
        // Aliases accepted on input only.
        "seed",
        "methods",
        "window",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "task" => self.task = value.parse()?,
            "method" | "methods" => {
                self.methods = if value == "all" {
                    Method::ALL.to_vec()
                } else {
                    list(key, value)?
                };
                let mut seen = self.methods.clone();
                seen.sort_by_key(|m| m.name());
                seen.dedup();
                if seen.len() != self.methods.len() {
                    return Err(bad(key, value, "methods must not repeat"));
                }
            }
            "seeds" | "seed" => self.seeds = list(key, value)?,
            "contraction" => self.contraction = value.parse().map_err(|e| bad(key, value, e))?,
            "epsilon" => self.epsilon = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "softmax_tau" => self.softmax_tau = num(key, value)?,
            "hardnet_steps" => self.hardnet_steps = num(key, value)?,
            "dc3_steps" => self.dc3_steps = num(key, value)?,
            "dc3_lr" => self.dc3_lr = num(key, value)?,
            "dc3_momentum" => self.dc3_momentum = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "excess_returns" => self.excess_returns = num(key, value)?,
            "cap" => self.cap = num(key, value)?,
            "lookback" => self.lookback = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "lags" => self.lags = num(key, value)?,
            "softmin_tau" => self.softmin_tau = if value == "auto" { None } else { Some(num(key, value)?) },
            "hidden" => {
                self.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    list(key, value)?
                }
            }
            "activation" => self.activation = value.parse().map_err(|e| bad(key, value, e))?,
            "optimizer" => {
                if value != "adam" {
                    return Err(bad(key, value, "only 'adam' is supported"));
                }
                self.optimizer = value.into();
            }
            "lr" => self.lr = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" | "window" => self.batch_size = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "train_frac" => self.train_frac = num(key, value)?,
            "assets" => self.assets = num(key, value)?,
            "periods" => self.periods = num(key, value)?,
            "factors" => self.factors = num(key, value)?,
            "zones" => self.zones = num(key, value)?,
            "hours" => self.hours = num(key, value)?,
            "data" => {
                self.data = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "half_width" => self.half_width = num(key, value)?,
            "toy_target" => self.toy_target = pair(key, value)?,
            "toy_init" => self.toy_init = pair(key, value)?,
            "toy_steps" => self.toy_steps = num(key, value)?,
            "toy_lr" => self.toy_lr = num(key, value)?,
            "warp_extent" => self.warp_extent = num(key, value)?,
            "warp_spacing" => self.warp_spacing = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => {
                return Err(CliError::Config(format!(
                    "unknown key '{other}'; known keys: {}",
                    Self::KEYS[..41].join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines. See the module docs for comment handling.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let has_header = text.lines().any(|l| l.starts_with(HEADER_PREFIX));
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            let setting = if let Some(rest) = line.strip_prefix(HEADER_PREFIX) {
                rest
            } else if has_header || line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            } else {
                line
            };
            let (key, value) = setting
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Resolved settings in a fixed order, without the output directory.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("task", self.task.to_string()),
            ("method", join(&self.methods)),
            ("seeds", join(&self.seeds)),
            ("contraction", self.contraction.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("lambda", self.lambda.to_string()),
            ("softmax_tau", self.softmax_tau.to_string()),
            ("hardnet_steps", self.hardnet_steps.to_string()),
            ("dc3_steps", self.dc3_steps.to_string()),
            ("dc3_lr", self.dc3_lr.to_string()),
            ("dc3_momentum", self.dc3_momentum.to_string()),
            ("gamma", self.gamma.to_string()),
            ("delta", self.delta.to_string()),
            ("excess_returns", self.excess_returns.to_string()),
            ("cap", self.cap.to_string()),
            ("lookback", self.lookback.to_string()),
            ("kappa", self.kappa.to_string()),
            ("lags", self.lags.to_string()),
            ("softmin_tau", self.softmin_tau.map_or("auto".into(), |t| t.to_string())),
            ("hidden", join(&self.hidden)),
            ("activation", self.activation.to_string()),
            ("optimizer", self.optimizer.clone()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("dropout", self.dropout.to_string()),
            ("train_frac", self.train_frac.to_string()),
            ("assets", self.assets.to_string()),
            ("periods", self.periods.to_string()),
            ("factors", self.factors.to_string()),
            ("zones", self.zones.to_string()),
            ("hours", self.hours.to_string()),
            (
                "data",
                self.data.as_ref().map_or(String::new(), |p| p.display().to_string()),
            ),
            ("half_width", self.half_width.to_string()),
            ("toy_target", join(&self.toy_target)),
            ("toy_init", join(&self.toy_init)),
            ("toy_steps", self.toy_steps.to_string()),
            ("toy_lr", self.toy_lr.to_string()),
            ("warp_extent", self.warp_extent.to_string()),
            ("warp_spacing", self.warp_spacing.to_string()),
        ]
    }

    /// Comment block that opens every output file.
    pub fn header(&self) -> String {
        let mut s = format!("# radialfeas {}\n", radialfeas::VERSION);
        for (k, v) in self.entries() {
            s.push_str(&format!("{HEADER_PREFIX}{k}={v}\n"));
        }
        s
    }

    pub fn contraction(&self) -> Result<RadialContraction> {
        Ok(RadialContraction::new(self.contraction, self.epsilon, self.lambda)?)
    }

    pub fn method_config(&self) -> Result<MethodConfig> {
        Ok(MethodConfig {
            contraction: self.contraction()?,
            softmax_tau: self.softmax_tau,
            hardnet_steps: self.hardnet_steps,
            dc3: Dc3Config::new(self.dc3_steps, self.dc3_lr, self.dc3_momentum)?,
        })
    }

    pub fn portfolio(&self) -> Result<PortfolioConfig> {
        Ok(PortfolioConfig {
            lookback: self.lookback,
            gamma: self.gamma,
            delta: self.delta,
            cap: self.cap,
            hidden: self.hidden.clone(),
            activation: self.activation,
            epochs: self.epochs,
            window: self.batch_size,
            lr: self.lr,
            train_frac: self.train_frac,
            dropout: self.dropout,
            excess_returns: self.excess_returns,
            method: self.method_config()?,
        })
    }

    pub fn dispatch(&self) -> Result<DispatchConfig> {
        Ok(DispatchConfig {
            kappa: self.kappa,
            lags: self.lags,
            softmin_tau: self.softmin_tau,
            hidden: self.hidden.clone(),
            activation: self.activation,
            epochs: self.epochs,
            window: self.batch_size,
            lr: self.lr,
            train_frac: self.train_frac,
            dropout: self.dropout,
            method: self.method_config()?,
        })
    }

    pub fn toy2d(&self) -> Result<Toy2dConfig> {
        Ok(Toy2dConfig {
            half_width: self.half_width,
            target: self.toy_target,
            init: self.toy_init,
            steps: self.toy_steps,
            lr: self.toy_lr,
            contraction: self.contraction()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("task=dispatch\nmethod=all\nseeds=3,1\nsoftmin_tau=0.25\ndata=x.csv\nlr=3e-4\n")
            .unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&format!("{}step,loss\n1,2\n", cfg.header())).unwrap();
        back.out = cfg.out.clone();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_aliases() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# a comment\n\nseed = 7\nwindow=16\nhidden=\n").unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.batch_size, 16);
        assert!(cfg.hidden.is_empty());
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = ExperimentConfig::default();
        let e = cfg.apply_text("lr=fast\n").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("lr=fast"), "{e}");
        assert!(cfg
            .set("colour", "red")
            .unwrap_err()
            .to_string()
            .contains("unknown key"));
        assert!(cfg.set("optimizer", "sgd").is_err());
        assert!(cfg.set("method", "soft-radial,soft-radial").is_err());
        assert!(cfg.apply_text("no equals sign\n").is_err());
    }
}
