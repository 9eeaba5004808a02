//! End-to-end portfolio training: an MLP maps windowed market features to a
//! raw score vector, a constraint head maps it onto the capped simplex, and the
//! loss is the negative net Sharpe ratio over a window of consecutive periods.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::MarketData;
use super::{drift_weights, param_grads, sharpe_on_tape, EpochRecord, FeatureScaler, SharpeSpec, EPS_STD};
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::method::{simplex_margin, ConstraintHead, Method, MethodConfig};
use crate::nets::{Activation, AdamState, Mlp};

/// Margin below which an emitted weight vector counts as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioConfig {
    /// Periods in the feature window.
    pub lookback: usize,
    pub gamma: f64,
    pub delta: f64,
    pub cap: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    /// Periods per training window (one Sharpe ratio each).
    pub window: usize,
    pub lr: f64,
    pub train_frac: f64,
    pub dropout: f64,
    /// Use simple returns `w^T y - 1` rather than raw price relatives.
    pub excess_returns: bool,
    pub method: MethodConfig,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            lookback: 5,
            gamma: 0.1,
            delta: 1e-3,
            cap: 0.2,
            hidden: vec![32],
            activation: Activation::Relu,
            epochs: 50,
            window: 32,
            lr: 1e-3,
            train_frac: 0.7,
            dropout: 0.0,
            excess_returns: true,
            method: MethodConfig::default(),
        }
    }
}

impl PortfolioConfig {
    fn sharpe_spec(&self) -> SharpeSpec {
        SharpeSpec {
            gamma: self.gamma,
            delta: self.delta,
            excess: self.excess_returns,
        }
    }
}

/// Decision-aligned features and realized price relatives.
///
/// Decision `k` is taken after observing period `lookback - 1 + k` and earns
/// `next[k]`. Decisions `0..split` train, the rest evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioBatch {
    pub features: Vec<Vec<f64>>,
    pub next: Vec<Vec<f64>>,
    pub split: usize,
    pub caps: Vec<f64>,
    pub scaler: FeatureScaler,
}

impl PortfolioBatch {
    pub fn assets(&self) -> usize {
        self.caps.len()
    }

    pub fn decisions(&self) -> usize {
        self.features.len()
    }
}

fn window_features(window: &[Vec<f64>]) -> Vec<f64> {
    let h = window.len() as f64;
    let n = window[0].len();
    let logs: Vec<Vec<f64>> = window.iter().map(|r| r.iter().map(|y| y.ln()).collect()).collect();
    let market: Vec<f64> = logs.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let m_mean = market.iter().sum::<f64>() / h;
    let m_dev: Vec<f64> = market.iter().map(|m| m - m_mean).collect();
    let m_std = (m_dev.iter().map(|d| d * d).sum::<f64>() / h).sqrt();
    let mut out: Vec<f64> = logs.iter().flatten().copied().collect();
    let mut vols = Vec::with_capacity(n);
    let mut corrs = Vec::with_capacity(n);
    for i in 0..n {
        let mean = logs.iter().map(|r| r[i]).sum::<f64>() / h;
        let dev: Vec<f64> = logs.iter().map(|r| r[i] - mean).collect();
        let std = (dev.iter().map(|d| d * d).sum::<f64>() / h).sqrt();
        let cov = dev.iter().zip(&m_dev).map(|(a, b)| a * b).sum::<f64>() / h;
        vols.push(std);
        corrs.push(if std > 0.0 && m_std > 0.0 {
            cov / (std * m_std)
        } else {
            0.0
        });
    }
    out.extend(vols);
    out.extend(corrs);
    out
}

/// Lagged log returns, rolling volatility and rolling correlation to the
/// equal-weight market, normalized with statistics of the training split.
pub fn build_batch(market: &MarketData, cfg: &PortfolioConfig) -> Result<PortfolioBatch> {
    let t = market.steps();
    let n = market.assets();
    if cfg.lookback < 2 {
        return Err(invalid("lookback must be at least 2"));
    }
    if t < cfg.lookback + 8 {
        return Err(invalid(format!(
            "{t} periods are too few for lookback {}",
            cfg.lookback
        )));
    }
    let caps = vec![cfg.cap; n];
    if cfg.cap * n as f64 <= 1.0 || cfg.cap > 1.0 {
        return Err(Error::InfeasibleSet(format!(
            "cap {} for {n} assets leaves no interior",
            cfg.cap
        )));
    }
    let decisions = t - cfg.lookback;
    let mut raw = Vec::with_capacity(decisions);
    let mut next = Vec::with_capacity(decisions);
    for k in 0..decisions {
        let end = cfg.lookback + k;
        raw.push(window_features(&market.relatives[k..end]));
        next.push(market.relatives[end].clone());
    }
    let split = ((decisions as f64) * cfg.train_frac).floor() as usize;
    if split < cfg.window + 1 || decisions - split < 3 {
        return Err(invalid(format!(
            "train split of {split} decisions cannot hold a window of {} (or the test split is too short)",
            cfg.window
        )));
    }
    let scaler = FeatureScaler::fit(&raw[..split])?;
    let features = raw.iter().map(|r| scaler.apply(r)).collect();
    Ok(PortfolioBatch {
        features,
        next,
        split,
        caps,
        scaler,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioEval {
    /// Net Sharpe ratio (per period, not annualized) with exact L1 costs.
    pub sharpe: f64,
    /// Mean one-way turnover `0.5 |w_t - drift(w_{t-1})|_1` per period.
    pub turnover: f64,
    pub violations: usize,
    pub min_margin: f64,
    pub weights: Vec<Vec<f64>>,
}

/// Seeded training state; one call to [`PortfolioTrainer::run_epoch`] per epoch.
pub struct PortfolioTrainer<'a> {
    batch: &'a PortfolioBatch,
    cfg: PortfolioConfig,
    head: ConstraintHead,
    net: Mlp,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a> PortfolioTrainer<'a> {
    pub fn new(batch: &'a PortfolioBatch, method: Method, cfg: &PortfolioConfig, seed: u64) -> Result<Self> {
        let head = ConstraintHead::new(method, batch.caps.clone(), cfg.method)?;
        let mut sizes = vec![batch.features[0].len()];
        sizes.extend(&cfg.hidden);
        sizes.push(batch.assets());
        let net = Mlp::new(&sizes, cfg.activation, seed)?;
        let adam = AdamState::new(cfg.lr, &net.parameters());
        Ok(Self {
            batch,
            cfg: cfg.clone(),
            head,
            net,
            adam,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_da7a),
            epoch: 0,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn head(&self) -> &ConstraintHead {
        &self.head
    }

    fn window_loss(&mut self, start: usize) -> Result<f64> {
        let b = self.cfg.window;
        let mut tape = Tape::new();
        let vars = self.net.bind(&mut tape)?;
        let mut weights: Vec<Var> = Vec::with_capacity(b + 1);
        for k in start..=start + b {
            let z = tape.leaf(self.batch.features[k].clone());
            let u = self
                .net
                .forward_with_dropout(&mut tape, &vars, z, self.cfg.dropout, &mut self.rng)?;
            weights.push(self.head.apply(&mut tape, u)?);
        }
        let sharpe = sharpe_on_tape(
            &mut tape,
            &weights,
            &self.batch.next[start..start + b],
            &self.cfg.sharpe_spec(),
        )?;
        let loss = tape.neg(sharpe)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss is {value} at epoch {}, window starting at decision {start}",
                self.epoch + 1
            )));
        }
        let grads = tape.backward(loss)?;
        let mut params = self.net.parameters();
        self.adam.step(&mut params, &param_grads(&grads, &vars))?;
        self.net.set_parameters(params)?;
        Ok(value)
    }

    /// One pass over shuffled training windows followed by evaluation on the
    /// held-out split. Parameters are only updated with finite gradients, so on
    /// error the net still holds the last good state.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let b = self.cfg.window;
        let mut starts: Vec<usize> = (0..).map(|i| i * b).take_while(|s| s + b < self.batch.split).collect();
        starts.shuffle(&mut self.rng);
        let mut total = 0.0;
        for &s in &starts {
            total += self.window_loss(s)?;
        }
        self.epoch += 1;
        let eval = self.evaluate()?;
        Ok(EpochRecord {
            step: self.epoch,
            loss: total / starts.len() as f64,
            objective: eval.sharpe,
            secondary: eval.turnover,
            feasibility_margin: eval.min_margin,
        })
    }

    /// Rolls the current policy over the held-out decisions.
    pub fn evaluate(&self) -> Result<PortfolioEval> {
        evaluate_policy(
            &self.net,
            &self.head,
            self.batch,
            &self.cfg,
            self.batch.split..self.batch.decisions(),
        )
    }
}

/// Evaluates a policy on decisions `range` with exact L1 transaction costs.
pub fn evaluate_policy(
    net: &Mlp,
    head: &ConstraintHead,
    batch: &PortfolioBatch,
    cfg: &PortfolioConfig,
    range: std::ops::Range<usize>,
) -> Result<PortfolioEval> {
    let caps = head.feasible_caps();
    let mut weights = Vec::with_capacity(range.len());
    for k in range.clone() {
        weights.push(head.evaluate(&net.predict(&batch.features[k])?)?);
    }
    let margins: Vec<f64> = weights.iter().map(|w| simplex_margin(w, &caps)).collect();
    let violations = margins.iter().filter(|m| **m < -FEASIBILITY_TOL).count();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let offset = if cfg.excess_returns { 1.0 } else { 0.0 };
    let mut rets = Vec::new();
    let mut turnover = 0.0;
    for j in 1..weights.len() {
        let y = &batch.next[range.start + j - 1];
        let gross: f64 = weights[j - 1].iter().zip(y).map(|(a, b)| a * b).sum();
        let drifted = drift_weights(&weights[j - 1], y)?;
        let l1: f64 = weights[j].iter().zip(&drifted).map(|(a, b)| (a - b).abs()).sum();
        turnover += 0.5 * l1;
        rets.push(gross - offset - 0.5 * cfg.gamma * l1);
    }
    let n = rets.len() as f64;
    let mean = rets.iter().sum::<f64>() / n;
    let std = (rets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    Ok(PortfolioEval {
        sharpe: mean / (std + EPS_STD),
        turnover: turnover / n,
        violations,
        min_margin,
        weights,
    })
}

pub struct PortfolioRun {
    pub records: Vec<EpochRecord>,
    pub eval: PortfolioEval,
    pub net: Mlp,
}

pub fn train_portfolio(
    batch: &PortfolioBatch,
    method: Method,
    cfg: &PortfolioConfig,
    seed: u64,
) -> Result<PortfolioRun> {
    let mut trainer = PortfolioTrainer::new(batch, method, cfg, seed)?;
    let mut records = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        records.push(trainer.run_epoch()?);
    }
    let eval = trainer.evaluate()?;
    Ok(PortfolioRun {
        records,
        eval,
        net: trainer.net.clone(),
    })
}
