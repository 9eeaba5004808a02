//! Ride-sharing dispatch: allocate the supply `S_t` across zones, each zone
//! receiving at most `kappa * S_t`, to maximize the served share of demand.
//!
//! The network emits unit-scale scores; the constraint head maps them onto the
//! capped simplex with caps `kappa` and the result is scaled by `S_t`. Training
//! uses the SoftMin served rate, evaluation the exact minimum.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::DemandData;
use super::{param_grads, served_rate, served_rate_on_tape, EpochRecord, FeatureScaler, ServedMode};
use crate::autodiff::Tape;
use crate::error::{invalid, Error, Result};
use crate::method::{simplex_margin, ConstraintHead, Method, MethodConfig};
use crate::nets::{Activation, AdamState, Mlp};

pub use super::portfolio::FEASIBILITY_TOL;

#[derive(Clone, Debug, PartialEq)]
pub struct DispatchConfig {
    pub kappa: f64,
    /// Demand lags fed to the network.
    pub lags: usize,
    /// SoftMin temperature; `None` means 0.05 times the mean training demand.
    pub softmin_tau: Option<f64>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    /// Decisions per gradient step.
    pub window: usize,
    pub lr: f64,
    pub train_frac: f64,
    pub dropout: f64,
    pub method: MethodConfig,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            lags: 3,
            softmin_tau: None,
            hidden: vec![32],
            activation: Activation::Relu,
            epochs: 20,
            window: 32,
            lr: 1e-3,
            train_frac: 0.7,
            dropout: 0.0,
            method: MethodConfig::default(),
        }
    }
}

/// Decision `k` serves step `lags + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispatchBatch {
    pub features: Vec<Vec<f64>>,
    pub demand: Vec<Vec<f64>>,
    pub supply: Vec<f64>,
    pub split: usize,
    pub caps: Vec<f64>,
    pub softmin_tau: f64,
    pub scaler: FeatureScaler,
}

impl DispatchBatch {
    pub fn zones(&self) -> usize {
        self.caps.len()
    }

    pub fn decisions(&self) -> usize {
        self.features.len()
    }
}

/// Lagged zone demand, sine/cosine encodings of the daily and weekly phase and
/// the current supply, normalized on the training split.
pub fn build_batch(data: &DemandData, cfg: &DispatchConfig) -> Result<DispatchBatch> {
    let n = data.zones();
    let t = data.steps();
    if cfg.kappa * n as f64 <= 1.0 || cfg.kappa > 1.0 {
        return Err(Error::InfeasibleSet(format!(
            "zone cap fraction {} times {n} zones must exceed 1",
            cfg.kappa
        )));
    }
    if cfg.lags == 0 || t < cfg.lags + 8 {
        return Err(invalid(format!("{t} steps are too few for {} lags", cfg.lags)));
    }
    let day = data.steps_per_day as f64;
    let week = 7.0 * day;
    let decisions = t - cfg.lags;
    let mut raw = Vec::with_capacity(decisions);
    for k in 0..decisions {
        let s = cfg.lags + k;
        let mut z: Vec<f64> = (1..=cfg.lags)
            .flat_map(|l| data.demand[s - l].iter().copied())
            .collect();
        let (dp, wp) = (2.0 * PI * s as f64 / day, 2.0 * PI * s as f64 / week);
        z.extend([dp.sin(), dp.cos(), wp.sin(), wp.cos(), data.supply[s]]);
        raw.push(z);
    }
    let split = ((decisions as f64) * cfg.train_frac).floor() as usize;
    if split < cfg.window || decisions - split < 1 {
        return Err(invalid(format!(
            "train split of {split} decisions cannot hold a window of {}",
            cfg.window
        )));
    }
    let scaler = FeatureScaler::fit(&raw[..split])?;
    let demand: Vec<Vec<f64>> = data.demand[cfg.lags..].to_vec();
    let tau = match cfg.softmin_tau {
        Some(tau) if tau > 0.0 => tau,
        Some(tau) => return Err(invalid(format!("softmin temperature must be positive, got {tau}"))),
        None => {
            let cells = (split * n) as f64;
            let mean = demand[..split].iter().flatten().sum::<f64>() / cells;
            (0.05 * mean).max(1e-6)
        }
    };
    Ok(DispatchBatch {
        features: raw.iter().map(|r| scaler.apply(r)).collect(),
        demand,
        supply: data.supply[cfg.lags..].to_vec(),
        split,
        caps: vec![cfg.kappa; n],
        softmin_tau: tau,
        scaler,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispatchEval {
    /// Mean per-step exact served rate.
    pub served_rate: f64,
    pub violations: usize,
    pub min_margin: f64,
}

pub struct DispatchTrainer<'a> {
    batch: &'a DispatchBatch,
    cfg: DispatchConfig,
    head: ConstraintHead,
    net: Mlp,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a> DispatchTrainer<'a> {
    /// Fails for softmax, which cannot honor caps below 1.
    pub fn new(batch: &'a DispatchBatch, method: Method, cfg: &DispatchConfig, seed: u64) -> Result<Self> {
        method.supports_caps(&batch.caps)?;
        let head = ConstraintHead::new(method, batch.caps.clone(), cfg.method)?;
        let mut sizes = vec![batch.features[0].len()];
        sizes.extend(&cfg.hidden);
        sizes.push(batch.zones());
        let net = Mlp::new(&sizes, cfg.activation, seed)?;
        let adam = AdamState::new(cfg.lr, &net.parameters());
        Ok(Self {
            batch,
            cfg: cfg.clone(),
            head,
            net,
            adam,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xd15_9a7c),
            epoch: 0,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn window_loss(&mut self, ks: &[usize]) -> Result<Option<f64>> {
        let mut tape = Tape::new();
        let vars = self.net.bind(&mut tape)?;
        let mut rates = Vec::with_capacity(ks.len());
        for &k in ks {
            if self.batch.demand[k].iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let z = tape.leaf(self.batch.features[k].clone());
            let u = self
                .net
                .forward_with_dropout(&mut tape, &vars, z, self.cfg.dropout, &mut self.rng)?;
            let w = self.head.apply(&mut tape, u)?;
            let a = tape.scale(w, self.batch.supply[k])?;
            rates.push(served_rate_on_tape(
                &mut tape,
                a,
                &self.batch.demand[k],
                self.batch.softmin_tau,
            )?);
        }
        if rates.is_empty() {
            return Ok(None);
        }
        let all = tape.concat(&rates)?;
        let mean = tape.mean(all)?;
        let loss = tape.neg(mean)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss is {value} at epoch {}, window starting at decision {}",
                self.epoch + 1,
                ks[0]
            )));
        }
        let grads = tape.backward(loss)?;
        let mut params = self.net.parameters();
        self.adam.step(&mut params, &param_grads(&grads, &vars))?;
        self.net.set_parameters(params)?;
        Ok(Some(value))
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let mut order: Vec<usize> = (0..self.batch.split).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(self.cfg.window) {
            if let Some(l) = self.window_loss(chunk)? {
                total += l;
                count += 1;
            }
        }
        self.epoch += 1;
        let eval = self.evaluate()?;
        Ok(EpochRecord {
            step: self.epoch,
            loss: total / count.max(1) as f64,
            objective: eval.served_rate,
            secondary: eval.served_rate,
            feasibility_margin: eval.min_margin,
        })
    }

    pub fn evaluate(&self) -> Result<DispatchEval> {
        evaluate_policy(
            &self.net,
            &self.head,
            self.batch,
            self.batch.split..self.batch.decisions(),
        )
    }
}

/// Exact served rate and feasibility of the unit-scale allocation.
pub fn evaluate_policy(
    net: &Mlp,
    head: &ConstraintHead,
    batch: &DispatchBatch,
    range: std::ops::Range<usize>,
) -> Result<DispatchEval> {
    let caps = head.feasible_caps();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    for k in range {
        let w = head.evaluate(&net.predict(&batch.features[k])?)?;
        let m = simplex_margin(&w, &caps);
        if m < -FEASIBILITY_TOL {
            violations += 1;
        }
        min_margin = min_margin.min(m);
        let a: Vec<f64> = w.iter().map(|v| v * batch.supply[k]).collect();
        match served_rate(&a, &batch.demand[k], batch.softmin_tau, ServedMode::Hard) {
            Ok(r) => {
                total += r;
                count += 1;
            }
            Err(Error::SkipSample(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if count == 0 {
        return Err(Error::SkipSample("no evaluation step has positive demand".into()));
    }
    Ok(DispatchEval {
        served_rate: total / count as f64,
        violations,
        min_margin,
    })
}

pub struct DispatchRun {
    pub records: Vec<EpochRecord>,
    pub eval: DispatchEval,
    pub net: Mlp,
}

pub fn train_dispatch(batch: &DispatchBatch, method: Method, cfg: &DispatchConfig, seed: u64) -> Result<DispatchRun> {
    let mut trainer = DispatchTrainer::new(batch, method, cfg, seed)?;
    let mut records = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        records.push(trainer.run_epoch()?);
    }
    let eval = trainer.evaluate()?;
    Ok(DispatchRun {
        records,
        eval,
        net: trainer.net.clone(),
    })
}
