//! Seeded synthetic markets and demand, plus CSV loaders for real data.
//!
//! Returns CSV: header `date,asset_1,...,asset_N`, one row per period, price
//! relatives as decimals (1.01 = +1%). Demand CSV: header
//! `timestamp,zone_1,...,zone_N,supply`. Lines starting with `#` are ignored.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Floor applied to synthetic price relatives.
pub const MIN_RELATIVE: f64 = 1e-4;

/// Steps per day in the synthetic demand (hourly data).
pub const STEPS_PER_DAY: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct MarketData {
    /// `T x N` price relatives.
    pub relatives: Vec<Vec<f64>>,
}

impl MarketData {
    pub fn assets(&self) -> usize {
        self.relatives.first().map_or(0, Vec::len)
    }

    pub fn steps(&self) -> usize {
        self.relatives.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandData {
    /// `T x N` nonnegative demand.
    pub demand: Vec<Vec<f64>>,
    /// Positive supply per step.
    pub supply: Vec<f64>,
    pub steps_per_day: usize,
}

impl DemandData {
    pub fn zones(&self) -> usize {
        self.demand.first().map_or(0, Vec::len)
    }

    pub fn steps(&self) -> usize {
        self.demand.len()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Factor-model price relatives. Factor returns follow an AR(1) with
/// coefficient 0.3, so recent returns carry some signal about the next one.
pub fn synth_market(seed: u64, n: usize, t: usize, factor_count: usize) -> Result<MarketData> {
    if n == 0 || t == 0 {
        return Err(invalid("market dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loadings: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..factor_count).map(|_| normal(&mut rng)).collect())
        .collect();
    let drift: Vec<f64> = (0..n).map(|_| 3e-4 + 5e-4 * normal(&mut rng)).collect();
    let idio: Vec<f64> = (0..n).map(|_| rng.random_range(0.005..0.02)).collect();
    let mut factors = vec![0.0; factor_count];
    let mut relatives = Vec::with_capacity(t);
    for _ in 0..t {
        for f in factors.iter_mut() {
            *f = 0.3 * *f + 0.008 * normal(&mut rng);
        }
        let row = (0..n)
            .map(|i| {
                let common: f64 = loadings[i].iter().zip(&factors).map(|(b, f)| b * f).sum();
                (1.0 + drift[i] + common + idio[i] * normal(&mut rng)).max(MIN_RELATIVE)
            })
            .collect();
        relatives.push(row);
    }
    Ok(MarketData { relatives })
}

/// Zone demand with daily and weekly seasonality and Poisson-like noise.
/// Supply is 70% of an exponential moving average of past total demand.
pub fn synth_demand(seed: u64, n: usize, t: usize) -> Result<DemandData> {
    if n == 0 || t == 0 {
        return Err(invalid("demand dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..n).map(|_| (20f64.ln() + 0.8 * normal(&mut rng)).exp()).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let week = (7 * STEPS_PER_DAY) as f64;
    let mut demand = Vec::with_capacity(t);
    for s in 0..t {
        let day_angle = 2.0 * PI * s as f64 / STEPS_PER_DAY as f64;
        let weekly = 1.0 + 0.2 * (2.0 * PI * s as f64 / week).sin();
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let mean = base[i] * (1.0 + 0.6 * (day_angle + phase[i]).sin()) * weekly;
                (mean + mean.sqrt() * normal(&mut rng)).max(0.0)
            })
            .collect();
        demand.push(row);
    }
    let mut supply = Vec::with_capacity(t);
    let mut ema = demand[0].iter().sum::<f64>();
    for row in &demand {
        supply.push((0.7 * ema).max(1.0));
        ema = 0.7 * ema + 0.3 * row.iter().sum::<f64>();
    }
    Ok(DemandData {
        demand,
        supply,
        steps_per_day: STEPS_PER_DAY,
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_cell(s: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column {col}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(v)
}

pub fn load_returns_csv(path: &Path) -> Result<MarketData> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(Error::Data(
            "returns CSV must start with 'date' followed by asset columns".into(),
        ));
    }
    let n = headers.len() - 1;
    let mut relatives = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = (1..=n)
            .map(|c| parse_cell(&rec[c], r + 1, c))
            .collect::<Result<Vec<_>>>()?;
        if let Some(c) = row.iter().position(|v| *v <= 0.0) {
            return Err(Error::Data(format!(
                "row {}: price relative of asset {} is not positive",
                r + 1,
                c + 1
            )));
        }
        relatives.push(row);
    }
    if relatives.is_empty() {
        return Err(Error::Data("returns CSV has no rows".into()));
    }
    Ok(MarketData { relatives })
}

pub fn write_returns_csv(path: &Path, data: &MarketData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend((1..=data.assets()).map(|i| format!("asset_{i}")));
    w.write_record(&header)?;
    for (t, row) in data.relatives.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_demand_csv(path: &Path) -> Result<DemandData> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let k = headers.len();
    if k < 3 || &headers[0] != "timestamp" || &headers[k - 1] != "supply" {
        return Err(Error::Data(
            "demand CSV must have columns timestamp,zone_1..zone_N,supply".into(),
        ));
    }
    let mut demand = Vec::new();
    let mut supply = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = (1..k - 1)
            .map(|c| parse_cell(&rec[c], r + 1, c))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().any(|v| *v < 0.0) {
            return Err(Error::Data(format!("row {}: negative demand", r + 1)));
        }
        let s = parse_cell(&rec[k - 1], r + 1, k - 1)?;
        if s <= 0.0 {
            return Err(Error::Data(format!("row {}: supply must be positive", r + 1)));
        }
        demand.push(row);
        supply.push(s);
    }
    if demand.is_empty() {
        return Err(Error::Data("demand CSV has no rows".into()));
    }
    Ok(DemandData {
        demand,
        supply,
        steps_per_day: STEPS_PER_DAY,
    })
}

pub fn write_demand_csv(path: &Path, data: &DemandData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend((1..=data.zones()).map(|i| format!("zone_{i}")));
    header.push("supply".into());
    w.write_record(&header)?;
    for (t, (row, s)) in data.demand.iter().zip(&data.supply).enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(s.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
