use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{SeriesPanel, TargetMode};
use crate::error::{Error, Result};

use super::forecast_set::{ForecastRecord, ForecastSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Rmse,
    Smape,
    Mase,
    TheilU2,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mae, Metric::Rmse, Metric::Smape, Metric::Mase, Metric::TheilU2];
}

/// Symmetric absolute percentage term on the 0..200 scale; `0/0` is 0.
pub fn smape_term(yhat: f64, y: f64) -> f64 {
    let den = y.abs() + yhat.abs();
    if den == 0.0 {
        0.0
    } else {
        200.0 * (yhat - y).abs() / den
    }
}

/// Mean symmetric absolute percentage error over aligned slices.
pub fn smape(yhat: &[f64], y: &[f64]) -> f64 {
    let n = yhat.len().max(1) as f64;
    yhat.iter().zip(y).map(|(a, b)| smape_term(*a, *b)).sum::<f64>() / n
}

/// Per-series history needed by the scaled metrics.
#[derive(Clone, Debug)]
pub struct ScaleContext {
    start: NaiveDate,
    series: HashMap<String, Vec<f64>>,
    scales: HashMap<String, f64>,
    pub season: usize,
}

impl ScaleContext {
    /// Seasonal-naive in-sample MAE of every series over days `0..=train_end`.
    pub fn from_panel(panel: &SeriesPanel, mode: TargetMode, train_end: usize, season: usize) -> Result<Self> {
        if season == 0 {
            return Err(Error::InvalidConfig("season must be at least 1".into()));
        }
        let mut series = HashMap::new();
        let mut scales = HashMap::new();
        for (id, y) in panel.sku_ids.iter().zip(panel.target(mode)) {
            let end = train_end.min(y.len() - 1);
            if end >= season {
                let diffs: Vec<f64> = (season..=end).map(|t| (y[t] - y[t - season]).abs()).collect();
                scales.insert(id.clone(), diffs.iter().sum::<f64>() / diffs.len() as f64);
            }
            series.insert(id.clone(), y.clone());
        }
        Ok(Self {
            start: panel.start,
            series,
            scales,
            season,
        })
    }

    pub fn scale(&self, sku: &str) -> Option<f64> {
        self.scales.get(sku).copied()
    }

    /// Actual value on the day before the record's target day.
    pub fn previous_actual(&self, r: &ForecastRecord) -> Option<f64> {
        let day = (r.target_date() - self.start).num_days() - 1;
        let y = self.series.get(&r.sku)?;
        usize::try_from(day).ok().and_then(|d| y.get(d).copied())
    }
}

/// Value of a scaled metric with the number of series left out because
/// their denominator vanished.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub value: f64,
    pub excluded: usize,
}

fn by_series<'a>(records: &[&'a ForecastRecord]) -> BTreeMap<&'a str, Vec<&'a ForecastRecord>> {
    let mut m: BTreeMap<&str, Vec<&ForecastRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.sku.as_str()).or_default().push(r);
    }
    m
}

fn non_empty(records: &[&ForecastRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::InvalidData("no forecast records to score".into()))
    } else {
        Ok(())
    }
}

pub fn mae(records: &[&ForecastRecord]) -> Result<f64> {
    non_empty(records)?;
    Ok(records.iter().map(|r| (r.y - r.yhat).abs()).sum::<f64>() / records.len() as f64)
}

pub fn rmse(records: &[&ForecastRecord]) -> Result<f64> {
    non_empty(records)?;
    Ok((records.iter().map(|r| (r.y - r.yhat).powi(2)).sum::<f64>() / records.len() as f64).sqrt())
}

pub fn smape_records(records: &[&ForecastRecord]) -> Result<f64> {
    non_empty(records)?;
    Ok(records.iter().map(|r| smape_term(r.yhat, r.y)).sum::<f64>() / records.len() as f64)
}

/// Record-weighted mean over series of `MAE_i / scale_i`.
pub fn mase(records: &[&ForecastRecord], ctx: &ScaleContext) -> Result<Scaled> {
    non_empty(records)?;
    let (mut num, mut weight, mut excluded) = (0.0, 0usize, 0usize);
    for (sku, rs) in by_series(records) {
        match ctx.scale(sku) {
            Some(s) if s > 0.0 => {
                let m = rs.iter().map(|r| (r.y - r.yhat).abs()).sum::<f64>() / rs.len() as f64;
                num += rs.len() as f64 * m / s;
                weight += rs.len();
            }
            _ => excluded += 1,
        }
    }
    if weight == 0 {
        return Err(Error::InvalidData(
            "every series has a zero seasonal-naive scale".into(),
        ));
    }
    Ok(Scaled {
        value: num / weight as f64,
        excluded,
    })
}

/// Record-weighted mean over series of Theil's U2 against the previous-day
/// naive forecast.
pub fn theil_u2(records: &[&ForecastRecord], ctx: &ScaleContext) -> Result<Scaled> {
    non_empty(records)?;
    let (mut num, mut weight, mut excluded) = (0.0, 0usize, 0usize);
    for (sku, rs) in by_series(records) {
        let mut err = 0.0;
        let mut naive = 0.0;
        for r in &rs {
            let prev = ctx.previous_actual(r).ok_or_else(|| {
                Error::InvalidData(format!("no previous actual for {sku} at {}", r.target_date()))
            })?;
            err += (r.yhat - r.y).powi(2);
            naive += (prev - r.y).powi(2);
        }
        if naive > 0.0 {
            num += rs.len() as f64 * err.sqrt() / naive.sqrt();
            weight += rs.len();
        } else {
            excluded += 1;
        }
    }
    if weight == 0 {
        return Err(Error::InvalidData("every series has a flat naive reference".into()));
    }
    Ok(Scaled {
        value: num / weight as f64,
        excluded,
    })
}

/// Any metric over the records of `fs` at horizon `h` (`None` pools all).
pub fn metric(kind: Metric, fs: &ForecastSet, h: Option<usize>, ctx: &ScaleContext) -> Result<f64> {
    let rs = fs.at(h);
    match kind {
        Metric::Mae => mae(&rs),
        Metric::Rmse => rmse(&rs),
        Metric::Smape => smape_records(&rs),
        Metric::Mase => mase(&rs, ctx).map(|s| s.value),
        Metric::TheilU2 => theil_u2(&rs, ctx).map(|s| s.value),
    }
}

/// Mean absolute error across series per origin date, chronological.
pub fn tse_trajectory(fs: &ForecastSet, h: usize) -> Vec<(NaiveDate, f64)> {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for r in fs.at(Some(h)) {
        let e = acc.entry(r.origin).or_default();
        e.0 += (r.y - r.yhat).abs();
        e.1 += 1;
    }
    acc.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect()
}

/// Newsvendor price and unit cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpoiParams {
    pub p: f64,
    pub c: f64,
}

impl Default for CpoiParams {
    fn default() -> Self {
        Self { p: 1.0, c: 0.5 }
    }
}

impl CpoiParams {
    pub fn validate(&self) -> Result<()> {
        if self.p > self.c && self.c > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "profit parameters need p > c > 0, got p={} c={}",
                self.p, self.c
            )))
        }
    }

    /// Profit of ordering `max(0, round(yhat))` against demand `y`.
    pub fn profit(&self, yhat: f64, y: f64) -> f64 {
        let q = yhat.round().max(0.0);
        self.p * q.min(y) - self.c * q
    }
}

/// Cumulative newsvendor profit by origin date over records at horizon `h`.
pub fn cpoi(fs: &ForecastSet, h: usize, params: &CpoiParams) -> Result<Vec<(NaiveDate, f64)>> {
    params.validate()?;
    let mut by_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for r in fs.at(Some(h)) {
        *by_day.entry(r.origin).or_default() += params.profit(r.yhat, r.y);
    }
    let mut total = 0.0;
    Ok(by_day
        .into_iter()
        .map(|(d, p)| {
            total += p;
            (d, total)
        })
        .collect())
}
