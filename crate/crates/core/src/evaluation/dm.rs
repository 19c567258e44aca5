use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::forecast_set::{ForecastRecord, ForecastSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmLoss {
    #[default]
    Squared,
    Absolute,
}

impl DmLoss {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            DmLoss::Squared => e * e,
            DmLoss::Absolute => e.abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DmLoss::Squared => "squared",
            DmLoss::Absolute => "absolute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub stat: f64,
    pub p: f64,
    /// Number of autocovariance lags in the long-run variance.
    pub lag: usize,
    pub n: usize,
}

/// Diebold-Mariano statistic of a loss-differential series with a
/// Newey-West (Bartlett) long-run variance over `h - 1` lags.
pub fn dm_statistic(d: &[f64], h: usize) -> Result<DmResult> {
    let n = d.len();
    if n == 0 {
        return Err(Error::InvalidData("no loss differentials".into()));
    }
    let lag = h.saturating_sub(1).min(n - 1);
    if d.iter().all(|&v| v == 0.0) {
        return Ok(DmResult { stat: 0.0, p: 1.0, lag, n });
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let gamma = |k: usize| (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / nf;
    let mut v = gamma(0);
    for k in 1..=lag {
        v += 2.0 * (1.0 - k as f64 / h as f64) * gamma(k);
    }
    let (stat, p) = if v > 0.0 {
        let s = mean / (v / nf).sqrt();
        let normal = Normal::standard();
        (s, 2.0 * normal.cdf(-s.abs()))
    } else if mean == 0.0 {
        (0.0, 1.0)
    } else {
        (mean.signum() * f64::INFINITY, 0.0)
    };
    Ok(DmResult { stat, p, lag, n })
}

type Key<'a> = (NaiveDate, &'a str);

fn keyed(fs: &ForecastSet, h: usize) -> HashMap<Key<'_>, &ForecastRecord> {
    fs.at(Some(h)).into_iter().map(|r| ((r.origin, r.sku.as_str()), r)).collect()
}

/// Compares two forecast sets at horizon `h`. Negative statistics favour `a`.
pub fn dm_test(a: &ForecastSet, b: &ForecastSet, loss: DmLoss, h: usize) -> Result<DmResult> {
    let ka = keyed(a, h);
    let kb = keyed(b, h);
    let mut keys: Vec<Key> = ka.keys().copied().collect();
    keys.sort_unstable();
    let describe = |(d, s): Key| format!("({s}, {d}, h={h})");
    for &k in &keys {
        if !kb.contains_key(&k) {
            return Err(Error::KeyMismatch(format!("{} missing from {}", describe(k), b.label)));
        }
    }
    if kb.len() != ka.len() {
        let mut extra: Vec<Key> = kb.keys().copied().filter(|k| !ka.contains_key(k)).collect();
        extra.sort_unstable();
        return Err(Error::KeyMismatch(format!("{} missing from {}", describe(extra[0]), a.label)));
    }
    let d: Vec<f64> = keys
        .iter()
        .map(|k| loss.apply(ka[k].y - ka[k].yhat) - loss.apply(kb[k].y - kb[k].yhat))
        .collect();
    dm_statistic(&d, h)
}
