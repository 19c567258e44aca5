//! Feature construction and leakage-free rolling-origin windows.

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::panel::{SeriesPanel, TargetMode};

/// Column layout of a window's feature matrix.
pub mod feature {
    /// Scaled `log1p` of the target on that day.
    pub const TARGET: usize = 0;
    /// Scaled `log1p` of the mean unit price.
    pub const PRICE: usize = 1;
    /// Day-of-week one-hot, Monday first.
    pub const DOW: usize = 2;
    /// Month one-hot, January first.
    pub const MONTH: usize = 9;
    pub const DECEMBER: usize = 21;
    pub const COUNT: usize = 22;
}

/// Z-scoring statistics for the `log1p` target and price, fit on the
/// training range only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub target_mean: f64,
    pub target_std: f64,
    pub price_mean: f64,
    pub price_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

impl FeatureScaling {
    /// Fits on days `0..=train_end` of every series.
    pub fn fit(panel: &SeriesPanel, mode: TargetMode, train_end: usize) -> Self {
        let target = panel.target(mode);
        let (target_mean, target_std) =
            mean_std(target.iter().flat_map(|r| r[..=train_end].iter().map(|v| v.ln_1p())));
        let (price_mean, price_std) = mean_std(
            panel
                .mean_price
                .iter()
                .flat_map(|r| r[..=train_end].iter().map(|v| v.ln_1p())),
        );
        Self {
            target_mean,
            target_std,
            price_mean,
            price_std,
        }
    }

    pub fn scale_target(&self, v: f64) -> f64 {
        (v.ln_1p() - self.target_mean) / self.target_std
    }

    /// Maps a scaled prediction back to original units, floored at zero.
    pub fn unscale_target(&self, z: f64) -> f64 {
        (z * self.target_std + self.target_mean).exp_m1().max(0.0)
    }

    pub fn scale_price(&self, p: f64) -> f64 {
        (p.ln_1p() - self.price_mean) / self.price_std
    }
}

/// One feature row: scaled target and price plus calendar dummies.
pub fn feature_row(date: NaiveDate, scaled_target: f64, scaled_price: f64) -> [f64; feature::COUNT] {
    let mut row = [0.0; feature::COUNT];
    row[feature::TARGET] = scaled_target;
    row[feature::PRICE] = scaled_price;
    row[feature::DOW + date.weekday().num_days_from_monday() as usize] = 1.0;
    row[feature::MONTH + date.month0() as usize] = 1.0;
    if date.month() == 12 {
        row[feature::DECEMBER] = 1.0;
    }
    row
}

/// Inclusive split boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
    pub val_end: NaiveDate,
    pub test_end: NaiveDate,
}

impl SplitSpec {
    /// Day indices of the three boundaries after validation.
    pub fn resolve(&self, panel: &SeriesPanel) -> Result<(usize, usize, usize)> {
        if !(self.train_end < self.val_end && self.val_end < self.test_end) {
            return Err(Error::InvalidConfig(format!(
                "split dates must increase: {} < {} < {}",
                self.train_end, self.val_end, self.test_end
            )));
        }
        let idx = |d: NaiveDate| {
            panel.day_index(d).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "split date {d} outside calendar {}..{}",
                    panel.start,
                    panel.end()
                ))
            })
        };
        Ok((idx(self.train_end)?, idx(self.val_end)?, idx(self.test_end)?))
    }

    /// Boundaries from calendar fractions (train, train + val); test runs to
    /// the last day.
    pub fn from_fractions(panel: &SeriesPanel, train: f64, val: f64) -> Result<Self> {
        let n = panel.n_days();
        if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be positive and sum below 1 (got {train}, {val})"
            )));
        }
        let t = ((n as f64 * train).round() as usize).clamp(1, n) - 1;
        let v = ((n as f64 * (train + val)).round() as usize).clamp(1, n) - 1;
        Ok(Self {
            train_end: panel.date(t),
            val_end: panel.date(v),
            test_end: panel.date(n - 1),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Split of a window whose latest target falls on day `last_target`.
pub fn assign_split(last_target: usize, bounds: (usize, usize, usize)) -> Option<Split> {
    let (tr, va, te) = bounds;
    if last_target <= tr {
        Some(Split::Train)
    } else if last_target <= va {
        Some(Split::Val)
    } else if last_target <= te {
        Some(Split::Test)
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub mode: TargetMode,
}

impl WindowConfig {
    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::InvalidConfig("lookback must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidConfig("horizons must be nonempty and positive".into()));
        }
        let mut h = self.horizons.clone();
        h.sort_unstable();
        h.dedup();
        if h != self.horizons {
            return Err(Error::InvalidConfig("horizons must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Model input for one series at one forecast origin.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub sku: usize,
    /// Day index of the origin `t`; features use days `t-L+1..=t`.
    pub origin: usize,
    /// `[L, feature::COUNT]`.
    pub x: Tensor,
    /// `[max(H), feature::COUNT]` known covariates for days `t+1..`: calendar
    /// and price carried forward from `t`. The target column is zero.
    pub future: Tensor,
    pub country: usize,
    pub horizons: Vec<usize>,
    /// Scaled targets, one per horizon.
    pub targets: Vec<f64>,
    /// Targets in original units.
    pub targets_raw: Vec<f64>,
    /// Target values on days `t-L+1..=t` in original units.
    pub history_raw: Vec<f64>,
}

impl WindowSample {
    pub fn lookback(&self) -> usize {
        self.x.shape()[0]
    }

    /// Day index of the last observed day.
    pub fn last_observed(&self) -> usize {
        self.origin
    }
}

/// Builds the window for `sku` at origin `t`. Reads only days `<= t` of the
/// target series; targets are read from `t + h`.
pub fn build_window(
    panel: &SeriesPanel,
    scaling: &FeatureScaling,
    cfg: &WindowConfig,
    sku: usize,
    origin: usize,
) -> Result<WindowSample> {
    let max_h = cfg.max_horizon();
    if origin + max_h >= panel.n_days() {
        return Err(Error::InvalidData(format!(
            "origin {origin} leaves no room for lookback {} and horizon {max_h}",
            cfg.lookback
        )));
    }
    assemble(panel, scaling, cfg, sku, origin, true)
}

/// Inference window at any origin with a full lookback, including the last
/// day of the panel. Targets are left empty; future calendar features extend
/// past the panel end.
pub fn build_forecast_window(
    panel: &SeriesPanel,
    scaling: &FeatureScaling,
    cfg: &WindowConfig,
    sku: usize,
    origin: usize,
) -> Result<WindowSample> {
    if origin >= panel.n_days() {
        return Err(Error::InvalidData(format!(
            "origin {origin} is past the last day {}",
            panel.n_days() - 1
        )));
    }
    assemble(panel, scaling, cfg, sku, origin, false)
}

fn assemble(
    panel: &SeriesPanel,
    scaling: &FeatureScaling,
    cfg: &WindowConfig,
    sku: usize,
    origin: usize,
    with_targets: bool,
) -> Result<WindowSample> {
    let l = cfg.lookback;
    let max_h = cfg.max_horizon();
    if origin + 1 < l {
        return Err(Error::InvalidData(format!(
            "origin {origin} leaves no room for lookback {l}"
        )));
    }
    if sku >= panel.n_skus() {
        return Err(Error::InvalidData(format!("sku index {sku} out of range")));
    }
    let target = &panel.target(cfg.mode)[sku];
    let price = &panel.mean_price[sku];
    let first = origin + 1 - l;

    let mut x = Vec::with_capacity(l * feature::COUNT);
    for d in first..=origin {
        x.extend(feature_row(
            panel.date(d),
            scaling.scale_target(target[d]),
            scaling.scale_price(price[d]),
        ));
    }
    let carried = scaling.scale_price(price[origin]);
    let mut future = Vec::with_capacity(max_h * feature::COUNT);
    for k in 1..=max_h {
        future.extend(feature_row(panel.date(origin + k), 0.0, carried));
    }
    let targets_raw: Vec<f64> = if with_targets {
        cfg.horizons.iter().map(|&h| target[origin + h]).collect()
    } else {
        Vec::new()
    };
    Ok(WindowSample {
        sku,
        origin,
        x: Tensor::new(vec![l, feature::COUNT], x)?,
        future: Tensor::new(vec![max_h, feature::COUNT], future)?,
        country: panel.country_code[sku],
        horizons: cfg.horizons.clone(),
        targets: targets_raw.iter().map(|&v| scaling.scale_target(v)).collect(),
        targets_raw,
        history_raw: target[first..=origin].to_vec(),
    })
}

/// Valid origins for a panel of `n_days`: room for the lookback behind and
/// the largest horizon ahead.
pub fn origin_range(n_days: usize, cfg: &WindowConfig) -> std::ops::Range<usize> {
    let lo = cfg.lookback.saturating_sub(1);
    let hi = n_days.saturating_sub(cfg.max_horizon());
    lo..hi.max(lo)
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub scaling: FeatureScaling,
    /// Day indices of the train/val/test end dates.
    pub bounds: (usize, usize, usize),
}

/// Per-split window counts without materializing features.
pub fn split_counts(n_skus: usize, n_days: usize, cfg: &WindowConfig, bounds: (usize, usize, usize)) -> [usize; 3] {
    let mut c = [0; 3];
    for t in origin_range(n_days, cfg) {
        match assign_split(t + cfg.max_horizon(), bounds) {
            Some(Split::Train) => c[0] += n_skus,
            Some(Split::Val) => c[1] += n_skus,
            Some(Split::Test) => c[2] += n_skus,
            None => {}
        }
    }
    c
}

/// Partitions every window of the panel by the day of its furthest target.
pub fn make_splits(panel: &SeriesPanel, spec: &SplitSpec, cfg: &WindowConfig) -> Result<Splits> {
    cfg.validate()?;
    let bounds = spec.resolve(panel)?;
    let [ntr, nva, nte] = split_counts(panel.n_skus(), panel.n_days(), cfg, bounds);
    if ntr == 0 || nva == 0 || nte == 0 {
        return Err(Error::EmptySplit {
            train: ntr,
            val: nva,
            test: nte,
        });
    }
    let scaling = FeatureScaling::fit(panel, cfg.mode, bounds.0);
    let max_h = cfg.max_horizon();
    let per_sku: Vec<Vec<(Split, WindowSample)>> = (0..panel.n_skus())
        .into_par_iter()
        .map(|sku| {
            origin_range(panel.n_days(), cfg)
                .filter_map(|t| assign_split(t + max_h, bounds).map(|s| (s, t)))
                .map(|(s, t)| build_window(panel, &scaling, cfg, sku, t).map(|w| (s, w)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut splits = Splits {
        train: Vec::with_capacity(ntr),
        val: Vec::with_capacity(nva),
        test: Vec::with_capacity(nte),
        scaling,
        bounds,
    };
    for (s, w) in per_sku.into_iter().flatten() {
        match s {
            Split::Train => splits.train.push(w),
            Split::Val => splits.val.push(w),
            Split::Test => splits.test.push(w),
        }
    }
    Ok(splits)
}
