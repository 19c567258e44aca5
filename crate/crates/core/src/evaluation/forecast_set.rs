use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::dataset::{SeriesPanel, TargetMode, WindowSample};
use crate::error::{Error, Result};

/// One aligned prediction: series, origin date, horizon, forecast, actual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub sku: String,
    pub origin: NaiveDate,
    pub h: usize,
    pub yhat: f64,
    pub y: f64,
}

impl ForecastRecord {
    pub fn key(&self) -> (String, NaiveDate, usize) {
        (self.sku.clone(), self.origin, self.h)
    }

    /// Date the forecast targets.
    pub fn target_date(&self) -> NaiveDate {
        self.origin + chrono::Days::new(self.h as u64)
    }
}

/// Forecasts of one model in original units.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSet {
    pub label: String,
    pub mode: TargetMode,
    records: Vec<ForecastRecord>,
}

impl ForecastSet {
    /// Rejects duplicate `(sku, origin, h)` keys and non-finite values.
    pub fn new(label: impl Into<String>, mode: TargetMode, records: Vec<ForecastRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !r.y.is_finite() || !r.yhat.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite forecast for {} at {} h={}",
                    r.sku, r.origin, r.h
                )));
            }
            if !seen.insert((r.sku.as_str(), r.origin, r.h)) {
                return Err(Error::InvalidData(format!(
                    "duplicate forecast key {} {} h={}",
                    r.sku, r.origin, r.h
                )));
            }
        }
        Ok(Self {
            label: label.into(),
            mode,
            records,
        })
    }

    /// Runs `predict` over `windows` (in parallel, results kept in order)
    /// and pairs each horizon's prediction with its actual.
    pub fn from_windows<F>(
        label: impl Into<String>,
        panel: &SeriesPanel,
        mode: TargetMode,
        windows: &[WindowSample],
        predict: F,
    ) -> Result<Self>
    where
        F: Fn(&WindowSample) -> Result<Vec<f64>> + Sync,
    {
        let per: Vec<Vec<ForecastRecord>> = windows
            .par_iter()
            .map(|w| {
                let yhat = predict(w)?;
                Ok(w.horizons
                    .iter()
                    .zip(yhat)
                    .zip(&w.targets_raw)
                    .map(|((&h, yhat), &y)| ForecastRecord {
                        sku: panel.sku_ids[w.sku].clone(),
                        origin: panel.date(w.origin),
                        h,
                        yhat,
                        y,
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Self::new(label, mode, per.into_iter().flatten().collect())
    }

    pub fn records(&self) -> &[ForecastRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.h).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Records at horizon `h`, or all records for `None`.
    pub fn at(&self, h: Option<usize>) -> Vec<&ForecastRecord> {
        self.records.iter().filter(|r| h.is_none_or(|h| r.h == h)).collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads `sku,origin,h,yhat,y`.
    pub fn read_csv(r: impl Read, label: impl Into<String>, mode: TargetMode) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        for col in ["sku", "origin", "h", "yhat", "y"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::MissingColumn(col.into()));
            }
        }
        let records = rdr.deserialize().collect::<std::result::Result<Vec<ForecastRecord>, _>>()?;
        Self::new(label, mode, records)
    }

    pub fn load_csv(path: impl AsRef<Path>, label: impl Into<String>, mode: TargetMode) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, label, mode)
    }
}
