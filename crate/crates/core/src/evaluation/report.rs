use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

use super::dm::{dm_test, DmLoss};
use super::forecast_set::ForecastSet;
use super::metrics::{cpoi, mae, mase, rmse, smape_records, theil_u2, tse_trajectory, CpoiParams, ScaleContext};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    /// `None` when every series had a zero seasonal-naive scale.
    pub mase: Option<f64>,
    pub theil_u2: Option<f64>,
}

impl MetricRow {
    pub fn compute(fs: &ForecastSet, h: Option<usize>, ctx: &ScaleContext) -> Result<Self> {
        let rs = fs.at(h);
        Ok(Self {
            mae: mae(&rs)?,
            rmse: rmse(&rs)?,
            smape: smape_records(&rs)?,
            mase: mase(&rs, ctx).ok().map(|s| s.value),
            theil_u2: theil_u2(&rs, ctx).ok().map(|s| s.value),
        })
    }
}

fn ordered<S: Serializer>(rows: &[(String, MetricRow)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(rows.len()))?;
    for (k, v) in rows {
        m.serialize_entry(k, v)?;
    }
    m.end()
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub label: String,
    /// `h<k>` rows in horizon order, then `pooled`.
    #[serde(serialize_with = "ordered")]
    pub metrics: Vec<(String, MetricRow)>,
    pub mase_excluded_series: usize,
    #[serde(skip)]
    pub tse: Vec<(usize, Vec<(NaiveDate, f64)>)>,
    #[serde(skip)]
    pub cpoi: Vec<(NaiveDate, f64)>,
}

impl ModelReport {
    pub fn row(&self, key: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, r)| r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DmEntry {
    pub a: String,
    pub b: String,
    pub h: usize,
    pub loss: DmLoss,
    pub stat: f64,
    pub p: f64,
    pub lag: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub models: Vec<ModelReport>,
    pub dm: Vec<DmEntry>,
    pub cpoi_params: CpoiParams,
    /// Horizon whose forecasts drive the profit trajectory.
    pub cpoi_horizon: usize,
    pub dataset_hash: String,
    pub config_echo: serde_json::Value,
    pub definitions: BTreeMap<&'static str, &'static str>,
}

fn definitions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("smape", "200/n * sum |yhat - y| / (|y| + |yhat|), with 0/0 = 0"),
        ("mase", "per-series MAE over the in-sample seasonal-naive MAE (training range), record-weighted"),
        ("theil_u2", "per-series sqrt(sum (yhat - y)^2) / sqrt(sum (y_prev - y)^2) with y_prev the actual on the day before the target, record-weighted"),
        ("tse", "mean absolute error across series per origin date"),
        ("cpoi", "cumulative newsvendor profit p*min(q, y) - c*q with q = max(0, round(yhat)), by origin date"),
        ("dm", "Diebold-Mariano with Newey-West variance over h-1 Bartlett lags; negative favours a"),
    ])
}

/// Settings shared by every model in a report.
#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub cpoi: CpoiParams,
    pub dm_losses: Vec<DmLoss>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            cpoi: CpoiParams::default(),
            dm_losses: vec![DmLoss::Squared],
        }
    }
}

impl EvalReport {
    pub fn build(
        sets: &[ForecastSet],
        ctx: &ScaleContext,
        opts: &ReportOptions,
        dataset_hash: impl Into<String>,
        config_echo: serde_json::Value,
    ) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidData("a report needs at least one model".into()))?;
        let horizons = first.horizons();
        let cpoi_horizon = *horizons
            .first()
            .ok_or_else(|| Error::InvalidData(format!("{} has no forecasts", first.label)))?;
        let mut models = Vec::with_capacity(sets.len());
        for fs in sets {
            let mut metrics = Vec::new();
            for &h in &horizons {
                metrics.push((format!("h{h}"), MetricRow::compute(fs, Some(h), ctx)?));
            }
            metrics.push(("pooled".to_string(), MetricRow::compute(fs, None, ctx)?));
            let mase_excluded_series = mase(&fs.at(None), ctx).map_or(0, |s| s.excluded);
            models.push(ModelReport {
                label: fs.label.clone(),
                metrics,
                mase_excluded_series,
                tse: horizons.iter().map(|&h| (h, tse_trajectory(fs, h))).collect(),
                cpoi: cpoi(fs, cpoi_horizon, &opts.cpoi)?,
            });
        }
        let mut dm = Vec::new();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                for &h in &horizons {
                    for &loss in &opts.dm_losses {
                        let r = dm_test(&sets[i], &sets[j], loss, h)?;
                        dm.push(DmEntry {
                            a: sets[i].label.clone(),
                            b: sets[j].label.clone(),
                            h,
                            loss,
                            stat: r.stat,
                            p: r.p,
                            lag: r.lag,
                        });
                    }
                }
            }
        }
        Ok(Self {
            models,
            dm,
            cpoi_params: opts.cpoi,
            cpoi_horizon,
            dataset_hash: dataset_hash.into(),
            config_echo,
            definitions: definitions(),
        })
    }

    pub fn model(&self, label: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.label == label)
    }

    /// Writes `report.json`, `metrics.csv`, `tse.csv` and `cpoi.csv`.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        if self.models.is_empty() {
            return Err(Error::InvalidData("a report needs at least one model".into()));
        }
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;

        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        w.write_record(["label", "horizon", "mae", "rmse", "smape", "mase", "theil_u2"])?;
        for m in &self.models {
            for (k, r) in &m.metrics {
                w.write_record([
                    m.label.clone(),
                    k.clone(),
                    r.mae.to_string(),
                    r.rmse.to_string(),
                    r.smape.to_string(),
                    opt(r.mase),
                    opt(r.theil_u2),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("tse.csv"))?;
        w.write_record(["label", "h", "origin", "tse"])?;
        for m in &self.models {
            for (h, traj) in &m.tse {
                for (d, v) in traj {
                    w.write_record([m.label.clone(), h.to_string(), d.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("cpoi.csv"))?;
        w.write_record(["label", "h", "origin", "cumulative_profit"])?;
        for m in &self.models {
            for (d, v) in &m.cpoi {
                w.write_record([m.label.clone(), self.cpoi_horizon.to_string(), d.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Markdown table of DM results.
pub fn dm_markdown(entries: &[DmEntry]) -> String {
    let mut s = String::from("| a | b | h | loss | stat | p |\n|---|---|---|---|---|---|\n");
    for e in entries {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} | {:.4} |\n",
            e.a,
            e.b,
            e.h,
            e.loss.name(),
            e.stat,
            e.p
        ));
    }
    s
}
