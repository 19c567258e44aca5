//! Run configuration: a TOML document with one section per stage.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tempora_core::baselines::{BaselineSpec, GruConfig};
use tempora_core::dataset::{SeriesPanel, SplitSpec, SynthParams, TargetMode, WindowConfig};
use tempora_core::evaluation::{CpoiParams, DmLoss};
use tempora_core::model::ModelConfig;
use tempora_core::objectives::LossConfig;
use tempora_core::training::TrainConfig;
use tempora_core::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

/// Transaction CSV, or a synthetic panel when `csv` is unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub csv: Option<PathBuf>,
    pub min_active_days: usize,
    pub mode: TargetMode,
    /// Synthetic panel size.
    pub n_skus: usize,
    pub n_days: usize,
    pub synth: SynthParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv: None,
            min_active_days: 30,
            mode: TargetMode::Demand,
            n_skus: 20,
            n_days: 200,
            synth: SynthParams::default(),
        }
    }
}

/// Explicit end dates (all three) or calendar fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_end: Option<NaiveDate>,
    pub val_end: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_end: None,
            val_end: None,
            test_end: None,
            train_frac: 0.7,
            val_frac: 0.15,
        }
    }
}

impl SplitConfig {
    pub fn resolve(&self, panel: &SeriesPanel) -> Result<SplitSpec> {
        match (self.train_end, self.val_end, self.test_end) {
            (Some(train_end), Some(val_end), Some(test_end)) => Ok(SplitSpec {
                train_end,
                val_end,
                test_end,
            }),
            (None, None, None) => SplitSpec::from_fractions(panel, self.train_frac, self.val_frac),
            _ => Err(Error::InvalidConfig(
                "split needs all of train_end, val_end, test_end or none of them".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Any of naive_last, seasonal_naive, ridge_ar, vanilla_gru.
    pub baselines: Vec<String>,
    pub season: usize,
    pub ridge_lags: usize,
    pub ridge: f64,
    pub gru: GruConfig,
    pub cpoi: CpoiParams,
    pub dm_losses: Vec<DmLoss>,
    /// Adds a perfect-foresight reference model labelled `oracle`.
    pub oracle: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            baselines: ["naive_last", "seasonal_naive", "ridge_ar", "vanilla_gru"]
                .map(String::from)
                .to_vec(),
            season: 7,
            ridge_lags: 14,
            ridge: 1.0,
            gru: GruConfig::default(),
            cpoi: CpoiParams::default(),
            dm_losses: vec![DmLoss::Squared],
            oracle: false,
        }
    }
}

impl EvalConfig {
    pub fn baseline_specs(&self) -> Result<Vec<BaselineSpec>> {
        self.baselines
            .iter()
            .map(|name| {
                Ok(match BaselineSpec::from_name(name)? {
                    BaselineSpec::NaiveLast => BaselineSpec::NaiveLast,
                    BaselineSpec::SeasonalNaive { .. } => BaselineSpec::SeasonalNaive { season: self.season },
                    BaselineSpec::RidgeAr { .. } => BaselineSpec::RidgeAr {
                        lags: self.ridge_lags,
                        ridge: self.ridge,
                    },
                    BaselineSpec::VanillaGru(_) => BaselineSpec::VanillaGru(self.gru.clone()),
                })
            })
            .collect()
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `section.key=value` overrides and the
    /// seed flag, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.eval.cpoi.validate()?;
        self.eval.baseline_specs()?;
        Ok(())
    }

    pub fn window_config(&self) -> WindowConfig {
        window_config(&self.model, self.data.mode)
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub fn window_config(model: &ModelConfig, mode: TargetMode) -> WindowConfig {
    WindowConfig {
        lookback: model.lookback,
        horizons: model.horizons.clone(),
        mode,
    }
}

/// `section.key=value` (any depth); the value is parsed as a TOML literal
/// and falls back to a bare string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("--set expects key=value, got `{spec}`")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("`{k}` in `{path}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
