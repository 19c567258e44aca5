//! Comparison forecasters sharing the window and forecast-set interfaces.

mod gru;
mod ridge;

use serde::{Deserialize, Serialize};

use crate::dataset::{SeriesPanel, Splits, TargetMode, WindowSample};
use crate::error::{Error, Result};
use crate::evaluation::ForecastSet;

pub use gru::{gru_cell_step, GruConfig, GruVars, VanillaGru};
pub use ridge::{ridge_solve, RidgeAr};

/// Baseline family and its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSpec {
    NaiveLast,
    SeasonalNaive {
        #[serde(default = "default_season")]
        season: usize,
    },
    RidgeAr {
        #[serde(default = "default_lags")]
        lags: usize,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    VanillaGru(#[serde(default)] GruConfig),
}

fn default_season() -> usize {
    7
}
fn default_lags() -> usize {
    14
}
fn default_ridge() -> f64 {
    1.0
}

impl BaselineSpec {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineSpec::NaiveLast => "naive_last",
            BaselineSpec::SeasonalNaive { .. } => "seasonal_naive",
            BaselineSpec::RidgeAr { .. } => "ridge_ar",
            BaselineSpec::VanillaGru(_) => "vanilla_gru",
        }
    }

    /// Parses a bare kind name with default hyperparameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "naive_last" => BaselineSpec::NaiveLast,
            "seasonal_naive" => BaselineSpec::SeasonalNaive { season: default_season() },
            "ridge_ar" => BaselineSpec::RidgeAr {
                lags: default_lags(),
                ridge: default_ridge(),
            },
            "vanilla_gru" => BaselineSpec::VanillaGru(GruConfig::default()),
            other => return Err(Error::InvalidConfig(format!("unknown baseline `{other}`"))),
        })
    }
}

/// `y_t` for every horizon.
pub fn naive_last(w: &WindowSample) -> Vec<f64> {
    let last = *w.history_raw.last().expect("nonempty lookback");
    vec![last; w.horizons.len()]
}

/// `y_{t+h-m*ceil(h/m)}`: the latest observed value in the same seasonal
/// phase as the target.
pub fn seasonal_naive(w: &WindowSample, season: usize) -> Result<Vec<f64>> {
    if season == 0 {
        return Err(Error::InvalidConfig("season must be at least 1".into()));
    }
    let l = w.history_raw.len();
    w.horizons
        .iter()
        .map(|&h| {
            let back = season * h.div_ceil(season) - h;
            if back >= l {
                return Err(Error::InvalidConfig(format!(
                    "lookback {l} too short for season {season} at horizon {h}"
                )));
            }
            Ok(w.history_raw[l - 1 - back])
        })
        .collect()
}

/// Fits on the training windows (when the kind needs it) and forecasts the
/// test windows in original units.
pub fn fit_predict(
    spec: &BaselineSpec,
    panel: &SeriesPanel,
    splits: &Splits,
    mode: TargetMode,
    seed: u64,
) -> Result<ForecastSet> {
    let label = spec.label();
    match spec {
        BaselineSpec::NaiveLast => {
            ForecastSet::from_windows(label, panel, mode, &splits.test, |w| Ok(naive_last(w)))
        }
        BaselineSpec::SeasonalNaive { season } => {
            ForecastSet::from_windows(label, panel, mode, &splits.test, |w| seasonal_naive(w, *season))
        }
        BaselineSpec::RidgeAr { lags, ridge } => {
            let model = RidgeAr::fit(&splits.train, *lags, *ridge)?;
            ForecastSet::from_windows(label, panel, mode, &splits.test, |w| model.predict(w))
        }
        BaselineSpec::VanillaGru(cfg) => {
            let model = VanillaGru::fit(cfg, &splits.train, seed)?;
            ForecastSet::from_windows(label, panel, mode, &splits.test, |w| {
                Ok(model
                    .predict_scaled(w)?
                    .into_iter()
                    .map(|z| splits.scaling.unscale_target(z))
                    .collect())
            })
        }
    }
}
