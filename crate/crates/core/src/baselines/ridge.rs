use nalgebra::{DMatrix, DVector};

use crate::dataset::WindowSample;
use crate::error::{Error, Result};

/// Solves `min_w |X w - y|^2 + λ |w[1..]|^2`; column 0 is an unpenalized
/// intercept.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let mut a = x.transpose() * x;
    for j in 1..a.ncols() {
        a[(j, j)] += ridge;
    }
    let b = x.transpose() * y;
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    let w = chol.solve(&b);
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(Error::SingularSystem)
    }
}

/// Direct autoregression: one ridge model per horizon over the last `lags`
/// observed values.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeAr {
    pub lags: usize,
    pub ridge: f64,
    /// Per horizon: intercept followed by lag weights, most recent first.
    pub coef: Vec<DVector<f64>>,
}

impl RidgeAr {
    pub fn fit(train: &[WindowSample], lags: usize, ridge: f64) -> Result<Self> {
        if lags == 0 || !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidConfig("ridge_ar needs lags >= 1 and a finite ridge >= 0".into()));
        }
        let first = train
            .first()
            .ok_or_else(|| Error::InvalidData("ridge_ar needs training windows".into()))?;
        if first.lookback() < lags {
            return Err(Error::InvalidConfig(format!(
                "ridge_ar lags {lags} exceed lookback {}",
                first.lookback()
            )));
        }
        let x = DMatrix::from_fn(train.len(), lags + 1, |i, j| design(&train[i], j));
        let coef = (0..first.horizons.len())
            .map(|hi| {
                let y = DVector::from_iterator(train.len(), train.iter().map(|w| w.targets_raw[hi]));
                ridge_solve(&x, &y, ridge)
            })
            .collect::<Result<_>>()?;
        Ok(Self { lags, ridge, coef })
    }

    pub fn predict(&self, w: &WindowSample) -> Result<Vec<f64>> {
        if w.horizons.len() != self.coef.len() || w.lookback() < self.lags {
            return Err(Error::InvalidData("window does not match the fitted ridge_ar".into()));
        }
        Ok(self
            .coef
            .iter()
            .map(|c| (0..=self.lags).map(|j| c[j] * design(w, j)).sum())
            .collect())
    }
}

fn design(w: &WindowSample, j: usize) -> f64 {
    if j == 0 {
        1.0
    } else {
        w.history_raw[w.history_raw.len() - j]
    }
}
