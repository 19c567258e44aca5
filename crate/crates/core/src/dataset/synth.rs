use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::panel::SeriesPanel;

/// Generator settings for seeded synthetic panels. Ranges are sampled
/// uniformly per SKU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub start: NaiveDate,
    /// Base level in units/day.
    pub base_min: f64,
    pub base_max: f64,
    /// Maximum absolute trend in units/day per day.
    pub trend_max: f64,
    /// Weekly amplitude as a fraction of base.
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Noise standard deviation as a fraction of base.
    pub noise: f64,
    /// Additive lift during 1-24 December as a fraction of base.
    pub holiday_boost: f64,
    pub n_countries: usize,
    pub price_min: f64,
    pub price_max: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(),
            base_min: 20.0,
            base_max: 60.0,
            trend_max: 0.05,
            amplitude_min: 0.2,
            amplitude_max: 0.5,
            noise: 0.1,
            holiday_boost: 0.5,
            n_countries: 3,
            price_min: 1.0,
            price_max: 10.0,
        }
    }
}

impl SynthParams {
    /// Noise-free, trend-free series: every SKU is exactly 7-periodic.
    pub fn periodic() -> Self {
        Self {
            trend_max: 0.0,
            noise: 0.0,
            holiday_boost: 0.0,
            ..Self::default()
        }
    }
}

fn is_holiday(date: NaiveDate) -> bool {
    date.month() == 12 && date.day() <= 24
}

/// Seeded panel with per-SKU level, trend, weekly profile, December lift and
/// Gaussian noise, rounded and floored at zero.
pub fn synth_generate(seed: u64, n_skus: usize, n_days: usize, params: &SynthParams) -> Result<SeriesPanel> {
    if n_days < 21 {
        return Err(Error::InvalidConfig(format!("synthetic panels need at least 21 days, got {n_days}")));
    }
    if n_skus == 0 || params.n_countries == 0 {
        return Err(Error::InvalidConfig("synthetic panel needs at least one SKU and country".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut panel = SeriesPanel {
        sku_ids: Vec::with_capacity(n_skus),
        start: params.start,
        demand: Vec::with_capacity(n_skus),
        revenue: Vec::with_capacity(n_skus),
        mean_price: Vec::with_capacity(n_skus),
        country_code: Vec::with_capacity(n_skus),
        countries: (0..params.n_countries).map(|c| format!("C{c}")).collect(),
        metadata: serde_json::json!({
            "source": "synthetic",
            "seed": seed,
            "n_skus": n_skus,
            "n_days": n_days,
            "params": params,
        }),
    };
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
    for i in 0..n_skus {
        let base = uniform(&mut rng, params.base_min, params.base_max);
        let trend = uniform(&mut rng, -params.trend_max, params.trend_max);
        let amp = base * uniform(&mut rng, params.amplitude_min, params.amplitude_max);
        let price = uniform(&mut rng, params.price_min, params.price_max);
        let mut weekly: [f64; 7] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let mean = weekly.iter().sum::<f64>() / 7.0;
        weekly.iter_mut().for_each(|w| *w -= mean);
        let peak = weekly.iter().fold(0.0f64, |m, w| m.max(w.abs())).max(1e-9);
        weekly.iter_mut().for_each(|w| *w /= peak);
        let noise = Normal::new(0.0, params.noise * base).expect("finite noise scale");

        let demand: Vec<f64> = (0..n_days)
            .map(|d| {
                let date = panel.date(d);
                let holiday = if is_holiday(date) { params.holiday_boost * base } else { 0.0 };
                let eps = if params.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let v = base + trend * d as f64 + amp * weekly[d % 7] + holiday + eps;
                v.round().max(0.0)
            })
            .collect();
        panel.sku_ids.push(format!("SYN{i:04}"));
        panel.revenue.push(demand.iter().map(|q| q * price).collect());
        panel.mean_price.push(vec![price; n_days]);
        panel.demand.push(demand);
        panel.country_code.push(i % params.n_countries);
    }
    Ok(panel)
}
