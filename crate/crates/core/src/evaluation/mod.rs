//! Accuracy metrics, Diebold-Mariano comparison, error and profit
//! trajectories, and report emission.

mod dm;
mod forecast_set;
mod metrics;
mod report;

pub use dm::{dm_statistic, dm_test, DmLoss, DmResult};
pub use forecast_set::{ForecastRecord, ForecastSet};
pub use metrics::{
    cpoi, mae, mase, metric, rmse, smape, smape_records, smape_term, theil_u2, tse_trajectory, CpoiParams, Metric,
    ScaleContext, Scaled,
};
pub use report::{dm_markdown, DmEntry, EvalReport, MetricRow, ModelReport, ReportOptions};
