//! Transaction ingest, cleaning, daily aggregation, windowing and synthetic
//! panels.

mod ingest;
mod panel;
mod synth;
mod windows;

pub use ingest::{clean, ingest_csv, ingest_reader, parse_timestamp, IngestOutcome, TransactionRecord, REQUIRED_COLUMNS};
pub use panel::{aggregate_daily, AggregateStats, SeriesPanel, TargetMode, PANEL_FORMAT_VERSION};
pub use synth::{synth_generate, SynthParams};
pub use windows::{
    assign_split, build_forecast_window, build_window, feature, feature_row, make_splits, origin_range, split_counts, FeatureScaling, Split,
    SplitSpec, Splits, WindowConfig, WindowSample,
};
