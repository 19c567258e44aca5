//! Shared fixtures for the benchmarks.

use tempora_core::dataset::{make_splits, synth_generate, SplitSpec, Splits, SynthParams, TargetMode, WindowConfig};
use tempora_core::dataset::SeriesPanel;

/// Seeded synthetic panel split with the default window settings.
pub fn fixture(n_skus: usize, n_days: usize) -> (SeriesPanel, Splits) {
    let panel = synth_generate(7, n_skus, n_days, &SynthParams::default()).expect("synthetic panel");
    let spec = SplitSpec::from_fractions(&panel, 0.7, 0.15).expect("split");
    let wc = WindowConfig {
        lookback: 28,
        horizons: vec![1, 7, 14],
        mode: TargetMode::Demand,
    };
    let splits = make_splits(&panel, &spec, &wc).expect("windows");
    (panel, splits)
}
