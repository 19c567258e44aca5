use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use tempora_core::baselines::fit_predict;
use tempora_core::dataset::{
    aggregate_daily, build_forecast_window, clean, ingest_csv, make_splits, synth_generate, SeriesPanel, Splits,
};
use tempora_core::evaluation::{
    dm_markdown, dm_test, mae, rmse, smape_records, DmEntry, DmLoss, EvalReport, ForecastRecord, ForecastSet,
    ReportOptions, ScaleContext,
};
use tempora_core::model::HybridForecaster;
use tempora_core::training::{derive_seed, load_checkpoint, save_checkpoint, train, write_history, Checkpoint};
use tempora_core::Error;

use crate::config::{window_config, RunConfig};
use crate::CliError;

type CliResult<T> = std::result::Result<T, CliError>;

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn echo(out: &Path, cfg: &RunConfig, dataset_hash: Option<&str>) -> CliResult<()> {
    write_json(
        &out.join("config.json"),
        &json!({ "config": cfg.to_json()?, "dataset_hash": dataset_hash }),
    )
}

fn create(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct IngestStats {
    source: String,
    rows_read: usize,
    rows_kept: usize,
    rows_skipped: usize,
    rows_dropped: usize,
    skus_kept: usize,
    skus_excluded: usize,
    n_days: usize,
}

pub fn ingest(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let (panel, stats) = match &cfg.data.csv {
        Some(path) => {
            let parsed = ingest_csv(path)?;
            let parsed_rows = parsed.records.len();
            let kept = clean(parsed.records);
            let (panel, agg) = aggregate_daily(&kept, cfg.data.min_active_days)?;
            let stats = IngestStats {
                source: path.display().to_string(),
                rows_read: parsed.rows_read,
                rows_kept: kept.len(),
                rows_skipped: parsed.rows_skipped,
                rows_dropped: parsed_rows - kept.len(),
                skus_kept: agg.skus_kept,
                skus_excluded: agg.skus_excluded,
                n_days: panel.n_days(),
            };
            (panel, stats)
        }
        None => {
            let panel = synth_generate(cfg.seed, cfg.data.n_skus, cfg.data.n_days, &cfg.data.synth)?;
            let stats = IngestStats {
                source: "synthetic".into(),
                rows_read: 0,
                rows_kept: 0,
                rows_skipped: 0,
                rows_dropped: 0,
                skus_kept: panel.n_skus(),
                skus_excluded: 0,
                n_days: panel.n_days(),
            };
            (panel, stats)
        }
    };
    panel.save(out)?;
    write_json(&out.join("ingest_stats.json"), &stats)?;
    echo(out, cfg, Some(&panel.content_hash()?))?;
    eprintln!(
        "panel: {} SKUs x {} days ({} excluded) -> {}",
        panel.n_skus(),
        panel.n_days(),
        stats.skus_excluded,
        out.display()
    );
    Ok(())
}

fn splits_for(cfg: &RunConfig, panel: &SeriesPanel, model: &tempora_core::model::ModelConfig) -> CliResult<Splits> {
    let spec = cfg.split.resolve(panel)?;
    Ok(make_splits(panel, &spec, &window_config(model, cfg.data.mode))?)
}

pub fn train_cmd(cfg: &RunConfig, panel_dir: &Path, resume: Option<&Path>, out: &Path) -> CliResult<()> {
    let panel = SeriesPanel::load(panel_dir)?;
    let hash = panel.content_hash()?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.n_countries = model_cfg.n_countries.max(panel.countries.len());
    let mut effective = cfg.clone();
    effective.model = model_cfg.clone();
    let splits = splits_for(cfg, &panel, &model_cfg)?;
    let (model, state) = match resume {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            if ckpt.model_config()? != model_cfg {
                return Err(CliError::mismatch("resume checkpoint has a different model configuration"));
            }
            let state = ckpt
                .state
                .ok_or_else(|| CliError::mismatch("checkpoint carries no training state"))?;
            let model = HybridForecaster::from_params(model_cfg.clone(), state.params.clone())?;
            (model, Some(state))
        }
        None => (HybridForecaster::init(model_cfg.clone(), cfg.seed)?, None),
    };
    eprintln!(
        "training on {} windows (val {}, test {})",
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    let outcome = train(
        model,
        &splits.train,
        &splits.val,
        &splits.scaling,
        &cfg.loss,
        &cfg.train,
        state,
    )?;
    create(out)?;
    let ckpt = Checkpoint {
        config: effective.to_json()?,
        seed: cfg.seed,
        scaling: splits.scaling,
        params: outcome.model.params().clone(),
        state: Some(outcome.state.clone()),
    };
    save_checkpoint(&ckpt, out.join("model.ckpt"))?;
    let file = std::fs::File::create(out.join("history.csv")).map_err(Error::from)?;
    write_history(&outcome.history, file)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "iterations": outcome.state.iteration,
            "best_iteration": outcome.state.best_iteration,
            "best_val": outcome.state.best_val.is_finite().then_some(outcome.state.best_val),
            "stopped_early": outcome.state.stopped,
            "train_windows": splits.train.len(),
        }),
    )?;
    echo(out, &effective, Some(&hash))?;
    eprintln!(
        "best validation {:.6} at iteration {} of {}",
        outcome.state.best_val, outcome.state.best_iteration, outcome.state.iteration
    );
    Ok(())
}

/// Loads a checkpoint and checks it against the run configuration.
fn load_model(cfg: &RunConfig, path: &Path) -> CliResult<(Checkpoint, HybridForecaster)> {
    let ckpt = load_checkpoint(path)?;
    let model = ckpt.model()?;
    let mc = model.config();
    if mc.horizons != cfg.model.horizons {
        return Err(CliError::mismatch(format!(
            "checkpoint horizons {:?} differ from configured {:?}",
            mc.horizons, cfg.model.horizons
        )));
    }
    if mc.lookback != cfg.model.lookback {
        return Err(CliError::mismatch(format!(
            "checkpoint lookback {} differs from configured {}",
            mc.lookback, cfg.model.lookback
        )));
    }
    Ok((ckpt, model))
}

fn oracle_set(test: &ForecastSet) -> CliResult<ForecastSet> {
    let records = test
        .records()
        .iter()
        .map(|r| ForecastRecord { yhat: r.y, ..r.clone() })
        .collect();
    Ok(ForecastSet::new("oracle", test.mode, records)?)
}

pub fn evaluate(cfg: &RunConfig, ckpt_path: &Path, panel_dir: &Path, out: &Path) -> CliResult<()> {
    let panel = SeriesPanel::load(panel_dir)?;
    let hash = panel.content_hash()?;
    let (ckpt, model) = load_model(cfg, ckpt_path)?;
    let mode = cfg.data.mode;
    let splits = splits_for(cfg, &panel, model.config())?;
    if splits.scaling != ckpt.scaling {
        return Err(CliError::mismatch(
            "checkpoint feature scaling does not match this panel and split",
        ));
    }
    let hybrid = ForecastSet::from_windows("hybrid", &panel, mode, &splits.test, |w| {
        model.forecast(w, &splits.scaling)
    })?;
    let specs = cfg.eval.baseline_specs()?;
    let baselines = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| fit_predict(spec, &panel, &splits, mode, derive_seed(&[cfg.seed, i as u64])))
        .collect::<tempora_core::Result<Vec<_>>>()?;
    let mut sets = vec![hybrid];
    sets.extend(baselines);
    if cfg.eval.oracle {
        let o = oracle_set(&sets[0])?;
        sets.push(o);
    }
    let mut effective = cfg.clone();
    effective.model = model.config().clone();
    let ctx = ScaleContext::from_panel(&panel, mode, splits.bounds.0, cfg.eval.season)?;
    let opts = ReportOptions {
        cpoi: cfg.eval.cpoi,
        dm_losses: cfg.eval.dm_losses.clone(),
    };
    let report = EvalReport::build(&sets, &ctx, &opts, hash.clone(), effective.to_json()?)?;
    report.emit(out)?;
    let fdir = out.join("forecasts");
    create(&fdir)?;
    for s in &sets {
        s.save_csv(fdir.join(format!("{}.csv", s.label)))?;
    }
    std::fs::write(out.join("dm.md"), dm_markdown(&report.dm)).map_err(Error::from)?;
    echo(out, &effective, Some(&hash))?;
    for m in &report.models {
        if let Some((_, row)) = m.metrics.iter().find(|(k, _)| k == "pooled") {
            eprintln!("{:<16} sMAPE {:>8.3}  MAE {:>10.4}", m.label, row.smape, row.mae);
        }
    }
    Ok(())
}

pub fn forecast(
    cfg: &RunConfig,
    ckpt_path: &Path,
    panel_dir: &Path,
    sku: &str,
    origin: Option<chrono::NaiveDate>,
) -> CliResult<()> {
    let panel = SeriesPanel::load(panel_dir)?;
    let (ckpt, model) = load_model(cfg, ckpt_path)?;
    let k = panel
        .sku_index(sku)
        .ok_or_else(|| Error::InvalidData(format!("unknown sku `{sku}`")))?;
    let day = match origin {
        Some(d) => panel
            .day_index(d)
            .ok_or_else(|| Error::InvalidData(format!("origin {d} outside the panel calendar")))?,
        None => panel.n_days() - 1,
    };
    let w = build_forecast_window(
        &panel,
        &ckpt.scaling,
        &window_config(model.config(), cfg.data.mode),
        k,
        day,
    )?;
    let yhat = model.forecast(&w, &ckpt.scaling)?;
    let forecasts: Vec<_> = w
        .horizons
        .iter()
        .zip(&yhat)
        .map(|(&h, &y)| json!({ "h": h, "date": panel.date(day + h), "yhat": y }))
        .collect();
    let doc = json!({ "sku": sku, "origin": panel.date(day), "forecasts": forecasts });
    println!("{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?);
    Ok(())
}

#[derive(Serialize)]
struct PooledRow {
    label: String,
    horizon: String,
    n: usize,
    mae: f64,
    rmse: f64,
    smape: f64,
}

pub fn compare(cfg: &RunConfig, files: &[PathBuf], out: &Path) -> CliResult<()> {
    if files.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least two forecast CSVs".into()).into());
    }
    let sets = files
        .iter()
        .map(|p| {
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            ForecastSet::load_csv(p, label, cfg.data.mode)
        })
        .collect::<tempora_core::Result<Vec<_>>>()?;
    let keys = |s: &ForecastSet| s.records().iter().map(|r| r.key()).collect::<BTreeSet<_>>();
    let first = keys(&sets[0]);
    for s in &sets[1..] {
        let other = keys(s);
        if let Some(k) = first.symmetric_difference(&other).next() {
            let owner = if first.contains(k) { &s.label } else { &sets[0].label };
            return Err(Error::KeyMismatch(format!("({}, {}, h={}) missing from {owner}", k.0, k.1, k.2)).into());
        }
    }
    let horizons = sets[0].horizons();
    let mut losses = cfg.eval.dm_losses.clone();
    for l in [DmLoss::Squared, DmLoss::Absolute] {
        if !losses.contains(&l) {
            losses.push(l);
        }
    }
    let mut entries = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            for &h in &horizons {
                for &loss in &losses {
                    let r = dm_test(&sets[i], &sets[j], loss, h)?;
                    entries.push(DmEntry {
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
    let mut pooled = Vec::new();
    for s in &sets {
        let rows = horizons.iter().map(|&h| (format!("h{h}"), Some(h))).chain([("pooled".to_string(), None)]);
        for (name, h) in rows {
            let rs = s.at(h);
            pooled.push(PooledRow {
                label: s.label.clone(),
                horizon: name,
                n: rs.len(),
                mae: mae(&rs)?,
                rmse: rmse(&rs)?,
                smape: smape_records(&rs)?,
            });
        }
    }
    create(out)?;
    write_json(&out.join("dm.json"), &entries)?;
    let mut md = dm_markdown(&entries);
    md.push_str("\n| label | horizon | n | mae | rmse | smape |\n|---|---|---|---|---|---|\n");
    for r in &pooled {
        md.push_str(&format!(
            "| {} | {} | {} | {:.4} | {:.4} | {:.4} |\n",
            r.label, r.horizon, r.n, r.mae, r.rmse, r.smape
        ));
    }
    std::fs::write(out.join("compare.md"), md).map_err(Error::from)?;
    let mut w = csv::Writer::from_path(out.join("pooled.csv")).map_err(Error::from)?;
    for r in &pooled {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    echo(out, cfg, None)?;
    Ok(())
}
