use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::ingest::TransactionRecord;

pub const PANEL_FORMAT_VERSION: u32 = 1;

/// Which per-day quantity a model predicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    #[default]
    Demand,
    Revenue,
}

/// Per-SKU daily series on a gap-free calendar.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPanel {
    pub sku_ids: Vec<String>,
    pub start: NaiveDate,
    /// `[sku][day]` units sold.
    pub demand: Vec<Vec<f64>>,
    /// `[sku][day]` quantity × unit price.
    pub revenue: Vec<Vec<f64>>,
    /// `[sku][day]` mean unit price, carried across days without sales.
    pub mean_price: Vec<Vec<f64>>,
    pub country_code: Vec<usize>,
    pub countries: Vec<String>,
    pub metadata: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub skus_kept: usize,
    pub skus_excluded: usize,
}

#[derive(Serialize, Deserialize)]
struct PanelMeta {
    format_version: u32,
    start: NaiveDate,
    n_days: usize,
    sku_ids: Vec<String>,
    country_code: Vec<usize>,
    countries: Vec<String>,
    metadata: serde_json::Value,
}

impl SeriesPanel {
    pub fn n_skus(&self) -> usize {
        self.sku_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.demand.first().map_or(0, Vec::len)
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Duration::days(day as i64)
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.n_days().saturating_sub(1))
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start).num_days();
        (d >= 0 && (d as usize) < self.n_days()).then_some(d as usize)
    }

    pub fn target(&self, mode: TargetMode) -> &[Vec<f64>] {
        match mode {
            TargetMode::Demand => &self.demand,
            TargetMode::Revenue => &self.revenue,
        }
    }

    pub fn sku_index(&self, id: &str) -> Option<usize> {
        self.sku_ids.iter().position(|s| s == id)
    }

    fn matrix_csv(&self, m: &[Vec<f64>]) -> String {
        let mut s = String::from("sku");
        for d in 0..self.n_days() {
            write!(s, ",{}", self.date(d)).unwrap();
        }
        s.push('\n');
        for (id, row) in self.sku_ids.iter().zip(m) {
            s.push_str(id);
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    fn meta_json(&self) -> Result<String> {
        let meta = PanelMeta {
            format_version: PANEL_FORMAT_VERSION,
            start: self.start,
            n_days: self.n_days(),
            sku_ids: self.sku_ids.clone(),
            country_code: self.country_code.clone(),
            countries: self.countries.clone(),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&meta)? + "\n")
    }

    /// Serialized files in the order they are written and hashed.
    fn files(&self) -> Result<Vec<(&'static str, String)>> {
        Ok(vec![
            ("panel.json", self.meta_json()?),
            ("demand.csv", self.matrix_csv(&self.demand)),
            ("revenue.csv", self.matrix_csv(&self.revenue)),
            ("price.csv", self.matrix_csv(&self.mean_price)),
        ])
    }

    /// Writes `panel.json`, `demand.csv`, `revenue.csv` and `price.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.files()? {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: PanelMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("panel.json"))?)?;
        if meta.format_version != PANEL_FORMAT_VERSION {
            return Err(Error::InvalidData(format!(
                "panel format version {} (expected {PANEL_FORMAT_VERSION})",
                meta.format_version
            )));
        }
        let read = |name: &str| -> Result<Vec<Vec<f64>>> {
            let mut rdr = csv::Reader::from_path(dir.join(name))?;
            let mut rows = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if rec.get(0) != meta.sku_ids.get(i).map(String::as_str) {
                    return Err(Error::InvalidData(format!("{name}: row {i} sku mismatch")));
                }
                let row = rec
                    .iter()
                    .skip(1)
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::InvalidData(format!("{name}: bad value `{v}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != meta.n_days {
                    return Err(Error::InvalidData(format!("{name}: row {i} length")));
                }
                rows.push(row);
            }
            if rows.len() != meta.sku_ids.len() {
                return Err(Error::InvalidData(format!("{name}: row count")));
            }
            Ok(rows)
        };
        Ok(Self {
            demand: read("demand.csv")?,
            revenue: read("revenue.csv")?,
            mean_price: read("price.csv")?,
            sku_ids: meta.sku_ids,
            start: meta.start,
            country_code: meta.country_code,
            countries: meta.countries,
            metadata: meta.metadata,
        })
    }

    /// SHA-256 over the persisted representation, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, body) in self.files()? {
            h.update(name.as_bytes());
            h.update((body.len() as u64).to_le_bytes());
            h.update(body.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Builds per-SKU daily series from cleaned transactions.
///
/// The calendar spans the first to last transaction date. SKUs with fewer
/// than `min_active_days` days of nonzero demand are excluded.
pub fn aggregate_daily(
    records: &[TransactionRecord],
    min_active_days: usize,
) -> Result<(SeriesPanel, AggregateStats)> {
    let first = records.iter().map(|r| r.invoice_datetime.date()).min();
    let last = records.iter().map(|r| r.invoice_datetime.date()).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::InvalidData("no transactions to aggregate".into()));
    };
    let n_days = (last - first).num_days() as usize + 1;

    struct Acc {
        qty: Vec<f64>,
        rev: Vec<f64>,
        countries: BTreeMap<String, usize>,
    }
    let mut by_sku: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in records {
        let d = (r.invoice_datetime.date() - first).num_days() as usize;
        let acc = by_sku.entry(r.stock_code.as_str()).or_insert_with(|| Acc {
            qty: vec![0.0; n_days],
            rev: vec![0.0; n_days],
            countries: BTreeMap::new(),
        });
        acc.qty[d] += r.quantity as f64;
        acc.rev[d] += r.quantity as f64 * r.unit_price;
        *acc.countries.entry(r.country.clone()).or_default() += 1;
    }

    let total = by_sku.len();
    let kept: Vec<(&str, Acc)> = by_sku
        .into_iter()
        .filter(|(_, a)| a.qty.iter().filter(|&&q| q > 0.0).count() >= min_active_days)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidData(format!(
            "no SKU has at least {min_active_days} active days ({total} SKUs seen)"
        )));
    }

    // Most frequent country per SKU; BTreeMap order breaks ties alphabetically.
    let sku_country: Vec<String> = kept
        .iter()
        .map(|(_, a)| {
            let mut best: Option<(&String, usize)> = None;
            for (c, &n) in &a.countries {
                if best.is_none_or(|(_, b)| n > b) {
                    best = Some((c, n));
                }
            }
            best.unwrap().0.clone()
        })
        .collect();
    let countries: Vec<String> = sku_country.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();

    let mut panel = SeriesPanel {
        sku_ids: Vec::with_capacity(kept.len()),
        start: first,
        demand: Vec::with_capacity(kept.len()),
        revenue: Vec::with_capacity(kept.len()),
        mean_price: Vec::with_capacity(kept.len()),
        country_code: sku_country
            .iter()
            .map(|c| countries.binary_search(c).unwrap())
            .collect(),
        countries,
        metadata: serde_json::json!({ "source": "transactions", "min_active_days": min_active_days }),
    };
    for (id, acc) in kept {
        let mut price = vec![f64::NAN; n_days];
        let mut last_seen = None;
        for d in 0..n_days {
            if acc.qty[d] > 0.0 {
                last_seen = Some(acc.rev[d] / acc.qty[d]);
            }
            if let Some(p) = last_seen {
                price[d] = p;
            }
        }
        let head = price.iter().copied().find(|p| !p.is_nan()).unwrap();
        price.iter_mut().take_while(|p| p.is_nan()).for_each(|p| *p = head);

        panel.sku_ids.push(id.to_string());
        panel.demand.push(acc.qty);
        panel.revenue.push(acc.rev);
        panel.mean_price.push(price);
    }
    let stats = AggregateStats {
        skus_kept: panel.n_skus(),
        skus_excluded: total - panel.n_skus(),
    };
    Ok((panel, stats))
}
