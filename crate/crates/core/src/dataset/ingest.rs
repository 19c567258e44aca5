use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the published transaction export, in file order.
pub const REQUIRED_COLUMNS: [&str; 8] = [
    "Invoice",
    "StockCode",
    "Description",
    "Quantity",
    "InvoiceDate",
    "Price",
    "Customer ID",
    "Country",
];

/// One invoice line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub invoice_id: String,
    pub stock_code: String,
    pub description: Option<String>,
    pub quantity: i64,
    pub invoice_datetime: NaiveDateTime,
    pub unit_price: f64,
    pub customer_id: Option<String>,
    pub country: String,
}

#[derive(Clone, Debug, Default)]
pub struct IngestOutcome {
    pub records: Vec<TransactionRecord>,
    pub rows_read: usize,
    /// Rows whose quantity, price or timestamp did not parse.
    pub rows_skipped: usize,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()
}

fn optional(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<IngestOutcome> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file)
}

/// Parses transaction rows from any reader holding the published CSV layout.
pub fn ingest_reader(reader: impl Read) -> Result<IngestOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 8];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let [c_inv, c_code, c_desc, c_qty, c_date, c_price, c_cust, c_country] = cols;

    let mut out = IngestOutcome::default();
    for row in rdr.records() {
        let row = row?;
        out.rows_read += 1;
        let field = |i: usize| row.get(i).unwrap_or("");
        let quantity = field(c_qty).trim().parse::<i64>().ok();
        let unit_price = field(c_price)
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|p| p.is_finite());
        let ts = parse_timestamp(field(c_date));
        let (Some(quantity), Some(unit_price), Some(invoice_datetime)) = (quantity, unit_price, ts)
        else {
            out.rows_skipped += 1;
            continue;
        };
        out.records.push(TransactionRecord {
            invoice_id: field(c_inv).trim().to_string(),
            stock_code: field(c_code).trim().to_string(),
            description: optional(field(c_desc)),
            quantity,
            invoice_datetime,
            unit_price,
            customer_id: optional(field(c_cust)),
            country: field(c_country).trim().to_string(),
        });
    }
    Ok(out)
}

type RowKey<'a> = (
    &'a str,
    &'a str,
    Option<&'a str>,
    i64,
    NaiveDateTime,
    u64,
    Option<&'a str>,
    &'a str,
);

fn row_key(r: &TransactionRecord) -> RowKey<'_> {
    (
        &r.invoice_id,
        &r.stock_code,
        r.description.as_deref(),
        r.quantity,
        r.invoice_datetime,
        r.unit_price.to_bits(),
        r.customer_id.as_deref(),
        &r.country,
    )
}

/// Drops exact duplicates, cancellations (`C`-prefixed invoices), nonpositive
/// quantities or prices, and rows missing an invoice or stock code. Rows
/// without a customer id are kept. First occurrences keep their order.
pub fn clean(records: Vec<TransactionRecord>) -> Vec<TransactionRecord> {
    let keep: Vec<bool> = {
        let mut seen: HashSet<RowKey<'_>> = HashSet::with_capacity(records.len());
        records
            .iter()
            .map(|r| {
                let valid = r.quantity > 0
                    && r.unit_price > 0.0
                    && !r.invoice_id.is_empty()
                    && !r.stock_code.is_empty()
                    && !r.invoice_id.starts_with('C');
                valid && seen.insert(row_key(r))
            })
            .collect()
    };
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}
