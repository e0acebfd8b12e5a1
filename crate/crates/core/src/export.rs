//! Plot-ready downsampling of trajectory CSV files.

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ROWS: usize = 2000;

struct Table {
    header: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

fn parse(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::MalformedCsv("missing header".into()));
    }
    let mut rows = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedCsv(format!("row {}: {e}", k + 1)))?;
        for field in rec.iter() {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::MalformedCsv(format!("row {}: non-numeric {field:?}", k + 1)))?;
        }
        let t: f64 = rec[0].trim().parse().expect("checked above");
        if !(t > last_t) {
            return Err(Error::MalformedCsv(format!(
                "row {}: time column not increasing",
                k + 1
            )));
        }
        last_t = t;
        rows.push(rec);
    }
    Ok(Table { header, rows })
}

fn render(header: &csv::StringRecord, rows: &[&csv::StringRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::MalformedCsv(e.to_string()))?;
    for r in rows {
        w.write_record(*r).map_err(|e| Error::MalformedCsv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::MalformedCsv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::MalformedCsv(e.to_string()))
}

/// Every `stride`-th row, always keeping the last one.
pub fn downsample_csv(text: &str, stride: usize) -> Result<String> {
    if stride == 0 {
        return Err(Error::MalformedCsv("stride must be >= 1".into()));
    }
    let table = parse(text)?;
    let n = table.rows.len();
    let kept: Vec<&csv::StringRecord> = table
        .rows
        .iter()
        .enumerate()
        .filter(|(k, _)| k % stride == 0 || *k + 1 == n)
        .map(|(_, r)| r)
        .collect();
    render(&table.header, &kept)
}

/// Downsamples to at most about `max_rows` rows; shorter files pass through.
pub fn export_plotdata(text: &str, max_rows: usize) -> Result<String> {
    let n = parse(text)?.rows.len();
    let stride = n.div_ceil(max_rows.max(1)).max(1);
    downsample_csv(text, stride)
}
