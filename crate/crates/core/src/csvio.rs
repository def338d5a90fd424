//! CSV emission and ingestion for count records, sweeps, and `K` curves.

use crate::analysis::KPoint;
use crate::counting::CountRecord;
use crate::error::{Error, Result};
use crate::protocol::KGrid;

pub const COUNTS_HEADER: [&str; 7] = [
    "run",
    "detector",
    "blocker",
    "scan_var",
    "scan_value",
    "duration_s",
    "counts",
];
pub const SWEEP_HEADER: [&str; 3] = ["theta_A", "chi", "K"];
pub const K_CURVE_HEADER: [&str; 3] = ["chi", "K", "sigma_K"];

/// `%.12g`-style formatting: 12 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-5, 1e12)`.
pub fn format_sig12(x: f64) -> String {
    const DIGITS: usize = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

fn into_string(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Count records with full-precision floats, so ingestion is lossless.
pub fn write_counts(records: &[CountRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(COUNTS_HEADER).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    into_string(w)
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_err)?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Csv(format!(
            "header must be `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

pub fn read_counts(text: &str) -> Result<Vec<CountRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &COUNTS_HEADER)?;
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<CountRecord>().enumerate() {
        let record = row.map_err(|e| Error::Csv(format!("row {}: {e}", i + 2)))?;
        if record.duration_s.is_nan() || record.duration_s <= 0.0 {
            return Err(Error::Csv(format!("row {}: duration_s must be positive", i + 2)));
        }
        if !record.scan_value.is_finite() {
            return Err(Error::Csv(format!("row {}: scan_value is not finite", i + 2)));
        }
        records.push(record);
    }
    Ok(records)
}

fn write_rows(header: &[&str], rows: impl Iterator<Item = [f64; 3]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| format_sig12(v))).map_err(csv_err)?;
    }
    into_string(w)
}

fn read_rows(text: &str, header: &[&str]) -> Result<Vec<[f64; 3]>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, header)?;
    reader
        .deserialize::<[f64; 3]>()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Csv(format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn write_sweep(grid: &KGrid) -> Result<String> {
    write_rows(&SWEEP_HEADER, grid.cells().map(|(t, c, k)| [t, c, k]))
}

/// Rows of `(θ_A, χ, K)` from a sweep CSV.
pub fn read_sweep(text: &str) -> Result<Vec<[f64; 3]>> {
    read_rows(text, &SWEEP_HEADER)
}

pub fn write_k_curve(curve: &[KPoint]) -> Result<String> {
    write_rows(&K_CURVE_HEADER, curve.iter().map(|p| [p.chi, p.k, p.sigma_k]))
}

pub fn read_k_curve(text: &str) -> Result<Vec<KPoint>> {
    Ok(read_rows(text, &K_CURVE_HEADER)?
        .into_iter()
        .map(|[chi, k, sigma_k]| KPoint { chi, k, sigma_k })
        .collect())
}
