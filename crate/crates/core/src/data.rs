//! Two-sample datasets on disk, joint censoring of real data, and the
//! one-sample Kolmogorov–Smirnov test.
//!
//! Dataset files look like
//!
//! ```text
//! # m=40 n=88
//! sample,value
//! X,6.94
//! Y,0.08
//! ```
//!
//! Censored samples use `# m=<int> n=<int> r=<int>` followed by
//! `index,w,nu` rows with `nu` in `{1, 0}` (1 = population X).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::censoring::CensoredSample;
use crate::error::{Error, Result};
use crate::lomax::LomaxParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::Validation { row: 0, msg: "both samples must be nonempty".into() });
        }
        if let Some(v) = x.iter().chain(&y).find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Validation { row: 0, msg: format!("value {v} is not positive") });
        }
        Ok(Self { x, y, label: None })
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Parse `# key=value key=value` into the requested integer keys.
fn parse_header(line: &str, keys: &[&str]) -> Result<Vec<usize>> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse { line: 1, msg: format!("expected a `# {}` header", keys.join("= ")) })?;
    let mut found = vec![None; keys.len()];
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("malformed header token `{tok}`") })?;
        if let Some(i) = keys.iter().position(|&key| key == k) {
            let v = v
                .parse()
                .map_err(|_| Error::Parse { line: 1, msg: format!("`{k}` is not a nonnegative integer") })?;
            found[i] = Some(v);
        }
    }
    keys.iter()
        .zip(found)
        .map(|(k, v)| v.ok_or_else(|| Error::Parse { line: 1, msg: format!("header is missing `{k}`") }))
        .collect()
}

/// Split off the header line and return a csv reader over the rest.
fn split_header(text: &str) -> Result<(&str, csv::Reader<&[u8]>)> {
    let (head, rest) = text.split_once('\n').unwrap_or((text, ""));
    if head.trim().is_empty() {
        return Err(Error::Parse { line: 1, msg: "empty file".into() });
    }
    let reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(rest.as_bytes());
    Ok((head, reader))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    // +1 for the `#` header consumed before the csv reader
    rec.position().map_or(0, |p| p.line() + 1)
}

fn parse_value(field: Option<&str>, line: u64, what: &str) -> Result<f64> {
    let field = field.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?;
    field.parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse {what} `{field}`") })
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let (head, mut reader) = split_header(text)?;
    let dims = parse_header(head, &["m", "n"])?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() + 1),
            msg: e.to_string(),
        })?;
        let line = record_line(&rec);
        let value = parse_value(rec.get(1), line, "value")?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Validation { row: line, msg: format!("value {value} is not positive") });
        }
        match rec.get(0) {
            Some("X") => x.push(value),
            Some("Y") => y.push(value),
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("sample must be X or Y, got `{}`", other.unwrap_or("")),
                })
            }
        }
    }
    if x.len() != dims[0] || y.len() != dims[1] {
        return Err(Error::Validation {
            row: 1,
            msg: format!("header declares m={} n={} but file has {} X and {} Y rows", dims[0], dims[1], x.len(), y.len()),
        });
    }
    Dataset::new(x, y)
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut d = parse_dataset(&fs::read_to_string(path)?)?;
    d.label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(d)
}

pub fn write_dataset<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# m={} n={}", d.m(), d.n())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "value"]).map_err(csv_io)?;
    for (tag, vals) in [("X", &d.x), ("Y", &d.y)] {
        for v in vals.iter() {
            w.write_record([tag, &v.to_string()]).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn parse_censored(text: &str) -> Result<CensoredSample> {
    let (head, mut reader) = split_header(text)?;
    let dims = parse_header(head, &["m", "n", "r"])?;
    let (mut w, mut nu) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() + 1), msg: e.to_string() })?;
        let line = record_line(&rec);
        w.push(parse_value(rec.get(1), line, "w")?);
        nu.push(match rec.get(2) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::Parse { line, msg: format!("nu must be 0 or 1, got `{}`", other.unwrap_or("")) })
            }
        });
    }
    if w.len() != dims[2] {
        return Err(Error::Validation { row: 1, msg: format!("header declares r={} but file has {} rows", dims[2], w.len()) });
    }
    CensoredSample::new(w, nu, dims[0], dims[1]).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Validation { row: 0, msg },
        other => other,
    })
}

pub fn write_censored<W: Write>(s: &CensoredSample, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# m={} n={} r={}", s.m(), s.n(), s.r())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "w", "nu"]).map_err(csv_io)?;
    for (i, (v, &x)) in s.w().iter().zip(s.nu()).enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string(), u8::from(x).to_string()]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Pool, sort and cut the dataset at the `r`-th smallest value.
pub fn apply_joint_censoring(d: &Dataset, r: usize) -> Result<CensoredSample> {
    CensoredSample::from_pooled(&d.x, &d.y, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `P(K > λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `x` against a fully specified Lomax law.
pub fn ks_test(x: &[f64], p: &LomaxParams) -> Result<KsResult> {
    if x.len() < 2 {
        return Err(Error::InvalidParameter(format!("KS test needs at least 2 values, got {}", x.len())));
    }
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in xs.iter().enumerate() {
        let f = p.cdf(v)?;
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(n.sqrt() * d) })
}
