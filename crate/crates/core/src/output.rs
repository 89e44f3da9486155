//! CSV artifacts. Every file starts with one `#` comment line recording the
//! tool version, plan hash and master seed, followed by a header row. Floats
//! are written with 6 significant digits in fixed notation so files are byte
//! stable for identical inputs.

use std::io::{Read, Write};

use thiserror::Error;

use crate::network::ConfigId;
use crate::sweep::{GroupStats, RunRecord};

pub const RESULTS_HEADER: [&str; 9] = [
    "config_id",
    "n",
    "edges",
    "density",
    "population",
    "replication",
    "seed",
    "mean_step_gdp",
    "total_gdp",
];

pub const GROUPS_HEADER: [&str; 8] = [
    "edge_count",
    "density",
    "population",
    "mean_of_means",
    "min_gdp",
    "max_gdp",
    "ci95_half_width",
    "config_count",
];

pub const TRACE_HEADER: [&str; 2] = ["step", "gdp"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: column `{column}`: cannot parse `{value}`")]
    Field {
        row: u64,
        column: &'static str,
        value: String,
    },
}

/// Provenance written as the leading comment line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvMeta {
    pub plan_hash: u64,
    pub master_seed: u64,
}

impl CsvMeta {
    pub fn comment_line(&self) -> String {
        format!(
            "# xformnet {} plan_hash={:016x} master_seed={}\n",
            env!("CARGO_PKG_VERSION"),
            self.plan_hash,
            self.master_seed
        )
    }
}

/// Fixed-notation rendering with 6 significant digits, e.g. `0.750000`,
/// `174.690`, `0`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let decimals = |v: f64| (5 - v.abs().log10().floor() as i32).max(0) as usize;
    let mut d = decimals(x);
    let mut s = format!("{x:.d$}");
    // Rounding can carry into a new leading digit (999.9996 -> 1000.000).
    let rounded: f64 = s.parse().unwrap_or(x);
    if decimals(rounded) < d {
        d = decimals(rounded);
        s = format!("{rounded:.d$}");
    }
    s
}

pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(mut out: W, meta: &CsvMeta) -> Result<Self, CsvError> {
        out.write_all(meta.comment_line().as_bytes())?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RESULTS_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &RunRecord) -> Result<(), CsvError> {
        self.inner.write_record([
            r.config_id.to_string(),
            r.n.to_string(),
            r.edge_count.to_string(),
            sig6(r.density),
            r.population.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            sig6(r.mean_step_gdp),
            r.total_gdp.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, CsvError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| CsvError::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_results<W: Write>(out: W, meta: &CsvMeta, records: &[RunRecord]) -> Result<W, CsvError> {
    let mut writer = ResultsWriter::new(out, meta)?;
    for r in records {
        writer.write(r)?;
    }
    writer.finish()
}

pub fn write_groups<W: Write>(mut out: W, meta: &CsvMeta, groups: &[GroupStats]) -> Result<W, CsvError> {
    out.write_all(meta.comment_line().as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GROUPS_HEADER)?;
    for g in groups {
        w.write_record([
            g.edge_count.to_string(),
            sig6(g.density),
            g.population.to_string(),
            sig6(g.mean_of_means),
            sig6(g.min_gdp),
            sig6(g.max_gdp),
            sig6(g.ci95_half_width),
            g.config_count.to_string(),
        ])?;
    }
    w.flush()?;
    w.into_inner()
        .map_err(|e| CsvError::Io(std::io::Error::other(e.to_string())))
}

pub fn write_trace<W: Write>(out: W, per_step_gdp: &[u64]) -> Result<W, CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for (step, gdp) in per_step_gdp.iter().enumerate() {
        w.write_record([(step + 1).to_string(), gdp.to_string()])?;
    }
    w.flush()?;
    w.into_inner()
        .map_err(|e| CsvError::Io(std::io::Error::other(e.to_string())))
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    column: &'static str,
) -> Result<T, CsvError> {
    let value = record.get(idx).unwrap_or("");
    value.parse().map_err(|_| CsvError::Field {
        row: record.position().map_or(0, |p| p.line()),
        column,
        value: value.to_string(),
    })
}

/// Reads a results CSV written by [`write_results`]; `#` lines are skipped.
pub fn read_results<R: Read>(input: R) -> Result<Vec<RunRecord>, CsvError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(CsvError::Header {
            expected: RESULTS_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        out.push(RunRecord {
            config_id: ConfigId(field(&row, 0, "config_id")?),
            n: field(&row, 1, "n")?,
            edge_count: field(&row, 2, "edges")?,
            density: field(&row, 3, "density")?,
            population: field(&row, 4, "population")?,
            replication: field(&row, 5, "replication")?,
            seed: field(&row, 6, "seed")?,
            mean_step_gdp: field(&row, 7, "mean_step_gdp")?,
            total_gdp: field(&row, 8, "total_gdp")?,
        });
    }
    Ok(out)
}
