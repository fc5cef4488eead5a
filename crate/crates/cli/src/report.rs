//! CSV output and the per-window test families shared by `run` and `compare`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use taskfx::stats::{bh_fdr, one_sample_ttest, paired_ttest, TestResult};

use crate::error::{CliError, CliResult};

/// Shortest round-trip form; non-finite values as `NaN`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NaN".into()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::io(path, e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Reads a CSV with the expected header into string rows.
pub fn read_csv(path: &Path, header: &[&str]) -> CliResult<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let got: Vec<String> = r
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(CliError::Io(format!(
            "{}: header {:?}, expected {:?}",
            path.display(),
            got.join(","),
            header.join(",")
        )));
    }
    r.records()
        .map(|rec| {
            rec.map(|x| x.iter().map(str::to_string).collect())
                .map_err(|e| CliError::io(path, e))
        })
        .collect()
}

pub const STATS_HEADER: [&str; 5] = ["family", "cell", "statistic", "p", "rejected"];

#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub family: String,
    pub cell: String,
    pub statistic: f64,
    pub p: f64,
    pub rejected: bool,
}

impl StatRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.family.clone(),
            self.cell.clone(),
            num(self.statistic),
            num(self.p),
            self.rejected.to_string(),
        ]
    }
}

/// BH across the tests of one family. Tests that could not be computed
/// (too few samples, zero variance) are reported as NaN, never rejected,
/// and left out of the family size.
pub fn family(name: &str, cells: Vec<(String, taskfx::Result<TestResult>)>, q: f64) -> Vec<StatRow> {
    let valid: Vec<f64> = cells
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().map(|t| t.p_value))
        .collect();
    let mut mask = bh_fdr(&valid, q).into_iter();
    cells
        .into_iter()
        .map(|(cell, r)| match r {
            Ok(t) => StatRow {
                family: name.to_string(),
                cell,
                statistic: t.statistic,
                p: t.p_value,
                rejected: mask.next().unwrap_or(false),
            },
            Err(e) => {
                warn!("{name} {cell}: {e}");
                StatRow {
                    family: name.to_string(),
                    cell,
                    statistic: f64::NAN,
                    p: f64::NAN,
                    rejected: false,
                }
            }
        })
        .collect()
}

/// Per-window accuracies for one result set, keyed by subject or fold.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSamples {
    pub by_key: BTreeMap<String, Vec<f64>>,
    pub n_windows: usize,
}

impl WindowSamples {
    fn column(&self, keys: &[&String], w: usize) -> Vec<f64> {
        keys.iter().map(|k| self.by_key[*k][w]).collect()
    }
}

/// One-sample tests against `chance`, one per window.
pub fn versus_chance(name: &str, s: &WindowSamples, chance: f64, q: f64) -> Vec<StatRow> {
    let keys: Vec<&String> = s.by_key.keys().collect();
    let cells = (0..s.n_windows)
        .map(|w| (w.to_string(), one_sample_ttest(&s.column(&keys, w), chance)))
        .collect();
    family(name, cells, q)
}

/// Paired tests `a − b` per window over the keys both sets share.
pub fn paired(name: &str, a: &WindowSamples, b: &WindowSamples, q: f64) -> CliResult<Vec<StatRow>> {
    if a.n_windows != b.n_windows {
        return Err(CliError::FoldMismatch(format!(
            "{name}: {} vs {} windows",
            a.n_windows, b.n_windows
        )));
    }
    let keys: Vec<&String> = a.by_key.keys().filter(|k| b.by_key.contains_key(*k)).collect();
    if keys.len() != a.by_key.len() || keys.len() != b.by_key.len() {
        return Err(CliError::FoldMismatch(format!(
            "{name}: samples are keyed differently"
        )));
    }
    let cells = (0..a.n_windows)
        .map(|w| (w.to_string(), paired_ttest(&a.column(&keys, w), &b.column(&keys, w))))
        .collect();
    Ok(family(name, cells, q))
}
