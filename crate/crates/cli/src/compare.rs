//! The `compare` command: paired per-window tests between result sets that
//! share a fold manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use taskfx::evaluation::PairFilter;
use taskfx::hypotheses::HypothesisKind;

use crate::config::read_json;
use crate::error::{CliError, CliResult};
use crate::report::{paired, read_csv, write_csv, StatRow, WindowSamples, STATS_HEADER};
use crate::run::{key, Summary, FOLD_HEADER, SUBJECT_HEADER};
use crate::svg;

/// One hypothesis from one results directory.
#[derive(Debug, Clone)]
pub struct ResultSet {
    pub label: String,
    pub kind: HypothesisKind,
    pub samples: WindowSamples,
    fold_hash: String,
}

fn parse<T: std::str::FromStr>(path: &Path, s: &str) -> CliResult<T> {
    s.parse()
        .map_err(|_| CliError::Io(format!("{}: bad value `{s}`", path.display())))
}

/// Loads every hypothesis of a results directory, keyed the same way the run
/// tested them (subjects, or folds of a single subject).
pub fn load_result_sets(dir: &Path, filter: PairFilter) -> CliResult<Vec<ResultSet>> {
    let summary: Summary = read_json(&dir.join("summary.json"))?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let mut sets: BTreeMap<HypothesisKind, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let f = filter.to_string();
    if summary.stats_sample == "subjects" {
        let path = dir.join("subject_timecourse.csv");
        for r in read_csv(&path, &SUBJECT_HEADER)? {
            if r[2] != f {
                continue;
            }
            let kind: HypothesisKind = parse(&path, &r[0])?;
            let subject: usize = parse(&path, &r[1])?;
            let w: usize = parse(&path, &r[3])?;
            push(sets.entry(kind).or_default().entry(key(subject)).or_default(), w, parse(&path, &r[4])?);
        }
    } else {
        let path = dir.join("fold_timecourse.csv");
        for r in read_csv(&path, &FOLD_HEADER)? {
            if r[3] != f || r[1] != "0" {
                continue;
            }
            let kind: HypothesisKind = parse(&path, &r[0])?;
            let fold: usize = parse(&path, &r[2])?;
            let w: usize = parse(&path, &r[4])?;
            push(sets.entry(kind).or_default().entry(key(fold)).or_default(), w, parse(&path, &r[5])?);
        }
    }
    let mut out = Vec::new();
    for kind in &summary.hypotheses {
        let Some(by_key) = sets.remove(kind) else {
            continue;
        };
        if by_key.values().any(|v| v.len() != summary.n_windows || v.iter().any(|x| x.is_nan())) {
            return Err(CliError::Io(format!("{}: incomplete timecourse for {kind}", dir.display())));
        }
        out.push(ResultSet {
            label: format!("{name}/{kind}"),
            kind: *kind,
            samples: WindowSamples {
                by_key,
                n_windows: summary.n_windows,
            },
            fold_hash: summary.fold_hash.clone(),
        });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no timecourses for filter {filter}",
            dir.display()
        )));
    }
    Ok(out)
}

fn push(v: &mut Vec<f64>, w: usize, x: f64) {
    if v.len() <= w {
        v.resize(w + 1, f64::NAN);
    }
    v[w] = x;
}

pub struct Comparison {
    pub labels: Vec<String>,
    pub rows: Vec<StatRow>,
    /// `wins[i][j]`: windows where set `i` is significantly above set `j`.
    pub wins: Vec<Vec<usize>>,
}

/// Paired tests for every pair of result sets, BH within each pair.
pub fn compare_sets(sets: &[ResultSet], q: f64) -> CliResult<Comparison> {
    if sets.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least 2 result sets, got {}",
            sets.len()
        )));
    }
    for s in &sets[1..] {
        if s.fold_hash != sets[0].fold_hash {
            return Err(CliError::FoldMismatch(format!(
                "{} and {} were run on different folds",
                sets[0].label, s.label
            )));
        }
    }
    let mut labels: Vec<String> = Vec::new();
    for s in sets {
        let mut l = s.label.clone();
        let mut n = 2;
        while labels.contains(&l) {
            l = format!("{}#{n}", s.label);
            n += 1;
        }
        labels.push(l);
    }
    let n = sets.len();
    let mut wins = vec![vec![0; n]; n];
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let fam = paired(&format!("{}_vs_{}", labels[i], labels[j]), &sets[i].samples, &sets[j].samples, q)?;
            for r in &fam {
                if r.rejected {
                    if r.statistic > 0.0 {
                        wins[i][j] += 1;
                    } else {
                        wins[j][i] += 1;
                    }
                }
            }
            rows.extend(fam);
        }
    }
    Ok(Comparison { labels, rows, wins })
}

pub fn cmd_compare(dirs: &[PathBuf], filter: PairFilter, q: f64, out: &Path) -> CliResult<Comparison> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CliError::Config("q must lie in (0, 1)".into()));
    }
    let mut sets = Vec::new();
    for d in dirs {
        sets.extend(load_result_sets(d, filter)?);
    }
    let cmp = compare_sets(&sets, q)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let records: Vec<Vec<String>> = cmp.rows.iter().map(StatRow::record).collect();
    write_csv(&out.join("comparison.csv"), &STATS_HEADER, &records)?;
    let path = out.join("comparison.svg");
    fs::write(&path, svg::significance_matrix(&cmp.labels, &cmp.wins)).map_err(|e| CliError::io(&path, e))?;
    Ok(cmp)
}
