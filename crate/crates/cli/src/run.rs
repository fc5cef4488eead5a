//! The `run` command: cross-validate every hypothesis on every subject and
//! write accuracies, tests, plots, fold manifests and models.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use taskfx::crossval::{generate_folds, learning_curve, run_cv, CVResult, Fold};
use taskfx::data::{
    downsample_time, load_brain_recordings, load_design, load_feature_matrix, Dataset,
    FeatureMatrix, Role,
};
use taskfx::evaluation::{
    accuracy_grid_with, accuracy_timecourse_with, cosine_distance, fold_timecourses,
    mean_accuracy_with, PairFilter,
};
use taskfx::hypotheses::{HypothesisKind, HypothesisSpec};
use taskfx::model::{fit_model, Hyperparams};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, StageExt};
use crate::report::{num, paired, versus_chance, write_csv, StatRow, WindowSamples, STATS_HEADER};
use crate::svg;

pub const TIMECOURSE_HEADER: [&str; 6] = ["hypothesis", "filter", "sensor", "window", "accuracy", "n_pairs"];
pub const SUBJECT_HEADER: [&str; 6] = ["hypothesis", "subject", "filter", "window", "accuracy", "n_pairs"];
pub const FOLD_HEADER: [&str; 6] = ["hypothesis", "subject", "fold", "filter", "window", "accuracy"];

/// Inputs shared by every hypothesis.
pub struct Inputs {
    pub stimulus: FeatureMatrix,
    pub task: FeatureMatrix,
    pub aux: Option<FeatureMatrix>,
    pub datasets: Vec<Dataset>,
}

pub fn load_inputs(cfg: &RunConfig) -> CliResult<Inputs> {
    let d = &cfg.data;
    let design = load_design(&d.design).stage(format!("loading {}", d.design.display()))?;
    let stimulus = load_feature_matrix(&d.stimulus, Role::Stimulus)
        .stage(format!("loading {}", d.stimulus.display()))?;
    let task = load_feature_matrix(&d.task, Role::Task).stage(format!("loading {}", d.task.display()))?;
    let aux = match &d.aux_questions {
        Some(p) => Some(load_feature_matrix(p, Role::Auxiliary).stage(format!("loading {}", p.display()))?),
        None => None,
    };
    let mut datasets = Vec::with_capacity(d.subjects.len());
    for (k, dir) in d.subjects.iter().enumerate() {
        let stage = format!("loading subject {k} ({})", dir.display());
        let mut brain = load_brain_recordings(dir).stage(&stage)?;
        if let Some(n) = d.downsample {
            brain = downsample_time(&brain, n).stage(&stage)?;
        }
        let ds = Dataset::assemble(&design, stimulus.clone(), task.clone(), aux.clone(), &brain)
            .stage(&stage)?;
        if !ds.dropped_trials.is_empty() {
            warn!("subject {k}: {} design trials have no recordings", ds.dropped_trials.len());
        }
        datasets.push(ds);
    }
    let first = &datasets[0];
    for (k, ds) in datasets.iter().enumerate().skip(1) {
        if (ds.n_sensors, ds.n_windows) != (first.n_sensors, first.n_windows) {
            return Err(CliError::Io(format!(
                "subject {k} has {}x{} sensors x windows, subject 0 has {}x{}",
                ds.n_sensors, ds.n_windows, first.n_sensors, first.n_windows
            )));
        }
    }
    Ok(Inputs {
        stimulus,
        task,
        aux,
        datasets,
    })
}

fn spec_for(kind: HypothesisKind, inputs: &Inputs) -> CliResult<HypothesisSpec> {
    match kind {
        HypothesisKind::H41 => {
            let aux = inputs
                .aux
                .as_ref()
                .ok_or_else(|| CliError::Config("H41 needs data.aux_questions".into()))?;
            HypothesisSpec::precomputed(aux, &inputs.stimulus, &inputs.task).stage("aligning auxiliary questions")
        }
        k => HypothesisSpec::simple(k).stage("hypothesis"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub id: usize,
    pub held_words: Vec<String>,
    pub held_questions: Vec<String>,
    pub train: Vec<i64>,
    pub test: Vec<i64>,
    pub excluded: Vec<i64>,
}

fn manifest(ds: &Dataset, folds: &[Fold]) -> Vec<FoldManifest> {
    let ids = |v: &[usize]| v.iter().map(|&i| ds.design.trial(i).trial_id).collect();
    folds
        .iter()
        .map(|f| FoldManifest {
            id: f.id,
            held_words: f.held_words.clone(),
            held_questions: f.held_questions.clone(),
            train: ids(&f.train),
            test: ids(&f.test),
            excluded: ids(&f.excluded),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCounts {
    pub n_folds: usize,
    pub n_words: usize,
    pub n_questions: usize,
    /// Distinct per-fold sizes, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Trials touching a held word or question, counted once.
    pub held_out_union: Vec<usize>,
    /// `k_w·N_q + k_q·N_w`, which counts the tested trials twice.
    pub held_out_naive: usize,
}

fn distinct(v: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = v.collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn fold_counts(ds: &Dataset, folds: &[Fold], k_w: usize, k_q: usize) -> FoldCounts {
    let (nw, nq) = (ds.design.words().len(), ds.design.questions().len());
    FoldCounts {
        n_folds: folds.len(),
        n_words: nw,
        n_questions: nq,
        train: distinct(folds.iter().map(|f| f.train.len())),
        test: distinct(folds.iter().map(|f| f.test.len())),
        held_out_union: distinct(folds.iter().map(|f| f.held_out())),
        held_out_naive: k_w * nq + k_q * nw,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectHyper {
    pub subject: usize,
    pub per_fold: Vec<Hyperparams>,
    pub modal: Hyperparams,
    /// Folds whose learned-attention fit hit the epoch cap.
    pub unconverged_folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub hypotheses: Vec<HypothesisKind>,
    pub n_subjects: usize,
    pub n_sensors: usize,
    pub n_windows: usize,
    pub window_ms: u32,
    /// `subjects` when there are several, else `folds` of the one subject.
    pub stats_sample: String,
    pub fold_hash: String,
    pub fold_counts: FoldCounts,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub hyperparameters: BTreeMap<String, Vec<SubjectHyper>>,
    /// Mean over subjects of the pooled 2v2, per hypothesis and filter.
    pub mean_accuracy: BTreeMap<String, BTreeMap<String, f64>>,
    pub ranking_filter: PairFilter,
    pub ranking: Vec<HypothesisKind>,
    pub dropped_trials: Vec<Vec<i64>>,
    pub decisions: BTreeMap<String, String>,
    pub config: RunConfig,
}

/// Most frequent choice; ties go to the larger λ, then the larger λ_A.
pub fn modal(choices: &[Hyperparams]) -> Option<Hyperparams> {
    let mut counts: Vec<(Hyperparams, usize)> = Vec::new();
    for h in choices {
        match counts.iter_mut().find(|(c, _)| c == h) {
            Some((_, n)) => *n += 1,
            None => counts.push((*h, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|(a, n), (b, m)| {
            n.cmp(m)
                .then(a.lambda.total_cmp(&b.lambda))
                .then(a.lambda_a.unwrap_or(0.0).total_cmp(&b.lambda_a.unwrap_or(0.0)))
        })
        .map(|(h, _)| h)
}

fn decisions(cfg: &RunConfig, stats_sample: &str) -> BTreeMap<String, String> {
    let e = &cfg.evaluation;
    let s = &cfg.solver;
    [
        ("held_out_set", "union of trials touching a held word or question; held_out_naive double-counts the tested trials".to_string()),
        ("zscore", "population std, fitted on training trials only; constant columns map to 0".into()),
        ("target_normalization", "per sensor-window output".into()),
        ("evaluation_space", "each fold's train-z-scored target space".into()),
        ("cosine", "uncentered".into()),
        ("ties", format!("{:?}", e.ties).to_lowercase()),
        ("single_window_distance", "absolute difference".into()),
        ("window_group_remainder", "floor; trailing windows dropped".into()),
        ("grid_tie_break", "larger lambda".into()),
        ("validation_metric", serde_json::to_value(cfg.validation_metric).map(|v| v.to_string()).unwrap_or_default()),
        ("validation_undefined_distance", "scored as a tie".into()),
        ("optimizer", format!(
            "adam lr {} beta1 {} beta2 {} eps {} max_epochs {} tol {} over {} epochs",
            s.learning_rate, s.beta1, s.beta2, s.epsilon, s.max_epochs, s.convergence_tol, s.convergence_window
        )),
        ("tests", format!("two-sided t-tests, BH-FDR q {} per family", e.fdr_q)),
        ("stats_sample", stats_sample.to_string()),
        ("sensor_pooling", "each window's accuracy uses all sensors".into()),
        ("exported_model", "refit on all trials with the modal lambda across folds".into()),
        ("missing_trials", "design trials without recordings are dropped".into()),
        ("learning_curve", "hyperparameters searched once per fold on the full training set".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

struct HypothesisRun {
    kind: HypothesisKind,
    spec: HypothesisSpec,
    per_subject: Vec<CVResult>,
}

fn is_no_pairs(e: &taskfx::Error) -> bool {
    matches!(e.root(), taskfx::Error::NoPairs(_))
}

/// Runs the configured pipeline and writes every output under `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path, threads: usize) -> CliResult<Summary> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let inputs = load_inputs(cfg)?;
    let cv = cfg.cv_config();
    let ev = &cfg.evaluation;
    let n_subjects = inputs.datasets.len();
    let first = &inputs.datasets[0];
    let (n_sensors, n_windows) = (first.n_sensors, first.n_windows);

    let folds: Vec<Vec<Fold>> = inputs
        .datasets
        .iter()
        .map(|ds| generate_folds(&ds.design, cv.k_w, cv.k_q, cv.seed, cv.n_folds).stage("building folds"))
        .collect::<CliResult<_>>()?;
    let manifests: Vec<Vec<FoldManifest>> = inputs
        .datasets
        .iter()
        .zip(&folds)
        .map(|(ds, f)| manifest(ds, f))
        .collect();
    let folds_json = serde_json::to_string_pretty(&manifests).map_err(|e| CliError::Io(e.to_string()))?;
    write(&out.join("folds.json"), folds_json.as_bytes())?;
    let fold_hash = hex::encode(Sha256::digest(folds_json.as_bytes()));
    let counts = fold_counts(first, &folds[0], cv.k_w, cv.k_q);
    info!(
        "{} folds, {:?} training / {:?} test trials per fold",
        counts.n_folds, counts.train, counts.test
    );

    let mut runs = Vec::new();
    for &kind in &cfg.hypotheses {
        let spec = spec_for(kind, &inputs)?;
        let mut per_subject = Vec::new();
        for (k, ds) in inputs.datasets.iter().enumerate() {
            info!("fitting {kind} on subject {k}");
            let r = run_cv(&spec, ds, &folds[k], &cfg.grid, &cv).stage(format!("cross-validating {kind} on subject {k}"))?;
            per_subject.push(r);
        }
        runs.push(HypothesisRun {
            kind,
            spec,
            per_subject,
        });
    }

    // Timecourses per subject and filter.
    let mut tc_rows = Vec::new();
    let mut subject_rows = Vec::new();
    let mut fold_rows = Vec::new();
    let mut plot_values: BTreeMap<HypothesisKind, Vec<f64>> = BTreeMap::new();
    for run in &runs {
        for &filter in &ev.filters {
            let mut sum = vec![0.0; n_windows];
            let mut pairs = 0u64;
            let mut ok = true;
            for (k, r) in run.per_subject.iter().enumerate() {
                match accuracy_timecourse_with(r, filter, ev.ties) {
                    Ok(tc) => {
                        for (w, a) in tc.accuracy.iter().enumerate() {
                            sum[w] += a / n_subjects as f64;
                            subject_rows.push(vec![
                                run.kind.to_string(),
                                k.to_string(),
                                filter.to_string(),
                                w.to_string(),
                                num(*a),
                                tc.n_pairs.to_string(),
                            ]);
                        }
                        pairs += tc.n_pairs;
                    }
                    Err(e) if is_no_pairs(&e) => {
                        warn!("{} {filter}: no admissible pairs", run.kind);
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e).stage("timecourse"),
                }
                for (fold, acc) in fold_timecourses(r, filter, ev.ties).stage("timecourse")? {
                    for (w, a) in acc.iter().enumerate() {
                        fold_rows.push(vec![
                            run.kind.to_string(),
                            k.to_string(),
                            fold.to_string(),
                            filter.to_string(),
                            w.to_string(),
                            num(*a),
                        ]);
                    }
                }
            }
            if !ok {
                continue;
            }
            for (w, a) in sum.iter().enumerate() {
                tc_rows.push(vec![
                    run.kind.to_string(),
                    filter.to_string(),
                    "all".into(),
                    w.to_string(),
                    num(*a),
                    pairs.to_string(),
                ]);
            }
            if filter == ev.stats_filter {
                plot_values.insert(run.kind, sum);
            }
        }
    }
    write_csv(&out.join("accuracy_timecourse.csv"), &TIMECOURSE_HEADER, &tc_rows)?;
    write_csv(&out.join("subject_timecourse.csv"), &SUBJECT_HEADER, &subject_rows)?;
    write_csv(&out.join("fold_timecourse.csv"), &FOLD_HEADER, &fold_rows)?;

    // Sensor x window-group grids, averaged over subjects.
    let mut grid_rows = Vec::new();
    let mut panels = Vec::new();
    let labels = &first.sensor_labels;
    for run in &runs {
        for &filter in &ev.filters {
            let mut mean: Option<Vec<Vec<f64>>> = None;
            let mut pairs = 0u64;
            for r in &run.per_subject {
                let g = match accuracy_grid_with(r, filter, ev.window_group, ev.ties) {
                    Ok(g) => g,
                    Err(e) if is_no_pairs(&e) => {
                        mean = None;
                        break;
                    }
                    Err(e) => return Err(e).stage("accuracy grid"),
                };
                pairs += g.n_pairs;
                let m = mean.get_or_insert_with(|| vec![vec![0.0; g.values.ncols()]; g.values.nrows()]);
                for (l, row) in m.iter_mut().enumerate() {
                    for (c, v) in row.iter_mut().enumerate() {
                        *v += g.values[(l, c)] / n_subjects as f64;
                    }
                }
            }
            let Some(mean) = mean else { continue };
            for (l, row) in mean.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    grid_rows.push(vec![
                        run.kind.to_string(),
                        filter.to_string(),
                        labels[l].clone(),
                        (c * ev.window_group).to_string(),
                        num(*v),
                        pairs.to_string(),
                    ]);
                }
            }
            if filter == ev.stats_filter {
                panels.push(svg::Heatmap {
                    label: format!("{} ({filter})", run.kind),
                    row_labels: labels.clone(),
                    values: mean,
                });
            }
        }
    }
    write_csv(&out.join("accuracy_grid.csv"), &TIMECOURSE_HEADER, &grid_rows)?;
    write(&out.join("grid.svg"), svg::heatmaps(&panels, ev.chance).as_bytes())?;

    // Significance tests.
    let stats_sample = if n_subjects >= 2 { "subjects" } else { "folds" };
    let samples: Vec<(HypothesisKind, WindowSamples)> = runs
        .iter()
        .filter_map(|run| match window_samples(run, ev.stats_filter, ev.ties) {
            Ok(s) => Some(Ok((run.kind, s))),
            Err(e) if is_no_pairs(&e) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<taskfx::Result<_>>()
        .stage("window samples")?;
    let mut stats: Vec<StatRow> = Vec::new();
    let mut marked: BTreeMap<HypothesisKind, Vec<bool>> = BTreeMap::new();
    for (kind, s) in &samples {
        let rows = versus_chance(&format!("{kind}_vs_chance"), s, ev.chance, ev.fdr_q);
        marked.insert(*kind, rows.iter().map(|r| r.rejected).collect());
        stats.extend(rows);
    }
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let (a, b) = (&samples[i], &samples[j]);
            stats.extend(paired(&format!("{}_vs_{}", a.0, b.0), &a.1, &b.1, ev.fdr_q)?);
        }
    }
    let stat_records: Vec<Vec<String>> = stats.iter().map(StatRow::record).collect();
    write_csv(&out.join("stats.csv"), &STATS_HEADER, &stat_records)?;

    let series: Vec<svg::Series> = runs
        .iter()
        .filter_map(|r| {
            let values = plot_values.get(&r.kind)?.clone();
            let marked = marked.get(&r.kind).cloned().unwrap_or_else(|| vec![false; values.len()]);
            Some(svg::Series {
                label: r.kind.to_string(),
                values,
                marked,
            })
        })
        .collect();
    write(
        &out.join("timecourse.svg"),
        svg::timecourse(&series, first.window_ms, ev.chance).as_bytes(),
    )?;

    // Per-trial summary.
    let mut result_rows = Vec::new();
    for run in &runs {
        for (k, r) in run.per_subject.iter().enumerate() {
            for f in &r.folds {
                for (i, t) in f.trials.iter().enumerate() {
                    let p: Vec<f64> = f.predicted.row(i).iter().copied().collect();
                    let o: Vec<f64> = f.observed.row(i).iter().copied().collect();
                    let mse = p.iter().zip(&o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
                    let cos = cosine_distance(&p, &o).map(num).unwrap_or_else(|_| "NaN".into());
                    result_rows.push(vec![
                        run.kind.to_string(),
                        k.to_string(),
                        f.fold_id.to_string(),
                        t.trial_id.to_string(),
                        t.word_id.clone(),
                        t.question_id.clone(),
                        num(f.hyper.lambda),
                        f.hyper.lambda_a.map(num).unwrap_or_default(),
                        f.converged.to_string(),
                        cos,
                        num(mse),
                    ]);
                }
            }
        }
    }
    write_csv(
        &out.join("results.csv"),
        &[
            "hypothesis", "subject", "fold", "trial_id", "word_id", "question_id", "lambda", "lambda_a",
            "converged", "cosine_distance", "mse",
        ],
        &result_rows,
    )?;

    // Hyperparameters, exported models, accuracies.
    let mut hyper = BTreeMap::new();
    let mut mean_acc: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for run in &runs {
        let mut subjects = Vec::new();
        for (k, r) in run.per_subject.iter().enumerate() {
            let per_fold: Vec<Hyperparams> = r.folds.iter().map(|f| f.hyper).collect();
            let m = modal(&per_fold).ok_or_else(|| CliError::Config("no folds to fit".into()))?;
            let unconverged = r.folds.iter().filter(|f| !f.converged).map(|f| f.fold_id).collect();
            if cfg.save_models {
                let ds = &inputs.datasets[k];
                let all: Vec<usize> = (0..ds.design.n_trials()).collect();
                let model = fit_model(&run.spec, ds, &all, m, &cfg.solver).stage(format!("fitting final {} model", run.kind))?;
                let dir = out.join("models").join(run.kind.as_str()).join(format!("subject_{k}"));
                model.save(&dir).stage("saving model")?;
            }
            subjects.push(SubjectHyper {
                subject: k,
                per_fold,
                modal: m,
                unconverged_folds: unconverged,
            });
        }
        hyper.insert(run.kind.to_string(), subjects);
        let entry = mean_acc.entry(run.kind.to_string()).or_default();
        for &filter in &ev.filters {
            let mut total = 0.0;
            let mut ok = true;
            for r in &run.per_subject {
                match mean_accuracy_with(r, filter, ev.ties) {
                    Ok(m) => total += m.accuracy / n_subjects as f64,
                    Err(e) if is_no_pairs(&e) => ok = false,
                    Err(e) => return Err(e).stage("mean accuracy"),
                }
            }
            if ok {
                entry.insert(filter.to_string(), total);
            }
        }
    }
    let mut ranked: Vec<(HypothesisKind, f64)> = Vec::new();
    for run in &runs {
        let mut total = 0.0;
        for r in &run.per_subject {
            total += mean_accuracy_with(r, ev.ranking_filter, ev.ties).stage("ranking")?.accuracy;
        }
        ranked.push((run.kind, total / n_subjects as f64));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    if !cfg.learning_curve.is_empty() {
        let mut rows = Vec::new();
        for run in &runs {
            for (k, ds) in inputs.datasets.iter().enumerate() {
                info!("learning curve for {} on subject {k}", run.kind);
                let points = learning_curve(&run.spec, ds, &cfg.learning_curve, &folds[k], &cfg.grid, &cv)
                    .stage(format!("learning curve for {}", run.kind))?;
                for p in points {
                    rows.push(vec![
                        run.kind.to_string(),
                        k.to_string(),
                        p.size.to_string(),
                        num(p.accuracy),
                        p.n_pairs.to_string(),
                    ]);
                }
            }
        }
        write_csv(
            &out.join("learning_curve.csv"),
            &["hypothesis", "subject", "size", "accuracy", "n_pairs"],
            &rows,
        )?;
    }

    let summary = Summary {
        hypotheses: cfg.hypotheses.clone(),
        n_subjects,
        n_sensors,
        n_windows,
        window_ms: first.window_ms,
        stats_sample: stats_sample.into(),
        fold_hash,
        fold_counts: counts,
        seeds: [("folds".to_string(), cv.seed), ("solver".to_string(), cfg.solver.seed)].into(),
        threads,
        hyperparameters: hyper,
        mean_accuracy: mean_acc,
        ranking_filter: ev.ranking_filter,
        ranking: ranked.into_iter().map(|(k, _)| k).collect(),
        dropped_trials: inputs.datasets.iter().map(|d| d.dropped_trials.clone()).collect(),
        decisions: decisions(cfg, stats_sample),
        config: cfg.clone(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    write(&out.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}

/// Test samples for one hypothesis: per-subject timecourses with several
/// subjects, per-fold timecourses of the single subject otherwise.
fn window_samples(
    run: &HypothesisRun,
    filter: PairFilter,
    ties: taskfx::evaluation::TiePolicy,
) -> taskfx::Result<WindowSamples> {
    let n_windows = run.per_subject[0].n_windows;
    let mut by_key = BTreeMap::new();
    if run.per_subject.len() >= 2 {
        for (k, r) in run.per_subject.iter().enumerate() {
            by_key.insert(key(k), accuracy_timecourse_with(r, filter, ties)?.accuracy);
        }
    } else {
        for (fold, acc) in fold_timecourses(&run.per_subject[0], filter, ties)? {
            by_key.insert(key(fold), acc);
        }
        if by_key.is_empty() {
            return Err(taskfx::Error::NoPairs(filter.to_string()));
        }
    }
    Ok(WindowSamples { by_key, n_windows })
}

/// Zero-padded so keys sort numerically.
pub fn key(i: usize) -> String {
    format!("{i:06}")
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Output directory: the flag wins over the config.
pub fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output`".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(lambda: f64) -> Hyperparams {
        Hyperparams {
            lambda,
            lambda_a: None,
        }
    }

    #[test]
    fn modal_prefers_count_then_larger_lambda() {
        assert_eq!(modal(&[h(1.0), h(10.0), h(1.0)]), Some(h(1.0)));
        assert_eq!(modal(&[h(1.0), h(10.0)]), Some(h(10.0)));
        assert_eq!(modal(&[]), None);
    }

    #[test]
    fn keys_sort_numerically() {
        assert!(key(2) < key(10));
    }
}
