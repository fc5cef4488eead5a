//! Synthetic datasets generated by each hypothesis's forward model, for
//! model-recovery checks.
//!
//! Draw order from the seeded stream is fixed whatever the kind: stimulus
//! features, task features, auxiliary perturbations, `W_s`, `W_t`, `A`. Noise for
//! subject `k` comes from its own stream, so truths can be edited without
//! shifting the noise.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::{generate_folds, run_cv, CvConfig, HyperGrid};
use crate::data::{BrainRecordings, Dataset, ExperimentDesign, FeatureMatrix, Role};
use crate::error::{Error, Result};
use crate::evaluation::{mean_accuracy, PairFilter};
use crate::hypotheses::{assemble_inputs, stacked_rows, HypothesisKind, HypothesisSpec};
use crate::solvers::{attention_predict_rows, ridge_predict, AttentionModel, RidgeModel};

const FEATURE_CENTER: f64 = 3.0;
const WINDOW_MS: u32 = 25;
const NOISE_STREAM: u64 = 1000;
const AUX_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerativeConfig {
    pub kind: HypothesisKind,
    pub n_words: usize,
    pub n_questions: usize,
    pub f_s: usize,
    pub f_t: usize,
    /// Sensors.
    pub l: usize,
    pub t_windows: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Standard deviation of the noise-free response per output, roughly.
    pub signal_scale: f64,
    /// Mean of the drawn features.
    pub feature_center: f64,
    /// Round features to integers in 1..=5, like survey answers.
    pub ordinal: bool,
    /// Independent noise draws over the same truth.
    pub n_subjects: usize,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        Self {
            kind: HypothesisKind::H1,
            n_words: 20,
            n_questions: 10,
            f_s: 30,
            f_t: 15,
            l: 10,
            t_windows: 8,
            noise_sigma: 1.0,
            seed: 0,
            signal_scale: 1.0,
            feature_center: FEATURE_CENTER,
            ordinal: false,
            n_subjects: 1,
        }
    }
}

impl GenerativeConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_words", self.n_words),
            ("n_questions", self.n_questions),
            ("f_s", self.f_s),
            ("f_t", self.f_t),
            ("l", self.l),
            ("t_windows", self.t_windows),
            ("n_subjects", self.n_subjects),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        if !(self.signal_scale.is_finite() && self.feature_center.is_finite()) {
            return Err(Error::Config("signal_scale and feature_center must be finite".into()));
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        self.l * self.t_windows
    }
}

/// Generative parameters. Every block is drawn; the kind decides which are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub kind: HypothesisKind,
    /// F_s × outputs.
    pub w_s: DMatrix<f64>,
    /// F_t × outputs.
    pub w_t: DMatrix<f64>,
    /// F_t × F_s learned-attention matrix.
    pub attention: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: GenerativeConfig,
    pub design: ExperimentDesign,
    pub stimulus: FeatureMatrix,
    pub task: FeatureMatrix,
    /// One row per stimulus feature, one column per task feature.
    pub aux_questions: FeatureMatrix,
    pub truth: Truth,
    /// Noise-free responses, trials × outputs.
    pub clean: DMatrix<f64>,
    pub subjects: Vec<BrainRecordings>,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // Row-major draw order.
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            m[(r, c)] = scale * z;
        }
    }
    m
}

fn features(rng: &mut ChaCha8Rng, c: &GenerativeConfig, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = gaussian(rng, rows, cols, 1.0).add_scalar(c.feature_center);
    if c.ordinal {
        m.apply(|v| *v = v.round().clamp(1.0, 5.0));
    }
    m
}

/// Noise-free responses of `truth` on raw features, trials × outputs.
pub fn forward(
    truth: &Truth,
    stimulus: &FeatureMatrix,
    task: &FeatureMatrix,
    aux_questions: &FeatureMatrix,
    design: &ExperimentDesign,
) -> Result<DMatrix<f64>> {
    let trials: Vec<usize> = (0..design.n_trials()).collect();
    match truth.kind {
        HypothesisKind::H1 | HypothesisKind::H2 | HypothesisKind::H3 | HypothesisKind::H41 => {
            let spec = match truth.kind {
                HypothesisKind::H41 => HypothesisSpec::precomputed(aux_questions, stimulus, task)?,
                k => HypothesisSpec::simple(k)?,
            };
            let x = assemble_inputs(&spec, stimulus, task, design, &trials)?;
            let weights = match truth.kind {
                HypothesisKind::H2 => truth.w_t.clone(),
                HypothesisKind::H3 => {
                    let (fs, ft) = (truth.w_s.nrows(), truth.w_t.nrows());
                    DMatrix::from_fn(fs + ft, truth.w_s.ncols(), |r, c| {
                        if r < fs {
                            truth.w_s[(r, c)]
                        } else {
                            truth.w_t[(r - fs, c)]
                        }
                    })
                }
                _ => truth.w_s.clone(),
            };
            ridge_predict(&RidgeModel { weights, lambda: 0.0 }, &x.values)
        }
        HypothesisKind::H42 => {
            let xs = stacked_rows(stimulus, design, &trials, true)?;
            let xt = stacked_rows(task, design, &trials, false)?;
            let model = AttentionModel {
                attention: truth.attention.clone(),
                weights: truth.w_s.clone(),
                lambda: 0.0,
                lambda_a: 0.0,
                converged: true,
                epochs: 0,
                checkpoints: Vec::new(),
            };
            attention_predict_rows(&model, &xt, &xs)
        }
    }
}

/// Generates a dataset from `config`.
pub fn generate_dataset(config: &GenerativeConfig) -> Result<SynthDataset> {
    generate_dataset_with(config, |_| {})
}

/// Like [`generate_dataset`], with a hook that may edit the drawn truth before
/// responses are computed.
pub fn generate_dataset_with(
    config: &GenerativeConfig,
    edit: impl FnOnce(&mut Truth),
) -> Result<SynthDataset> {
    config.validate()?;
    let c = config;
    let m = c.n_outputs();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let xs = features(&mut rng, c, c.n_words, c.f_s);
    let xt = features(&mut rng, c, c.n_questions, c.f_t);
    // Auxiliary question j is a perturbed copy of task question j mod N_q.
    let mut aux = gaussian(&mut rng, c.f_s, c.f_t, AUX_SPREAD);
    for j in 0..c.f_s {
        let mut row = aux.row_mut(j);
        row += xt.row(j % c.n_questions);
    }
    if c.ordinal {
        aux.apply(|v| *v = v.round().clamp(1.0, 5.0));
    }
    // Weight scales keep the response spread near `signal_scale` per output:
    // precomputed attention weights sum to 1 and sigmoid gates sit near 1/2.
    let s_scale = c.signal_scale / (c.f_s as f64).sqrt()
        * match c.kind {
            HypothesisKind::H41 => c.f_s as f64,
            HypothesisKind::H42 => 2.0,
            _ => 1.0,
        };
    let t_scale = c.signal_scale / (c.f_t as f64).sqrt();
    let w_s = gaussian(&mut rng, c.f_s, m, s_scale);
    let w_t = gaussian(&mut rng, c.f_t, m, t_scale);
    let attention = gaussian(&mut rng, c.f_t, c.f_s, 1.0 / (c.f_t as f64).sqrt());
    let mut truth = Truth {
        kind: c.kind,
        w_s,
        w_t,
        attention,
    };
    edit(&mut truth);

    let words = names("w", c.n_words);
    let questions = names("q", c.n_questions);
    let s_cols = names("s", c.f_s);
    let t_cols = names("t", c.f_t);
    let design = ExperimentDesign::full_grid(&words, &questions)?;
    let stimulus = FeatureMatrix::new(words, s_cols.clone(), xs, Role::Stimulus)?;
    let task = FeatureMatrix::new(questions, t_cols.clone(), xt, Role::Task)?;
    let aux_questions = FeatureMatrix::new(s_cols, t_cols, aux, Role::Auxiliary)?;

    let clean = forward(&truth, &stimulus, &task, &aux_questions, &design)?;
    let trial_ids: Vec<i64> = design.trials().iter().map(|t| t.trial_id).collect();
    let sensors = names("sensor", c.l);
    let subjects = (0..c.n_subjects)
        .map(|k| {
            let mut nrng = ChaCha8Rng::seed_from_u64(c.seed);
            nrng.set_stream(NOISE_STREAM + k as u64);
            let noise = gaussian(&mut nrng, clean.nrows(), m, c.noise_sigma);
            BrainRecordings::from_matrix(
                &(&clean + noise),
                c.l,
                c.t_windows,
                WINDOW_MS,
                sensors.clone(),
                trial_ids.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        config: config.clone(),
        design,
        stimulus,
        task,
        aux_questions,
        truth,
        clean,
        subjects,
    })
}

impl SynthDataset {
    /// Subject `k` as a pipeline dataset.
    pub fn dataset(&self, subject: usize) -> Result<Dataset> {
        let brain = self
            .subjects
            .get(subject)
            .ok_or_else(|| Error::Range(format!("subject {subject} of {}", self.subjects.len())))?;
        Dataset::assemble(
            &self.design,
            self.stimulus.clone(),
            self.task.clone(),
            Some(self.aux_questions.clone()),
            brain,
        )
    }

    /// Pipeline spec for `kind` on this dataset.
    pub fn spec(&self, kind: HypothesisKind) -> Result<HypothesisSpec> {
        match kind {
            HypothesisKind::H41 => {
                HypothesisSpec::precomputed(&self.aux_questions, &self.stimulus, &self.task)
            }
            k => HypothesisSpec::simple(k),
        }
    }

    /// Writes features, design, aux bank and one directory per subject
    /// (`meta.json`, `data.f64le`, `truth.json`) under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.stimulus.save_csv(&dir.join("stimulus_features.csv"))?;
        self.task.save_csv(&dir.join("task_features.csv"))?;
        self.aux_questions.save_csv(&dir.join("aux_questions.csv"))?;
        self.design.save_csv(&dir.join("design.csv"))?;
        let truth = serde_json::to_string_pretty(&TruthFile {
            config: &self.config,
            truth: &self.truth,
        })
        .map_err(|e| Error::Metadata(e.to_string()))?;
        for (k, brain) in self.subjects.iter().enumerate() {
            let sub = dir.join("subjects").join(format!("subject_{k}"));
            brain.save(&sub)?;
            let path = sub.join("truth.json");
            std::fs::write(&path, &truth).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TruthFile<'a> {
    config: &'a GenerativeConfig,
    truth: &'a Truth,
}

/// Mean 2v2 per hypothesis, averaged over subjects, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// In the order requested.
    pub accuracies: Vec<(HypothesisKind, f64)>,
    pub ranking: Vec<HypothesisKind>,
}

impl RecoveryReport {
    pub fn accuracy(&self, kind: HypothesisKind) -> Option<f64> {
        self.accuracies.iter().find(|(k, _)| *k == kind).map(|(_, a)| *a)
    }
}

/// Runs cross-validation and pooled 2v2 over `filter` pairs for each
/// hypothesis on every subject.
pub fn model_recovery(
    data: &SynthDataset,
    kinds: &[HypothesisKind],
    grid: &HyperGrid,
    config: &CvConfig,
    filter: PairFilter,
) -> Result<RecoveryReport> {
    let folds = generate_folds(&data.design, config.k_w, config.k_q, config.seed, config.n_folds)?;
    let datasets = (0..data.subjects.len())
        .map(|k| data.dataset(k).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let accuracies = kinds
        .par_iter()
        .map(|&kind| {
            let spec = data.spec(kind)?;
            let mut total = 0.0;
            for ds in &datasets {
                let cv = run_cv(&spec, ds, &folds, grid, config)?;
                total += mean_accuracy(&cv, filter)?.accuracy;
            }
            Ok((kind, total / datasets.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranking: Vec<(HypothesisKind, f64)> = accuracies.clone();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RecoveryReport {
        accuracies,
        ranking: ranking.into_iter().map(|(k, _)| k).collect(),
    })
}
