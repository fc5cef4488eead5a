//! Zero-shot folds, nested hyperparameter search, cross-validated prediction
//! runs and training-size learning curves.
//!
//! A fold holds out `k_w` words and `k_q` questions. Every trial touching a
//! held entity leaves the training set; only trials whose word and question
//! are both held out are tested.

use std::collections::{BTreeSet, HashSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ExperimentDesign, ZScoreStats};
use crate::error::{Error, Result};
use crate::evaluation::block_two_vs_two;
use crate::hypotheses::{HypothesisKind, HypothesisSpec};
use crate::model::{fit_model, normalize_train, predict_params, Hyperparams, Params};
use crate::solvers::SolverConfig;

/// One zero-shot split. Trial lists are positions in the design, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub held_words: Vec<String>,
    pub held_questions: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Held out because of one held entity, but not tested.
    pub excluded: Vec<usize>,
}

impl Fold {
    fn split(
        id: usize,
        design: &ExperimentDesign,
        trials: &[usize],
        held_words: &HashSet<usize>,
        held_questions: &HashSet<usize>,
    ) -> Self {
        let (mut train, mut test, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
        for &i in trials {
            let (w, q) = design.coords(i);
            match (held_words.contains(&w), held_questions.contains(&q)) {
                (true, true) => test.push(i),
                (false, false) => train.push(i),
                _ => excluded.push(i),
            }
        }
        let mut hw: Vec<usize> = held_words.iter().copied().collect();
        let mut hq: Vec<usize> = held_questions.iter().copied().collect();
        hw.sort_unstable();
        hq.sort_unstable();
        Self {
            id,
            held_words: hw.iter().map(|&w| design.words()[w].clone()).collect(),
            held_questions: hq.iter().map(|&q| design.questions()[q].clone()).collect(),
            train,
            test,
            excluded,
        }
    }

    /// Trials held out of training (tested or not).
    pub fn held_out(&self) -> usize {
        self.test.len() + self.excluded.len()
    }
}

fn entity_groups(entities: &[usize], k: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    if k == 0 {
        out.resize(count, Vec::new());
        return out;
    }
    while out.len() < count {
        let mut perm = entities.to_vec();
        perm.shuffle(rng);
        let n_groups = perm.len().div_ceil(k);
        for g in 0..n_groups {
            if out.len() == count {
                break;
            }
            // The last group wraps to the start of the permutation.
            out.push((0..k).map(|j| perm[(g * k + j) % perm.len()]).collect());
        }
    }
    out
}

/// Default fold count: enough folds for every word and every question to be
/// held out at least once.
pub fn default_fold_count(n_words: usize, n_questions: usize, k_w: usize, k_q: usize) -> usize {
    let w = if k_w == 0 { 0 } else { n_words.div_ceil(k_w) };
    let q = if k_q == 0 { 0 } else { n_questions.div_ceil(k_q) };
    w.max(q).max(1)
}

fn zero_shot_folds(
    design: &ExperimentDesign,
    trials: &[usize],
    k_w: usize,
    k_q: usize,
    seed: u64,
    n_folds: Option<usize>,
) -> Result<Vec<Fold>> {
    let words: BTreeSet<usize> = trials.iter().map(|&i| design.coords(i).0).collect();
    let questions: BTreeSet<usize> = trials.iter().map(|&i| design.coords(i).1).collect();
    let words: Vec<usize> = words.into_iter().collect();
    let questions: Vec<usize> = questions.into_iter().collect();
    if k_w >= words.len().max(1) && k_w > 0 || k_q >= questions.len().max(1) && k_q > 0 {
        return Err(Error::Range(format!(
            "cannot hold out {k_w} of {} words and {k_q} of {} questions",
            words.len(),
            questions.len()
        )));
    }
    let count = match n_folds {
        Some(0) => return Err(Error::Range("n_folds must be >= 1".into())),
        Some(n) => n,
        None => default_fold_count(words.len(), questions.len(), k_w, k_q),
    };
    let mut rng_w = ChaCha8Rng::seed_from_u64(seed);
    rng_w.set_stream(1);
    let mut rng_q = ChaCha8Rng::seed_from_u64(seed);
    rng_q.set_stream(2);
    let wg = entity_groups(&words, k_w, count, &mut rng_w);
    let qg = entity_groups(&questions, k_q, count, &mut rng_q);
    Ok(wg
        .into_iter()
        .zip(qg)
        .enumerate()
        .map(|(id, (w, q))| {
            Fold::split(
                id,
                design,
                trials,
                &w.into_iter().collect(),
                &q.into_iter().collect(),
            )
        })
        .collect())
}

/// Outer zero-shot folds over every trial of the design. The default schedule
/// pairs disjoint word groups with disjoint question groups, cycling the
/// shorter list, so each entity is tested at least once.
pub fn generate_folds(
    design: &ExperimentDesign,
    k_w: usize,
    k_q: usize,
    seed: u64,
    n_folds: Option<usize>,
) -> Result<Vec<Fold>> {
    let all: Vec<usize> = (0..design.n_trials()).collect();
    zero_shot_folds(design, &all, k_w, k_q, seed, n_folds)
}

/// Inner folds drawn from an outer fold's training trials with the same scheme.
pub fn nested_split(
    design: &ExperimentDesign,
    fold: &Fold,
    k_w: usize,
    k_q: usize,
    seed: u64,
    n_folds: Option<usize>,
) -> Result<Vec<Fold>> {
    zero_shot_folds(design, &fold.train, k_w, k_q, seed, n_folds)
}

/// Candidate regularization values, strictly positive and ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub lambdas: Vec<f64>,
    /// Attention regularization, learned attention only.
    pub lambda_as: Vec<f64>,
}

impl Default for HyperGrid {
    /// 10^-5 .. 10^7 for both.
    fn default() -> Self {
        let decades: Vec<f64> = (-5..=7).map(|e| 10f64.powi(e)).collect();
        Self {
            lambdas: decades.clone(),
            lambda_as: decades,
        }
    }
}

impl HyperGrid {
    pub fn single(lambda: f64, lambda_a: f64) -> Self {
        Self {
            lambdas: vec![lambda],
            lambda_as: vec![lambda_a],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambdas", &self.lambdas), ("lambda_as", &self.lambda_as)] {
            if v.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Config(format!("{name} must be finite and > 0")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("{name} must be strictly ascending")));
            }
        }
        Ok(())
    }

    /// Candidates for a hypothesis, ascending in `(lambda, lambda_a)`.
    pub fn candidates(&self, kind: HypothesisKind) -> Vec<Hyperparams> {
        if kind.is_ridge() {
            self.lambdas
                .iter()
                .map(|&lambda| Hyperparams { lambda, lambda_a: None })
                .collect()
        } else {
            self.lambdas
                .iter()
                .flat_map(|&lambda| {
                    self.lambda_as.iter().map(move |&a| Hyperparams {
                        lambda,
                        lambda_a: Some(a),
                    })
                })
                .collect()
        }
    }
}

/// Score maximized on validation folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    /// Mean 2v2 accuracy over all validation pairs.
    #[default]
    TwoVsTwo,
    /// Negative mean cosine distance between predicted and observed rows.
    Cosine,
    /// Negative mean Euclidean distance.
    Euclidean,
    /// Mean fraction of variance explained per output.
    VarianceExplained,
}

impl ValidationMetric {
    fn min_rows(self) -> usize {
        match self {
            ValidationMetric::TwoVsTwo => 2,
            _ => 1,
        }
    }

    fn score(self, predicted: &DMatrix<f64>, observed: &DMatrix<f64>) -> f64 {
        let n = predicted.nrows() as f64;
        match self {
            ValidationMetric::TwoVsTwo => {
                let (half, pairs) = block_two_vs_two(predicted, observed);
                half as f64 / (2 * pairs) as f64
            }
            ValidationMetric::Cosine => {
                let total: f64 = (0..predicted.nrows())
                    .map(|r| {
                        let p = predicted.row(r);
                        let o = observed.row(r);
                        let denom = p.norm() * o.norm();
                        if denom == 0.0 {
                            1.0
                        } else {
                            1.0 - p.dot(&o) / denom
                        }
                    })
                    .sum();
                -total / n
            }
            ValidationMetric::Euclidean => {
                let total: f64 = (0..predicted.nrows())
                    .map(|r| (predicted.row(r) - observed.row(r)).norm())
                    .sum();
                -total / n
            }
            ValidationMetric::VarianceExplained => {
                let mut total = 0.0;
                for c in 0..observed.ncols() {
                    let o = observed.column(c);
                    let mean = o.mean();
                    let ss_tot: f64 = o.iter().map(|v| (v - mean).powi(2)).sum();
                    let ss_res: f64 = (predicted.column(c) - o).norm_squared();
                    total += if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
                }
                total / observed.ncols() as f64
            }
        }
    }
}

/// Fold scheme and search settings for a cross-validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k_w: usize,
    pub k_q: usize,
    pub n_folds: Option<usize>,
    /// Cap on inner folds per outer fold (default: full schedule).
    pub n_inner_folds: Option<usize>,
    pub seed: u64,
    pub metric: ValidationMetric,
    pub solver: SolverConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k_w: 2,
            k_q: 2,
            n_folds: None,
            n_inner_folds: None,
            seed: 0,
            metric: ValidationMetric::TwoVsTwo,
            solver: SolverConfig::default(),
        }
    }
}

impl CvConfig {
    fn inner_seed(&self, fold: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(fold as u64 + 1)
    }
}

/// Outcome of the validation search for one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub chosen: Hyperparams,
    /// Mean validation score per candidate; `None` if it diverged or no
    /// inner fold could be scored. Empty when the grid has one candidate.
    pub scores: Vec<(Hyperparams, Option<f64>)>,
}

/// Picks the candidate with the best mean validation score over `inner`
/// folds; ties go to the larger λ (then larger λ_A).
pub fn grid_search(
    spec: &HypothesisSpec,
    ds: &Dataset,
    inner: &[Fold],
    grid: &HyperGrid,
    config: &CvConfig,
) -> Result<SearchOutcome> {
    grid.validate()?;
    let candidates = grid.candidates(spec.kind());
    if candidates.len() == 1 {
        return Ok(SearchOutcome {
            chosen: candidates[0],
            scores: vec![],
        });
    }
    let metric = config.metric;
    let usable: Vec<&Fold> = inner
        .iter()
        .filter(|f| f.test.len() >= metric.min_rows() && !f.train.is_empty())
        .collect();
    // per fold: score per candidate (None = diverged)
    let per_fold: Vec<Vec<Option<f64>>> = usable
        .par_iter()
        .map(|fold| -> Result<Vec<Option<f64>>> {
            let norm = normalize_train(spec, ds, &fold.train)?;
            let system = norm.ridge_system()?;
            let (val_inputs, observed) = norm.apply(spec, ds, &fold.test)?;
            candidates
                .iter()
                .map(|&h| match norm.fit_params(system.as_ref(), h, &config.solver) {
                    Ok(params) => {
                        let pred = predict_params(&params, &val_inputs)?;
                        Ok(Some(metric.score(&pred, &observed)))
                    }
                    Err(Error::Diverged { .. }) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(candidates.len());
    for (c, &h) in candidates.iter().enumerate() {
        let vals: Option<Vec<f64>> = per_fold.iter().map(|f| f[c]).collect();
        let mean = match vals {
            Some(v) if !v.is_empty() => Some(v.iter().sum::<f64>() / v.len() as f64),
            _ => None,
        };
        scores.push((h, mean));
    }
    let mut best: Option<(Hyperparams, f64)> = None;
    // Candidates ascend, so `>=` resolves ties toward stronger regularization.
    for &(h, s) in &scores {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| s >= b) {
                best = Some((h, s));
            }
        }
    }
    match best {
        Some((chosen, _)) => Ok(SearchOutcome { chosen, scores }),
        None if usable.is_empty() => Err(Error::Range(
            "no inner fold has enough validation trials".into(),
        )),
        None => Err(Error::SearchFailed),
    }
}

/// A test trial's identity within a fold result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestTrial {
    pub position: usize,
    pub trial_id: i64,
    pub word_id: String,
    pub question_id: String,
}

/// Held-out predictions of one fold, in that fold's normalized target space.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold_id: usize,
    pub hyper: Hyperparams,
    pub trials: Vec<TestTrial>,
    pub predicted: DMatrix<f64>,
    pub observed: DMatrix<f64>,
    pub target_stats: ZScoreStats,
    /// False when a learned-attention fit hit its epoch cap.
    pub converged: bool,
}

impl FoldResult {
    /// Predictions mapped back to the original target units.
    pub fn predicted_raw(&self) -> Result<DMatrix<f64>> {
        self.target_stats.invert(&self.predicted)
    }

    pub fn observed_raw(&self) -> Result<DMatrix<f64>> {
        self.target_stats.invert(&self.observed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CVResult {
    pub kind: HypothesisKind,
    pub n_sensors: usize,
    pub n_windows: usize,
    pub folds: Vec<FoldResult>,
}

impl CVResult {
    pub fn n_test_trials(&self) -> usize {
        self.folds.iter().map(|f| f.trials.len()).sum()
    }
}

fn with_fold<T>(fold: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InFold {
        fold,
        source: Box::new(e),
    })
}

/// Hyperparameters for one outer fold: the single candidate, or a nested search.
pub fn choose_hyperparams(
    spec: &HypothesisSpec,
    ds: &Dataset,
    fold: &Fold,
    grid: &HyperGrid,
    config: &CvConfig,
) -> Result<SearchOutcome> {
    let candidates = grid.candidates(spec.kind());
    if candidates.len() == 1 {
        grid.validate()?;
        return Ok(SearchOutcome {
            chosen: candidates[0],
            scores: vec![],
        });
    }
    let inner = nested_split(
        &ds.design,
        fold,
        config.k_w,
        config.k_q,
        config.inner_seed(fold.id),
        config.n_inner_folds,
    )?;
    grid_search(spec, ds, &inner, grid, config)
}

/// Runs every fold: nested search on the training trials, refit on all of
/// them, then predict the test trials. Folds run in parallel; results keep
/// fold order.
pub fn run_cv(
    spec: &HypothesisSpec,
    ds: &Dataset,
    folds: &[Fold],
    grid: &HyperGrid,
    config: &CvConfig,
) -> Result<CVResult> {
    grid.validate()?;
    config.solver.validate()?;
    let results = folds
        .par_iter()
        .map(|fold| with_fold(fold.id, run_fold(spec, ds, fold, grid, config)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CVResult {
        kind: spec.kind(),
        n_sensors: ds.n_sensors,
        n_windows: ds.n_windows,
        folds: results,
    })
}

fn run_fold(
    spec: &HypothesisSpec,
    ds: &Dataset,
    fold: &Fold,
    grid: &HyperGrid,
    config: &CvConfig,
) -> Result<FoldResult> {
    if fold.train.is_empty() {
        return Err(Error::Range("fold has no training trials".into()));
    }
    let search = choose_hyperparams(spec, ds, fold, grid, config)?;
    let model = fit_model(spec, ds, &fold.train, search.chosen, &config.solver)?;
    let converged = match &model.params {
        Params::Attention(m) => m.converged,
        Params::Ridge(_) => true,
    };
    let predicted = model.predict_normalized(spec, ds, &fold.test)?;
    let observed = model.normalize_targets(ds, &fold.test)?;
    let trials = fold
        .test
        .iter()
        .map(|&i| {
            let t = ds.design.trial(i);
            TestTrial {
                position: i,
                trial_id: t.trial_id,
                word_id: t.word_id.clone(),
                question_id: t.question_id.clone(),
            }
        })
        .collect();
    Ok(FoldResult {
        fold_id: fold.id,
        hyper: search.chosen,
        trials,
        predicted,
        observed,
        target_stats: model.target_stats,
        converged,
    })
}

/// Mean 2v2 at one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub size: usize,
    pub accuracy: f64,
    pub n_pairs: u64,
}

/// Refits on seeded random subsets of each fold's training trials.
/// Hyperparameters are searched once per fold on its full training set and
/// reused at every size.
pub fn learning_curve(
    spec: &HypothesisSpec,
    ds: &Dataset,
    sizes: &[usize],
    folds: &[Fold],
    grid: &HyperGrid,
    config: &CvConfig,
) -> Result<Vec<LearningPoint>> {
    let max = folds.iter().map(|f| f.train.len()).min().unwrap_or(0);
    for &s in sizes {
        if s == 0 || s > max {
            return Err(Error::Range(format!(
                "training size {s} outside 1..={max}"
            )));
        }
    }
    // per fold, per size: (half points, pairs)
    let per_fold = folds
        .par_iter()
        .map(|fold| {
            with_fold(fold.id, (|| {
                let search = choose_hyperparams(spec, ds, fold, grid, config)?;
                sizes
                    .iter()
                    .map(|&size| {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                        rng.set_stream((fold.id as u64) << 32 | size as u64);
                        let mut train = fold.train.clone();
                        train.shuffle(&mut rng);
                        train.truncate(size);
                        train.sort_unstable();
                        let model = fit_model(spec, ds, &train, search.chosen, &config.solver)?;
                        let pred = model.predict_normalized(spec, ds, &fold.test)?;
                        let obs = model.normalize_targets(ds, &fold.test)?;
                        Ok(block_two_vs_two(&pred, &obs))
                    })
                    .collect::<Result<Vec<_>>>()
            })())
        })
        .collect::<Result<Vec<_>>>()?;
    sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            let (half, pairs) = per_fold
                .iter()
                .fold((0u64, 0u64), |acc, f| (acc.0 + f[k].0, acc.1 + f[k].1));
            if pairs == 0 {
                return Err(Error::NoPairs("all".into()));
            }
            Ok(LearningPoint {
                size,
                accuracy: half as f64 / (2 * pairs) as f64,
                n_pairs: pairs,
            })
        })
        .collect()
}
