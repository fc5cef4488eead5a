use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use taskfx::crossval::*;
use taskfx::data::{Dataset, ExperimentDesign, ZScoreStats};
use taskfx::evaluation::*;
use taskfx::hypotheses::{HypothesisKind, HypothesisSpec};
use taskfx::model::Hyperparams;
use taskfx::synth::{generate_dataset, generate_dataset_with, GenerativeConfig, SynthDataset};
use taskfx::Error;

fn names(p: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{p}{i}")).collect()
}

fn synth(kind: HypothesisKind, noise: f64, seed: u64) -> SynthDataset {
    generate_dataset(&GenerativeConfig {
        kind,
        n_words: 10,
        n_questions: 6,
        f_s: 5,
        f_t: 4,
        l: 3,
        t_windows: 4,
        noise_sigma: noise,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn small_grid() -> HyperGrid {
    HyperGrid {
        lambdas: vec![0.01, 1.0, 100.0],
        lambda_as: vec![0.1],
    }
}

fn cv(spec: &HypothesisSpec, ds: &Dataset, grid: &HyperGrid, seed: u64) -> CVResult {
    let config = CvConfig {
        seed,
        ..Default::default()
    };
    let folds = generate_folds(&ds.design, 2, 2, seed, None).unwrap();
    run_cv(spec, ds, &folds, grid, &config).unwrap()
}

#[test]
fn paper_design_fold_arithmetic() {
    let design = ExperimentDesign::full_grid(&names("w", 60), &names("q", 20)).unwrap();
    let folds = generate_folds(&design, 2, 2, 0, None).unwrap();
    assert_eq!(folds.len(), 30);
    let mut words = HashSet::new();
    let mut questions = HashSet::new();
    for f in &folds {
        assert_eq!(f.held_out(), 156);
        assert_eq!(f.train.len(), 1044);
        assert_eq!(f.test.len(), 4);
        words.extend(f.held_words.iter().cloned());
        questions.extend(f.held_questions.iter().cloned());
    }
    assert_eq!((words.len(), questions.len()), (60, 20));

    let inner = nested_split(&design, &folds[0], 2, 2, 1, None).unwrap();
    let outer_words: HashSet<_> = folds[0].held_words.iter().collect();
    let outer_questions: HashSet<_> = folds[0].held_questions.iter().collect();
    let outer_train: HashSet<_> = folds[0].train.iter().collect();
    for f in &inner {
        assert_eq!(f.train.len(), 896);
        assert!(f.held_words.iter().all(|w| !outer_words.contains(w)));
        assert!(f.held_questions.iter().all(|q| !outer_questions.contains(q)));
        assert!(f.train.iter().chain(&f.test).chain(&f.excluded).all(|i| outer_train.contains(i)));
    }
}

#[test]
fn small_fold_cases() {
    let design = ExperimentDesign::full_grid(&names("w", 4), &names("q", 3)).unwrap();
    let folds = generate_folds(&design, 1, 1, 3, None).unwrap();
    assert_eq!(folds.len(), 4);
    for f in &folds {
        assert_eq!((f.train.len(), f.test.len()), (6, 1));
    }
    let none = generate_folds(&design, 0, 0, 3, None).unwrap();
    assert_eq!(none.len(), 1);
    assert_eq!((none[0].train.len(), none[0].test.len()), (12, 0));
    assert!(matches!(generate_folds(&design, 4, 1, 0, None), Err(Error::Range(_))));
    assert!(matches!(generate_folds(&design, 1, 3, 0, None), Err(Error::Range(_))));
    assert_eq!(generate_folds(&design, 1, 1, 3, None).unwrap(), folds);
}

#[test]
fn zero_shot_audit() {
    let data = synth(HypothesisKind::H3, 1.0, 1);
    let ds = data.dataset(0).unwrap();
    let folds = generate_folds(&ds.design, 2, 2, 5, None).unwrap();
    for f in &folds {
        let test_words: HashSet<_> = f.test.iter().map(|&i| &ds.design.trial(i).word_id).collect();
        let test_questions: HashSet<_> = f.test.iter().map(|&i| &ds.design.trial(i).question_id).collect();
        for &i in &f.train {
            let t = ds.design.trial(i);
            assert!(!test_words.contains(&t.word_id) && !test_questions.contains(&t.question_id));
        }
    }
}

#[test]
fn noise_free_stimulus_model_predicts_exactly() {
    let data = synth(HypothesisKind::H1, 0.0, 2);
    let ds = data.dataset(0).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H1).unwrap();
    let result = cv(&spec, &ds, &HyperGrid::single(1e-9, 1.0), 2);
    for f in &result.folds {
        let (p, o) = (f.predicted_raw().unwrap(), f.observed_raw().unwrap());
        assert!((p - o).abs().max() < 1e-6);
    }
    let tc = accuracy_timecourse(&result, PairFilter::FullyDisjoint).unwrap();
    assert!(tc.accuracy.iter().all(|&a| a == 1.0));
    assert_eq!(mean_accuracy(&result, PairFilter::FullyDisjoint).unwrap().accuracy, 1.0);
}

#[test]
fn runs_are_deterministic() {
    let data = synth(HypothesisKind::H3, 1.0, 3);
    let ds = data.dataset(0).unwrap();
    for kind in [HypothesisKind::H3, HypothesisKind::H42] {
        let spec = HypothesisSpec::simple(kind).unwrap();
        let grid = HyperGrid {
            lambdas: vec![0.1, 10.0],
            lambda_as: vec![0.1],
        };
        let config = CvConfig {
            seed: 3,
            n_folds: Some(2),
            n_inner_folds: Some(2),
            solver: taskfx::solvers::SolverConfig {
                max_epochs: 50,
                ..Default::default()
            },
            ..Default::default()
        };
        let folds = generate_folds(&ds.design, 2, 2, 3, Some(2)).unwrap();
        let a = run_cv(&spec, &ds, &folds, &grid, &config).unwrap();
        let b = run_cv(&spec, &ds, &folds, &grid, &config).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn task_only_model_ties_on_question_sharing_pairs() {
    let data = synth(HypothesisKind::H1, 0.5, 4);
    let ds = data.dataset(0).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H2).unwrap();
    let result = cv(&spec, &ds, &small_grid(), 4);
    let acc = mean_accuracy(&result, PairFilter::SameQuestion).unwrap().accuracy;
    assert!((acc - 0.5).abs() <= 0.05, "{acc}");
    let same_word = accuracy_timecourse(&cv(&HypothesisSpec::simple(HypothesisKind::H1).unwrap(), &ds, &small_grid(), 4), PairFilter::SameWord).unwrap();
    assert!(same_word.accuracy.iter().all(|a| (a - 0.5).abs() <= 0.05));
}

#[test]
fn constant_targets_choose_the_largest_lambda() {
    let data = synth(HypothesisKind::H1, 1.0, 5);
    let ds = data.dataset(0).unwrap();
    let ds = ds.with_targets(DMatrix::zeros(ds.targets.nrows(), ds.targets.ncols())).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H1).unwrap();
    let folds = generate_folds(&ds.design, 2, 2, 0, None).unwrap();
    let grid = HyperGrid::default();
    let out = choose_hyperparams(&spec, &ds, &folds[0], &grid, &CvConfig::default()).unwrap();
    assert_eq!(out.chosen.lambda, 1e7);
}

#[test]
fn single_candidate_skips_search() {
    let data = synth(HypothesisKind::H1, 1.0, 5);
    let ds = data.dataset(0).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H1).unwrap();
    let folds = generate_folds(&ds.design, 2, 2, 0, None).unwrap();
    let out = choose_hyperparams(&spec, &ds, &folds[0], &HyperGrid::single(3.0, 1.0), &CvConfig::default()).unwrap();
    assert_eq!(out.chosen, Hyperparams { lambda: 3.0, lambda_a: None });
    assert!(out.scores.is_empty());
}

#[test]
fn noisier_data_is_regularized_at_least_as_much() {
    let grid = HyperGrid::default();
    let spec = HypothesisSpec::simple(HypothesisKind::H1).unwrap();
    let pick = |noise: f64| {
        let ds = synth(HypothesisKind::H1, noise, 6).dataset(0).unwrap();
        let folds = generate_folds(&ds.design, 2, 2, 6, None).unwrap();
        choose_hyperparams(&spec, &ds, &folds[0], &grid, &CvConfig { metric: ValidationMetric::Euclidean, ..Default::default() })
            .unwrap()
            .chosen
            .lambda
    };
    let (clean, noisy) = (pick(0.0), pick(20.0));
    assert!(noisy >= clean, "noisy {noisy}, clean {clean}");
}

#[test]
fn search_never_reads_test_targets() {
    let data = synth(HypothesisKind::H3, 1.0, 7);
    let ds = data.dataset(0).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H3).unwrap();
    let folds = generate_folds(&ds.design, 2, 2, 7, None).unwrap();
    let grid = HyperGrid::default();
    let config = CvConfig::default();
    let before = choose_hyperparams(&spec, &ds, &folds[0], &grid, &config).unwrap();
    let mut targets = ds.targets.clone();
    for &i in folds[0].test.iter().chain(&folds[0].excluded) {
        targets.row_mut(i).iter_mut().for_each(|v| *v = *v * -7.0 + 100.0);
    }
    let after = choose_hyperparams(&spec, &ds.with_targets(targets).unwrap(), &folds[0], &grid, &config).unwrap();
    assert_eq!(before, after);
}

#[test]
fn learning_curve_improves_with_data() {
    let data = generate_dataset(&GenerativeConfig {
        kind: HypothesisKind::H3,
        n_words: 16,
        n_questions: 8,
        f_s: 6,
        f_t: 4,
        l: 4,
        t_windows: 4,
        noise_sigma: 3.0,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let ds = data.dataset(0).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H3).unwrap();
    let folds = generate_folds(&ds.design, 2, 2, 8, Some(16)).unwrap();
    let config = CvConfig::default();
    let grid = small_grid();
    let max = folds.iter().map(|f| f.train.len()).min().unwrap();
    let curve = learning_curve(&spec, &ds, &[12, max], &folds, &grid, &config).unwrap();
    assert!(curve[1].accuracy >= curve[0].accuracy + 0.02, "{curve:?}");
    assert!(matches!(learning_curve(&spec, &ds, &[0], &folds, &grid, &config), Err(Error::Range(_))));
    assert!(matches!(learning_curve(&spec, &ds, &[max + 1], &folds, &grid, &config), Err(Error::Range(_))));
}

// Independent enumeration: every unordered pair in each fold, cosine over the
// full response vector, ties worth one half.
fn brute_force(result: &CVResult) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        1.0 - dot / (na * nb)
    };
    let (mut score, mut n) = (0.0, 0.0);
    for f in &result.folds {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
        };
        let (p, o) = (rows(&f.predicted), rows(&f.observed));
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let s1 = cos(&p[i], &o[i]) + cos(&p[j], &o[j]);
                let s2 = cos(&p[i], &o[j]) + cos(&p[j], &o[i]);
                score += if s1 < s2 { 1.0 } else if s1 == s2 { 0.5 } else { 0.0 };
                n += 1.0;
            }
        }
    }
    score / n
}

#[test]
fn mean_accuracy_matches_pair_enumeration() {
    for (seed, kind) in [(9, HypothesisKind::H3), (10, HypothesisKind::H1)] {
        let ds = synth(kind, 3.0, seed).dataset(0).unwrap();
        let spec = HypothesisSpec::simple(kind).unwrap();
        let folds = generate_folds(&ds.design, 2, 2, seed, Some(4)).unwrap();
        let result = run_cv(&spec, &ds, &folds, &small_grid(), &CvConfig::default()).unwrap();
        assert!(result.n_test_trials() <= 20);
        let m = mean_accuracy(&result, PairFilter::All).unwrap();
        assert_eq!(m.accuracy, brute_force(&result));
        assert_eq!(m.n_pairs, 4 * 6);
    }
}

#[test]
fn shuffled_targets_sit_at_chance() {
    let data = synth(HypothesisKind::H3, 1.0, 11);
    let ds = data.dataset(0).unwrap();
    let mut order: Vec<usize> = (0..ds.targets.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(11));
    let shuffled = DMatrix::from_fn(ds.targets.nrows(), ds.targets.ncols(), |r, c| ds.targets[(order[r], c)]);
    let ds = ds.with_targets(shuffled).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H3).unwrap();
    let folds = generate_folds(&ds.design, 2, 2, 11, Some(90)).unwrap();
    let result = run_cv(&spec, &ds, &folds, &HyperGrid::single(1.0, 1.0), &CvConfig::default()).unwrap();
    let m = mean_accuracy(&result, PairFilter::All).unwrap();
    assert!(m.n_pairs >= 500);
    assert!((m.accuracy - 0.5).abs() <= 3.0 * m.std_error, "{m:?}");
}

fn fold_result(trials: &[(&str, &str)], predicted: DMatrix<f64>, observed: DMatrix<f64>) -> FoldResult {
    let m = observed.ncols();
    FoldResult {
        fold_id: 0,
        hyper: Hyperparams { lambda: 1.0, lambda_a: None },
        trials: trials
            .iter()
            .enumerate()
            .map(|(i, (w, q))| TestTrial {
                position: i,
                trial_id: i as i64,
                word_id: w.to_string(),
                question_id: q.to_string(),
            })
            .collect(),
        predicted,
        observed,
        target_stats: ZScoreStats {
            means: vec![0.0; m],
            stds: vec![1.0; m],
            fit_rows: vec![0],
        },
        converged: true,
    }
}

#[test]
fn pair_enumeration_by_filter() {
    let trials = [("w1", "q1"), ("w1", "q2"), ("w2", "q1"), ("w2", "q2")];
    let result = CVResult {
        kind: HypothesisKind::H1,
        n_sensors: 1,
        n_windows: 2,
        folds: vec![fold_result(&trials, DMatrix::zeros(4, 2), DMatrix::zeros(4, 2))],
    };
    assert_eq!(enumerate_test_pair_ids(&result, PairFilter::SameWord), vec![(0, 1), (2, 3)]);
    assert_eq!(enumerate_test_pair_ids(&result, PairFilter::SameQuestion), vec![(0, 2), (1, 3)]);
    assert_eq!(enumerate_test_pair_ids(&result, PairFilter::FullyDisjoint), vec![(0, 3), (1, 2)]);
    assert_eq!(enumerate_test_pairs(&result, PairFilter::All).len(), 6);
}

#[test]
fn constant_predictions_score_half_everywhere() {
    let trials = [("w1", "q1"), ("w1", "q2"), ("w2", "q1"), ("w2", "q2")];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    use rand::Rng;
    let observed = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
    let result = CVResult {
        kind: HypothesisKind::H1,
        n_sensors: 2,
        n_windows: 3,
        folds: vec![fold_result(&trials, DMatrix::from_element(4, 6, 0.7), observed)],
    };
    let grid = accuracy_grid(&result, PairFilter::All, 1).unwrap();
    assert_eq!(grid.values.shape(), (2, 3));
    assert!(grid.values.iter().all(|&v| v == 0.5));
    let wider = accuracy_grid(&result, PairFilter::All, 2).unwrap();
    assert_eq!(wider.values.shape(), (2, 1));
    assert!(matches!(accuracy_grid(&result, PairFilter::All, 0), Err(Error::Range(_))));
    let strict = accuracy_timecourse_with(&result, PairFilter::All, TiePolicy::Wrong).unwrap();
    assert!(strict.accuracy.iter().all(|&a| a == 0.0));
    assert_eq!(mean_accuracy(&result, PairFilter::All).unwrap().accuracy, 0.5);
    let m = mean_accuracy_with(&result, PairFilter::All, TiePolicy::Wrong).unwrap();
    assert_eq!((m.accuracy, m.std_error), (0.0, 0.0));
}

#[test]
fn signal_only_on_one_sensor_shows_in_the_grid() {
    let cfg = GenerativeConfig {
        kind: HypothesisKind::H1,
        n_words: 10,
        n_questions: 6,
        f_s: 5,
        f_t: 4,
        l: 4,
        t_windows: 4,
        noise_sigma: 0.5,
        seed: 12,
        ..Default::default()
    };
    let t = cfg.t_windows;
    let data = generate_dataset_with(&cfg, |truth| {
        for c in t..truth.w_s.ncols() {
            truth.w_s.column_mut(c).fill(0.0);
        }
    })
    .unwrap();
    let ds = data.dataset(0).unwrap();
    let spec = HypothesisSpec::simple(HypothesisKind::H1).unwrap();
    let result = cv(&spec, &ds, &small_grid(), 12);
    let grid = accuracy_grid(&result, PairFilter::All, 2).unwrap();
    let min0 = grid.values.row(0).min();
    for l in 1..4 {
        assert!(min0 >= grid.values.row(l).max() + 0.1, "{}", grid.values);
    }
}

#[test]
fn no_pairs_is_an_error() {
    let result = CVResult {
        kind: HypothesisKind::H1,
        n_sensors: 1,
        n_windows: 2,
        folds: vec![fold_result(&[("w1", "q1"), ("w2", "q2")], DMatrix::zeros(2, 2), DMatrix::zeros(2, 2))],
    };
    assert!(matches!(accuracy_timecourse(&result, PairFilter::SameWord), Err(Error::NoPairs(_))));
}
