//! The 2v2 matching metric over cross-validated predictions.
//!
//! Two held-out trials are matched to their observed responses by comparing
//! summed distances of the correct and swapped assignments. Scores are
//! accumulated as integer half-points (2 correct, 1 tie, 0 wrong) so totals do
//! not depend on summation order.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::{CVResult, FoldResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Cosine,
    Absolute,
}

/// Credit given when both assignments score the same.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    Half,
    /// Ties count as a wrong match.
    Wrong,
}

impl TiePolicy {
    fn half_points(self) -> u64 {
        match self {
            TiePolicy::Half => 1,
            TiePolicy::Wrong => 0,
        }
    }
}

/// Which pairs of test trials are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFilter {
    All,
    /// Same word, different question.
    SameWord,
    /// Same question, different word.
    SameQuestion,
    /// Different word and different question.
    FullyDisjoint,
}

impl PairFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            PairFilter::All => "all",
            PairFilter::SameWord => "same_word",
            PairFilter::SameQuestion => "same_question",
            PairFilter::FullyDisjoint => "fully_disjoint",
        }
    }

    pub fn admits(self, a: (&str, &str), b: (&str, &str)) -> bool {
        let same_w = a.0 == b.0;
        let same_q = a.1 == b.1;
        match self {
            PairFilter::All => true,
            PairFilter::SameWord => same_w && !same_q,
            PairFilter::SameQuestion => same_q && !same_w,
            PairFilter::FullyDisjoint => !same_w && !same_q,
        }
    }
}

impl fmt::Display for PairFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "same_word" => Ok(Self::SameWord),
            "same_question" => Ok(Self::SameQuestion),
            "fully_disjoint" => Ok(Self::FullyDisjoint),
            other => Err(Error::Config(format!("unknown pair filter `{other}`"))),
        }
    }
}

/// `1 − a·b / (‖a‖‖b‖)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    masked_cosine(a, b, None)
}

fn masked_cosine(a: &[f64], b: &[f64], mask: Option<&[usize]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    let mut acc = |x: f64, y: f64| {
        dot += x * y;
        na += x * x;
        nb += y * y;
    };
    match mask {
        Some(m) => m.iter().for_each(|&i| acc(a[i], b[i])),
        None => a.iter().zip(b).for_each(|(&x, &y)| acc(x, y)),
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine distance".into()));
    }
    Ok(1.0 - dot / (na.sqrt() * nb.sqrt()))
}

fn masked_absolute(a: &[f64], b: &[f64], mask: &[usize]) -> f64 {
    mask.iter().map(|&i| (a[i] - b[i]).abs()).sum()
}

fn distance(a: &[f64], b: &[f64], mask: &[usize], d: Distance) -> Result<f64> {
    match d {
        Distance::Cosine => masked_cosine(a, b, Some(mask)),
        Distance::Absolute => Ok(masked_absolute(a, b, mask)),
    }
}

/// Half-points for one 2v2 comparison: 2 correct, 1 tie, 0 swapped.
fn two_vs_two_half(
    pred1: &[f64],
    pred2: &[f64],
    true1: &[f64],
    true2: &[f64],
    mask: &[usize],
    dist: Distance,
) -> Result<u64> {
    if mask.is_empty() {
        return Err(Error::Range("empty mask".into()));
    }
    let n = pred1.len();
    if pred2.len() != n || true1.len() != n || true2.len() != n {
        return Err(Error::ShapeMismatch("2v2 vectors differ in length".into()));
    }
    if let Some(&i) = mask.iter().find(|&&i| i >= n) {
        return Err(Error::Range(format!("mask index {i} outside length {n}")));
    }
    if dist == Distance::Cosine && mask.len() < 2 {
        return Err(Error::DistanceUndefined(
            "cosine distance over a single entry".into(),
        ));
    }
    Ok(decide(
        distance(pred1, true1, mask, dist)?,
        distance(pred2, true2, mask, dist)?,
        distance(pred1, true2, mask, dist)?,
        distance(pred2, true1, mask, dist)?,
    ))
}

/// Half-points from the four distances `d(p̂1,b1), d(p̂2,b2), d(p̂1,b2), d(p̂2,b1)`.
fn decide(d11: f64, d22: f64, d12: f64, d21: f64) -> u64 {
    let score1 = d11 + d22;
    let score2 = d12 + d21;
    if score1 < score2 {
        2
    } else if score1 == score2 {
        1
    } else {
        0
    }
}

/// 1 for a correct match, 0 for a swapped one, 0.5 on a tie.
pub fn two_vs_two(
    pred1: &[f64],
    pred2: &[f64],
    true1: &[f64],
    true2: &[f64],
    mask: &[usize],
    dist: Distance,
) -> Result<f64> {
    two_vs_two_half(pred1, pred2, true1, true2, mask, dist).map(|h| h as f64 / 2.0)
}

/// A pair of test trials from one fold, as row indices into that fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestPair {
    pub fold: usize,
    pub first: usize,
    pub second: usize,
}

fn fold_pairs(fold: &FoldResult, filter: PairFilter) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..fold.trials.len() {
        for j in i + 1..fold.trials.len() {
            let a = &fold.trials[i];
            let b = &fold.trials[j];
            if filter.admits(
                (&a.word_id, &a.question_id),
                (&b.word_id, &b.question_id),
            ) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Unordered pairs of test trials within the same fold, fold by fold.
pub fn enumerate_test_pairs(result: &CVResult, filter: PairFilter) -> Vec<TestPair> {
    result
        .folds
        .iter()
        .enumerate()
        .flat_map(|(f, fold)| {
            fold_pairs(fold, filter)
                .into_iter()
                .map(move |(first, second)| TestPair { fold: f, first, second })
        })
        .collect()
}

/// Same as [`enumerate_test_pairs`] but as trial-id pairs.
pub fn enumerate_test_pair_ids(result: &CVResult, filter: PairFilter) -> Vec<(i64, i64)> {
    enumerate_test_pairs(result, filter)
        .into_iter()
        .map(|p| {
            let f = &result.folds[p.fold];
            (f.trials[p.first].trial_id, f.trials[p.second].trial_id)
        })
        .collect()
}

fn row(m: &DMatrix<f64>, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

/// Half-point totals per mask over all admissible pairs of one fold.
fn fold_scores(
    fold: &FoldResult,
    filter: PairFilter,
    masks: &[(Vec<usize>, Distance)],
    ties: TiePolicy,
) -> Result<(Vec<u64>, u64)> {
    let pairs = fold_pairs(fold, filter);
    let preds: Vec<Vec<f64>> = (0..fold.trials.len()).map(|r| row(&fold.predicted, r)).collect();
    let obs: Vec<Vec<f64>> = (0..fold.trials.len()).map(|r| row(&fold.observed, r)).collect();
    let mut totals = vec![0u64; masks.len()];
    for &(i, j) in &pairs {
        for (k, (mask, dist)) in masks.iter().enumerate() {
            let h = two_vs_two_half(&preds[i], &preds[j], &obs[i], &obs[j], mask, *dist)?;
            totals[k] += if h == 1 { ties.half_points() } else { h };
        }
    }
    Ok((totals, pairs.len() as u64))
}

fn pooled(
    result: &CVResult,
    filter: PairFilter,
    masks: &[(Vec<usize>, Distance)],
    ties: TiePolicy,
) -> Result<(Vec<f64>, u64)> {
    let per_fold = result
        .folds
        .par_iter()
        .map(|f| fold_scores(f, filter, masks, ties))
        .collect::<Result<Vec<_>>>()?;
    let n_pairs: u64 = per_fold.iter().map(|(_, n)| n).sum();
    if n_pairs == 0 {
        return Err(Error::NoPairs(filter.to_string()));
    }
    let mut totals = vec![0u64; masks.len()];
    for (t, _) in &per_fold {
        for (acc, v) in totals.iter_mut().zip(t) {
            *acc += v;
        }
    }
    Ok((
        totals
            .into_iter()
            .map(|t| t as f64 / (2 * n_pairs) as f64)
            .collect(),
        n_pairs,
    ))
}

fn window_masks(n_sensors: usize, n_windows: usize) -> Vec<(Vec<usize>, Distance)> {
    (0..n_windows)
        .map(|w| {
            (
                (0..n_sensors).map(|l| l * n_windows + w).collect(),
                Distance::Cosine,
            )
        })
        .collect()
}

/// Mean 2v2 accuracy per time window, all sensors in each window's mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timecourse {
    pub filter: PairFilter,
    pub accuracy: Vec<f64>,
    pub n_pairs: u64,
}

pub fn accuracy_timecourse(result: &CVResult, filter: PairFilter) -> Result<Timecourse> {
    accuracy_timecourse_with(result, filter, TiePolicy::Half)
}

pub fn accuracy_timecourse_with(
    result: &CVResult,
    filter: PairFilter,
    ties: TiePolicy,
) -> Result<Timecourse> {
    let masks = window_masks(result.n_sensors, result.n_windows);
    let (accuracy, n_pairs) = pooled(result, filter, &masks, ties)?;
    Ok(Timecourse {
        filter,
        accuracy,
        n_pairs,
    })
}

/// Per-fold timecourses, skipping folds without admissible pairs.
pub fn fold_timecourses(
    result: &CVResult,
    filter: PairFilter,
    ties: TiePolicy,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let masks = window_masks(result.n_sensors, result.n_windows);
    let mut out = Vec::new();
    for fold in &result.folds {
        let (totals, n) = fold_scores(fold, filter, &masks, ties)?;
        if n > 0 {
            out.push((
                fold.fold_id,
                totals.iter().map(|&t| t as f64 / (2 * n) as f64).collect(),
            ));
        }
    }
    Ok(out)
}

/// Pooled 2v2 over every output (all sensors and windows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanAccuracy {
    pub accuracy: f64,
    pub n_pairs: u64,
    /// Standard error of the per-pair scores.
    pub std_error: f64,
}

pub fn mean_accuracy(result: &CVResult, filter: PairFilter) -> Result<MeanAccuracy> {
    mean_accuracy_with(result, filter, TiePolicy::Half)
}

pub fn mean_accuracy_with(
    result: &CVResult,
    filter: PairFilter,
    ties: TiePolicy,
) -> Result<MeanAccuracy> {
    let m = result.n_sensors * result.n_windows;
    let mask: Vec<usize> = (0..m).collect();
    let dist = if m >= 2 { Distance::Cosine } else { Distance::Absolute };
    let mut counts = [0u64; 3];
    for fold in &result.folds {
        let preds: Vec<Vec<f64>> = (0..fold.trials.len()).map(|r| row(&fold.predicted, r)).collect();
        let obs: Vec<Vec<f64>> = (0..fold.trials.len()).map(|r| row(&fold.observed, r)).collect();
        for (i, j) in fold_pairs(fold, filter) {
            let h = two_vs_two_half(&preds[i], &preds[j], &obs[i], &obs[j], &mask, dist)?;
            counts[h as usize] += 1;
        }
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::NoPairs(filter.to_string()));
    }
    let nf = n as f64;
    let tie = ties.half_points() as f64 / 2.0;
    let mean = (counts[1] as f64 * tie + counts[2] as f64) / nf;
    let sq = (counts[1] as f64 * tie * tie + counts[2] as f64) / nf;
    let var = if n > 1 {
        (sq - mean * mean).max(0.0) * nf / (nf - 1.0)
    } else {
        0.0
    };
    Ok(MeanAccuracy {
        accuracy: mean,
        n_pairs: n,
        std_error: (var / nf).sqrt(),
    })
}

/// Sensors × window-groups grid of mean 2v2 accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyGrid {
    pub values: DMatrix<f64>,
    pub n_pairs: u64,
    pub filter: PairFilter,
    pub window_group: usize,
}

/// Cell `(l, g)` masks sensor `l` over the windows of group `g`. Windows past
/// the last whole group are dropped. Single-window cells compare scalars by
/// absolute difference; wider cells use cosine distance.
pub fn accuracy_grid(
    result: &CVResult,
    filter: PairFilter,
    window_group: usize,
) -> Result<AccuracyGrid> {
    accuracy_grid_with(result, filter, window_group, TiePolicy::Half)
}

pub fn accuracy_grid_with(
    result: &CVResult,
    filter: PairFilter,
    window_group: usize,
    ties: TiePolicy,
) -> Result<AccuracyGrid> {
    if window_group == 0 || window_group > result.n_windows {
        return Err(Error::Range(format!(
            "window group {window_group} for {} windows",
            result.n_windows
        )));
    }
    let (l, t) = (result.n_sensors, result.n_windows);
    let groups = t / window_group;
    let dist = if window_group == 1 {
        Distance::Absolute
    } else {
        Distance::Cosine
    };
    let mut masks = Vec::with_capacity(l * groups);
    for s in 0..l {
        for g in 0..groups {
            let start = g * window_group;
            masks.push(((start..start + window_group).map(|w| s * t + w).collect(), dist));
        }
    }
    let (acc, n_pairs) = pooled(result, filter, &masks, ties)?;
    Ok(AccuracyGrid {
        values: DMatrix::from_row_slice(l, groups, &acc),
        n_pairs,
        filter,
        window_group,
    })
}

/// Lenient pooled 2v2 over all outputs of a prediction block, used for
/// validation scoring. Pairs whose cosine distance is undefined count as ties.
/// Returns `(half_points, pairs)`.
pub(crate) fn block_two_vs_two(predicted: &DMatrix<f64>, observed: &DMatrix<f64>) -> (u64, u64) {
    let n = predicted.nrows();
    let mask: Vec<usize> = (0..predicted.ncols()).collect();
    let dist = if mask.len() >= 2 { Distance::Cosine } else { Distance::Absolute };
    let preds: Vec<Vec<f64>> = (0..n).map(|r| row(predicted, r)).collect();
    let obs: Vec<Vec<f64>> = (0..n).map(|r| row(observed, r)).collect();
    let mut half = 0;
    let mut pairs = 0;
    for i in 0..n {
        for j in i + 1..n {
            half += two_vs_two_half(&preds[i], &preds[j], &obs[i], &obs[j], &mask, dist).unwrap_or(1);
            pairs += 1;
        }
    }
    (half, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_distance(&[1.0, -2.0], &[-1.0, 2.0]).unwrap(), 2.0, epsilon = 1e-15);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn two_vs_two_examples() {
        let b1 = [1.0, 0.0, 2.0];
        let b2 = [0.0, 1.0, -1.0];
        let all = [0, 1, 2];
        assert_eq!(two_vs_two(&b1, &b2, &b1, &b2, &all, Distance::Cosine).unwrap(), 1.0);
        assert_eq!(two_vs_two(&b2, &b1, &b1, &b2, &all, Distance::Cosine).unwrap(), 0.0);
        let c = [1.0, 1.0, 1.0];
        assert_eq!(two_vs_two(&c, &c, &b1, &b2, &all, Distance::Cosine).unwrap(), 0.5);
        assert!(matches!(
            two_vs_two(&b1, &b2, &b1, &b2, &[], Distance::Cosine),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            two_vs_two(&b1, &b2, &b1, &b2, &[1], Distance::Cosine),
            Err(Error::DistanceUndefined(_))
        ));
        assert_eq!(two_vs_two(&b1, &b2, &b1, &b2, &[1], Distance::Absolute).unwrap(), 1.0);
    }

    #[test]
    fn decision_rule_on_given_distances() {
        assert_eq!(decide(0.1, 0.2, 0.3, 0.1), 2);
        assert_eq!(decide(0.3, 0.1, 0.1, 0.2), 0);
        assert_eq!(decide(0.25, 0.25, 0.25, 0.25), 1);
    }

    #[test]
    fn symmetric_under_swap() {
        let p1 = [0.3, -1.0, 2.0];
        let p2 = [1.0, 0.5, -0.2];
        let b1 = [0.1, -0.7, 1.5];
        let b2 = [-0.4, 0.9, 0.0];
        let m = [0, 1, 2];
        assert_eq!(
            two_vs_two(&p1, &p2, &b1, &b2, &m, Distance::Cosine).unwrap(),
            two_vs_two(&p2, &p1, &b2, &b1, &m, Distance::Cosine).unwrap()
        );
    }

    #[test]
    fn filters() {
        use PairFilter::*;
        let a = ("w1", "q1");
        assert!(SameWord.admits(a, ("w1", "q2")));
        assert!(!SameWord.admits(a, ("w2", "q2")));
        assert!(SameQuestion.admits(a, ("w2", "q1")));
        assert!(FullyDisjoint.admits(a, ("w2", "q2")));
        assert!(!FullyDisjoint.admits(a, ("w2", "q1")));
        assert!(All.admits(a, ("w2", "q1")));
        assert_eq!("same_word".parse::<PairFilter>().unwrap(), SameWord);
    }
}
