//! Significance tests, FDR control and attention comparison.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::evaluation::cosine_distance;
use crate::hypotheses::AttentionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    OneSample,
    Paired,
}

/// Outcome of a two-sided t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub kind: TestKind,
}

impl TestResult {
    pub fn df(&self) -> usize {
        self.n - 1
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided p-value of `t` under Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::DegenerateTest(format!("t distribution with df {df}: {e}")))?;
    Ok((2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

/// Two-sided one-sample t-test of `values` against `mu0`, sample std.
pub fn one_sample_ttest(values: &[f64], mu0: f64) -> Result<TestResult> {
    one_sample(values, mu0, TestKind::OneSample)
}

fn one_sample(values: &[f64], mu0: f64, kind: TestKind) -> Result<TestResult> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateTest(format!("t-test needs n >= 2, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData("t-test sample".into()));
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        if m == mu0 {
            return Ok(TestResult {
                statistic: 0.0,
                p_value: 1.0,
                n,
                kind,
            });
        }
        return Err(Error::DegenerateTest(format!(
            "zero variance with mean {m} != {mu0}"
        )));
    }
    let t = (m - mu0) / (sd / (n as f64).sqrt());
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided_p(t, (n - 1) as f64)?,
        n,
        kind,
    })
}

/// Paired two-sided t-test on `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    one_sample(&diff, 0.0, TestKind::Paired)
}

/// Benjamini–Hochberg step-up at level `q`. The mask is in input order.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (1..=m)
        .rev()
        .find(|&i| sorted[i - 1] <= i as f64 * q / m as f64)
        .map(|i| sorted[i - 1]);
    match cutoff {
        Some(c) => p_values.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    }
}

/// Product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::DegenerateTest("correlation needs two points".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateTest("zero variance in correlation".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Strict upper triangle, row by row, of the pairwise cosine-distance matrix.
pub fn pairwise_cosine_upper(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let n = vectors.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(cosine_distance(vectors[i], vectors[j])?);
        }
    }
    Ok(out)
}

/// Correlation of the pairwise cosine-distance structure of two attention
/// sets over the same tasks.
pub fn attention_similarity(set1: &[AttentionVector], set2: &[AttentionVector]) -> Result<f64> {
    if set1.len() != set2.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} tasks",
            set1.len(),
            set2.len()
        )));
    }
    if set1.len() < 3 {
        return Err(Error::DegenerateTest(format!(
            "need at least 3 tasks, got {}",
            set1.len()
        )));
    }
    for (a, b) in set1.iter().zip(set2) {
        if a.task_id != b.task_id {
            return Err(Error::MissingEntity(format!(
                "task `{}` paired with `{}`",
                a.task_id, b.task_id
            )));
        }
        if a.weights.len() != b.weights.len() {
            return Err(Error::ShapeMismatch("attention widths differ".into()));
        }
    }
    let v1: Vec<&[f64]> = set1.iter().map(|a| a.weights.as_slice()).collect();
    let v2: Vec<&[f64]> = set2.iter().map(|a| a.weights.as_slice()).collect();
    pearson(&pairwise_cosine_upper(&v1)?, &pairwise_cosine_upper(&v2)?)
}
