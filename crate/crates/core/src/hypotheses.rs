//! Per-hypothesis model inputs, including the two attention mechanisms.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ExperimentDesign, FeatureMatrix, Role};
use crate::error::{Error, Result};

/// How task and stimulus are assumed to combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HypothesisKind {
    /// Stimulus only.
    H1,
    /// Task only.
    H2,
    /// Additive stimulus + task.
    H3,
    /// Stimulus reweighted by precomputed (cosine-softmax) attention.
    H41,
    /// Stimulus reweighted by learned sigmoid attention.
    H42,
}

impl HypothesisKind {
    pub const ALL: [HypothesisKind; 5] = [Self::H1, Self::H2, Self::H3, Self::H41, Self::H42];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::H1 => "H1",
            Self::H2 => "H2",
            Self::H3 => "H3",
            Self::H41 => "H41",
            Self::H42 => "H42",
        }
    }

    /// Fitted by the closed-form ridge solver.
    pub fn is_ridge(self) -> bool {
        !matches!(self, Self::H42)
    }

    pub fn input_width(self, f_s: usize, f_t: usize) -> usize {
        match self {
            Self::H1 | Self::H41 | Self::H42 => f_s,
            Self::H2 => f_t,
            Self::H3 => f_s + f_t,
        }
    }
}

impl fmt::Display for HypothesisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HypothesisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H1" => Ok(Self::H1),
            "H2" => Ok(Self::H2),
            "H3" => Ok(Self::H3),
            "H41" | "H4.1" => Ok(Self::H41),
            "H42" | "H4.2" => Ok(Self::H42),
            other => Err(Error::Config(format!("unknown hypothesis `{other}`"))),
        }
    }
}

/// A hypothesis plus whatever auxiliary data it needs.
#[derive(Debug, Clone)]
pub struct HypothesisSpec {
    kind: HypothesisKind,
    aux_questions: Option<Arc<FeatureMatrix>>,
}

impl HypothesisSpec {
    pub fn new(kind: HypothesisKind, aux_questions: Option<Arc<FeatureMatrix>>) -> Result<Self> {
        match (kind, &aux_questions) {
            (HypothesisKind::H41, None) => Err(Error::Config(
                "H41 requires the auxiliary question matrix".into(),
            )),
            (HypothesisKind::H41, Some(_)) | (_, None) => Ok(Self {
                kind,
                aux_questions,
            }),
            (k, Some(_)) => Err(Error::Config(format!(
                "{k} does not take an auxiliary question matrix"
            ))),
        }
    }

    pub fn simple(kind: HypothesisKind) -> Result<Self> {
        Self::new(kind, None)
    }

    /// H41 spec with the auxiliary bank aligned to the stimulus feature order.
    pub fn precomputed(
        aux: &FeatureMatrix,
        stimulus: &FeatureMatrix,
        task: &FeatureMatrix,
    ) -> Result<Self> {
        let aligned = align_aux_questions(aux, stimulus, task)?;
        Self::new(HypothesisKind::H41, Some(Arc::new(aligned)))
    }

    pub fn kind(&self) -> HypothesisKind {
        self.kind
    }

    pub fn aux_questions(&self) -> Option<&FeatureMatrix> {
        self.aux_questions.as_deref()
    }
}

/// Checks the auxiliary bank has one row per stimulus feature and one column
/// per task feature. When its row ids name the stimulus columns, rows are
/// reordered to match; otherwise rows are taken positionally.
pub fn align_aux_questions(
    aux: &FeatureMatrix,
    stimulus: &FeatureMatrix,
    task: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    if aux.n_rows() != stimulus.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "{} auxiliary questions for {} stimulus features",
            aux.n_rows(),
            stimulus.n_features()
        )));
    }
    if aux.n_features() != task.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "auxiliary questions have {} features, tasks have {}",
            aux.n_features(),
            task.n_features()
        )));
    }
    let by_name: Option<Vec<usize>> = stimulus
        .column_names()
        .iter()
        .map(|c| aux.position(c))
        .collect();
    match by_name {
        Some(order) => {
            let values = DMatrix::from_fn(order.len(), aux.n_features(), |r, c| {
                aux.values()[(order[r], c)]
            });
            FeatureMatrix::new(
                stimulus.column_names().to_vec(),
                aux.column_names().to_vec(),
                values,
                Role::Auxiliary,
            )
        }
        None => Ok(aux.clone()),
    }
}

/// Per-task weights over stimulus features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionVector {
    pub task_id: String,
    pub weights: Vec<f64>,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine similarity".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over the cosine similarities between a task vector and each
/// auxiliary question (one per stimulus feature).
pub fn precomputed_attention(task: &[f64], aux_questions: &FeatureMatrix) -> Result<Vec<f64>> {
    if task.len() != aux_questions.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "task vector of length {}, auxiliary questions of length {}",
            task.len(),
            aux_questions.n_features()
        )));
    }
    let sims = (0..aux_questions.n_rows())
        .map(|j| {
            let row: Vec<f64> = aux_questions.values().row(j).iter().copied().collect();
            cosine_similarity(task, &row).map_err(|_| {
                Error::ZeroVector(format!(
                    "task or auxiliary question `{}`",
                    aux_questions.row_ids()[j]
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&sims))
}

/// Precomputed attention for every task row.
pub fn precomputed_attention_bank(
    tasks: &FeatureMatrix,
    aux_questions: &FeatureMatrix,
) -> Result<Vec<AttentionVector>> {
    tasks
        .row_ids()
        .iter()
        .map(|id| {
            Ok(AttentionVector {
                task_id: id.clone(),
                weights: precomputed_attention(&tasks.row(id)?, aux_questions)?,
            })
        })
        .collect()
}

/// Elementwise reweighting of a stimulus vector.
pub fn augment_stimulus(weights: &[f64], stimulus: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != stimulus.len() {
        return Err(Error::ShapeMismatch(format!(
            "attention of length {}, stimulus of length {}",
            weights.len(),
            stimulus.len()
        )));
    }
    Ok(weights.iter().zip(stimulus).map(|(a, s)| a * s).collect())
}

/// Stacked model inputs for a trial subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub kind: HypothesisKind,
    pub values: DMatrix<f64>,
    /// Design positions of the rows.
    pub trials: Vec<usize>,
}

/// Rows of `features` for the word (stimulus) or question (task) of each trial.
pub fn stacked_rows(
    features: &FeatureMatrix,
    design: &ExperimentDesign,
    trials: &[usize],
    use_word: bool,
) -> Result<DMatrix<f64>> {
    let positions = trials
        .iter()
        .map(|&i| {
            let t = design.trial(i);
            let id = if use_word { &t.word_id } else { &t.question_id };
            features
                .position(id)
                .ok_or_else(|| Error::MissingEntity(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let v = features.values();
    Ok(DMatrix::from_fn(positions.len(), v.ncols(), |r, c| {
        v[(positions[r], c)]
    }))
}

/// Builds the per-trial inputs of a hypothesis. H42 returns the raw stimulus
/// rows; its attention is applied inside the solver.
pub fn assemble_inputs(
    spec: &HypothesisSpec,
    stimulus: &FeatureMatrix,
    task: &FeatureMatrix,
    design: &ExperimentDesign,
    trials: &[usize],
) -> Result<DesignMatrix> {
    let values = match spec.kind {
        HypothesisKind::H1 | HypothesisKind::H42 => stacked_rows(stimulus, design, trials, true)?,
        HypothesisKind::H2 => stacked_rows(task, design, trials, false)?,
        HypothesisKind::H3 => {
            let s = stacked_rows(stimulus, design, trials, true)?;
            let t = stacked_rows(task, design, trials, false)?;
            let (fs, ft) = (s.ncols(), t.ncols());
            DMatrix::from_fn(trials.len(), fs + ft, |r, c| {
                if c < fs {
                    s[(r, c)]
                } else {
                    t[(r, c - fs)]
                }
            })
        }
        HypothesisKind::H41 => {
            let aux = spec
                .aux_questions()
                .ok_or_else(|| Error::Config("H41 without auxiliary questions".into()))?;
            let s = stacked_rows(stimulus, design, trials, true)?;
            let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
            let mut out = s;
            for (r, &i) in trials.iter().enumerate() {
                let q = design.trial(i).question_id.as_str();
                if !cache.contains_key(q) {
                    cache.insert(q, precomputed_attention(&task.row(q)?, aux)?);
                }
                let a = &cache[q];
                if a.len() != out.ncols() {
                    return Err(Error::ShapeMismatch(format!(
                        "attention of length {} for {} stimulus features",
                        a.len(),
                        out.ncols()
                    )));
                }
                for (c, w) in a.iter().enumerate() {
                    out[(r, c)] *= w;
                }
            }
            out
        }
    };
    debug_assert_eq!(
        values.ncols(),
        spec.kind
            .input_width(stimulus.n_features(), task.n_features())
    );
    Ok(DesignMatrix {
        kind: spec.kind,
        values,
        trials: trials.to_vec(),
    })
}

/// The `k` highest-weighted features, ties broken by column index.
pub fn top_attended_features(
    attention: &AttentionVector,
    k: usize,
    names: &[String],
) -> Result<Vec<(String, f64)>> {
    if names.len() != attention.weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} names for {} weights",
            names.len(),
            attention.weights.len()
        )));
    }
    if k > attention.weights.len() {
        return Err(Error::Range(format!(
            "top {k} of {} features",
            attention.weights.len()
        )));
    }
    let mut order: Vec<usize> = (0..attention.weights.len()).collect();
    order.sort_by(|&a, &b| {
        attention.weights[b]
            .total_cmp(&attention.weights[a])
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|j| (names[j].clone(), attention.weights[j]))
        .collect())
}

/// Writes `task_id,feature_name,weight` rows.
pub fn write_attention_csv(
    path: &Path,
    vectors: &[AttentionVector],
    names: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Metadata(e.to_string());
    w.write_record(["task_id", "feature_name", "weight"]).map_err(io)?;
    for v in vectors {
        if v.weights.len() != names.len() {
            return Err(Error::ShapeMismatch("attention vs feature names".into()));
        }
        for (n, a) in names.iter().zip(&v.weights) {
            w.write_record([v.task_id.as_str(), n.as_str(), &a.to_string()])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Metadata(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
