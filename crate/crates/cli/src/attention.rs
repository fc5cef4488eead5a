//! The `attention` command: per-task attention of H41/H42 models, top-k
//! features and cross-model similarity.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use taskfx::data::{load_feature_matrix, FeatureMatrix, Role};
use taskfx::hypotheses::{
    align_aux_questions, precomputed_attention_bank, top_attended_features, AttentionVector,
    HypothesisKind,
};
use taskfx::model::FittedModel;
use taskfx::stats::attention_similarity;

use crate::error::{CliError, CliResult, StageExt};
use crate::report::{num, write_csv};

pub struct AttentionReport {
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<AttentionVector>>,
    pub feature_names: Vec<Vec<String>>,
    /// `(i, j, similarity)` for every pair `i < j`.
    pub similarity: Vec<(usize, usize, f64)>,
}

/// Attention of one model for every task row.
pub fn model_attention(
    model: &FittedModel,
    task: &FeatureMatrix,
    aux: Option<&FeatureMatrix>,
) -> CliResult<Vec<AttentionVector>> {
    if task.column_names() != model.task_columns.as_slice() {
        return Err(CliError::Config(
            "task feature columns differ from the ones the model was fitted on".into(),
        ));
    }
    match model.kind {
        HypothesisKind::H41 => {
            let aux = aux.ok_or_else(|| CliError::Config("H41 attention needs --aux".into()))?;
            // Only the stimulus column names matter for alignment.
            let names = &model.stimulus_columns;
            let stim = FeatureMatrix::new(
                vec!["_".into()],
                names.clone(),
                DMatrix::zeros(1, names.len()),
                Role::Stimulus,
            )
            .stage("aligning auxiliary questions")?;
            let aligned = align_aux_questions(aux, &stim, task).stage("aligning auxiliary questions")?;
            precomputed_attention_bank(task, &aligned).stage("precomputed attention")
        }
        HypothesisKind::H42 => task
            .row_ids()
            .iter()
            .map(|id| {
                let row = task.row(id).stage("task features")?;
                Ok(AttentionVector {
                    task_id: id.clone(),
                    weights: model.learned_attention(&row).stage("learned attention")?,
                })
            })
            .collect(),
        k => Err(CliError::Kind(format!("{k} models have no attention"))),
    }
}

pub fn cmd_attention(
    models: &[PathBuf],
    task_path: &Path,
    aux_path: Option<&Path>,
    top_k: usize,
    out: &Path,
) -> CliResult<AttentionReport> {
    if models.is_empty() {
        return Err(CliError::Config("pass at least one --model".into()));
    }
    let task = load_feature_matrix(task_path, Role::Task).stage(format!("loading {}", task_path.display()))?;
    let aux = match aux_path {
        Some(p) => Some(load_feature_matrix(p, Role::Auxiliary).stage(format!("loading {}", p.display()))?),
        None => None,
    };
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    let mut feature_names = Vec::new();
    for path in models {
        let model = FittedModel::load(path).stage(format!("loading model {}", path.display()))?;
        vectors.push(model_attention(&model, &task, aux.as_ref())?);
        labels.push(format!("{}:{}", path.display(), model.kind));
        feature_names.push(model.stimulus_columns.clone());
    }

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut full = Vec::new();
    let mut top = Vec::new();
    for ((label, vs), names) in labels.iter().zip(&vectors).zip(&feature_names) {
        for v in vs {
            for (n, w) in names.iter().zip(&v.weights) {
                full.push(vec![label.clone(), v.task_id.clone(), n.clone(), num(*w)]);
            }
            let k = top_k.min(names.len());
            for (rank, (n, w)) in top_attended_features(v, k, names).stage("top features")?.into_iter().enumerate() {
                top.push(vec![label.clone(), v.task_id.clone(), (rank + 1).to_string(), n, num(w)]);
            }
        }
    }
    write_csv(&out.join("attention.csv"), &["model", "task_id", "feature_name", "weight"], &full)?;
    write_csv(&out.join("attention_top.csv"), &["model", "task_id", "rank", "feature_name", "weight"], &top)?;

    let mut similarity = Vec::new();
    let mut rows = Vec::new();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let s = attention_similarity(&vectors[i], &vectors[j]).stage("attention similarity")?;
            rows.push(vec![labels[i].clone(), labels[j].clone(), num(s)]);
            similarity.push((i, j, s));
        }
    }
    write_csv(&out.join("similarity.csv"), &["model_a", "model_b", "similarity"], &rows)?;
    Ok(AttentionReport {
        labels,
        vectors,
        feature_names,
        similarity,
    })
}
