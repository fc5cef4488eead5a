//! A fitted hypothesis: solver parameters plus the train-only normalization
//! it was fitted under, with `model.json` + `params.f64le` persistence.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{read_f64le, write_f64le, Dataset, ZScoreStats};
use crate::error::{Error, Result};
use crate::hypotheses::{assemble_inputs, stacked_rows, HypothesisKind, HypothesisSpec};
use crate::solvers::{
    attention_fit, attention_predict_rows, ridge_predict, AttentionModel, RidgeModel,
    RidgeSystem, SolverConfig,
};

/// Regularization strengths; `lambda_a` only for learned attention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Ridge(RidgeModel),
    Attention(AttentionModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub kind: HypothesisKind,
    pub params: Params,
    /// Ridge kinds: one entry for the design matrix. Learned attention:
    /// stimulus rows, then task rows.
    pub input_stats: Vec<ZScoreStats>,
    pub target_stats: ZScoreStats,
    pub stimulus_columns: Vec<String>,
    pub task_columns: Vec<String>,
    pub n_sensors: usize,
    pub n_windows: usize,
}

/// Normalized inputs of a hypothesis for a trial subset, given stats.
pub(crate) enum Inputs {
    Design(DMatrix<f64>),
    Split { stimulus: DMatrix<f64>, task: DMatrix<f64> },
}

pub(crate) fn raw_inputs(spec: &HypothesisSpec, ds: &Dataset, trials: &[usize]) -> Result<Inputs> {
    Ok(match spec.kind() {
        HypothesisKind::H42 => Inputs::Split {
            stimulus: stacked_rows(&ds.stimulus, &ds.design, trials, true)?,
            task: stacked_rows(&ds.task, &ds.design, trials, false)?,
        },
        _ => Inputs::Design(assemble_inputs(spec, &ds.stimulus, &ds.task, &ds.design, trials)?.values),
    })
}

pub(crate) fn target_rows(ds: &Dataset, trials: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(trials.len(), ds.targets.ncols(), |r, c| ds.targets[(trials[r], c)])
}

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Train-only normalization of one trial subset, kept together so a ridge
/// system can be reused across λ.
pub(crate) struct Normalized {
    pub inputs: Inputs,
    pub input_stats: Vec<ZScoreStats>,
    pub targets: DMatrix<f64>,
    pub target_stats: ZScoreStats,
}

pub(crate) fn normalize_train(spec: &HypothesisSpec, ds: &Dataset, train: &[usize]) -> Result<Normalized> {
    let rows = all_rows(train.len());
    let raw_y = target_rows(ds, train);
    let target_stats = ZScoreStats::fit(&raw_y, &rows)?;
    let targets = target_stats.apply(&raw_y)?;
    let (inputs, input_stats) = match raw_inputs(spec, ds, train)? {
        Inputs::Design(x) => {
            let s = ZScoreStats::fit(&x, &rows)?;
            (Inputs::Design(s.apply(&x)?), vec![s])
        }
        Inputs::Split { stimulus, task } => {
            let ss = ZScoreStats::fit(&stimulus, &rows)?;
            let st = ZScoreStats::fit(&task, &rows)?;
            (
                Inputs::Split {
                    stimulus: ss.apply(&stimulus)?,
                    task: st.apply(&task)?,
                },
                vec![ss, st],
            )
        }
    };
    Ok(Normalized {
        inputs,
        input_stats,
        targets,
        target_stats,
    })
}

pub(crate) fn apply_input_stats(stats: &[ZScoreStats], raw: Inputs) -> Result<Inputs> {
    match raw {
        Inputs::Design(x) => Ok(Inputs::Design(stats[0].apply(&x)?)),
        Inputs::Split { stimulus, task } => Ok(Inputs::Split {
            stimulus: stats[0].apply(&stimulus)?,
            task: stats[1].apply(&task)?,
        }),
    }
}

impl Normalized {
    /// Maps another trial subset into this normalization.
    pub fn apply(&self, spec: &HypothesisSpec, ds: &Dataset, trials: &[usize]) -> Result<(Inputs, DMatrix<f64>)> {
        let inputs = apply_input_stats(&self.input_stats, raw_inputs(spec, ds, trials)?)?;
        let targets = self.target_stats.apply(&target_rows(ds, trials))?;
        Ok((inputs, targets))
    }

    pub fn ridge_system(&self) -> Result<Option<RidgeSystem>> {
        match &self.inputs {
            Inputs::Design(x) => RidgeSystem::new(x, &self.targets).map(Some),
            Inputs::Split { .. } => Ok(None),
        }
    }

    pub fn into_model(
        self,
        spec: &HypothesisSpec,
        ds: &Dataset,
        params: Params,
    ) -> FittedModel {
        FittedModel {
            kind: spec.kind(),
            params,
            input_stats: self.input_stats,
            target_stats: self.target_stats,
            stimulus_columns: ds.stimulus.column_names().to_vec(),
            task_columns: ds.task.column_names().to_vec(),
            n_sensors: ds.n_sensors,
            n_windows: ds.n_windows,
        }
    }

    /// Fits solver parameters on the normalized data.
    pub fn fit_params(
        &self,
        system: Option<&RidgeSystem>,
        hyper: Hyperparams,
        solver: &SolverConfig,
    ) -> Result<Params> {
        match &self.inputs {
            Inputs::Design(x) => {
                let model = match system {
                    Some(s) => s.solve(hyper.lambda)?,
                    None => RidgeSystem::new(x, &self.targets)?.solve(hyper.lambda)?,
                };
                Ok(Params::Ridge(model))
            }
            Inputs::Split { stimulus, task } => {
                let lambda_a = hyper
                    .lambda_a
                    .ok_or_else(|| Error::Config("learned attention needs lambda_A".into()))?;
                Ok(Params::Attention(attention_fit(
                    stimulus,
                    task,
                    &self.targets,
                    hyper.lambda,
                    lambda_a,
                    solver,
                )?))
            }
        }
    }
}

/// Fits one hypothesis on a trial subset with train-only z-scoring.
pub fn fit_model(
    spec: &HypothesisSpec,
    ds: &Dataset,
    train: &[usize],
    hyper: Hyperparams,
    solver: &SolverConfig,
) -> Result<FittedModel> {
    let norm = normalize_train(spec, ds, train)?;
    let params = norm.fit_params(None, hyper, solver)?;
    Ok(norm.into_model(spec, ds, params))
}

pub(crate) fn predict_params(params: &Params, inputs: &Inputs) -> Result<DMatrix<f64>> {
    match (params, inputs) {
        (Params::Ridge(m), Inputs::Design(x)) => ridge_predict(m, x),
        (Params::Attention(m), Inputs::Split { stimulus, task }) => {
            attention_predict_rows(m, task, stimulus)
        }
        _ => Err(Error::Kind("parameters do not match the input layout".into())),
    }
}

impl FittedModel {
    pub fn hyperparams(&self) -> Hyperparams {
        match &self.params {
            Params::Ridge(m) => Hyperparams {
                lambda: m.lambda,
                lambda_a: None,
            },
            Params::Attention(m) => Hyperparams {
                lambda: m.lambda,
                lambda_a: Some(m.lambda_a),
            },
        }
    }

    pub(crate) fn normalize_inputs(&self, raw: Inputs) -> Result<Inputs> {
        apply_input_stats(&self.input_stats, raw)
    }

    /// Predictions in the model's normalized target space.
    pub fn predict_normalized(
        &self,
        spec: &HypothesisSpec,
        ds: &Dataset,
        trials: &[usize],
    ) -> Result<DMatrix<f64>> {
        if spec.kind() != self.kind {
            return Err(Error::Kind(format!("{} spec for a {} model", spec.kind(), self.kind)));
        }
        let inputs = self.normalize_inputs(raw_inputs(spec, ds, trials)?)?;
        predict_params(&self.params, &inputs)
    }

    /// Predictions in the original target units.
    pub fn predict(&self, spec: &HypothesisSpec, ds: &Dataset, trials: &[usize]) -> Result<DMatrix<f64>> {
        self.target_stats.invert(&self.predict_normalized(spec, ds, trials)?)
    }

    /// Observed targets under this model's target normalization.
    pub fn normalize_targets(&self, ds: &Dataset, trials: &[usize]) -> Result<DMatrix<f64>> {
        self.target_stats.apply(&target_rows(ds, trials))
    }

    /// Learned attention for a raw task vector (learned-attention models only).
    pub fn learned_attention(&self, task: &[f64]) -> Result<Vec<f64>> {
        let Params::Attention(m) = &self.params else {
            return Err(Error::Kind(format!("{} has no learned attention", self.kind)));
        };
        let t = DMatrix::from_row_slice(1, task.len(), task);
        let z = self.input_stats[1].apply(&t)?;
        m.task_attention(z.as_slice())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blocks = Vec::new();
        let mut payload = Vec::new();
        let mut push = |name: &str, m: &DMatrix<f64>| {
            blocks.push(Block {
                name: name.into(),
                rows: m.nrows(),
                cols: m.ncols(),
            });
            for r in 0..m.nrows() {
                payload.extend(m.row(r).iter());
            }
        };
        match &self.params {
            Params::Ridge(m) => push("weights", &m.weights),
            Params::Attention(m) => {
                push("weights", &m.weights);
                push("attention", &m.attention);
            }
        }
        let as_row = |v: &[f64]| DMatrix::from_row_slice(1, v.len(), v);
        for (i, s) in self.input_stats.iter().enumerate() {
            push(&format!("input_mean_{i}"), &as_row(&s.means));
            push(&format!("input_std_{i}"), &as_row(&s.stds));
        }
        push("target_mean", &as_row(&self.target_stats.means));
        push("target_std", &as_row(&self.target_stats.stds));

        let (converged, epochs) = match &self.params {
            Params::Attention(m) => (Some(m.converged), Some(m.epochs)),
            Params::Ridge(_) => (None, None),
        };
        let meta = ModelMeta {
            format: MODEL_FORMAT.into(),
            kind: self.kind,
            hyperparams: self.hyperparams(),
            n_sensors: self.n_sensors,
            n_windows: self.n_windows,
            stimulus_columns: self.stimulus_columns.clone(),
            task_columns: self.task_columns.clone(),
            converged,
            epochs,
            input_fit_rows: self.input_stats.iter().map(|s| s.fit_rows.clone()).collect(),
            target_fit_rows: self.target_stats.fit_rows.clone(),
            blocks,
        };
        let path = dir.join("model.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Metadata(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        write_f64le(&dir.join("params.f64le"), &payload)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("model.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::Metadata(e.to_string()))?;
        if meta.format != MODEL_FORMAT {
            return Err(Error::Metadata(format!("unsupported model format `{}`", meta.format)));
        }
        let payload = read_f64le(&dir.join("params.f64le"))?;
        let expected: usize = meta.blocks.iter().map(|b| b.rows * b.cols).sum();
        if payload.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "params hold {} values, blocks need {expected}",
                payload.len()
            )));
        }
        let mut offset = 0;
        let mut blocks = std::collections::HashMap::new();
        for b in &meta.blocks {
            let n = b.rows * b.cols;
            blocks.insert(
                b.name.clone(),
                DMatrix::from_row_slice(b.rows, b.cols, &payload[offset..offset + n]),
            );
            offset += n;
        }
        let mut take = |name: &str| {
            blocks
                .remove(name)
                .ok_or_else(|| Error::Metadata(format!("missing block `{name}`")))
        };
        let weights = take("weights")?;
        let params = match meta.kind {
            HypothesisKind::H42 => Params::Attention(AttentionModel {
                attention: take("attention")?,
                weights,
                lambda: meta.hyperparams.lambda,
                lambda_a: meta
                    .hyperparams
                    .lambda_a
                    .ok_or_else(|| Error::Metadata("missing lambda_a".into()))?,
                converged: meta.converged.unwrap_or(false),
                epochs: meta.epochs.unwrap_or(0),
                checkpoints: vec![],
            }),
            _ => Params::Ridge(RidgeModel {
                weights,
                lambda: meta.hyperparams.lambda,
            }),
        };
        let mut input_stats = Vec::new();
        for (i, fit_rows) in meta.input_fit_rows.into_iter().enumerate() {
            input_stats.push(ZScoreStats {
                means: take(&format!("input_mean_{i}"))?.as_slice().to_vec(),
                stds: take(&format!("input_std_{i}"))?.as_slice().to_vec(),
                fit_rows,
            });
        }
        let target_stats = ZScoreStats {
            means: take("target_mean")?.as_slice().to_vec(),
            stds: take("target_std")?.as_slice().to_vec(),
            fit_rows: meta.target_fit_rows,
        };
        Ok(Self {
            kind: meta.kind,
            params,
            input_stats,
            target_stats,
            stimulus_columns: meta.stimulus_columns,
            task_columns: meta.task_columns,
            n_sensors: meta.n_sensors,
            n_windows: meta.n_windows,
        })
    }
}

const MODEL_FORMAT: &str = "taskfx-model/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Block {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    format: String,
    kind: HypothesisKind,
    hyperparams: Hyperparams,
    n_sensors: usize,
    n_windows: usize,
    stimulus_columns: Vec<String>,
    task_columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    epochs: Option<usize>,
    input_fit_rows: Vec<Vec<usize>>,
    target_fit_rows: Vec<usize>,
    /// Row-major blocks concatenated in `params.f64le`, in this order.
    blocks: Vec<Block>,
}
