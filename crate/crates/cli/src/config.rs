//! JSON run configuration. Relative paths resolve against the config file's
//! directory; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use taskfx::crossval::{CvConfig, HyperGrid, ValidationMetric};
use taskfx::evaluation::{PairFilter, TiePolicy};
use taskfx::hypotheses::HypothesisKind;
use taskfx::solvers::SolverConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub design: PathBuf,
    pub stimulus: PathBuf,
    pub task: PathBuf,
    /// Auxiliary question bank, required for H41.
    #[serde(default)]
    pub aux_questions: Option<PathBuf>,
    /// One recordings directory (`meta.json` + `data.f64le`) per subject.
    pub subjects: Vec<PathBuf>,
    /// Average this many consecutive samples into one window.
    #[serde(default)]
    pub downsample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSettings {
    pub k_w: usize,
    pub k_q: usize,
    pub n_folds: Option<usize>,
    pub n_inner_folds: Option<usize>,
    pub seed: u64,
}

impl Default for FoldSettings {
    fn default() -> Self {
        Self {
            k_w: 2,
            k_q: 2,
            n_folds: None,
            n_inner_folds: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    /// Filters reported in the timecourse and grid outputs.
    pub filters: Vec<PairFilter>,
    /// Filter used for significance tests and the timecourse plot.
    pub stats_filter: PairFilter,
    /// Filter used to rank hypotheses in the summary.
    pub ranking_filter: PairFilter,
    pub ties: TiePolicy,
    /// Windows per accuracy-grid cell.
    pub window_group: usize,
    pub fdr_q: f64,
    pub chance: f64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            filters: vec![
                PairFilter::All,
                PairFilter::SameWord,
                PairFilter::SameQuestion,
                PairFilter::FullyDisjoint,
            ],
            stats_filter: PairFilter::All,
            ranking_filter: PairFilter::All,
            ties: TiePolicy::Half,
            window_group: 1,
            fdr_q: 0.05,
            chance: 0.5,
        }
    }
}

fn all_hypotheses() -> Vec<HypothesisKind> {
    HypothesisKind::ALL.to_vec()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    #[serde(default = "all_hypotheses")]
    pub hypotheses: Vec<HypothesisKind>,
    #[serde(default)]
    pub folds: FoldSettings,
    #[serde(default)]
    pub grid: HyperGrid,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub validation_metric: ValidationMetric,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    /// Training-set sizes for the learning curve; empty skips it.
    #[serde(default)]
    pub learning_curve: Vec<usize>,
    #[serde(default = "yes")]
    pub save_models: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.design);
        fix(&mut self.data.stimulus);
        fix(&mut self.data.task);
        if let Some(p) = self.data.aux_questions.as_mut() {
            fix(p);
        }
        self.data.subjects.iter_mut().for_each(fix);
        if let Some(p) = self.output.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.hypotheses.is_empty() {
            return bad("at least one hypothesis is required".into());
        }
        let mut seen = self.hypotheses.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.hypotheses.len() {
            return bad("hypotheses must not repeat".into());
        }
        if self.data.subjects.is_empty() {
            return bad("data.subjects must list at least one directory".into());
        }
        if self.hypotheses.contains(&HypothesisKind::H41) && self.data.aux_questions.is_none() {
            return bad("H41 needs data.aux_questions".into());
        }
        if self.data.downsample == Some(0) {
            return bad("data.downsample must be >= 1".into());
        }
        let e = &self.evaluation;
        if e.filters.is_empty() {
            return bad("evaluation.filters must not be empty".into());
        }
        if e.window_group == 0 {
            return bad("evaluation.window_group must be >= 1".into());
        }
        if !(e.fdr_q > 0.0 && e.fdr_q < 1.0) {
            return bad("evaluation.fdr_q must lie in (0, 1)".into());
        }
        if !e.chance.is_finite() {
            return bad("evaluation.chance must be finite".into());
        }
        if self.learning_curve.contains(&0) {
            return bad("learning_curve sizes must be >= 1".into());
        }
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k_w: self.folds.k_w,
            k_q: self.folds.k_q,
            n_folds: self.folds.n_folds,
            n_inner_folds: self.folds.n_inner_folds,
            seed: self.folds.seed,
            metric: self.validation_metric,
            solver: self.solver.clone(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Comma-separated hypothesis list, as given to `--hypotheses`.
pub fn parse_hypotheses(s: &str) -> CliResult<Vec<HypothesisKind>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse().map_err(|e: taskfx::Error| CliError::Config(e.to_string())))
        .collect()
}

/// Comma-separated training sizes, as given to `--learning-curve`.
pub fn parse_sizes(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad training size `{p}`")))
        })
        .collect()
}
