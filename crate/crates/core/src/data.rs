//! Data model and ingestion: trial design, feature tables, brain recordings,
//! time-window downsampling and train-only z-scoring.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One presentation of a (word, question) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: i64,
    pub word_id: String,
    pub question_id: String,
}

/// The trial table. Word and question vocabularies are kept in first-seen
/// order unless given explicitly.
#[derive(Debug, Clone)]
pub struct ExperimentDesign {
    trials: Vec<Trial>,
    words: Vec<String>,
    questions: Vec<String>,
    word_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
    trial_index: HashMap<i64, usize>,
    // per trial: (word position, question position)
    coords: Vec<(usize, usize)>,
}

impl ExperimentDesign {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut words = Vec::new();
        let mut questions = Vec::new();
        let mut seen_w = std::collections::HashSet::new();
        let mut seen_q = std::collections::HashSet::new();
        for t in &trials {
            if seen_w.insert(t.word_id.clone()) {
                words.push(t.word_id.clone());
            }
            if seen_q.insert(t.question_id.clone()) {
                questions.push(t.question_id.clone());
            }
        }
        Self::with_vocabulary(trials, words, questions)
    }

    pub fn with_vocabulary(
        trials: Vec<Trial>,
        words: Vec<String>,
        questions: Vec<String>,
    ) -> Result<Self> {
        let word_index = unique_index(&words)?;
        let question_index = unique_index(&questions)?;
        let mut trial_index = HashMap::with_capacity(trials.len());
        let mut pairs = std::collections::HashSet::with_capacity(trials.len());
        let mut coords = Vec::with_capacity(trials.len());
        for (i, t) in trials.iter().enumerate() {
            if trial_index.insert(t.trial_id, i).is_some() {
                return Err(Error::DuplicateId(format!("trial {}", t.trial_id)));
            }
            let w = *word_index
                .get(&t.word_id)
                .ok_or_else(|| Error::MissingEntity(t.word_id.clone()))?;
            let q = *question_index
                .get(&t.question_id)
                .ok_or_else(|| Error::MissingEntity(t.question_id.clone()))?;
            if !pairs.insert((w, q)) {
                return Err(Error::DuplicateId(format!(
                    "pair ({}, {})",
                    t.word_id, t.question_id
                )));
            }
            coords.push((w, q));
        }
        Ok(Self {
            trials,
            words,
            questions,
            word_index,
            question_index,
            trial_index,
            coords,
        })
    }

    /// Every word paired with every question; trial ids count up word-major.
    pub fn full_grid(words: &[String], questions: &[String]) -> Result<Self> {
        let mut trials = Vec::with_capacity(words.len() * questions.len());
        for w in words {
            for q in questions {
                trials.push(Trial {
                    trial_id: trials.len() as i64,
                    word_id: w.clone(),
                    question_id: q.clone(),
                });
            }
        }
        Self::with_vocabulary(trials, words.to_vec(), questions.to_vec())
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn trial(&self, idx: usize) -> &Trial {
        &self.trials[idx]
    }

    /// Positions of the trial's word and question in the vocabularies.
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        self.coords[idx]
    }

    pub fn trial_position(&self, trial_id: i64) -> Option<usize> {
        self.trial_index.get(&trial_id).copied()
    }

    pub fn word_position(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    pub fn question_position(&self, question: &str) -> Option<usize> {
        self.question_index.get(question).copied()
    }

    /// Keeps only the listed trial positions, preserving vocabularies.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let trials = keep.iter().map(|&i| self.trials[i].clone()).collect();
        Self::with_vocabulary(trials, self.words.clone(), self.questions.clone())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("trial_id,word_id,question_id\n");
        for t in &self.trials {
            out.push_str(&format!(
                "{},{},{}\n",
                t.trial_id,
                csv_field(&t.word_id),
                csv_field(&t.question_id)
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn unique_index(ids: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(index)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(err: csv::Error) -> Error {
    let row = err
        .position()
        .map(|p| p.record() as usize)
        .unwrap_or_default();
    match err.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => Error::Parse {
            row,
            col: *len as usize,
            msg: "ragged row".into(),
        },
        _ => Error::Parse {
            row,
            col: 0,
            msg: err.to_string(),
        },
    }
}

/// Reads a design CSV with header `trial_id,word_id,question_id`.
pub fn load_design(path: &Path) -> Result<ExperimentDesign> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["trial_id", "word_id", "question_id"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: format!("expected header {:?}", expected.join(",")),
        });
    }
    let mut trials = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let trial_id = rec[0].parse::<i64>().map_err(|e| Error::Parse {
            row: row + 1,
            col: 0,
            msg: e.to_string(),
        })?;
        trials.push(Trial {
            trial_id,
            word_id: rec[1].to_string(),
            question_id: rec[2].to_string(),
        });
    }
    ExperimentDesign::new(trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Stimulus,
    Task,
    /// Non-experimental question bank used for precomputed attention.
    Auxiliary,
}

/// Entities × features table with named rows and columns.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    row_ids: Vec<String>,
    column_names: Vec<String>,
    values: DMatrix<f64>,
    role: Role,
    row_index: HashMap<String, usize>,
}

impl FeatureMatrix {
    pub fn new(
        row_ids: Vec<String>,
        column_names: Vec<String>,
        values: DMatrix<f64>,
        role: Role,
    ) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.ncols() != column_names.len() {
            return Err(Error::ShapeMismatch(format!(
                "values {}x{} vs {} rows, {} columns",
                values.nrows(),
                values.ncols(),
                row_ids.len(),
                column_names.len()
            )));
        }
        if row_ids.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let row_index = unique_index(&row_ids)?;
        unique_index(&column_names)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("feature matrix".into()));
        }
        Ok(Self {
            row_ids,
            column_names,
            values,
            role,
            row_index,
        })
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.row_index.get(id).copied()
    }

    pub fn row(&self, id: &str) -> Result<Vec<f64>> {
        let i = self
            .position(id)
            .ok_or_else(|| Error::MissingEntity(id.to_string()))?;
        Ok(self.values.row(i).iter().copied().collect())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id");
        for c in &self.column_names {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (i, id) in self.row_ids.iter().enumerate() {
            out.push_str(&csv_field(id));
            for v in self.values.row(i).iter() {
                // Display for f64 prints the shortest round-trip representation.
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a feature CSV with header `id,f1,...,fk`.
pub fn load_feature_matrix(path: &Path, role: Role) -> Result<FeatureMatrix> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            row: 0,
            col: headers.len(),
            msg: "header needs an id column and at least one feature".into(),
        });
    }
    let column_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        row_ids.push(rec[0].to_string());
        for col in 1..rec.len() {
            let v = rec[col].parse::<f64>().map_err(|_| Error::Parse {
                row: row + 1,
                col,
                msg: format!("non-numeric cell `{}`", &rec[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row + 1,
                    col,
                    msg: "non-finite cell".into(),
                });
            }
            data.push(v);
        }
    }
    if row_ids.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let values = DMatrix::from_row_slice(row_ids.len(), column_names.len(), &data);
    FeatureMatrix::new(row_ids, column_names, values, role)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingMeta {
    pub n_trials: usize,
    pub n_sensors: usize,
    pub n_windows: usize,
    pub window_ms: u32,
    pub sensor_labels: Vec<String>,
    pub trial_ids: Vec<i64>,
}

/// Trial-level responses, trials × sensors × windows, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainRecordings {
    values: Vec<f64>,
    n_trials: usize,
    n_sensors: usize,
    n_windows: usize,
    window_ms: u32,
    sensor_labels: Vec<String>,
    trial_ids: Vec<i64>,
}

impl BrainRecordings {
    pub fn new(
        values: Vec<f64>,
        n_sensors: usize,
        n_windows: usize,
        window_ms: u32,
        sensor_labels: Vec<String>,
        trial_ids: Vec<i64>,
    ) -> Result<Self> {
        let n_trials = trial_ids.len();
        if sensor_labels.len() != n_sensors {
            return Err(Error::ShapeMismatch(format!(
                "{} sensor labels for {} sensors",
                sensor_labels.len(),
                n_sensors
            )));
        }
        if n_sensors == 0 || n_windows == 0 || window_ms == 0 {
            return Err(Error::Metadata(
                "sensor count, window count and window_ms must be positive".into(),
            ));
        }
        if values.len() != n_trials * n_sensors * n_windows {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {}x{}x{}",
                values.len(),
                n_trials,
                n_sensors,
                n_windows
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("brain recordings".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(n_trials);
        for id in &trial_ids {
            if !seen.insert(*id) {
                return Err(Error::DuplicateId(format!("trial {id}")));
            }
        }
        Ok(Self {
            values,
            n_trials,
            n_sensors,
            n_windows,
            window_ms,
            sensor_labels,
            trial_ids,
        })
    }

    /// Builds recordings from a trials × (sensors·windows) matrix.
    pub fn from_matrix(
        m: &DMatrix<f64>,
        n_sensors: usize,
        n_windows: usize,
        window_ms: u32,
        sensor_labels: Vec<String>,
        trial_ids: Vec<i64>,
    ) -> Result<Self> {
        if m.ncols() != n_sensors * n_windows || m.nrows() != trial_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "matrix {}x{} for {} trials of {}x{}",
                m.nrows(),
                m.ncols(),
                trial_ids.len(),
                n_sensors,
                n_windows
            )));
        }
        let mut values = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            values.extend(m.row(r).iter());
        }
        Self::new(values, n_sensors, n_windows, window_ms, sensor_labels, trial_ids)
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn n_outputs(&self) -> usize {
        self.n_sensors * self.n_windows
    }

    pub fn window_ms(&self) -> u32 {
        self.window_ms
    }

    pub fn sensor_labels(&self) -> &[String] {
        &self.sensor_labels
    }

    pub fn trial_ids(&self) -> &[i64] {
        &self.trial_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, trial: usize, sensor: usize, window: usize) -> f64 {
        self.values[(trial * self.n_sensors + sensor) * self.n_windows + window]
    }

    /// Flattened response of one trial; output index is `sensor * T + window`.
    pub fn trial_row(&self, trial: usize) -> &[f64] {
        let m = self.n_outputs();
        &self.values[trial * m..(trial + 1) * m]
    }

    /// Trials × (sensors·windows) matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_trials, self.n_outputs(), &self.values)
    }

    pub fn meta(&self) -> RecordingMeta {
        RecordingMeta {
            n_trials: self.n_trials,
            n_sensors: self.n_sensors,
            n_windows: self.n_windows,
            window_ms: self.window_ms,
            sensor_labels: self.sensor_labels.clone(),
            trial_ids: self.trial_ids.clone(),
        }
    }

    /// Writes `meta.json` and `data.f64le` into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::Metadata(e.to_string()))?;
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        let data_path = dir.join("data.f64le");
        write_f64le(&data_path, &self.values)
    }
}

pub(crate) fn write_f64le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f64le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Reads `meta.json` + `data.f64le` from a directory.
pub fn load_brain_recordings(dir: &Path) -> Result<BrainRecordings> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: RecordingMeta =
        serde_json::from_str(&text).map_err(|e| Error::Metadata(e.to_string()))?;
    if meta.trial_ids.len() != meta.n_trials {
        return Err(Error::Metadata(format!(
            "n_trials = {} but {} trial ids",
            meta.n_trials,
            meta.trial_ids.len()
        )));
    }
    let data_path = dir.join("data.f64le");
    let len = fs::metadata(&data_path)
        .map_err(|e| Error::io(&data_path, e))?
        .len();
    let expected = 8 * meta.n_trials * meta.n_sensors * meta.n_windows;
    if len as usize != expected {
        return Err(Error::ShapeMismatch(format!(
            "payload has {len} bytes, metadata implies {expected}"
        )));
    }
    let values = read_f64le(&data_path)?;
    BrainRecordings::new(
        values,
        meta.n_sensors,
        meta.n_windows,
        meta.window_ms,
        meta.sensor_labels,
        meta.trial_ids,
    )
}

/// Averages non-overlapping windows of `window` samples along time.
pub fn downsample_time(raw: &BrainRecordings, window: usize) -> Result<BrainRecordings> {
    if window == 0 {
        return Err(Error::Window("window must be positive".into()));
    }
    if raw.n_windows % window != 0 {
        return Err(Error::Window(format!(
            "{} samples do not split into windows of {}",
            raw.n_windows, window
        )));
    }
    let out_t = raw.n_windows / window;
    let mut values = Vec::with_capacity(raw.n_trials * raw.n_sensors * out_t);
    for series in raw.values.chunks_exact(raw.n_windows) {
        for chunk in series.chunks_exact(window) {
            values.push(chunk.iter().sum::<f64>() / window as f64);
        }
    }
    BrainRecordings::new(
        values,
        raw.n_sensors,
        out_t,
        raw.window_ms * window as u32,
        raw.sensor_labels.clone(),
        raw.trial_ids.clone(),
    )
}

/// Column means and population standard deviations over a row subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub fit_rows: Vec<usize>,
}

impl ZScoreStats {
    pub fn fit(values: &DMatrix<f64>, fit_rows: &[usize]) -> Result<Self> {
        if fit_rows.is_empty() {
            return Err(Error::EmptyFit);
        }
        if let Some(&r) = fit_rows.iter().find(|&&r| r >= values.nrows()) {
            return Err(Error::Range(format!(
                "fit row {r} outside {} rows",
                values.nrows()
            )));
        }
        let n = fit_rows.len() as f64;
        let mut means = Vec::with_capacity(values.ncols());
        let mut stds = Vec::with_capacity(values.ncols());
        for c in 0..values.ncols() {
            let col = values.column(c);
            let mean = fit_rows.iter().map(|&r| col[r]).sum::<f64>() / n;
            let var = fit_rows
                .iter()
                .map(|&r| (col[r] - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            // Rounding in the mean leaves a tiny residual spread on constant columns.
            let scale = mean.abs().max(1.0);
            means.push(mean);
            stds.push(if std <= 1e-12 * scale { 0.0 } else { std });
        }
        Ok(Self {
            means,
            stds,
            fit_rows: fit_rows.to_vec(),
        })
    }

    /// Stats over every row.
    pub fn fit_all(values: &DMatrix<f64>) -> Result<Self> {
        let rows: Vec<usize> = (0..values.nrows()).collect();
        Self::fit(values, &rows)
    }

    pub fn is_constant(&self, col: usize) -> bool {
        self.stds[col] == 0.0
    }

    pub fn n_columns(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(values.ncols())?;
        let mut out = values.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[c], self.stds[c]);
            for v in col.iter_mut() {
                *v = if s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }

    /// Inverse of [`apply`](Self::apply); constant columns map back to their mean.
    pub fn invert(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(values.ncols())?;
        let mut out = values.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[c], self.stds[c]);
            for v in col.iter_mut() {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, ncols: usize) -> Result<()> {
        if ncols != self.means.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns, stats have {}",
                ncols,
                self.means.len()
            )));
        }
        Ok(())
    }
}

/// Design, features and one subject's recordings, aligned by trial.
///
/// Design trials without brain data are dropped; recordings for trials not in
/// the design are an error.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub design: ExperimentDesign,
    pub stimulus: FeatureMatrix,
    pub task: FeatureMatrix,
    pub aux_questions: Option<FeatureMatrix>,
    /// Trials × (sensors·windows), rows aligned to `design.trials()`.
    pub targets: DMatrix<f64>,
    pub n_sensors: usize,
    pub n_windows: usize,
    pub sensor_labels: Vec<String>,
    pub window_ms: u32,
    pub dropped_trials: Vec<i64>,
}

impl Dataset {
    pub fn assemble(
        design: &ExperimentDesign,
        stimulus: FeatureMatrix,
        task: FeatureMatrix,
        aux_questions: Option<FeatureMatrix>,
        brain: &BrainRecordings,
    ) -> Result<Self> {
        let mut brain_pos = HashMap::with_capacity(brain.n_trials());
        for (i, id) in brain.trial_ids().iter().enumerate() {
            if design.trial_position(*id).is_none() {
                return Err(Error::MissingEntity(format!("trial {id} (not in design)")));
            }
            brain_pos.insert(*id, i);
        }
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for (i, t) in design.trials().iter().enumerate() {
            if brain_pos.contains_key(&t.trial_id) {
                keep.push(i);
            } else {
                dropped.push(t.trial_id);
            }
        }
        let design = design.restrict(&keep)?;
        for w in design.words() {
            stimulus.position(w).ok_or_else(|| Error::MissingEntity(w.clone()))?;
        }
        for q in design.questions() {
            task.position(q).ok_or_else(|| Error::MissingEntity(q.clone()))?;
        }
        let m = brain.n_outputs();
        let mut targets = DMatrix::zeros(design.n_trials(), m);
        for (r, t) in design.trials().iter().enumerate() {
            let row = brain.trial_row(brain_pos[&t.trial_id]);
            for (c, v) in row.iter().enumerate() {
                targets[(r, c)] = *v;
            }
        }
        Ok(Self {
            design,
            stimulus,
            task,
            aux_questions,
            targets,
            n_sensors: brain.n_sensors(),
            n_windows: brain.n_windows(),
            sensor_labels: brain.sensor_labels().to_vec(),
            window_ms: brain.window_ms(),
            dropped_trials: dropped,
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.n_sensors * self.n_windows
    }

    /// Copy with targets replaced, e.g. for shuffled-target controls.
    pub fn with_targets(&self, targets: DMatrix<f64>) -> Result<Self> {
        if targets.shape() != self.targets.shape() {
            return Err(Error::ShapeMismatch("replacement targets".into()));
        }
        let mut out = self.clone();
        out.targets = targets;
        Ok(out)
    }
}
