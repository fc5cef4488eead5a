use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;

use taskfx::crossval::{CvConfig, HyperGrid};
use taskfx::evaluation::PairFilter;
use taskfx::hypotheses::HypothesisKind;
use taskfx::synth::*;

fn config(kind: HypothesisKind) -> GenerativeConfig {
    GenerativeConfig {
        kind,
        n_words: 6,
        n_questions: 4,
        f_s: 3,
        f_t: 2,
        l: 2,
        t_windows: 2,
        noise_sigma: 0.0,
        seed: 21,
        ..Default::default()
    }
}

// Direct loop over trials, independent of the pipeline's row assembly.
fn by_hand(d: &SynthDataset) -> DMatrix<f64> {
    let t = &d.truth;
    let m = t.w_s.ncols();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    DMatrix::from_fn(d.design.n_trials(), m, |r, c| {
        let (w, q) = d.design.coords(r);
        let s: Vec<f64> = d.stimulus.values().row(w).iter().copied().collect();
        let tq: Vec<f64> = d.task.values().row(q).iter().copied().collect();
        let stim_part = |gate: &dyn Fn(usize) -> f64| (0..s.len()).map(|j| gate(j) * s[j] * t.w_s[(j, c)]).sum::<f64>();
        let task_part = (0..tq.len()).map(|k| tq[k] * t.w_t[(k, c)]).sum::<f64>();
        match t.kind {
            HypothesisKind::H1 => stim_part(&|_| 1.0),
            HypothesisKind::H2 => task_part,
            HypothesisKind::H3 => stim_part(&|_| 1.0) + task_part,
            HypothesisKind::H41 => {
                let aux = d.aux_questions.values();
                let cos: Vec<f64> = (0..aux.nrows())
                    .map(|j| {
                        let a: Vec<f64> = aux.row(j).iter().copied().collect();
                        let dot: f64 = a.iter().zip(&tq).map(|(x, y)| x * y).sum();
                        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * tq.iter().map(|x| x * x).sum::<f64>().sqrt())
                    })
                    .collect();
                let z: f64 = cos.iter().map(|v| v.exp()).sum();
                stim_part(&|j| cos[j].exp() / z)
            }
            HypothesisKind::H42 => stim_part(&|j| sig((0..tq.len()).map(|k| tq[k] * t.attention[(k, j)]).sum())),
        }
    })
}

#[test]
fn forward_matches_hand_computation() {
    for kind in HypothesisKind::ALL {
        let d = generate_dataset(&config(kind)).unwrap();
        assert_abs_diff_eq!(d.clean, by_hand(&d), epsilon = 1e-12);
        assert_eq!(d.subjects[0].to_matrix(), d.clean);
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let mut c = config(HypothesisKind::H42);
    c.noise_sigma = 0.3;
    c.n_subjects = 2;
    let (a, b) = (generate_dataset(&c).unwrap(), generate_dataset(&c).unwrap());
    for k in 0..2 {
        let bits = |d: &SynthDataset| d.subjects[k].values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
    assert_ne!(a.subjects[0].values(), a.subjects[1].values());
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.save(da.path()).unwrap();
    b.save(db.path()).unwrap();
    for f in ["stimulus_features.csv", "task_features.csv", "aux_questions.csv", "design.csv", "subjects/subject_1/data.f64le", "subjects/subject_1/meta.json", "subjects/subject_0/truth.json"] {
        assert_eq!(std::fs::read(da.path().join(f)).unwrap(), std::fs::read(db.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn saved_data_loads_back_into_the_pipeline() {
    let mut c = config(HypothesisKind::H3);
    c.noise_sigma = 0.2;
    let d = generate_dataset(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    d.save(dir.path()).unwrap();
    let p = dir.path();
    use taskfx::data::*;
    let design = load_design(&p.join("design.csv")).unwrap();
    let stim = load_feature_matrix(&p.join("stimulus_features.csv"), Role::Stimulus).unwrap();
    let task = load_feature_matrix(&p.join("task_features.csv"), Role::Task).unwrap();
    let brain = load_brain_recordings(&p.join("subjects/subject_0")).unwrap();
    let ds = Dataset::assemble(&design, stim, task, None, &brain).unwrap();
    assert_eq!(ds.targets, d.dataset(0).unwrap().targets);
    assert_eq!(ds.stimulus.values(), d.stimulus.values());
}

#[test]
fn accuracy_does_not_rise_with_noise() {
    let grid = HyperGrid {
        lambdas: vec![0.1, 10.0, 1000.0],
        lambda_as: vec![1.0],
    };
    let cv = CvConfig {
        n_folds: Some(20),
        ..Default::default()
    };
    let mut prev = f64::INFINITY;
    for sigma in [1.0, 3.0, 9.0] {
        let mut total = 0.0;
        for seed in 0..3 {
            let d = generate_dataset(&GenerativeConfig {
                kind: HypothesisKind::H1,
                n_words: 12,
                n_questions: 6,
                f_s: 6,
                f_t: 4,
                l: 4,
                t_windows: 4,
                noise_sigma: sigma,
                seed,
                ..Default::default()
            })
            .unwrap();
            let r = model_recovery(&d, &[HypothesisKind::H1], &grid, &cv, PairFilter::FullyDisjoint).unwrap();
            total += r.accuracies[0].1 / 3.0;
        }
        assert!(total <= prev + 0.02, "sigma {sigma}: {total} after {prev}");
        prev = total;
    }
}

#[test]
fn additive_data_ranks_the_additive_model_first() {
    let d = generate_dataset(&GenerativeConfig {
        kind: HypothesisKind::H3,
        n_words: 12,
        n_questions: 8,
        f_s: 5,
        f_t: 4,
        l: 4,
        t_windows: 4,
        noise_sigma: 4.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let kinds = [HypothesisKind::H1, HypothesisKind::H2, HypothesisKind::H3];
    let cv = CvConfig {
        n_folds: Some(24),
        ..Default::default()
    };
    let r = model_recovery(&d, &kinds, &HyperGrid::default(), &cv, PairFilter::FullyDisjoint).unwrap();
    assert_eq!(r.ranking[0], HypothesisKind::H3, "{r:?}");
    let h3 = r.accuracy(HypothesisKind::H3).unwrap();
    assert!(h3 > r.accuracy(HypothesisKind::H1).unwrap() && h3 > r.accuracy(HypothesisKind::H2).unwrap());
    assert_eq!(r.accuracies.len(), 3);
}
