use nalgebra::DMatrix;
use proptest::prelude::*;

use taskfx::crossval::generate_folds;
use taskfx::data::{
    downsample_time, load_brain_recordings, BrainRecordings, ExperimentDesign, FeatureMatrix,
    Role, ZScoreStats,
};
use taskfx::evaluation::{two_vs_two, Distance};
use taskfx::hypotheses::{
    assemble_inputs, precomputed_attention, softmax, HypothesisKind, HypothesisSpec,
};
use taskfx::solvers::ridge_fit;
use taskfx::stats::{bh_fdr, paired_ttest, pearson};

fn finite() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

fn names(p: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{p}{i}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn downsampling_composes(
        a in 1usize..4,
        b in 1usize..4,
        reps in 1usize..3,
        seed in any::<u64>(),
    ) {
        let t = a * b * reps;
        let (trials, sensors) = (2, 3);
        let mut x = seed;
        let values: Vec<f64> = (0..trials * sensors * t)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let raw = BrainRecordings::new(values, sensors, t, 1, names("s", sensors), vec![1, 2]).unwrap();
        let once = downsample_time(&raw, a * b).unwrap();
        let twice = downsample_time(&downsample_time(&raw, a).unwrap(), b).unwrap();
        prop_assert_eq!(once.n_windows(), twice.n_windows());
        prop_assert_eq!(once.window_ms(), twice.window_ms());
        for (u, v) in once.values().iter().zip(twice.values()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn zscore_ignores_rows_outside_fit(
        values in prop::collection::vec(finite(), 6 * 3),
        perturb in finite(),
        row in 3usize..6,
        col in 0usize..3,
    ) {
        let m = DMatrix::from_row_slice(6, 3, &values);
        let fit_rows = [0, 1, 2];
        let stats = ZScoreStats::fit(&m, &fit_rows).unwrap();
        let mut m2 = m.clone();
        m2[(row, col)] += perturb;
        let stats2 = ZScoreStats::fit(&m2, &fit_rows).unwrap();
        prop_assert_eq!(&stats, &stats2);
        let (a, b) = (stats.apply(&m).unwrap(), stats2.apply(&m2).unwrap());
        for r in fit_rows {
            prop_assert_eq!(a.row(r), b.row(r));
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact(
        values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 2 * 2 * 3),
    ) {
        let rec = BrainRecordings::new(values, 2, 3, 25, names("s", 2), vec![10, 20]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.save(dir.path()).unwrap();
        let back = load_brain_recordings(dir.path()).unwrap();
        let bits = |r: &BrainRecordings| r.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&rec), bits(&back));
        prop_assert_eq!(back.trial_ids(), rec.trial_ids());
    }

    #[test]
    fn softmax_sums_to_one(scores in prop::collection::vec(-50.0..50.0f64, 1..20)) {
        let s: f64 = softmax(&scores).iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn attention_sums_to_one_and_ignores_task_scale(
        task in prop::collection::vec(0.1..5.0f64, 4),
        aux in prop::collection::vec(0.1..5.0f64, 3 * 4),
        scale in 0.01..100.0f64,
    ) {
        let bank = FeatureMatrix::new(names("s", 3), names("t", 4), DMatrix::from_row_slice(3, 4, &aux), Role::Auxiliary).unwrap();
        let a = precomputed_attention(&task, &bank).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let scaled: Vec<f64> = task.iter().map(|v| v * scale).collect();
        let b = precomputed_attention(&scaled, &bank).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn design_rows_are_rowwise(
        stim in prop::collection::vec(finite(), 4 * 3),
        task in prop::collection::vec(finite(), 3 * 2),
        pick in prop::collection::vec(0usize..12, 1..8),
    ) {
        let s = FeatureMatrix::new(names("w", 4), names("s", 3), DMatrix::from_row_slice(4, 3, &stim), Role::Stimulus).unwrap();
        let t = FeatureMatrix::new(names("q", 3), names("t", 2), DMatrix::from_row_slice(3, 2, &task), Role::Task).unwrap();
        let design = ExperimentDesign::full_grid(&names("w", 4), &names("q", 3)).unwrap();
        let spec = HypothesisSpec::simple(HypothesisKind::H3).unwrap();
        let all: Vec<usize> = (0..12).collect();
        let full = assemble_inputs(&spec, &s, &t, &design, &all).unwrap();
        let part = assemble_inputs(&spec, &s, &t, &design, &pick).unwrap();
        for (r, &i) in pick.iter().enumerate() {
            prop_assert_eq!(part.values.row(r), full.values.row(i));
        }
    }

    #[test]
    fn ridge_norm_shrinks_with_lambda(
        x in prop::collection::vec(-3.0..3.0f64, 8 * 3),
        y in prop::collection::vec(-3.0..3.0f64, 8 * 2),
        l1 in 0.001..10.0f64,
        factor in 1.01..100.0f64,
    ) {
        let x = DMatrix::from_row_slice(8, 3, &x);
        let y = DMatrix::from_row_slice(8, 2, &y);
        let a = ridge_fit(&x, &y, l1).unwrap().weights.norm();
        let b = ridge_fit(&x, &y, l1 * factor).unwrap().weights.norm();
        prop_assert!(a >= b - 1e-12);
    }

    #[test]
    fn folds_partition_trials(nw in 3usize..8, nq in 3usize..6, seed in any::<u64>()) {
        let design = ExperimentDesign::full_grid(&names("w", nw), &names("q", nq)).unwrap();
        for f in generate_folds(&design, 2, 2, seed, None).unwrap() {
            let mut all: Vec<usize> = f.train.iter().chain(&f.test).chain(&f.excluded).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..nw * nq).collect::<Vec<_>>());
        }
    }

    #[test]
    fn two_vs_two_symmetric_and_scale_free(
        v in prop::collection::vec(finite(), 4 * 5),
        k in 0usize..4,
        scale in 0.001..1000.0f64,
    ) {
        let rows: Vec<Vec<f64>> = v.chunks(5).map(|c| c.to_vec()).collect();
        prop_assume!(rows.iter().all(|r| r.iter().any(|x| *x != 0.0)));
        let mask: Vec<usize> = (0..5).collect();
        let (p1, p2, b1, b2) = (&rows[0], &rows[1], &rows[2], &rows[3]);
        let base = two_vs_two(p1, p2, b1, b2, &mask, Distance::Cosine).unwrap();
        prop_assert_eq!(base, two_vs_two(p2, p1, b2, b1, &mask, Distance::Cosine).unwrap());
        let mut scaled = rows.clone();
        scaled[k].iter_mut().for_each(|x| *x *= scale);
        let s = two_vs_two(&scaled[0], &scaled[1], &scaled[2], &scaled[3], &mask, Distance::Cosine).unwrap();
        // Rescaling can only move a decision across an exact tie through rounding.
        let d = |a: &[f64], b: &[f64]| taskfx::evaluation::cosine_distance(a, b).unwrap();
        let margin = (d(p1, b1) + d(p2, b2) - d(p1, b2) - d(p2, b1)).abs();
        prop_assume!(margin > 1e-9);
        prop_assert_eq!(base, s);
    }

    #[test]
    fn bh_is_monotone_in_q(
        p in prop::collection::vec(0.0..=1.0f64, 1..30),
        q1 in 0.001..0.5f64,
        dq in 0.0..0.5f64,
    ) {
        let lo = bh_fdr(&p, q1);
        let hi = bh_fdr(&p, q1 + dq);
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn bh_respects_p_order(p in prop::collection::vec(0.0..=1.0f64, 1..30), q in 0.001..0.999f64) {
        let mask = bh_fdr(&p, q);
        for i in 0..p.len() {
            for j in 0..p.len() {
                if mask[i] && !mask[j] {
                    prop_assert!(p[i] < p[j]);
                }
            }
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        a in prop::collection::vec(finite(), 3..15),
        scale in 0.01..100.0f64,
        shift in finite(),
    ) {
        let b: Vec<f64> = a.iter().rev().map(|x| x * 0.5 + x.sin()).collect();
        let r = match pearson(&a, &b) {
            Ok(r) => r,
            Err(_) => return Ok(()),
        };
        let a2: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        prop_assert!((pearson(&a2, &b).unwrap() - r).abs() <= 1e-9);
    }

    #[test]
    fn paired_t_is_antisymmetric(
        a in prop::collection::vec(0.0..1.0f64, 6),
        b in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        if let (Ok(x), Ok(y)) = (paired_ttest(&a, &b), paired_ttest(&b, &a)) {
            prop_assert!((x.statistic + y.statistic).abs() <= 1e-9 * x.statistic.abs().max(1.0));
            prop_assert!((x.p_value - y.p_value).abs() <= 1e-12);
        }
    }
}
