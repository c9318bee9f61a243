mod common;

use flowsentry::anomaly::{calibrate, classify, per_sample_errors, ScoreSeries};
use flowsentry::eval::{auc_roc, confusion, metrics};
use flowsentry::ingest::{clean, encode_label, split_benign, Dataset, FlowRecord, Scaler};
use flowsentry::lstm::{dropout, Mode};
use flowsentry::windowing::{coverage, make_windows, windows_containing, WindowConfig};
use flowsentry::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(n, m)| {
        prop::collection::vec(-1e6..1e6f64, n * m).prop_map(move |d| Matrix::new(n, m, d).unwrap())
    })
}

/// (n, t, m, x, xhat) with n ≥ t.
fn aggregation_case() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>)> {
    (1..=10usize, 1..=5usize)
        .prop_flat_map(|(t, m)| (Just(t), Just(m), t..=50usize))
        .prop_flat_map(|(t, m, n)| {
            let w = n - t + 1;
            (
                Just(n),
                Just(t),
                Just(m),
                prop::collection::vec(-2.0..2.0f64, n * m),
                prop::collection::vec(-2.0..2.0f64, w * t * m),
            )
        })
}

fn labelled_scores(max: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(0..=1u8, n),
            prop::collection::vec(0..=1u8, n),
            // coarse grid so ties are common
            prop::collection::vec((0..20u32).prop_map(|v| v as f64 / 4.0), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaler_round_trip(m in matrix(30, 6)) {
        let s = Scaler::fit(&m).unwrap();
        let back = s.inverse(&s.apply(&m).unwrap()).unwrap();
        for j in 0..m.cols() {
            if s.max[j] == s.min[j] {
                continue;
            }
            for i in 0..m.rows() {
                let (a, b) = (m.get(i, j), back.get(i, j));
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(s.max[j] - s.min[j]));
            }
        }
    }

    #[test]
    fn scaler_output_is_clamped(train in matrix(20, 4), shift in -1e7..1e7f64) {
        let s = Scaler::fit(&train).unwrap();
        let probe = Matrix::new(
            train.rows(),
            train.cols(),
            train.as_slice().iter().map(|v| v * 3.0 + shift).collect(),
        ).unwrap();
        let out = s.apply(&probe).unwrap();
        prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scaler_json_is_bit_exact(m in matrix(10, 5)) {
        let s = Scaler::fit(&m).unwrap();
        let names: Vec<String> = (0..m.cols()).map(|j| format!("f{j}")).collect();
        let (back, back_names) = Scaler::from_json(&s.to_json(&names).unwrap()).unwrap();
        prop_assert_eq!(back, s);
        prop_assert_eq!(back_names, names);
    }

    #[test]
    fn clean_is_idempotent(rows in prop::collection::vec(
        prop::collection::vec(prop_oneof![
            4 => -1e3..1e3f64,
            1 => Just(f64::NAN),
            1 => Just(f64::INFINITY),
            1 => Just(f64::NEG_INFINITY),
        ], 3),
        0..40,
    )) {
        let records: Vec<FlowRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(row, features)| FlowRecord { row, features, label: (row % 2) as u8 })
            .collect();
        let (once, removed) = clean(records.clone());
        let (twice, removed_again) = clean(once.clone());
        prop_assert_eq!(removed_again, 0);
        prop_assert_eq!(once.len() + removed, records.len());
        prop_assert!(once.iter().all(|r| r.features.iter().all(|v| v.is_finite())));
        prop_assert_eq!(twice.len(), once.len());
        for (a, b) in once.iter().zip(&twice) {
            prop_assert_eq!(a.row, b.row);
        }
    }

    #[test]
    fn label_encoding_is_total(raw in ".{0,12}") {
        prop_assert!(encode_label(&raw) <= 1);
    }

    #[test]
    fn benign_split_partitions_multiset(n in 2..200usize, frac in 0.05..0.95f64, seed in any::<u64>()) {
        let ds = Dataset::new(Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(), vec![0; n]).unwrap();
        let (train, held) = split_benign(&ds, frac, seed).unwrap();
        prop_assert_eq!(train.len(), (n as f64 * frac + 1e-9).floor() as usize);
        let mut all: Vec<f64> = train.matrix.as_slice().iter().chain(held.matrix.as_slice()).copied().collect();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(all.as_slice(), ds.matrix.as_slice());
    }

    #[test]
    fn window_coverage_matches_enumeration(t in 1..=12usize, extra in 0..40usize) {
        let n = t + extra;
        let cfg = WindowConfig::new(t).unwrap();
        prop_assert_eq!(cfg.window_count(n), n - t + 1);
        let mut total = 0;
        for i in 0..n {
            let hits = windows_containing(i, n, cfg).unwrap();
            let brute = (0..n - t + 1).filter(|&k| k <= i && i < k + t).count();
            prop_assert_eq!(hits.len(), brute);
            prop_assert_eq!(coverage(i, n, t), brute);
            for (k, step) in hits {
                prop_assert_eq!(k + step, i);
            }
            total += brute;
        }
        prop_assert_eq!(total, t * (n - t + 1));
    }

    #[test]
    fn windows_copy_source_rows(m in matrix(40, 4), t in 1..=8usize) {
        prop_assume!(m.rows() >= t);
        let b = make_windows(&m, WindowConfig::new(t).unwrap()).unwrap();
        for k in 0..b.len() {
            for step in 0..t {
                for j in 0..m.cols() {
                    prop_assert_eq!(b.get(k, step, j), m.get(k + step, j));
                }
            }
        }
    }

    #[test]
    fn aggregation_matches_brute_force((n, t, m, x, xhat) in aggregation_case()) {
        let src = Matrix::new(n, m, x.clone()).unwrap();
        let batch = make_windows(&src, WindowConfig::new(t).unwrap()).unwrap();
        let rec = batch.with_data(xhat.clone()).unwrap();
        let got = per_sample_errors(&src, &rec, &batch).unwrap();
        let want = common::aggregate(&x, &xhat, n, t, m);
        for (i, w) in want.iter().enumerate() {
            prop_assert!((got.scores[i] - w).abs() <= 1e-12);
            prop_assert!(got.scores[i] >= 0.0);
            prop_assert_eq!(got.coverage[i], coverage(i, n, t));
        }
    }

    #[test]
    fn calibrated_threshold_flags_nothing(scores in prop::collection::vec(0.0..10.0f64, 1..300)) {
        let s = ScoreSeries { coverage: vec![1; scores.len()], scores };
        let eta = calibrate(&s).unwrap();
        prop_assert!(classify(&s, eta).iter().all(|&v| v == 0));
    }

    #[test]
    fn raising_threshold_never_flags_more(
        scores in prop::collection::vec(0.0..10.0f64, 1..200),
        a in 0.0..10.0f64,
        b in 0.0..10.0f64,
    ) {
        let s = ScoreSeries { coverage: vec![1; scores.len()], scores };
        let (lo, hi) = (a.min(b), a.max(b));
        let flagged = |eta| classify(&s, eta).iter().filter(|&&v| v == 1).count();
        prop_assert!(flagged(hi) <= flagged(lo));
    }

    #[test]
    fn metrics_match_oracle((verdicts, labels, _) in labelled_scores(200)) {
        let c = confusion(&verdicts, &labels).unwrap();
        prop_assert_eq!((c.tp, c.tn, c.fp, c.fn_), common::counts(&verdicts, &labels));
        prop_assert_eq!(c.total(), verdicts.len() as u64);
        let got = metrics(&c).unwrap();
        let want = common::ratios(c.tp, c.tn, c.fp, c.fn_);
        let have = [got.accuracy, got.precision, got.recall, got.fpr, got.f1];
        for (h, w) in have.iter().zip(want) {
            prop_assert!((h - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn auc_matches_pairwise_oracle((_, labels, scores) in labelled_scores(200)) {
        let pos = labels.iter().filter(|&&l| l == 1).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let auc = auc_roc(&scores, &labels).unwrap();
        prop_assert!((auc - common::pairwise_auc(&scores, &labels)).abs() <= 1e-12);
        // reversing the score order mirrors the curve
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc_roc(&neg, &labels).unwrap() - (1.0 - auc)).abs() <= 1e-12);
    }

    #[test]
    fn evaluation_is_permutation_invariant(
        (verdicts, labels, scores) in labelled_scores(120),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |v: &[u8]| order.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        let (pv, pl) = (pick(&verdicts), pick(&labels));
        let ps: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        prop_assert_eq!(confusion(&verdicts, &labels).unwrap(), confusion(&pv, &pl).unwrap());
        let pos = labels.iter().filter(|&&l| l == 1).count();
        if pos > 0 && pos < labels.len() {
            prop_assert_eq!(auc_roc(&scores, &labels).unwrap(), auc_roc(&ps, &pl).unwrap());
        }
    }

    #[test]
    fn dropout_contract(x in prop::collection::vec(-5.0..5.0f64, 1..100), rate in 0.0..0.9f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inferred, mask) = dropout(&x, rate, Mode::Infer, &mut rng).unwrap();
        prop_assert_eq!(&inferred, &x);
        prop_assert!(mask.is_none());
        let (trained, mask) = dropout(&x, rate, Mode::Train, &mut rng).unwrap();
        let mask = mask.unwrap();
        let keep = 1.0 / (1.0 - rate);
        for ((o, v), k) in trained.iter().zip(&x).zip(&mask) {
            prop_assert!(*k == 0.0 || *k == keep);
            prop_assert_eq!(*o, v * k);
        }
    }
}
