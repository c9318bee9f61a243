//! Brute-force reference implementations shared by the integration tests.
//! Each one is written independently of the library code it checks.

#![allow(dead_code)]

/// Per-sample score by scanning every window start and keeping the ones
/// that contain the sample. `x` is n×m row-major, `xhat` is (n−t+1)×t×m.
pub fn aggregate(x: &[f64], xhat: &[f64], n: usize, t: usize, m: usize) -> Vec<f64> {
    let windows = n - t + 1;
    (0..n)
        .map(|i| {
            let mut per_feature = vec![0.0; m];
            let mut hits = 0usize;
            for k in 0..windows {
                if k <= i && i < k + t {
                    hits += 1;
                    for j in 0..m {
                        per_feature[j] += (xhat[(k * t + (i - k)) * m + j] - x[i * m + j]).abs();
                    }
                }
            }
            per_feature.iter().map(|e| e / hits as f64).sum::<f64>() / m as f64
        })
        .collect()
}

/// (tp, tn, fp, fn) by direct enumeration.
pub fn counts(verdicts: &[u8], labels: &[u8]) -> (u64, u64, u64, u64) {
    let hit = |v: u8, l: u8| verdicts.iter().zip(labels).filter(|(&a, &b)| a == v && b == l).count() as u64;
    (hit(1, 1), hit(0, 0), hit(1, 0), hit(0, 1))
}

/// accuracy, precision, recall, fpr, f1. Undefined ratios are 0.
pub fn ratios(tp: u64, tn: u64, fp: u64, fn_: u64) -> [f64; 5] {
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = div(tp, tp + fp);
    let r = div(tp, tp + fn_);
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    [div(tp + tn, tp + tn + fp + fn_), p, r, div(fp, fp + tn), f1]
}

/// Pairwise AUC: share of (positive, negative) pairs ordered correctly,
/// ties worth one half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (k, &sk) in scores.iter().enumerate() {
            if labels[k] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sk {
                wins += 1.0;
            } else if si == sk {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
