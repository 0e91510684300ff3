//! Classification metrics, stratified cross-validation splits, confidence
//! filtering, and fold aggregation. Basal-like is the positive class
//! throughout: sensitivity is recall on basal, specificity recall on
//! classical.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seeds;
use crate::stats;

/// One sample's ground truth (basal = true) and predicted basal probability.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub truth: bool,
    pub prob: f64,
}

impl PredictionRecord {
    pub fn new(sample_id: impl Into<String>, truth: bool, prob: f64) -> Result<Self> {
        if !prob.is_finite() || !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidInput(format!(
                "probability {prob} outside [0, 1]"
            )));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            truth,
            prob,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub n: usize,
}

/// k disjoint sample-id lists covering the cohort, stratified by class.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FoldSpec {
    pub folds: Vec<Vec<String>>,
}

/// Seeded stratified k-fold split. Per-class counts per fold stay within
/// one of the proportional share, and fold sizes within one of each other.
pub fn stratified_kfold(labels: &[(String, bool)], k: usize, seed: u64) -> Result<FoldSpec> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be >= 2, got {k}")));
    }
    let mut classes: Vec<(bool, Vec<String>)> = vec![(false, Vec::new()), (true, Vec::new())];
    for (id, label) in labels {
        classes[usize::from(*label)].1.push(id.clone());
    }
    for (class, ids) in &classes {
        if ids.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {} has {} members, fewer than k = {k}",
                if *class { "BASAL" } else { "CLASSICAL" },
                ids.len()
            )));
        }
    }
    // larger class first so remainders balance fold sizes
    classes.sort_by_key(|(class, ids)| (std::cmp::Reverse(ids.len()), *class));

    let mut rng = seeds::stream(seed, "split");
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut load = vec![0usize; k];
    for (_, mut ids) in classes {
        ids.shuffle(&mut rng);
        let base = ids.len() / k;
        let rem = ids.len() % k;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&f| (load[f], f));
        let mut counts = vec![base; k];
        for &f in order.iter().take(rem) {
            counts[f] += 1;
        }
        let mut it = ids.into_iter();
        for f in 0..k {
            for _ in 0..counts[f] {
                folds[f].push(it.next().unwrap());
                load[f] += 1;
            }
        }
    }
    Ok(FoldSpec { folds })
}

/// Area under the ROC curve via midranks; ties count one half.
pub fn roc_auc(records: &[PredictionRecord]) -> Result<f64> {
    let n_pos = records.iter().filter(|r| r.truth).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(
            "AUC undefined: both classes must be present".into(),
        ));
    }
    let probs: Vec<f64> = records.iter().map(|r| r.prob).collect();
    let (ranks, _) = stats::average_ranks(&probs);
    let rank_sum_pos: f64 = records
        .iter()
        .zip(&ranks)
        .filter(|(r, _)| r.truth)
        .map(|(_, rank)| rank)
        .sum();
    let n1 = n_pos as f64;
    Ok((rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n_neg as f64))
}

/// Threshold metrics at `threshold` (prob >= threshold predicts basal),
/// plus AUC when both classes are present (NaN otherwise).
pub fn confusion_metrics(records: &[PredictionRecord], threshold: f64) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no prediction records".into()));
    }
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        let predicted_basal = r.prob >= threshold;
        match (r.truth, predicted_basal) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let rate = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let sensitivity = rate(tp, tp + fn_);
    let specificity = rate(tn, tn + fp);
    let auc = if tp + fn_ > 0 && tn + fp > 0 {
        roc_auc(records)?
    } else {
        f64::NAN
    };
    Ok(MetricsReport {
        auc,
        accuracy: rate(tp + tn, records.len()),
        balanced_accuracy: (sensitivity + specificity) / 2.0,
        sensitivity,
        specificity,
        n: records.len(),
    })
}

/// Keep records with prob <= lo or prob >= hi; also return the retained
/// fraction.
pub fn filter_high_confidence(
    records: &[PredictionRecord],
    lo: f64,
    hi: f64,
) -> Result<(Vec<PredictionRecord>, f64)> {
    if lo > hi {
        return Err(Error::InvalidInput(format!(
            "confidence bounds lo {lo} > hi {hi}"
        )));
    }
    let subset: Vec<PredictionRecord> = records
        .iter()
        .filter(|r| r.prob <= lo || r.prob >= hi)
        .cloned()
        .collect();
    let fraction = if records.is_empty() {
        0.0
    } else {
        subset.len() as f64 / records.len() as f64
    };
    Ok((subset, fraction))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MarginReport {
    /// |prob - 0.5| per record, in input order.
    pub margins: Vec<f64>,
    pub median_correct: Option<f64>,
    pub median_incorrect: Option<f64>,
}

/// Decision margins and their medians split by prediction correctness at
/// the 0.5 threshold.
pub fn decision_margin(records: &[PredictionRecord]) -> MarginReport {
    let margins: Vec<f64> = records.iter().map(|r| (r.prob - 0.5).abs()).collect();
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (r, &m) in records.iter().zip(&margins) {
        if (r.prob >= 0.5) == r.truth {
            correct.push(m);
        } else {
            incorrect.push(m);
        }
    }
    let med = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(stats::median(v))
        }
    };
    MarginReport {
        median_correct: med(&correct),
        median_incorrect: med(&incorrect),
        margins,
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MannWhitney {
    /// min(U_A, U_B), the conventionally reported statistic.
    pub u: f64,
    /// U of the first group; u_first / (n_a * n_b) is the AUC identity.
    pub u_first: f64,
    pub z: f64,
    /// Two-sided p from the tie-corrected normal approximation with
    /// continuity correction.
    pub p: f64,
    /// Normal approximation is shaky below ~8 per group.
    pub normal_approx_unreliable: bool,
}

/// Two-sided Mann-Whitney U test via midranks.
pub fn mann_whitney_u(group_a: &[f64], group_b: &[f64]) -> Result<MannWhitney> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::InvalidInput(
            "Mann-Whitney requires two non-empty groups".into(),
        ));
    }
    let n_a = group_a.len() as f64;
    let n_b = group_b.len() as f64;
    let pooled: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in group".into()));
    }
    let (ranks, tie_sizes) = stats::average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..group_a.len()].iter().sum();
    let u_a = rank_sum_a - n_a * (n_a + 1.0) / 2.0;
    let u_b = n_a * n_b - u_a;
    let n = n_a + n_b;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum::<f64>()
        / (n * (n - 1.0));
    let var = n_a * n_b / 12.0 * ((n + 1.0) - tie_term);
    let mu = n_a * n_b / 2.0;
    let (z, p) = if var <= 0.0 {
        (0.0, 1.0) // complete tie
    } else {
        let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (z, stats::normal_two_sided_p(z))
    };
    Ok(MannWhitney {
        u: u_a.min(u_b),
        u_first: u_a,
        z,
        p,
        normal_approx_unreliable: group_a.len().min(group_b.len()) < 8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AggregateReport {
    pub auc: MeanSd,
    pub accuracy: MeanSd,
    pub balanced_accuracy: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub n_folds: usize,
}

/// Mean and sample standard deviation (ddof = 1) of each metric across
/// folds.
pub fn aggregate_folds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "aggregation needs at least 2 fold reports, got {}",
            reports.len()
        )));
    }
    let stat = |f: fn(&MetricsReport) -> f64| {
        let xs: Vec<f64> = reports.iter().map(f).collect();
        MeanSd {
            mean: stats::mean(&xs),
            sd: stats::sample_sd(&xs),
        }
    };
    Ok(AggregateReport {
        auc: stat(|r| r.auc),
        accuracy: stat(|r| r.accuracy),
        balanced_accuracy: stat(|r| r.balanced_accuracy),
        sensitivity: stat(|r| r.sensitivity),
        specificity: stat(|r| r.specificity),
        n_folds: reports.len(),
    })
}

/// Per-sample concordance table: truth, prob, margin, confidence band.
pub fn write_concordance_tsv(
    path: &Path,
    records: &[PredictionRecord],
    lo: f64,
    hi: f64,
) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut res = || -> std::io::Result<()> {
        writeln!(f, "sample_id\ttruth\tprob\tmargin\tconfidence")?;
        for r in records {
            let band = if r.prob <= lo || r.prob >= hi {
                "high"
            } else {
                "low"
            };
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}",
                r.sample_id,
                if r.truth { "BASAL" } else { "CLASSICAL" },
                r.prob,
                (r.prob - 0.5).abs(),
                band
            )?;
        }
        f.flush()
    };
    res().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn recs(items: &[(bool, f64)]) -> Vec<PredictionRecord> {
        items
            .iter()
            .enumerate()
            .map(|(i, &(truth, prob))| PredictionRecord::new(format!("s{i}"), truth, prob).unwrap())
            .collect()
    }

    /// O(n^2) pairwise AUC oracle.
    fn auc_pair_oracle(records: &[PredictionRecord]) -> f64 {
        let pos: Vec<f64> = records.iter().filter(|r| r.truth).map(|r| r.prob).collect();
        let neg: Vec<f64> = records.iter().filter(|r| !r.truth).map(|r| r.prob).collect();
        let mut s = 0.0;
        for p in &pos {
            for n in &neg {
                s += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn kfold_exact_divisibility() {
        let labels: Vec<(String, bool)> = (0..10).map(|i| (format!("s{i}"), i < 5)).collect();
        let spec = stratified_kfold(&labels, 5, 7).unwrap();
        for fold in &spec.folds {
            assert_eq!(fold.len(), 2);
            let basal = fold
                .iter()
                .filter(|id| labels.iter().any(|(l, c)| l == *id && *c))
                .count();
            assert_eq!(basal, 1);
        }
    }

    #[test]
    fn kfold_deterministic_and_partitioning() {
        let labels: Vec<(String, bool)> = (0..37).map(|i| (format!("s{i}"), i % 3 == 0)).collect();
        let a = stratified_kfold(&labels, 5, 99).unwrap();
        let b = stratified_kfold(&labels, 5, 99).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<&String> = a.folds.iter().flatten().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 37);
    }

    #[test]
    fn kfold_paper_cohort_counts() {
        // 99 basal + 77 classical, k = 5
        let labels: Vec<(String, bool)> = (0..176).map(|i| (format!("s{i}"), i < 99)).collect();
        let spec = stratified_kfold(&labels, 5, 3).unwrap();
        for fold in &spec.folds {
            assert!(fold.len() == 35 || fold.len() == 36, "size {}", fold.len());
            let basal = fold.iter().filter(|id| {
                let idx: usize = id[1..].parse().unwrap();
                idx < 99
            }).count();
            let classical = fold.len() - basal;
            assert!((basal as f64 - 19.8).abs() <= 1.0);
            assert!((classical as f64 - 15.4).abs() <= 1.0);
        }
    }

    #[test]
    fn kfold_small_class_errors() {
        let labels: Vec<(String, bool)> = (0..10).map(|i| (format!("s{i}"), i < 3)).collect();
        assert!(stratified_kfold(&labels, 5, 0).is_err());
    }

    #[test]
    fn auc_closed_forms() {
        let perfect = recs(&[(true, 0.9), (true, 0.8), (false, 0.2), (false, 0.1)]);
        assert_eq!(roc_auc(&perfect).unwrap(), 1.0);
        let ties = recs(&[(true, 0.5), (false, 0.5), (true, 0.5)]);
        assert_eq!(roc_auc(&ties).unwrap(), 0.5);
        assert!(roc_auc(&recs(&[(true, 0.5)])).is_err());
    }

    #[test]
    fn auc_matches_pair_oracle_with_ties() {
        let mut rng = crate::seeds::stream(11, "test_auc");
        let records: Vec<PredictionRecord> = (0..50)
            .map(|i| {
                // coarse grid forces plenty of ties
                let p = (rng.random_range(0..=10) as f64) / 10.0;
                PredictionRecord::new(format!("s{i}"), rng.random::<bool>(), p).unwrap()
            })
            .collect();
        if records.iter().any(|r| r.truth) && records.iter().any(|r| !r.truth) {
            let fast = roc_auc(&records).unwrap();
            assert!((fast - auc_pair_oracle(&records)).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_flip_identities() {
        let records = recs(&[
            (true, 0.9),
            (false, 0.4),
            (true, 0.6),
            (false, 0.6),
            (true, 0.2),
        ]);
        let auc = roc_auc(&records).unwrap();
        let flipped_both: Vec<PredictionRecord> = records
            .iter()
            .map(|r| PredictionRecord::new(r.sample_id.clone(), !r.truth, 1.0 - r.prob).unwrap())
            .collect();
        assert!((roc_auc(&flipped_both).unwrap() - auc).abs() < 1e-12);
        let flipped_class: Vec<PredictionRecord> = records
            .iter()
            .map(|r| PredictionRecord::new(r.sample_id.clone(), !r.truth, r.prob).unwrap())
            .collect();
        assert!((roc_auc(&flipped_class).unwrap() - (1.0 - auc)).abs() < 1e-12);
    }

    #[test]
    fn confusion_closed_forms() {
        let all_correct = recs(&[(true, 0.9), (false, 0.1)]);
        let m = confusion_metrics(&all_correct, 0.5).unwrap();
        assert_eq!(
            (m.accuracy, m.balanced_accuracy, m.sensitivity, m.specificity, m.auc),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );

        let all_basal_calls = recs(&[(true, 0.8), (false, 0.8), (false, 0.9)]);
        let m = confusion_metrics(&all_basal_calls, 0.5).unwrap();
        assert_eq!(m.sensitivity, 1.0);
        assert_eq!(m.specificity, 0.0);
        assert_eq!(m.balanced_accuracy, 0.5);
    }

    #[test]
    fn concordance_arithmetic_from_error_counts() {
        // 189 records: 99 basal with 14 errors, 90 classical with 15 errors
        let mut items = Vec::new();
        for i in 0..99 {
            items.push((true, if i < 14 { 0.3 } else { 0.8 }));
        }
        for i in 0..90 {
            items.push((false, if i < 15 { 0.8 } else { 0.3 }));
        }
        let m = confusion_metrics(&recs(&items), 0.5).unwrap();
        assert!((m.accuracy - 0.847).abs() < 5e-4);
        assert!(((1.0 - m.sensitivity) - 14.0 / 99.0).abs() < 1e-12);
        assert!(((1.0 - m.specificity) - 15.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn confidence_filter() {
        let records = recs(&[(true, 0.05), (false, 0.5), (true, 0.95), (false, 0.1)]);
        let (subset, frac) = filter_high_confidence(&records, 0.10, 0.90).unwrap();
        assert_eq!(subset.len(), 3);
        assert!((frac - 0.75).abs() < 1e-12);
        assert!(filter_high_confidence(&records, 0.9, 0.1).is_err());

        let mut rng = crate::seeds::stream(5, "test_conf");
        let many: Vec<PredictionRecord> = (0..1000)
            .map(|i| PredictionRecord::new(format!("r{i}"), true, rng.random::<f64>()).unwrap())
            .collect();
        let (kept, frac) = filter_high_confidence(&many, 0.10, 0.90).unwrap();
        let oracle = many.iter().filter(|r| r.prob <= 0.10 || r.prob >= 0.90).count();
        assert_eq!(kept.len(), oracle);
        assert!((frac - 0.2).abs() < 0.05); // ~20% of uniform mass
    }

    #[test]
    fn margins() {
        let records = recs(&[(true, 0.962), (true, 0.5), (false, 0.9)]);
        let report = decision_margin(&records);
        assert!((report.margins[0] - 0.462).abs() < 1e-12);
        assert_eq!(report.margins[1], 0.0);
        // correct: 0.962 and 0.5 (>= 0.5 predicts basal); incorrect: 0.9
        assert_eq!(report.median_correct, Some((0.462 + 0.0) / 2.0));
        assert_eq!(report.median_incorrect, Some(0.4));
    }

    #[test]
    fn mann_whitney_closed_forms() {
        let t = mann_whitney_u(&[1.0], &[1.0]).unwrap();
        assert_eq!(t.u, 0.5);
        assert_eq!(t.p, 1.0);

        let t = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.u, 0.0);
        assert!(t.normal_approx_unreliable);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn mann_whitney_matches_pair_oracle() {
        let mut rng = crate::seeds::stream(13, "test_mwu");
        let a: Vec<f64> = (0..20).map(|_| (rng.random_range(0..12) as f64) / 3.0).collect();
        let b: Vec<f64> = (0..20).map(|_| (rng.random_range(0..12) as f64) / 3.0).collect();
        let t = mann_whitney_u(&a, &b).unwrap();
        let mut u_a = 0.0;
        for x in &a {
            for y in &b {
                u_a += if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                };
            }
        }
        assert_eq!(t.u_first, u_a);
        assert_eq!(t.u, u_a.min(400.0 - u_a));
    }

    #[test]
    fn aggregation() {
        let r = |auc: f64| MetricsReport {
            auc,
            accuracy: auc,
            balanced_accuracy: auc,
            sensitivity: auc,
            specificity: auc,
            n: 10,
        };
        let same = aggregate_folds(&[r(0.9), r(0.9), r(0.9)]).unwrap();
        assert_eq!(same.auc.sd, 0.0);
        let two = aggregate_folds(&[r(0.8), r(0.9)]).unwrap();
        assert!((two.auc.mean - 0.85).abs() < 1e-12);
        assert!((two.auc.sd - 0.0707).abs() < 1e-4);
        assert!(aggregate_folds(&[r(0.5)]).is_err());
    }
}
