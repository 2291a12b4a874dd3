//! Evaluation: multiple-choice accuracy, multi-label personality metrics,
//! MASI set agreement, and a one-sided paired bootstrap test.
//!
//! Multi-label metrics run on the 8-label view of a personality type where
//! each of the four axes contributes an opposing pole pair scored `(p, 1-p)`.
//! Four independent binary axes admit no within-sample ranking on their own,
//! so this representation is a fixed design choice and is recorded in every
//! [`EvalReport`] so numbers are never compared across representations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::mbti::MbtiType;

/// Human-readable tag for how ranking metrics represent labels.
pub const LABEL_REPRESENTATION: &str = "8-label pole scores with opposing pairs (p; 1-p)";

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!(
            "prediction/gold length mismatch: {a} vs {b}"
        )));
    }
    if a == 0 {
        return Err(Error::Metric("empty evaluation set".into()));
    }
    Ok(())
}

/// Fraction of exact matches between predicted and gold indices.
pub fn accuracy(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), gold.len())?;
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p == g)
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Mean over samples of (mismatched axes / 4).
pub fn hamming_loss(pred: &[MbtiType], gold: &[MbtiType]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    let total: f64 = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            let mismatched = p
                .poles()
                .iter()
                .zip(g.poles().iter())
                .filter(|(a, b)| a != b)
                .count();
            mismatched as f64 / 4.0
        })
        .sum();
    Ok(total / gold.len() as f64)
}

fn check_score_rows(scores: &[[f64; 8]], gold: &[[bool; 8]]) -> Result<()> {
    check_lengths(scores.len(), gold.len())?;
    for (i, row) in scores.iter().enumerate() {
        if row.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric(format!("non-finite score in sample {i}")));
        }
    }
    for (i, g) in gold.iter().enumerate() {
        let relevant = g.iter().filter(|&&b| b).count();
        if relevant == 0 || relevant == 8 {
            return Err(Error::Metric(format!(
                "sample {i} has no relevant/irrelevant label split"
            )));
        }
    }
    Ok(())
}

/// Mean fraction of (relevant, irrelevant) label pairs that are ordered
/// wrongly by the scores, counting exact score ties as half an error.
pub fn ranking_loss(scores: &[[f64; 8]], gold: &[[bool; 8]]) -> Result<f64> {
    check_score_rows(scores, gold)?;
    let mut total = 0.0;
    for (row, g) in scores.iter().zip(gold) {
        let mut irrelevant: Vec<f64> = row
            .iter()
            .zip(g)
            .filter(|(_, &rel)| !rel)
            .map(|(&s, _)| s)
            .collect();
        irrelevant.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n_rel = 8 - irrelevant.len();
        let mut sample = 0.0;
        for (s, _) in row.iter().zip(g).filter(|(_, &rel)| rel) {
            // irrelevant scores strictly above s count 1, equal count 1/2
            let above = irrelevant.len() - irrelevant.partition_point(|&x| x <= *s);
            let equal = irrelevant.partition_point(|&x| x <= *s)
                - irrelevant.partition_point(|&x| x < *s);
            sample += above as f64 + 0.5 * equal as f64;
        }
        total += sample / (n_rel * irrelevant.len()) as f64;
    }
    Ok(total / gold.len() as f64)
}

/// Label-ranking average precision. Labels are ranked by descending score
/// with ties broken by label index; each relevant label contributes the
/// precision among labels ranked at or above it.
pub fn average_precision(scores: &[[f64; 8]], gold: &[[bool; 8]]) -> Result<f64> {
    check_score_rows(scores, gold)?;
    let mut total = 0.0;
    for (row, g) in scores.iter().zip(gold) {
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let n_rel = g.iter().filter(|&&b| b).count();
        let mut seen_rel = 0usize;
        let mut sample = 0.0;
        for (rank0, &label) in order.iter().enumerate() {
            if g[label] {
                seen_rel += 1;
                sample += seen_rel as f64 / (rank0 + 1) as f64;
            }
        }
        total += sample / n_rel as f64;
    }
    Ok(total / gold.len() as f64)
}

/// MASI set agreement: Jaccard overlap scaled by a monotonicity factor
/// (1 equal, 2/3 one-sided subset, 1/3 crossing overlap, 0 disjoint).
/// Two empty sets agree perfectly.
pub fn masi<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    let jaccard = intersection / union;
    let monotonicity = if a == b {
        1.0
    } else if a.is_subset(b) || b.is_subset(a) {
        2.0 / 3.0
    } else if intersection > 0.0 {
        1.0 / 3.0
    } else {
        0.0
    };
    jaccard * monotonicity
}

/// One-sided paired bootstrap on the accuracy difference of two systems
/// over the same items. Tests whether system `a` beats system `b`: resamples
/// items with replacement and reports
/// `p = (#{resampled delta <= 0} + 1) / (n_resamples + 1)`,
/// so ties count against `a` and identical systems give p = 1.
pub fn paired_bootstrap(
    preds_a: &[usize],
    preds_b: &[usize],
    gold: &[usize],
    n_resamples: usize,
    seed: u64,
) -> Result<f64> {
    check_lengths(preds_a.len(), gold.len())?;
    check_lengths(preds_b.len(), gold.len())?;
    if n_resamples == 0 {
        return Err(Error::Metric("need at least one bootstrap resample".into()));
    }
    let diffs: Vec<f64> = gold
        .iter()
        .enumerate()
        .map(|(i, &g)| (preds_a[i] == g) as i64 as f64 - ((preds_b[i] == g) as i64 as f64))
        .collect();
    let n = diffs.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    for _ in 0..n_resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += diffs[rng.random_range(0..n)];
        }
        if sum <= 0.0 {
            successes += 1;
        }
    }
    Ok((successes as f64 + 1.0) / (n_resamples as f64 + 1.0))
}

/// The metric values of one evaluation pass; absent metrics stay `None`
/// (the reasoner reports accuracy only, the personality predictor reports
/// the multi-label trio).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamming_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_precision: Option<f64>,
}

impl MetricSet {
    fn fields(&self) -> [Option<f64>; 4] {
        [
            self.accuracy,
            self.hamming_loss,
            self.ranking_loss,
            self.average_precision,
        ]
    }
}

/// Per-seed metrics plus their mean for one evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub label_representation: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricSet>,
    pub mean: MetricSet,
}

impl EvalReport {
    /// Build a report, computing the mean. Every seed must report the same
    /// set of metrics.
    pub fn from_per_seed(
        n_samples: usize,
        seeds: Vec<u64>,
        per_seed: Vec<MetricSet>,
    ) -> Result<Self> {
        if seeds.len() != per_seed.len() || per_seed.is_empty() {
            return Err(Error::Metric(format!(
                "need one metric set per seed, got {} sets for {} seeds",
                per_seed.len(),
                seeds.len()
            )));
        }
        let n = per_seed.len() as f64;
        let mut mean_fields = [None; 4];
        for k in 0..4 {
            let present: Vec<f64> = per_seed.iter().filter_map(|m| m.fields()[k]).collect();
            if present.is_empty() {
                continue;
            }
            if present.len() != per_seed.len() {
                return Err(Error::Metric(
                    "metric reported for some seeds but not others".into(),
                ));
            }
            mean_fields[k] = Some(present.iter().sum::<f64>() / n);
        }
        let mean = MetricSet {
            accuracy: mean_fields[0],
            hamming_loss: mean_fields[1],
            ranking_loss: mean_fields[2],
            average_precision: mean_fields[3],
        };
        let report = EvalReport {
            n_samples,
            label_representation: LABEL_REPRESENTATION.to_string(),
            seeds,
            per_seed,
            mean,
        };
        report.validate()?;
        Ok(report)
    }

    /// Rates in [0,1] and mean consistent with the per-seed values.
    pub fn validate(&self) -> Result<()> {
        for m in self.per_seed.iter().chain(std::iter::once(&self.mean)) {
            for v in m.fields().into_iter().flatten() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Metric(format!("rate {v} outside [0,1]")));
                }
            }
        }
        let n = self.per_seed.len() as f64;
        for k in 0..4 {
            let values: Vec<f64> = self.per_seed.iter().filter_map(|m| m.fields()[k]).collect();
            let expected = if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / n)
            };
            let actual = self.mean.fields()[k];
            match (expected, actual) {
                (None, None) => {}
                (Some(e), Some(a)) if (e - a).abs() <= 1e-12 => {}
                _ => return Err(Error::Metric("mean inconsistent with per-seed values".into())),
            }
        }
        Ok(())
    }

    /// Flat CSV: a header line and one data row. Per-seed values are
    /// semicolon-joined within their cell.
    pub fn to_csv(&self) -> (String, String) {
        let header = "n_samples,n_seeds,accuracy,hamming_loss,ranking_loss,average_precision,\
                      accuracy_per_seed,hamming_loss_per_seed,ranking_loss_per_seed,\
                      average_precision_per_seed,label_representation"
            .to_string();
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let list = |k: usize| {
            self.per_seed
                .iter()
                .filter_map(|m| m.fields()[k].map(|x| format!("{x:.6}")))
                .collect::<Vec<_>>()
                .join(";")
        };
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n_samples,
            self.seeds.len(),
            cell(self.mean.accuracy),
            cell(self.mean.hamming_loss),
            cell(self.mean.ranking_loss),
            cell(self.mean.average_precision),
            list(0),
            list(1),
            list(2),
            list(3),
            self.label_representation,
        );
        (header, row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbti::Axis;

    // ---- independent brute-force oracles -------------------------------
    //
    // These recompute each metric from its definition with no shared code:
    // hamming via the 8-label XOR view, ranking loss by enumerating every
    // (relevant, irrelevant) pair, average precision by the counting
    // definition of rank.

    fn oracle_hamming(pred: &[MbtiType], gold: &[MbtiType]) -> f64 {
        let mut total = 0.0;
        for (p, g) in pred.iter().zip(gold) {
            let pv = p.to_eight_labels();
            let gv = g.to_eight_labels();
            let bits = pv.iter().zip(gv.iter()).filter(|(a, b)| a != b).count();
            total += bits as f64 / 8.0;
        }
        total / gold.len() as f64
    }

    fn oracle_ranking(scores: &[[f64; 8]], gold: &[[bool; 8]]) -> f64 {
        let mut total = 0.0;
        for (row, g) in scores.iter().zip(gold) {
            let mut loss = 0.0;
            let mut pairs = 0.0;
            for r in 0..8 {
                if !g[r] {
                    continue;
                }
                for i in 0..8 {
                    if g[i] {
                        continue;
                    }
                    pairs += 1.0;
                    if row[r] < row[i] {
                        loss += 1.0;
                    } else if row[r] == row[i] {
                        loss += 0.5;
                    }
                }
            }
            total += loss / pairs;
        }
        total / gold.len() as f64
    }

    fn oracle_lrap(scores: &[[f64; 8]], gold: &[[bool; 8]]) -> f64 {
        let rank = |row: &[f64; 8], l: usize| -> usize {
            1 + (0..8)
                .filter(|&k| k != l && (row[k] > row[l] || (row[k] == row[l] && k < l)))
                .count()
        };
        let mut total = 0.0;
        for (row, g) in scores.iter().zip(gold) {
            let relevant: Vec<usize> = (0..8).filter(|&l| g[l]).collect();
            let mut sample = 0.0;
            for &l in &relevant {
                let rl = rank(row, l);
                let at_or_above = relevant.iter().filter(|&&k| rank(row, k) <= rl).count();
                sample += at_or_above as f64 / rl as f64;
            }
            total += sample / relevant.len() as f64;
        }
        total / gold.len() as f64
    }

    fn random_type(rng: &mut ChaCha20Rng) -> MbtiType {
        MbtiType::all()[rng.random_range(0..16)]
    }

    fn random_scores(rng: &mut ChaCha20Rng) -> [f64; 8] {
        // opposing pairs (p, 1-p); occasionally quantized to force ties
        let mut row = [0.0; 8];
        for axis in 0..4 {
            let p: f64 = if rng.random_range(0..4) == 0 {
                (rng.random_range(0..5) as f64) / 4.0
            } else {
                rng.random_range(0.0..1.0)
            };
            row[2 * axis] = p;
            row[2 * axis + 1] = 1.0 - p;
        }
        row
    }

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0], &[1, 1]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn hamming_examples() {
        let esfp = MbtiType::parse("ESFP").unwrap();
        let estj = MbtiType::parse("ESTJ").unwrap();
        let estp = MbtiType::parse("ESTP").unwrap();
        assert_eq!(hamming_loss(&[esfp], &[esfp]).unwrap(), 0.0);
        assert_eq!(hamming_loss(&[estj], &[estp]).unwrap(), 0.25);
        let intj = MbtiType::parse("INTJ").unwrap();
        let esfp_gold = vec![esfp; 3];
        assert_eq!(hamming_loss(&[intj, esfp, estp], &esfp_gold).unwrap(), (1.0 + 0.0 + 0.25) / 3.0);
    }

    #[test]
    fn hamming_monte_carlo_near_half() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let gold = MbtiType::parse("ESFP").unwrap();
        let n = 100_000;
        let preds: Vec<MbtiType> = (0..n).map(|_| random_type(&mut rng)).collect();
        let golds = vec![gold; n];
        let loss = hamming_loss(&preds, &golds).unwrap();
        assert!((loss - 0.5).abs() < 0.01, "got {loss}");
    }

    #[test]
    fn ranking_perfect_and_inverted() {
        let gold = [[true, false, true, false, true, false, true, false]];
        let perfect = [[0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4]];
        let inverted = [[0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6]];
        assert_eq!(ranking_loss(&perfect, &gold).unwrap(), 0.0);
        assert_eq!(ranking_loss(&inverted, &gold).unwrap(), 1.0);
        assert_eq!(average_precision(&perfect, &gold).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_scores_give_half_loss_and_index_order_ranks() {
        let gold = [[true, false, true, false, true, false, true, false]];
        let tied = [[0.5; 8]];
        assert_eq!(ranking_loss(&tied, &gold).unwrap(), 0.5);
        let expected = (1.0 + 2.0 / 3.0 + 3.0 / 5.0 + 4.0 / 7.0) / 4.0;
        let got = average_precision(&tied, &gold).unwrap();
        assert!((got - expected).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn multi_label_metrics_match_oracles_on_random_batches() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.random_range(1..=16);
            let mut scores = Vec::with_capacity(n);
            let mut gold8 = Vec::with_capacity(n);
            let mut pred_types = Vec::with_capacity(n);
            let mut gold_types = Vec::with_capacity(n);
            for _ in 0..n {
                scores.push(random_scores(&mut rng));
                gold8.push(random_type(&mut rng).to_eight_labels());
                pred_types.push(random_type(&mut rng));
                gold_types.push(random_type(&mut rng));
            }
            let rl = ranking_loss(&scores, &gold8).unwrap();
            let ap = average_precision(&scores, &gold8).unwrap();
            let hl = hamming_loss(&pred_types, &gold_types).unwrap();
            assert!((rl - oracle_ranking(&scores, &gold8)).abs() < 1e-12);
            assert!((ap - oracle_lrap(&scores, &gold8)).abs() < 1e-12);
            assert!((hl - oracle_hamming(&pred_types, &gold_types)).abs() < 1e-12);
            assert!(ap > 0.0 && ap <= 1.0);
        }
    }

    #[test]
    fn metrics_are_sample_permutation_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let scores: Vec<[f64; 8]> = (0..9).map(|_| random_scores(&mut rng)).collect();
        let gold8: Vec<[bool; 8]> = (0..9).map(|_| random_type(&mut rng).to_eight_labels()).collect();
        let mut rev_scores = scores.clone();
        rev_scores.reverse();
        let mut rev_gold = gold8.clone();
        rev_gold.reverse();
        assert_eq!(
            ranking_loss(&scores, &gold8).unwrap(),
            ranking_loss(&rev_scores, &rev_gold).unwrap()
        );
        assert_eq!(
            average_precision(&scores, &gold8).unwrap(),
            average_precision(&rev_scores, &rev_gold).unwrap()
        );
    }

    #[test]
    fn malformed_gold_vectors_error() {
        let scores = [[0.5; 8]];
        assert!(ranking_loss(&scores, &[[true; 8]]).is_err());
        assert!(ranking_loss(&scores, &[[false; 8]]).is_err());
        assert!(average_precision(&[[f64::NAN; 8]], &[[true, false, true, false, true, false, true, false]]).is_err());
    }

    #[test]
    fn masi_cases() {
        let set = |v: &[u32]| v.iter().copied().collect::<BTreeSet<u32>>();
        assert_eq!(masi(&set(&[1, 2]), &set(&[1, 2])), 1.0);
        assert_eq!(masi(&set(&[1, 2]), &set(&[3, 4])), 0.0);
        let third = masi(&set(&[1, 2]), &set(&[1, 2, 3, 4]));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        let ninth = masi(&set(&[1, 2]), &set(&[2, 3]));
        assert!((ninth - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(masi(&set(&[]), &set(&[])), 1.0);
        assert_eq!(masi(&set(&[]), &set(&[1])), 0.0);
    }

    #[test]
    fn bootstrap_identical_predictions_keep_high_p() {
        let gold: Vec<usize> = (0..50).map(|i| i % 4).collect();
        let preds: Vec<usize> = gold.iter().map(|&g| if g == 0 { 1 } else { g }).collect();
        let p = paired_bootstrap(&preds, &preds, &gold, 2000, 9).unwrap();
        assert!(p >= 0.5, "got {p}");
        assert_eq!(p, 1.0); // every resampled delta is exactly zero
    }

    #[test]
    fn bootstrap_dominance_gives_tiny_p() {
        let gold = vec![0usize; 200];
        let a = vec![0usize; 200];
        let b = vec![1usize; 200];
        let p = paired_bootstrap(&a, &b, &gold, 10_000, 1).unwrap();
        assert!(p < 1e-3, "got {p}");
    }

    #[test]
    fn bootstrap_is_deterministic_and_checks_lengths() {
        let gold = vec![0, 1, 2, 3];
        let a = vec![0, 1, 0, 0];
        let b = vec![0, 0, 2, 0];
        let p1 = paired_bootstrap(&a, &b, &gold, 500, 77).unwrap();
        let p2 = paired_bootstrap(&a, &b, &gold, 500, 77).unwrap();
        assert_eq!(p1, p2);
        assert!(paired_bootstrap(&a, &b, &gold[..3], 10, 0).is_err());
        assert!(paired_bootstrap(&a, &b, &gold, 0, 0).is_err());
    }

    /// Paired design with a 2-point accuracy gap on 1000 items must reach
    /// p < 0.05 in at least 90% of outer draws.
    #[test]
    fn bootstrap_power_on_two_point_gap() {
        let n_items = 1000;
        let outer_trials = 20;
        let mut significant = 0;
        for outer_seed in 0..outer_trials {
            let mut rng = ChaCha20Rng::seed_from_u64(1000 + outer_seed);
            let gold = vec![0usize; n_items];
            let b: Vec<usize> = (0..n_items)
                .map(|_| if rng.random_range(0.0..1.0) < 0.6 { 0 } else { 1 })
                .collect();
            let mut a = b.clone();
            let mut flipped = 0;
            let wrong: Vec<usize> = (0..n_items).filter(|&i| b[i] != 0).collect();
            for &i in &wrong {
                if flipped == n_items / 50 {
                    break;
                }
                a[i] = 0;
                flipped += 1;
            }
            assert_eq!(flipped, n_items / 50);
            let p = paired_bootstrap(&a, &b, &gold, 1000, 31 + outer_seed).unwrap();
            if p < 0.05 {
                significant += 1;
            }
        }
        assert!(
            significant as f64 >= 0.9 * outer_trials as f64,
            "only {significant}/{outer_trials} significant"
        );
    }

    #[test]
    fn report_mean_and_csv() {
        let per_seed = vec![
            MetricSet {
                accuracy: Some(0.5),
                hamming_loss: None,
                ranking_loss: None,
                average_precision: Some(0.8),
            },
            MetricSet {
                accuracy: Some(0.7),
                hamming_loss: None,
                ranking_loss: None,
                average_precision: Some(0.6),
            },
        ];
        let report = EvalReport::from_per_seed(40, vec![1, 2], per_seed).unwrap();
        assert_eq!(report.mean.accuracy, Some(0.6));
        assert_eq!(report.mean.average_precision, Some(0.7));
        assert_eq!(report.mean.hamming_loss, None);
        report.validate().unwrap();

        let (header, row) = report.to_csv();
        assert_eq!(header.split(',').count(), row.split(',').count());
        assert!(row.contains("0.600000"));
        assert!(row.contains("0.500000;0.700000"));

        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn report_rejects_inconsistencies() {
        assert!(EvalReport::from_per_seed(10, vec![1], vec![]).is_err());
        let uneven = vec![
            MetricSet {
                accuracy: Some(0.5),
                ..Default::default()
            },
            MetricSet::default(),
        ];
        assert!(EvalReport::from_per_seed(10, vec![1, 2], uneven).is_err());
        let mut report = EvalReport::from_per_seed(
            10,
            vec![1],
            vec![MetricSet {
                accuracy: Some(0.5),
                ..Default::default()
            }],
        )
        .unwrap();
        report.mean.accuracy = Some(0.9);
        assert!(report.validate().is_err());
    }

    #[test]
    fn axis_count_matches_hamming_denominator() {
        // the /4 in hamming_loss is the number of type axes
        assert_eq!(Axis::ALL.len(), 4);
    }
}
