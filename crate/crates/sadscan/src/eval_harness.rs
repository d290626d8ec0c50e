//! Evaluation designs: detection metrics, stratified k-fold
//! cross-validation, stratified 70/30 holdout, detection-over-time span
//! studies, and per-group summary statistics with Student-t confidence
//! intervals.
//!
//! All metrics treat `MALICIOUS` as the positive class. Fold and split
//! assignment is stratified (unstratified folds on imbalanced sets can
//! produce single-class training folds) and fully determined by the
//! harness seed.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::classifier::{train, Class, ForestModel, ForestParams, LabeledSample, TrainError};
use crate::sad_extractor::{fmt_sig9, FEATURE_COUNT};
use crate::seeding::{derive_seed, stream_rng};

/// Confusion-matrix tallies with `MALICIOUS` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Class, Class)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (truth, predicted) in pairs {
            match (truth, predicted) {
                (Class::Malicious, Class::Malicious) => c.true_pos += 1,
                (Class::Benign, Class::Malicious) => c.false_pos += 1,
                (Class::Benign, Class::Benign) => c.true_neg += 1,
                (Class::Malicious, Class::Benign) => c.false_neg += 1,
            }
        }
        c
    }

    /// True when precision or recall has an empty denominator, which
    /// forces the 0-convention below.
    pub fn is_degenerate(&self) -> bool {
        self.true_pos + self.false_pos == 0 || self.true_pos + self.false_neg == 0
    }
}

/// Precision, recall and F1; 0/0 cases are defined as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `2·p·r / (p + r)`, or 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricTriple {
    let precision = if c.true_pos + c.false_pos == 0 {
        0.0
    } else {
        c.true_pos as f64 / (c.true_pos + c.false_pos) as f64
    };
    let recall = if c.true_pos + c.false_neg == 0 {
        0.0
    } else {
        c.true_pos as f64 / (c.true_pos + c.false_neg) as f64
    };
    MetricTriple {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    CrossValidation,
    Holdout,
    Span,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::CrossValidation => "CV",
            Study::Holdout => "HOLDOUT",
            Study::Span => "SPAN",
        }
    }
}

/// One evaluated (train, test) pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub train_tag: String,
    pub test_tag: String,
    /// Years between training and testing data; 0 for same-period rows.
    pub span_years: u32,
    pub metrics: MetricTriple,
    pub counts: ConfusionCounts,
    pub degenerate: bool,
}

/// Study results. For cross-validation, `aggregate` carries the mean of
/// the per-fold metrics (the aggregate F1 is the mean of per-fold F1
/// values, not the F1 of mean precision/recall) over summed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub study: Study,
    pub rows: Vec<EvalRow>,
    pub aggregate: Option<EvalRow>,
}

pub const REPORT_CSV_HEADER: &str =
    "study,train_tag,test_tag,span_years,precision,recall,f1,tp,fp,tn,fn";

impl EvalReport {
    fn all_rows(&self) -> impl Iterator<Item = &EvalRow> {
        self.rows.iter().chain(self.aggregate.as_ref())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for row in self.all_rows() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.study.as_str(),
                row.train_tag,
                row.test_tag,
                row.span_years,
                fmt_sig9(row.metrics.precision),
                fmt_sig9(row.metrics.recall),
                fmt_sig9(row.metrics.f1),
                row.counts.true_pos,
                row.counts.false_pos,
                row.counts.true_neg,
                row.counts.false_neg,
            );
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<14} {:<14} {:>4}  {:>9} {:>9} {:>9}  {:>6} {:>6} {:>6} {:>6}",
            "study", "train", "test", "span", "precision", "recall", "f1", "tp", "fp", "tn", "fn"
        );
        for row in self.all_rows() {
            let _ = writeln!(
                out,
                "{:<8} {:<14} {:<14} {:>4}  {:>9.4} {:>9.4} {:>9.4}  {:>6} {:>6} {:>6} {:>6}{}",
                self.study.as_str(),
                row.train_tag,
                row.test_tag,
                row.span_years,
                row.metrics.precision,
                row.metrics.recall,
                row.metrics.f1,
                row.counts.true_pos,
                row.counts.false_pos,
                row.counts.true_neg,
                row.counts.false_neg,
                if row.degenerate {
                    "  (degenerate 0/0)"
                } else {
                    ""
                },
            );
        }
        out
    }
}

/// Errors from the evaluation harness.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{detail}")]
    TooFewSamples { detail: String },
    #[error("group {group:?} has fewer than 2 profiles")]
    GroupTooSmall { group: String },
    #[error("test set {tag:?} is empty")]
    EmptyTestSet { tag: String },
    #[error("{reason}")]
    InvalidConfig { reason: String },
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::TooFewSamples { .. } => "TooFewSamples",
            EvalError::GroupTooSmall { .. } => "GroupTooSmall",
            EvalError::EmptyTestSet { .. } => "EmptyTestSet",
            EvalError::InvalidConfig { .. } => "InvalidConfig",
            EvalError::Train(e) => e.code(),
        }
    }
}

fn evaluate(model: &ForestModel, samples: &[&LabeledSample]) -> (MetricTriple, ConfusionCounts) {
    let counts = ConfusionCounts::from_pairs(
        samples
            .iter()
            .map(|s| (s.label, model.predict(&s.features))),
    );
    (compute_metrics(&counts), counts)
}

/// Stratified fold assignment: per class, a seeded shuffle is dealt
/// into `k` folds; the leftover "+1" folds rotate across classes so
/// fold sizes stay within one sample of each other.
pub(crate) fn stratified_folds(
    labels: &[Class],
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<usize> {
    let mut fold_of = vec![0usize; labels.len()];
    let mut offset = 0usize;
    for class in [Class::Benign, Class::Malicious] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let base = idx.len() / k;
        let extras = idx.len() % k;
        let mut pos = 0;
        for j in 0..k {
            let fold = (offset + j) % k;
            let take = base + usize::from(j < extras);
            for &sample in &idx[pos..pos + take] {
                fold_of[sample] = fold;
            }
            pos += take;
        }
        offset = (offset + extras) % k;
    }
    fold_of
}

/// Stratified train/test split; returns (train indices, test indices).
pub(crate) fn stratified_split(
    labels: &[Class],
    test_fraction: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Class::Benign, Class::Malicious] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let n = idx.len();
        let n_test = ((n as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test >= n {
            return Err(EvalError::TooFewSamples {
                detail: format!(
                    "class {class} has {n} samples; cannot reserve {test_fraction:.0}% for testing",
                    class = class.as_str(),
                    test_fraction = test_fraction * 100.0
                ),
            });
        }
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k-fold cross-validation: each fold is tested once against
/// a model trained on the other k−1 folds.
pub fn cross_validate(
    samples: &[LabeledSample],
    params: &ForestParams,
    k: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidConfig {
            reason: "k must be at least 2".into(),
        });
    }
    for class in [Class::Benign, Class::Malicious] {
        let n = samples.iter().filter(|s| s.label == class).count();
        if n < k {
            return Err(EvalError::TooFewSamples {
                detail: format!("class {} has {n} samples but k = {k}", class.as_str()),
            });
        }
    }
    let labels: Vec<Class> = samples.iter().map(|s| s.label).collect();
    let fold_of = stratified_folds(&labels, k, &mut stream_rng(seed, 0));

    let mut rows = Vec::with_capacity(k);
    for fold in 0..k {
        let train_set: Vec<LabeledSample> = samples
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f != fold)
            .map(|(s, _)| s.clone())
            .collect();
        let test_set: Vec<&LabeledSample> = samples
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s)
            .collect();
        let fold_params = ForestParams {
            seed: derive_seed(seed, 1 + fold as u64),
            ..*params
        };
        let model = train(&train_set, &fold_params)?;
        let (metrics, counts) = evaluate(&model, &test_set);
        rows.push(EvalRow {
            train_tag: "rest".into(),
            test_tag: format!("fold{:02}", fold + 1),
            span_years: 0,
            metrics,
            counts,
            degenerate: counts.is_degenerate(),
        });
    }

    let k_f = rows.len() as f64;
    let aggregate = EvalRow {
        train_tag: "rest".into(),
        test_tag: "mean".into(),
        span_years: 0,
        metrics: MetricTriple {
            precision: rows.iter().map(|r| r.metrics.precision).sum::<f64>() / k_f,
            recall: rows.iter().map(|r| r.metrics.recall).sum::<f64>() / k_f,
            f1: rows.iter().map(|r| r.metrics.f1).sum::<f64>() / k_f,
        },
        counts: rows
            .iter()
            .fold(ConfusionCounts::default(), |acc, r| ConfusionCounts {
                true_pos: acc.true_pos + r.counts.true_pos,
                false_pos: acc.false_pos + r.counts.false_pos,
                true_neg: acc.true_neg + r.counts.true_neg,
                false_neg: acc.false_neg + r.counts.false_neg,
            }),
        degenerate: rows.iter().any(|r| r.degenerate),
    };

    Ok(EvalReport {
        study: Study::CrossValidation,
        rows,
        aggregate: Some(aggregate),
    })
}

/// Stratified independent testing: `test_fraction` of each class is
/// reserved as unseen, the rest trains one model.
pub fn holdout_eval(
    samples: &[LabeledSample],
    params: &ForestParams,
    test_fraction: f64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::InvalidConfig {
            reason: format!("test fraction {test_fraction} must be in (0, 1)"),
        });
    }
    let labels: Vec<Class> = samples.iter().map(|s| s.label).collect();
    let (train_idx, test_idx) = stratified_split(&labels, test_fraction, &mut stream_rng(seed, 0))?;
    let train_set: Vec<LabeledSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let test_set: Vec<&LabeledSample> = test_idx.iter().map(|&i| &samples[i]).collect();
    let model = train(
        &train_set,
        &ForestParams {
            seed: derive_seed(seed, 1),
            ..*params
        },
    )?;
    let (metrics, counts) = evaluate(&model, &test_set);
    let row = EvalRow {
        train_tag: "train".into(),
        test_tag: "holdout".into(),
        span_years: 0,
        metrics,
        counts,
        degenerate: counts.is_degenerate(),
    };
    Ok(EvalReport {
        study: Study::Holdout,
        rows: vec![row],
        aggregate: None,
    })
}

/// Detection over time: one model trained on `train_samples`, then
/// evaluated against each test set. Test sets are taken in order as
/// spans of 1..=N years after the training data.
pub fn span_eval(
    train_tag: &str,
    train_samples: &[LabeledSample],
    test_sets: &[(String, Vec<LabeledSample>)],
    params: &ForestParams,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    for (tag, set) in test_sets {
        if set.is_empty() {
            return Err(EvalError::EmptyTestSet { tag: tag.clone() });
        }
    }
    let model = train(
        train_samples,
        &ForestParams {
            seed: derive_seed(seed, 0),
            ..*params
        },
    )?;
    let rows = test_sets
        .iter()
        .enumerate()
        .map(|(i, (tag, set))| {
            let refs: Vec<&LabeledSample> = set.iter().collect();
            let (metrics, counts) = evaluate(&model, &refs);
            EvalRow {
                train_tag: train_tag.to_string(),
                test_tag: tag.clone(),
                span_years: (i + 1) as u32,
                metrics,
                counts,
                degenerate: counts.is_degenerate(),
            }
        })
        .collect();
    Ok(EvalReport {
        study: Study::Span,
        rows,
        aggregate: None,
    })
}

// ---------------------------------------------------------------------------
// Summary statistics

/// Per-feature, per-group mean with a 0.95 two-sided Student-t
/// confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStat {
    pub group: String,
    /// 1-based canonical feature index (1..=52).
    pub feature: usize,
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-sided 0.95 Student-t critical value for `df` degrees of freedom.
pub fn t_critical_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

/// Summarizes feature vectors per group: mean and 0.95 CI, where the
/// half-width is `t(0.975, n−1) · s / √n` with `s` the sample
/// standard deviation.
pub fn summarize(
    groups: &[(String, Vec<[f64; FEATURE_COUNT]>)],
) -> Result<Vec<SummaryStat>, EvalError> {
    let mut stats = Vec::new();
    for (group, vectors) in groups {
        let n = vectors.len();
        if n < 2 {
            return Err(EvalError::GroupTooSmall {
                group: group.clone(),
            });
        }
        let t = t_critical_975(n - 1);
        for feature in 0..FEATURE_COUNT {
            let mean = vectors.iter().map(|v| v[feature]).sum::<f64>() / n as f64;
            let variance = vectors
                .iter()
                .map(|v| (v[feature] - mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            let half = t * variance.sqrt() / (n as f64).sqrt();
            stats.push(SummaryStat {
                group: group.clone(),
                feature: feature + 1,
                n,
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
            });
        }
    }
    Ok(stats)
}

pub const SUMMARY_CSV_HEADER: &str = "group,feature,n,mean,ci_low,ci_high";

pub fn summary_to_csv(stats: &[SummaryStat]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for s in stats {
        let _ = writeln!(
            out,
            "{},f{},{},{},{},{}",
            s.group,
            s.feature,
            s.n,
            fmt_sig9(s.mean),
            fmt_sig9(s.ci_low),
            fmt_sig9(s.ci_high)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: Class, f1: f64) -> LabeledSample {
        let mut f = [0.5; FEATURE_COUNT];
        f[0] = f1;
        LabeledSample::new(id, 2014, label, f).unwrap()
    }

    /// `n_benign` at f1 = 0.1, `n_malicious` at f1 = 0.9.
    fn separable(n_benign: usize, n_malicious: usize) -> Vec<LabeledSample> {
        let mut out = Vec::new();
        for i in 0..n_benign {
            out.push(sample(&format!("b{i}"), Class::Benign, 0.1));
        }
        for i in 0..n_malicious {
            out.push(sample(&format!("m{i}"), Class::Malicious, 0.9));
        }
        out
    }

    fn quick_params() -> ForestParams {
        ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        }
    }

    #[test]
    fn metrics_from_counts() {
        let m = compute_metrics(&ConfusionCounts {
            true_pos: 3,
            false_pos: 1,
            true_neg: 0,
            false_neg: 1,
        });
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);

        let zero = compute_metrics(&ConfusionCounts {
            true_pos: 0,
            false_pos: 0,
            true_neg: 0,
            false_neg: 5,
        });
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
        assert_eq!(f1_score(0.937, 0.937), 0.937);
    }

    #[test]
    fn degenerate_counts_are_flagged() {
        let no_positives = ConfusionCounts {
            true_pos: 0,
            false_pos: 0,
            true_neg: 9,
            false_neg: 0,
        };
        assert!(no_positives.is_degenerate());
        let healthy = ConfusionCounts {
            true_pos: 3,
            false_pos: 1,
            true_neg: 4,
            false_neg: 2,
        };
        assert!(!healthy.is_degenerate());
    }

    #[test]
    fn confusion_matches_brute_force_recount() {
        let pairs = [
            (Class::Malicious, Class::Malicious),
            (Class::Malicious, Class::Benign),
            (Class::Benign, Class::Malicious),
            (Class::Benign, Class::Benign),
            (Class::Malicious, Class::Malicious),
        ];
        let c = ConfusionCounts::from_pairs(pairs);
        assert_eq!(
            c,
            ConfusionCounts {
                true_pos: 2,
                false_pos: 1,
                true_neg: 1,
                false_neg: 1
            }
        );
        assert_eq!(c.total(), 5);
    }

    #[test]
    fn fold_sizes_for_103_samples() {
        let samples = separable(52, 51);
        let report = cross_validate(&samples, &quick_params(), 10, 11).unwrap();
        let mut sizes: Vec<u64> = report.rows.iter().map(|r| r.counts.total()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 10, 10, 11, 11, 11]);
    }

    #[test]
    fn folds_are_stratified_within_one_sample() {
        let labels: Vec<Class> = separable(70, 33).iter().map(|s| s.label).collect();
        let fold_of = stratified_folds(&labels, 10, &mut stream_rng(3, 0));
        let global_ratio = 33.0 / 103.0;
        for fold in 0..10 {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == fold).collect();
            let mal = members
                .iter()
                .filter(|&&i| labels[i] == Class::Malicious)
                .count();
            let expected = global_ratio * members.len() as f64;
            assert!(
                (mal as f64 - expected).abs() <= 1.0,
                "fold {fold}: {mal} malicious of {}, expected ~{expected:.2}",
                members.len()
            );
        }
        // The assignment is a partition: every sample lands in exactly
        // one fold, so each fold's test set is disjoint from its
        // training remainder.
        let total: usize = (0..10)
            .map(|fold| fold_of.iter().filter(|&&f| f == fold).count())
            .sum();
        assert_eq!(total, labels.len());
    }

    #[test]
    fn separable_cv_scores_perfectly() {
        let samples = separable(50, 50);
        let report = cross_validate(&samples, &quick_params(), 10, 5).unwrap();
        let agg = report.aggregate.unwrap();
        assert_eq!(agg.metrics.f1, 1.0);
        assert_eq!(agg.counts.total(), 100);
    }

    #[test]
    fn cv_aggregate_f1_is_mean_of_fold_f1() {
        // Mix in label noise so per-fold F1 differs from 1.
        let mut samples = separable(40, 40);
        for s in samples.iter_mut().take(8) {
            s.features[0] = 0.9; // benign samples that look malicious
        }
        let report = cross_validate(&samples, &quick_params(), 5, 9).unwrap();
        let mean: f64 =
            report.rows.iter().map(|r| r.metrics.f1).sum::<f64>() / report.rows.len() as f64;
        assert_eq!(report.aggregate.unwrap().metrics.f1, mean);
    }

    #[test]
    fn cv_is_deterministic_under_seed() {
        let samples = separable(30, 25);
        let a = cross_validate(&samples, &quick_params(), 5, 77).unwrap();
        let b = cross_validate(&samples, &quick_params(), 5, 77).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn cv_rejects_small_classes() {
        let samples = separable(30, 5);
        let err = cross_validate(&samples, &quick_params(), 10, 0).unwrap_err();
        assert_eq!(err.code(), "TooFewSamples");
    }

    #[test]
    fn holdout_split_sizes_and_disjointness() {
        let samples = separable(500, 500);
        let labels: Vec<Class> = samples.iter().map(|s| s.label).collect();
        let (train_idx, test_idx) = stratified_split(&labels, 0.30, &mut stream_rng(2, 0)).unwrap();
        assert_eq!(train_idx.len(), 700);
        assert_eq!(test_idx.len(), 300);
        let train_ids: std::collections::BTreeSet<&str> = train_idx
            .iter()
            .map(|&i| samples[i].app_id.as_str())
            .collect();
        let test_ids: std::collections::BTreeSet<&str> = test_idx
            .iter()
            .map(|&i| samples[i].app_id.as_str())
            .collect();
        assert!(train_ids.is_disjoint(&test_ids));
        assert_eq!(train_ids.len() + test_ids.len(), samples.len());
        // Per-class stratification: 150 test samples from each class.
        let test_mal = test_idx
            .iter()
            .filter(|&&i| labels[i] == Class::Malicious)
            .count();
        assert_eq!(test_mal, 150);

        let report = holdout_eval(&samples, &quick_params(), 0.30, 2).unwrap();
        assert_eq!(report.rows[0].counts.total(), 300);
        assert_eq!(report.rows[0].metrics.f1, 1.0);
    }

    #[test]
    fn holdout_rejects_tiny_classes() {
        let samples = separable(10, 1);
        let err = holdout_eval(&samples, &quick_params(), 0.30, 0).unwrap_err();
        assert_eq!(err.code(), "TooFewSamples");
    }

    #[test]
    fn span_produces_one_row_per_test_set_in_order() {
        let train_set = separable(30, 30);
        let test_sets: Vec<(String, Vec<LabeledSample>)> = (1..=5)
            .map(|y| (format!("y{y}"), separable(10, 10)))
            .collect();
        let report = span_eval("t0", &train_set, &test_sets, &quick_params(), 4).unwrap();
        assert_eq!(report.rows.len(), 5);
        for (i, row) in report.rows.iter().enumerate() {
            assert_eq!(row.span_years, (i + 1) as u32);
            assert_eq!(row.test_tag, format!("y{}", i + 1));
            assert_eq!(row.train_tag, "t0");
        }
        let err = span_eval(
            "t0",
            &train_set,
            &[("empty".into(), vec![])],
            &quick_params(),
            4,
        )
        .unwrap_err();
        assert_eq!(err.code(), "EmptyTestSet");
    }

    #[test]
    fn summarize_matches_t_table_example() {
        let mut vectors = Vec::new();
        for v in [0.1, 0.2, 0.3] {
            vectors.push([v; FEATURE_COUNT]);
        }
        let stats = summarize(&[("g".to_string(), vectors)]).unwrap();
        assert_eq!(stats.len(), FEATURE_COUNT);
        let s0 = &stats[0];
        assert!((s0.mean - 0.2).abs() < 1e-12);
        let half = (s0.ci_high - s0.ci_low) / 2.0;
        assert!((half - 0.2484).abs() < 1e-3, "half-width {half}");
        assert!(s0.ci_low <= s0.mean && s0.mean <= s0.ci_high);
    }

    #[test]
    fn summarize_constant_group_has_zero_width() {
        let vectors = vec![[0.5; FEATURE_COUNT]; 3];
        let stats = summarize(&[("c".to_string(), vectors)]).unwrap();
        assert_eq!(stats[0].mean, 0.5);
        assert_eq!(stats[0].ci_low, 0.5);
        assert_eq!(stats[0].ci_high, 0.5);
    }

    #[test]
    fn summarize_rejects_singleton_groups() {
        let err = summarize(&[("solo".to_string(), vec![[0.1; FEATURE_COUNT]])]).unwrap_err();
        assert_eq!(err.code(), "GroupTooSmall");
    }

    #[test]
    fn summarize_means_match_brute_force() {
        let mut rng = stream_rng(31, 0);
        let vectors: Vec<[f64; FEATURE_COUNT]> = (0..17)
            .map(|_| {
                let mut v = [0.0; FEATURE_COUNT];
                for x in &mut v {
                    *x = rand::Rng::gen_range(&mut rng, 0.0..=1.0);
                }
                v
            })
            .collect();
        let stats = summarize(&[("r".to_string(), vectors.clone())]).unwrap();
        for s in &stats {
            let brute: f64 =
                vectors.iter().map(|v| v[s.feature - 1]).sum::<f64>() / vectors.len() as f64;
            assert!((s.mean - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn report_csv_shape() {
        let samples = separable(20, 20);
        let report = cross_validate(&samples, &quick_params(), 4, 1).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_CSV_HEADER);
        assert_eq!(lines.len(), 1 + 4 + 1); // header + folds + mean
        assert!(lines[5].contains("mean"));
        assert!(report.render_table().contains("fold01"));
    }
}
