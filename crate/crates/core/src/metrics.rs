//! Confusion matrices, per-class and macro metrics, and one-vs-all ROC.
//!
//! Per-class metrics come from the one-vs-rest reduction of the 3x3
//! confusion matrix. F1 is the standard harmonic mean 2PR/(P+R). Any
//! 0/0 denominator yields 0 rather than an error so batch evaluation
//! stays total. "Avg." figures are macro (unweighted) averages, and
//! every report declares that.

use crate::format::{fmt_sig, round_sig};
use crate::learner::{Label, PredictionMatrix, NUM_CLASSES};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("truth has {truth} labels but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class {0} has no positive samples in truth")]
    ClassAbsent(Label),
    #[error("class {0} has no negative samples in truth; ROC is undefined")]
    NoNegatives(Label),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::LengthMismatch { .. } => "metrics/LengthMismatch",
            Self::EmptyMatrix => "metrics/EmptyMatrix",
            Self::ClassAbsent(_) => "metrics/ClassAbsent",
            Self::NoNegatives(_) => "metrics/NoNegatives",
        }
    }
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// 3x3 count matrix; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// One-vs-rest reduction for class c: (TP, FN, FP, TN).
    pub fn one_vs_rest(&self, c: Label) -> (u64, u64, u64, u64) {
        let c = c.index();
        let tp = self.counts[c][c];
        let fn_ = self.counts[c].iter().sum::<u64>() - tp;
        let fp = (0..NUM_CLASSES).map(|t| self.counts[t][c]).sum::<u64>() - tp;
        let tn = self.total() - tp - fn_ - fp;
        (tp, fn_, fp, tn)
    }

    /// CSV rendering with true classes as rows and predicted as columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred,AD,MCI,CN\n");
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                Label::from_index(t).expect("in range"),
                row[0],
                row[1],
                row[2]
            ));
        }
        out
    }
}

/// Tally predictions against ground truth.
pub fn confusion_matrix(truth: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(pred) {
        counts[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Precision, recall (sensitivity), specificity, and F1 for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Per-class metrics from the one-vs-rest reduction; 0/0 yields 0.
pub fn class_metrics(cm: &ConfusionMatrix, c: Label) -> ClassMetrics {
    let (tp, fn_, fp, tn) = cm.one_vs_rest(c);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        specificity,
        f1,
    }
}

/// Trace over total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let trace: u64 = (0..NUM_CLASSES).map(|c| cm.counts[c][c]).sum();
    Ok(trace as f64 / total as f64)
}

/// Unweighted arithmetic means across the three classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

pub fn macro_average(per_class: &[ClassMetrics; NUM_CLASSES]) -> MacroMetrics {
    let mean =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
    MacroMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        specificity: mean(|m| m.specificity),
        f1: mean(|m| m.f1),
    }
}

/// Complete evaluation of one model: confusion matrix, per-class and
/// macro metrics, and overall accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub macro_avg: MacroMetrics,
    pub accuracy: f64,
}

impl MetricsReport {
    pub fn from_labels(truth: &[Label], pred: &[Label]) -> Result<Self> {
        let cm = confusion_matrix(truth, pred)?;
        Self::from_confusion(cm)
    }

    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let accuracy = accuracy(&cm)?;
        let per_class = [
            class_metrics(&cm, Label::Ad),
            class_metrics(&cm, Label::Mci),
            class_metrics(&cm, Label::Cn),
        ];
        Ok(Self {
            confusion: cm,
            per_class,
            macro_avg: macro_average(&per_class),
            accuracy,
        })
    }
}

/// JSON shape of a metrics report; numbers are rounded to 6 significant
/// digits so identical runs serialize identically.
#[derive(Debug, Serialize)]
pub struct ReportJson {
    pub model_id: String,
    pub granularity: String,
    pub averaging: &'static str,
    pub n_samples: u64,
    pub accuracy: f64,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub per_class: Vec<PerClassJson>,
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_fraction: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PerClassJson {
    pub class: &'static str,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

impl ReportJson {
    pub fn new(
        model_id: impl Into<String>,
        granularity: impl Into<String>,
        report: &MetricsReport,
        tie_fraction: Option<f64>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            granularity: granularity.into(),
            averaging: "macro",
            n_samples: report.confusion.total(),
            accuracy: round_sig(report.accuracy),
            macro_avg: MacroMetrics {
                precision: round_sig(report.macro_avg.precision),
                recall: round_sig(report.macro_avg.recall),
                specificity: round_sig(report.macro_avg.specificity),
                f1: round_sig(report.macro_avg.f1),
            },
            per_class: Label::ALL
                .iter()
                .zip(&report.per_class)
                .map(|(label, m)| PerClassJson {
                    class: label.as_str(),
                    precision: round_sig(m.precision),
                    recall: round_sig(m.recall),
                    specificity: round_sig(m.specificity),
                    f1: round_sig(m.f1),
                })
                .collect(),
            confusion: report.confusion.counts,
            tie_fraction: tie_fraction.map(round_sig),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One point of a ROC curve; `threshold` is the score at or above which
/// samples are called positive (infinite at the (0,0) anchor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// One-vs-all ROC curve for a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub class: Label,
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// CSV rendering: `fpr,tpr,threshold` per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig(p.fpr),
                fmt_sig(p.tpr),
                fmt_sig(p.threshold)
            ));
        }
        out
    }
}

/// Threshold sweep over the class-c score column, descending; samples
/// with equal scores move together. The curve is anchored at (0,0) and
/// ends at (1,1); AUC is the trapezoidal area, which equals the rank
/// statistic P(score_pos > score_neg) + 0.5 P(equal).
pub fn roc_one_vs_all(scores: &PredictionMatrix, truth: &[Label], c: Label) -> Result<RocCurve> {
    if truth.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: scores.len(),
        });
    }
    let positives = truth.iter().filter(|&&t| t == c).count();
    let negatives = truth.len() - positives;
    if positives == 0 {
        return Err(MetricsError::ClassAbsent(c));
    }
    if negatives == 0 {
        return Err(MetricsError::NoNegatives(c));
    }

    let mut scored: Vec<(f64, bool)> = scores
        .probs()
        .iter()
        .zip(truth)
        .map(|(row, &t)| (row[c.index()], t == c))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("probabilities are finite"));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut auc = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        // Consume the whole tie group at this score.
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("anchored");
        let point = RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok(RocCurve {
        class: c,
        points,
        auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
        (0..n)
            .map(|_| Label::from_index(rng.gen_range(0..NUM_CLASSES)).unwrap())
            .collect()
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let truth: Vec<Label> = Label::ALL.iter().flat_map(|&l| vec![l; 5]).collect();
        let cm = confusion_matrix(&truth, &truth).unwrap();
        assert_eq!(cm.counts[0][0], 5);
        assert_eq!(cm.counts[1][1], 5);
        assert_eq!(cm.counts[2][2], 5);
        assert_eq!(cm.total(), 15);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn single_misclassification_lands_off_diagonal() {
        let cm = confusion_matrix(&[Label::Ad], &[Label::Mci]).unwrap();
        assert_eq!(cm.counts[0][1], 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(accuracy(&cm).unwrap(), 0.0);
    }

    #[test]
    fn random_tally_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let truth = random_labels(&mut rng, 200);
        let pred = random_labels(&mut rng, 200);
        let cm = confusion_matrix(&truth, &pred).unwrap();
        for t in Label::ALL {
            for p in Label::ALL {
                let expected = truth
                    .iter()
                    .zip(&pred)
                    .filter(|(&a, &b)| a == t && b == p)
                    .count() as u64;
                assert_eq!(cm.counts[t.index()][p.index()], expected);
            }
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(
            confusion_matrix(&[Label::Ad], &[]),
            Err(MetricsError::LengthMismatch { truth: 1, pred: 0 })
        ));
    }

    /// The hand case TP=8, FN=2, FP=1, TN=9 for class AD, embedded in a
    /// 3x3 matrix whose trace also gives accuracy 0.85.
    fn hand_case() -> ConfusionMatrix {
        ConfusionMatrix {
            counts: [[8, 1, 1], [1, 5, 0], [0, 0, 4]],
        }
    }

    #[test]
    fn hand_case_reduction_and_metrics() {
        let cm = hand_case();
        assert_eq!(cm.one_vs_rest(Label::Ad), (8, 2, 1, 9));
        let m = class_metrics(&cm, Label::Ad);
        assert!((m.precision - 8.0 / 9.0).abs() < 1e-4);
        assert!((m.recall - 0.8).abs() < 1e-4);
        assert!((m.specificity - 0.9).abs() < 1e-4);
        assert!((m.f1 - 0.8421).abs() < 1e-4);
        assert!((accuracy(&cm).unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn perfect_class_scores_one_everywhere() {
        let truth = vec![Label::Ad, Label::Ad, Label::Mci, Label::Cn];
        let cm = confusion_matrix(&truth, &truth).unwrap();
        let m = class_metrics(&cm, Label::Ad);
        assert_eq!(
            (m.precision, m.recall, m.specificity, m.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn absent_class_follows_the_zero_over_zero_rule() {
        // CN appears in neither truth nor predictions: precision,
        // recall, and F1 are all 0/0 cases and yield 0.
        let truth = vec![Label::Ad, Label::Mci];
        let cm = confusion_matrix(&truth, &truth).unwrap();
        let m = class_metrics(&cm, Label::Cn);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        // Specificity is not a 0/0 case here: TN = 2, FP = 0 gives 1.
        assert_eq!(m.specificity, 1.0);
    }

    #[test]
    fn macro_average_is_unweighted_mean() {
        let per_class = [
            ClassMetrics {
                precision: 1.0,
                recall: 0.9,
                specificity: 0.8,
                f1: 0.95,
            },
            ClassMetrics {
                precision: 0.5,
                recall: 0.6,
                specificity: 0.7,
                f1: 0.55,
            },
            ClassMetrics {
                precision: 0.0,
                recall: 0.3,
                specificity: 0.6,
                f1: 0.0,
            },
        ];
        let macro_avg = macro_average(&per_class);
        assert!((macro_avg.precision - 0.5).abs() < 1e-12);
        assert!((macro_avg.recall - 0.6).abs() < 1e-12);
        assert!((macro_avg.specificity - 0.7).abs() < 1e-12);
        assert!((macro_avg.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_recall_weighted_by_class_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10 {
            let truth = random_labels(&mut rng, 150);
            let pred = random_labels(&mut rng, 150);
            let cm = confusion_matrix(&truth, &pred).unwrap();
            let weighted: f64 = Label::ALL
                .iter()
                .map(|&c| {
                    let row: u64 = cm.counts[c.index()].iter().sum();
                    class_metrics(&cm, c).recall * row as f64
                })
                .sum::<f64>()
                / cm.total() as f64;
            assert!((accuracy(&cm).unwrap() - weighted).abs() < 1e-12);
        }
    }

    fn scores_matrix(class_scores: &[f64]) -> PredictionMatrix {
        // Only the AD column matters for a class-AD sweep; spread the
        // remainder evenly.
        let rows: Vec<[f64; NUM_CLASSES]> = class_scores
            .iter()
            .map(|&s| [s, (1.0 - s) / 2.0, (1.0 - s) / 2.0])
            .collect();
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        PredictionMatrix::new("roc", ids, rows).unwrap()
    }

    #[test]
    fn perfectly_separating_scores_have_auc_one() {
        let scores = scores_matrix(&[0.9, 0.8, 0.2, 0.1]);
        let truth = vec![Label::Ad, Label::Ad, Label::Mci, Label::Cn];
        let roc = roc_one_vs_all(&scores, &truth, Label::Ad).unwrap();
        assert!((roc.auc - 1.0).abs() < 1e-12);
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn identical_scores_give_the_chance_diagonal() {
        let scores = scores_matrix(&[0.4; 6]);
        let truth = vec![
            Label::Ad,
            Label::Ad,
            Label::Mci,
            Label::Cn,
            Label::Mci,
            Label::Ad,
        ];
        let roc = roc_one_vs_all(&scores, &truth, Label::Ad).unwrap();
        assert!((roc.auc - 0.5).abs() < 1e-12);
        // Single tie group: anchor plus one point at (1,1).
        assert_eq!(roc.points.len(), 2);
    }

    /// Rank statistic P(score_pos > score_neg) + 0.5 P(equal) by
    /// exhaustive pair comparison.
    fn pairwise_auc(scores: &[f64], truth: &[Label], c: Label) -> f64 {
        let pos: Vec<f64> = scores
            .iter()
            .zip(truth)
            .filter(|(_, &t)| t == c)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(truth)
            .filter(|(_, &t)| t != c)
            .map(|(&s, _)| s)
            .collect();
        let mut total = 0.0;
        for &p in &pos {
            for &n in &neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn six_sample_auc_matches_pairwise_oracle() {
        let class_scores = [0.9, 0.3, 0.3, 0.7, 0.1, 0.5];
        let truth = vec![
            Label::Ad,
            Label::Mci,
            Label::Ad,
            Label::Cn,
            Label::Mci,
            Label::Ad,
        ];
        let scores = scores_matrix(&class_scores);
        let roc = roc_one_vs_all(&scores, &truth, Label::Ad).unwrap();
        let expected = pairwise_auc(&class_scores, &truth, Label::Ad);
        assert!((roc.auc - expected).abs() < 1e-9);
    }

    #[test]
    fn random_auc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..10 {
            let n = rng.gen_range(5..200);
            // Coarse quantization forces plenty of tie groups.
            let class_scores: Vec<f64> =
                (0..n).map(|_| rng.gen_range(0..11) as f64 / 10.0).collect();
            let mut truth = random_labels(&mut rng, n);
            truth[0] = Label::Ad;
            truth[n - 1] = Label::Mci;
            let scores = scores_matrix(&class_scores);
            let roc = roc_one_vs_all(&scores, &truth, Label::Ad).unwrap();
            let expected = pairwise_auc(&class_scores, &truth, Label::Ad);
            assert!((roc.auc - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn roc_monotonicity_and_trapezoid_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let n = 80;
        let class_scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let mut truth = random_labels(&mut rng, n);
        truth[0] = Label::Ad;
        truth[1] = Label::Cn;
        let scores = scores_matrix(&class_scores);
        let roc = roc_one_vs_all(&scores, &truth, Label::Ad).unwrap();
        let mut area = 0.0;
        for w in roc.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr);
            assert!(w[1].tpr >= w[0].tpr);
            area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
        }
        assert!((area - roc.auc).abs() < 1e-9);
    }

    #[test]
    fn missing_class_is_an_error() {
        let scores = scores_matrix(&[0.5, 0.4]);
        let truth = vec![Label::Mci, Label::Cn];
        assert!(matches!(
            roc_one_vs_all(&scores, &truth, Label::Ad),
            Err(MetricsError::ClassAbsent(Label::Ad))
        ));
        let all_ad = vec![Label::Ad, Label::Ad];
        assert!(matches!(
            roc_one_vs_all(&scores, &all_ad, Label::Ad),
            Err(MetricsError::NoNegatives(Label::Ad))
        ));
    }

    #[test]
    fn report_json_is_deterministic_and_rounded() {
        let truth = vec![Label::Ad, Label::Ad, Label::Mci, Label::Cn, Label::Cn];
        let pred = vec![Label::Ad, Label::Mci, Label::Mci, Label::Cn, Label::Ad];
        let report = MetricsReport::from_labels(&truth, &pred).unwrap();
        let a = ReportJson::new("m", "slice", &report, None).to_json();
        let b = ReportJson::new("m", "slice", &report, None).to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"averaging\": \"macro\""));
        assert!(!a.contains("tie_fraction"));
        let with_tie = ReportJson::new("m", "slice", &report, Some(0.021)).to_json();
        assert!(with_tie.contains("\"tie_fraction\": 0.021"));
    }

    #[test]
    fn confusion_csv_layout() {
        let cm = hand_case();
        let csv = cm.to_csv();
        assert_eq!(csv, "true\\pred,AD,MCI,CN\nAD,8,1,1\nMCI,1,5,0\nCN,0,0,4\n");
    }
}
