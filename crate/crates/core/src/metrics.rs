//! Confusion matrix and per-class / aggregate precision, recall and F1.

use std::fmt;

use crate::error::{Error, Result};
use crate::labeler::TriLabel;

/// Rows are true classes, columns predicted classes, both in order (−1, 0, 1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix(pub [[u64; 3]; 3]);

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.0[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.0[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.0.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion(y_true: &[TriLabel], y_pred: &[TriLabel]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Empty("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.0[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Precision was 0/0 (class never predicted) and reported as 0.
    pub precision_undefined: bool,
    /// Recall was 0/0 (class absent from the truth) and reported as 0.
    pub recall_undefined: bool,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall).0
}

/// Per-class metrics in class order. Any 0/0 is reported as 0 and flagged.
pub fn per_class_prf(cm: &ConfusionMatrix) -> [ClassMetrics; 3] {
    std::array::from_fn(|j| {
        let tp = cm.0[j][j] as f64;
        let (precision, precision_undefined) = ratio(tp, cm.col_sum(j) as f64);
        let (recall, recall_undefined) = ratio(tp, cm.row_sum(j) as f64);
        ClassMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: cm.row_sum(j),
            precision_undefined,
            recall_undefined,
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Aggregates {
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub accuracy: f64,
    pub total: u64,
}

/// Macro (unweighted) and support-weighted means, plus accuracy
/// recovered as `Σ recall·support / Σ support`.
pub fn aggregate(per_class: &[ClassMetrics; 3]) -> Aggregates {
    let n = per_class.len() as f64;
    let total: u64 = per_class.iter().map(|c| c.support).sum();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        ratio(per_class.iter().map(|c| f(c) * c.support as f64).sum(), total as f64).0
    };
    let correct: f64 = per_class.iter().map(|c| (c.recall * c.support as f64).round()).sum();
    Aggregates {
        macro_avg: Averages {
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
        },
        weighted_avg: Averages {
            precision: weighted(|c| c.precision),
            recall: weighted(|c| c.recall),
            f1: weighted(|c| c.f1),
        },
        accuracy: ratio(correct, total as f64).0,
        total,
    }
}

/// Full evaluation result, stored at full precision.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub classes: [ClassMetrics; 3],
    pub aggregates: Aggregates,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let classes = per_class_prf(&confusion);
        let mut aggregates = aggregate(&classes);
        // exact integer form of the same quantity
        aggregates.accuracy = ratio(confusion.trace() as f64, confusion.total() as f64).0;
        EvalReport {
            confusion,
            classes,
            aggregates,
        }
    }

    pub fn from_labels(y_true: &[TriLabel], y_pred: &[TriLabel]) -> Result<Self> {
        Ok(Self::from_confusion(confusion(y_true, y_pred)?))
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (label, c) in TriLabel::ALL.iter().zip(&self.classes) {
            if c.precision_undefined {
                out.push(format!("precision_undefined:{label}"));
            }
            if c.recall_undefined {
                out.push(format!("recall_undefined:{label}"));
            }
        }
        out
    }

    /// Key-value text with one block per class and the aggregates.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let a = &self.aggregates;
        s.push_str(&format!("total = {}\n", a.total));
        s.push_str(&format!("accuracy = {:?}\n", a.accuracy));
        for (label, c) in TriLabel::ALL.iter().zip(&self.classes) {
            s.push_str(&format!("\n[class {label}]\n"));
            s.push_str(&format!("precision = {:?}\n", c.precision));
            s.push_str(&format!("recall = {:?}\n", c.recall));
            s.push_str(&format!("f1 = {:?}\n", c.f1));
            s.push_str(&format!("support = {}\n", c.support));
        }
        for (name, avg) in [("macro", &a.macro_avg), ("weighted", &a.weighted_avg)] {
            s.push_str(&format!("\n[{name}]\n"));
            s.push_str(&format!("precision = {:?}\n", avg.precision));
            s.push_str(&format!("recall = {:?}\n", avg.recall));
            s.push_str(&format!("f1 = {:?}\n", avg.f1));
        }
        s.push_str("\n[confusion]\n");
        for (label, row) in TriLabel::ALL.iter().zip(&self.confusion.0) {
            s.push_str(&format!("{label} = {} {} {}\n", row[0], row[1], row[2]));
        }
        let warnings = self.warnings();
        s.push_str(&format!("\nwarnings = {}\n", if warnings.is_empty() { "none".into() } else { warnings.join(",") }));
        s
    }

    pub fn csv_header() -> &'static str {
        "accuracy,macro_precision,macro_recall,macro_f1,weighted_precision,weighted_recall,weighted_f1,\
         precision_neg,recall_neg,f1_neg,support_neg,precision_neu,recall_neu,f1_neu,support_neu,\
         precision_pos,recall_pos,f1_pos,support_pos"
    }

    pub fn csv_row(&self) -> String {
        let a = &self.aggregates;
        let mut fields = vec![
            a.accuracy,
            a.macro_avg.precision,
            a.macro_avg.recall,
            a.macro_avg.f1,
            a.weighted_avg.precision,
            a.weighted_avg.recall,
            a.weighted_avg.f1,
        ]
        .into_iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>();
        for c in &self.classes {
            fields.extend([
                format!("{:?}", c.precision),
                format!("{:?}", c.recall),
                format!("{:?}", c.f1),
                c.support.to_string(),
            ]);
        }
        fields.join(",")
    }
}

/// Two-decimal table in the usual classification-report layout.
impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>12} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1-score", "support")?;
        for (label, c) in TriLabel::ALL.iter().zip(&self.classes) {
            writeln!(
                f,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                label.to_string(),
                c.precision,
                c.recall,
                c.f1,
                c.support
            )?;
        }
        let a = &self.aggregates;
        writeln!(f, "{:>12} {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", a.accuracy, a.total)?;
        for (name, avg) in [("macro avg", &a.macro_avg), ("weighted avg", &a.weighted_avg)] {
            writeln!(
                f,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, avg.precision, avg.recall, avg.f1, a.total
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TriLabel::*;

    fn class(p: f64, r: f64, support: u64) -> ClassMetrics {
        ClassMetrics {
            precision: p,
            recall: r,
            f1: f1_score(p, r),
            support,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_diagonal() {
        let cm = confusion(&[Negative, Neutral, Positive], &[Negative, Neutral, Positive]).unwrap();
        assert_eq!(cm.0, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let r = EvalReport::from_confusion(cm);
        for c in &r.classes {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.aggregates.accuracy, 1.0);
    }

    #[test]
    fn single_off_diagonal_cell() {
        let cm = confusion(&[Negative, Negative], &[Positive, Positive]).unwrap();
        assert_eq!(cm.0, [[0, 0, 2], [0, 0, 0], [0, 0, 0]]);
        let r = EvalReport::from_confusion(cm);
        let neutral = r.classes[1];
        assert_eq!((neutral.precision, neutral.recall, neutral.f1, neutral.support), (0.0, 0.0, 0.0, 0));
        assert!(neutral.precision_undefined && neutral.recall_undefined);
        assert!(r.warnings().contains(&"recall_undefined:0".to_string()));
    }

    #[test]
    fn errors() {
        assert!(confusion(&[Negative], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn published_row_f1() {
        let c = class(0.75, 0.77, 3637);
        assert!((c.f1 - 0.759_868_421_052_631_6).abs() < 1e-12);
        assert_eq!(format!("{:.2}", c.f1), "0.76");
    }

    #[test]
    fn published_table_averages() {
        // F1 column taken as printed; P and R arbitrary since only F1 is averaged here.
        let mut rows = [class(0.75, 0.77, 3637), class(0.62, 0.68, 3597), class(0.83, 0.72, 3566)];
        for (row, f1) in rows.iter_mut().zip([0.76, 0.65, 0.77]) {
            row.f1 = f1;
        }
        let a = aggregate(&rows);
        assert!((a.macro_avg.f1 - 0.726_666_666_666_666_7).abs() < 1e-12);
        let weighted = (0.76 * 3637.0 + 0.65 * 3597.0 + 0.77 * 3566.0) / 10800.0;
        assert!((a.weighted_avg.f1 - weighted).abs() < 1e-12);
        assert_eq!(format!("{:.2}", a.weighted_avg.f1), "0.73");
    }

    #[test]
    fn identical_scores_collapse_averages() {
        let rows = [class(0.6, 0.6, 10), class(0.6, 0.6, 30), class(0.6, 0.6, 5)];
        let a = aggregate(&rows);
        assert!((a.macro_avg.f1 - a.weighted_avg.f1).abs() < 1e-15);
        assert!((a.macro_avg.f1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn text_and_csv_forms() {
        let r = EvalReport::from_labels(&[Negative, Neutral, Positive, Positive], &[Negative, Positive, Positive, Neutral]).unwrap();
        let text = r.to_text();
        assert!(text.contains("[class -1]\nprecision = 1.0"));
        assert!(text.contains("warnings = none"));
        assert_eq!(r.csv_row().split(',').count(), EvalReport::csv_header().split(',').count());
        let shown = r.to_string();
        assert!(shown.contains("macro avg"));
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<(usize, usize)>> {
        proptest::collection::vec((0usize..3, 0usize..3), 1..200)
    }

    fn labels(pairs: &[(usize, usize)]) -> (Vec<TriLabel>, Vec<TriLabel>) {
        pairs
            .iter()
            .map(|&(t, p)| (TriLabel::from_index(t).unwrap(), TriLabel::from_index(p).unwrap()))
            .unzip()
    }

    proptest! {
        #[test]
        fn micro_average_equals_accuracy(pairs in arb_pairs()) {
            let (t, p) = labels(&pairs);
            let r = EvalReport::from_labels(&t, &p).unwrap();
            let cm = r.confusion;
            let tp: u64 = cm.trace();
            let fp: u64 = (0..3).map(|j| cm.col_sum(j) - cm.0[j][j]).sum();
            let fn_: u64 = (0..3).map(|j| cm.row_sum(j) - cm.0[j][j]).sum();
            let micro_p = tp as f64 / (tp + fp) as f64;
            let micro_r = tp as f64 / (tp + fn_) as f64;
            prop_assert!((micro_p - r.aggregates.accuracy).abs() < 1e-15);
            prop_assert!((micro_r - r.aggregates.accuracy).abs() < 1e-15);
            prop_assert_eq!(r.classes.iter().map(|c| c.support).sum::<u64>(), cm.total());
            for c in &r.classes {
                for v in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn order_does_not_matter(pairs in arb_pairs()) {
            let (t, p) = labels(&pairs);
            let mut rev = pairs.clone();
            rev.reverse();
            let (t2, p2) = labels(&rev);
            prop_assert_eq!(EvalReport::from_labels(&t, &p).unwrap(), EvalReport::from_labels(&t2, &p2).unwrap());
        }

        #[test]
        fn equal_supports_make_macro_equal_weighted(pairs in proptest::collection::vec(0usize..3, 1..40)) {
            // every true class appears the same number of times
            let truth: Vec<TriLabel> = (0..pairs.len() * 3).map(|i| TriLabel::from_index(i % 3).unwrap()).collect();
            let pred: Vec<TriLabel> = pairs.iter().cycle().take(truth.len()).map(|&i| TriLabel::from_index(i).unwrap()).collect();
            let a = EvalReport::from_labels(&truth, &pred).unwrap().aggregates;
            prop_assert!((a.macro_avg.f1 - a.weighted_avg.f1).abs() < 1e-12);
            prop_assert!((a.macro_avg.recall - a.weighted_avg.recall).abs() < 1e-12);
        }
    }
}
