//! Classification metrics for the design-checking task: a 4-class confusion
//! matrix, per-class precision/recall/F1, and the averaged F1 scores used
//! for model selection.

use serde::{Deserialize, Serialize};

use crate::graph::{Label, NUM_CLASSES};

/// Confusion counts with rows indexed by the predicted class and columns by
/// the actual class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        ConfusionMatrix::default()
    }

    pub fn add(&mut self, predicted: Label, actual: Label) {
        self.counts[predicted.index()][actual.index()] += 1;
    }

    pub fn add_indices(&mut self, predicted: usize, actual: usize) {
        self.counts[predicted][actual] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Number of nodes whose actual class is `c`.
    pub fn support(&self, c: usize) -> usize {
        (0..NUM_CLASSES).map(|p| self.counts[p][c]).sum()
    }

    /// TP / (TP + FP); defined as 0 when the class was never predicted.
    pub fn precision(&self, c: usize) -> f64 {
        let tp = self.counts[c][c];
        let predicted: usize = self.counts[c].iter().sum();
        safe_div(tp, predicted)
    }

    /// TP / (TP + FN); defined as 0 when the class never occurs.
    pub fn recall(&self, c: usize) -> f64 {
        safe_div(self.counts[c][c], self.support(c))
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self, c: usize) -> f64 {
        let p = self.precision(c);
        let r = self.recall(c);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum();
        safe_div(correct, self.total())
    }

    /// Unweighted mean F1 over the three error classes. The dominant
    /// `correct` class is deliberately excluded so a trivial all-correct
    /// predictor scores 0.
    pub fn average_f1(&self) -> f64 {
        (1..NUM_CLASSES).map(|c| self.f1(c)).sum::<f64>() / (NUM_CLASSES - 1) as f64
    }

    /// Support-weighted mean F1 over all four classes.
    pub fn weighted_f1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..NUM_CLASSES)
            .map(|c| self.f1(c) * self.support(c) as f64)
            .sum::<f64>()
            / total as f64
    }
}

fn safe_div(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Everything reported for one evaluation pass, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    /// Per-class metrics in label-index order
    /// (correct, semantic_conflict, data_range_error, topological_error).
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub average_f1: f64,
    pub weighted_f1: f64,
    pub nodes_evaluated: usize,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let per_class = (0..NUM_CLASSES)
            .map(|c| ClassMetrics {
                precision: confusion.precision(c),
                recall: confusion.recall(c),
                f1: confusion.f1(c),
                support: confusion.support(c),
            })
            .collect();
        EvalReport {
            accuracy: confusion.accuracy(),
            average_f1: confusion.average_f1(),
            weighted_f1: confusion.weighted_f1(),
            nodes_evaluated: confusion.total(),
            per_class,
            confusion,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> crate::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_counted_confusion() {
        // Predictions vs truth over 10 nodes, tallied by hand.
        let pairs = [
            (0, 0),
            (0, 0),
            (0, 1), // missed semantic conflict
            (1, 1),
            (1, 0), // false alarm
            (2, 2),
            (2, 2),
            (3, 3),
            (3, 2), // data-range error called topological
            (0, 0),
        ];
        let mut cm = ConfusionMatrix::new();
        for (p, a) in pairs {
            cm.add_indices(p, a);
        }
        assert_eq!(cm.total(), 10);
        assert_eq!(cm.counts[0][0], 3);
        assert_eq!(cm.counts[0][1], 1);
        assert_eq!(cm.support(2), 3);

        // Class 1: TP=1, FP=1, FN=1 -> P=R=F1=0.5.
        assert_abs_diff_eq!(cm.precision(1), 0.5);
        assert_abs_diff_eq!(cm.recall(1), 0.5);
        assert_abs_diff_eq!(cm.f1(1), 0.5);
        // Class 2: TP=2, FP=0, FN=1 -> P=1, R=2/3, F1=0.8.
        assert_abs_diff_eq!(cm.f1(2), 0.8, epsilon = 1e-12);
        // Class 3: TP=1, FP=1, FN=0 -> P=0.5, R=1, F1=2/3.
        assert_abs_diff_eq!(cm.f1(3), 2.0 / 3.0, epsilon = 1e-12);

        assert_abs_diff_eq!(cm.accuracy(), 0.7);
        assert_abs_diff_eq!(
            cm.average_f1(),
            (0.5 + 0.8 + 2.0 / 3.0) / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn absent_class_scores_zero_not_nan() {
        let mut cm = ConfusionMatrix::new();
        cm.add_indices(0, 0);
        cm.add_indices(0, 0);
        for c in 1..NUM_CLASSES {
            assert_eq!(cm.precision(c), 0.0);
            assert_eq!(cm.recall(c), 0.0);
            assert_eq!(cm.f1(c), 0.0);
        }
        assert_eq!(cm.average_f1(), 0.0);
        assert!(cm.average_f1().is_finite());
    }

    #[test]
    fn all_correct_predictor_scores_zero_average_f1() {
        let mut cm = ConfusionMatrix::new();
        // Truth has errors, but the model always says "correct".
        cm.add_indices(0, 0);
        cm.add_indices(0, 1);
        cm.add_indices(0, 2);
        cm.add_indices(0, 3);
        assert_eq!(cm.average_f1(), 0.0);
        assert!(cm.accuracy() > 0.0);
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut cm = ConfusionMatrix::new();
        cm.add(Label::SemanticConflict, Label::SemanticConflict);
        cm.add(Label::Correct, Label::TopologicalError);
        let report = EvalReport::from_confusion(cm);
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }
}
