//! Confusion matrix and F1 scores for the 3-class task.
//!
//! Macro-F1 (the unweighted mean of per-class F1) is the headline metric;
//! micro and support-weighted F1 are reported alongside. Any 0/0 ratio is
//! defined as 0.

use std::fmt;

use crate::error::{Error, Result};
use crate::text::dataset::{CLASS_NAMES, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Rows are gold labels, columns are predictions.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub per_class: [ClassScores; NUM_CLASSES],
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub total: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Score predictions against gold labels.
pub fn eval_report(gold: &[u8], pred: &[u8]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (i, (&g, &p)) in gold.iter().zip(pred).enumerate() {
        if g as usize >= NUM_CLASSES || p as usize >= NUM_CLASSES {
            return Err(Error::Data(format!(
                "row {}: label outside {{0, 1, 2}}",
                i + 1
            )));
        }
        confusion[g as usize][p as usize] += 1;
    }

    let mut per_class = [ClassScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        support: 0,
    }; NUM_CLASSES];
    let mut correct = 0usize;
    for c in 0..NUM_CLASSES {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..NUM_CLASSES).map(|g| confusion[g][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        per_class[c] = ClassScores {
            precision,
            recall,
            f1: f1_of(precision, recall),
            support,
        };
        correct += tp;
    }
    let total = gold.len();
    let accuracy = correct as f64 / total as f64;
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / NUM_CLASSES as f64;
    // Single-label multiclass micro precision and recall coincide with accuracy.
    let micro_f1 = accuracy;
    let weighted_f1 = per_class
        .iter()
        .map(|s| s.f1 * s.support as f64)
        .sum::<f64>()
        / total as f64;
    Ok(EvalReport {
        confusion,
        per_class,
        macro_f1,
        micro_f1,
        weighted_f1,
        accuracy,
        total,
    })
}

/// Percent with three decimals, the format of published result tables.
pub fn percent(v: f64) -> String {
    format!("{:.3}", v * 100.0)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "confusion matrix (rows gold, cols predicted):")?;
        write!(f, "{:>12}", "")?;
        for name in CLASS_NAMES {
            write!(f, "{name:>12}")?;
        }
        writeln!(f)?;
        for (c, row) in self.confusion.iter().enumerate() {
            write!(f, "{:>12}", CLASS_NAMES[c])?;
            for v in row {
                write!(f, "{v:>12}")?;
            }
            writeln!(f)?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:>12}{:>12}{:>12}{:>12}{:>10}",
            "class", "precision", "recall", "F1", "support"
        )?;
        for (c, s) in self.per_class.iter().enumerate() {
            writeln!(
                f,
                "{:>12}{:>12}{:>12}{:>12}{:>10}",
                CLASS_NAMES[c],
                percent(s.precision),
                percent(s.recall),
                percent(s.f1),
                s.support
            )?;
        }
        writeln!(f)?;
        writeln!(f, "macro-F1:    {}", percent(self.macro_f1))?;
        writeln!(f, "micro-F1:    {}", percent(self.micro_f1))?;
        writeln!(f, "weighted-F1: {}", percent(self.weighted_f1))?;
        write!(f, "accuracy:    {}", percent(self.accuracy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_one() {
        let labels = [0u8, 1, 2, 0, 1, 2];
        let report = eval_report(&labels, &labels).unwrap();
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.accuracy, 1.0);
        for s in &report.per_class {
            assert_eq!(s.f1, 1.0);
        }
    }

    #[test]
    fn hand_confusion_matrix() {
        // gold [0,1,2], pred [0,2,2]: clean F1 1, offensive 0, hate 2/3.
        let report = eval_report(&[0, 1, 2], &[0, 2, 2]).unwrap();
        assert_eq!(report.per_class[0].f1, 1.0);
        assert_eq!(report.per_class[1].f1, 0.0);
        assert!((report.per_class[2].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.macro_f1 - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn always_predict_clean_on_imbalanced_gold() {
        // 9149/502/349 gold, all predicted clean:
        // clean F1 = 2·0.9149/1.9149 ≈ 0.955559, macro ≈ 0.318520.
        let mut gold = vec![0u8; 9149];
        gold.extend(vec![1u8; 502]);
        gold.extend(vec![2u8; 349]);
        let pred = vec![0u8; gold.len()];
        let report = eval_report(&gold, &pred).unwrap();
        assert!((report.per_class[0].f1 - 0.9555590).abs() < 1e-6);
        assert_eq!(report.per_class[1].f1, 0.0);
        assert_eq!(report.per_class[2].f1, 0.0);
        assert!((report.macro_f1 - 0.3185197).abs() < 5e-4);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        // Nothing predicted as hate, nothing gold hate in predictions row.
        let report = eval_report(&[0, 0, 1], &[0, 1, 0]).unwrap();
        assert_eq!(report.per_class[2].precision, 0.0);
        assert_eq!(report.per_class[2].recall, 0.0);
        assert_eq!(report.per_class[2].f1, 0.0);
    }

    #[test]
    fn macro_f1_invariant_under_consistent_relabeling() {
        let gold = [0u8, 0, 1, 2, 1, 0, 2, 2, 1, 0];
        let pred = [0u8, 1, 1, 2, 0, 0, 2, 1, 1, 2];
        let base = eval_report(&gold, &pred).unwrap().macro_f1;
        // permutation 0→2, 1→0, 2→1
        let perm = |l: u8| match l {
            0 => 2u8,
            1 => 0,
            _ => 1,
        };
        let gold_p: Vec<u8> = gold.iter().map(|&l| perm(l)).collect();
        let pred_p: Vec<u8> = pred.iter().map(|&l| perm(l)).collect();
        let permuted = eval_report(&gold_p, &pred_p).unwrap().macro_f1;
        assert!((base - permuted).abs() < 1e-15);
    }

    #[test]
    fn totals_are_conserved() {
        let gold = [0u8, 1, 2, 1];
        let pred = [2u8, 1, 2, 0];
        let report = eval_report(&gold, &pred).unwrap();
        let sum: usize = report.confusion.iter().flatten().sum();
        assert_eq!(sum, 4);
        assert_eq!(report.total, 4);
    }
}
