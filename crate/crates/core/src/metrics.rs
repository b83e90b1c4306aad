//! Confusion matrices and macro-averaged F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes, both in `classes` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix<L> {
    pub classes: Vec<L>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion<L: Copy + PartialEq + std::fmt::Debug>(
    y_true: &[L],
    y_pred: &[L],
    classes: &[L],
) -> Result<ConfusionMatrix<L>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::param(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let index = |l: &L| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::param(format!("label {l:?} is not in the class list")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl<L> ConfusionMatrix<L> {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Per-class scores; every 0/0 is taken as 0.
    pub fn class_scores(&self) -> Vec<ClassScore> {
        let k = self.classes.len();
        (0..k)
            .map(|i| {
                let tp = self.counts[i][i];
                let row: u64 = self.counts[i].iter().sum();
                let col: u64 = self.counts.iter().map(|r| r[i]).sum();
                let precision = ratio(tp, col);
                let recall = ratio(tp, row);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassScore {
                    precision,
                    recall,
                    f1,
                    support: row,
                }
            })
            .collect()
    }

    /// Unweighted mean of per-class F1 over the declared class list.
    pub fn f1_macro(&self) -> f64 {
        if self.classes.is_empty() {
            return 0.0;
        }
        // Summed in sorted order so the result is independent of class order.
        let mut f1: Vec<f64> = self.class_scores().iter().map(|s| s.f1).collect();
        f1.sort_by(f64::total_cmp);
        f1.iter().sum::<f64>() / f1.len() as f64
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        ratio(diag, self.total())
    }

    /// Element-wise sum of two matrices over the same class list.
    pub fn add(&mut self, other: &ConfusionMatrix<L>) -> Result<()>
    where
        L: PartialEq,
    {
        if self.classes != other.classes {
            return Err(Error::param("confusion matrices have different class lists"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn f1_macro<L>(m: &ConfusionMatrix<L>) -> f64 {
    m.f1_macro()
}

/// Mean, sample standard deviation and range of per-entry scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Aggregate {
        let n = values.len();
        if n == 0 {
            return Aggregate {
                n,
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Aggregate {
            n,
            mean: mean.clamp(min, max),
            std,
            min,
            max,
        }
    }
}
