use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with fraud (1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.tn += o.tn;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = Self::default();
        for c in iter {
            acc += c;
        }
        acc
    }
}

pub fn confusion(predicted: &[u8], actual: &[u8]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(Error::InvalidData(format!("labels must be 0 or 1, got ({p}, {a})"))),
        }
    }
    Ok(c)
}

/// Metric values; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub acc: Option<f64>,
    pub bcr: Option<f64>,
    pub sens: Option<f64>,
    pub spec: Option<f64>,
    pub f1: Option<f64>,
    /// Arithmetic mean of whichever of acc, bcr, sens, spec are defined.
    pub mean4: Option<f64>,
    /// Some of the four were undefined, so `mean4` covers a subset.
    pub partial: bool,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> MetricsRow {
    let acc = ratio(c.tp + c.tn, c.total());
    let sens = ratio(c.tp, c.tp + c.fn_);
    let spec = ratio(c.tn, c.tn + c.fp);
    let bcr = sens.zip(spec).map(|(a, b)| (a + b) / 2.0);
    // 2TP / (2TP + FP + FN), the same as TP / (TP + (FP + FN) / 2)
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let defined: Vec<f64> = [acc, bcr, sens, spec].into_iter().flatten().collect();
    let mean4 = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    MetricsRow {
        acc,
        bcr,
        sens,
        spec,
        f1,
        mean4,
        partial: defined.len() < 4,
    }
}
