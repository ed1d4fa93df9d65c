//! Per-feature relevance by 2-of-3 vote over Pearson correlation, mutual
//! information and random-forest impurity importance.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::{fit_classifier, Family, FittedState, ModelSpec};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVerdict {
    pub pearson: Vec<f64>,
    pub mutual_information: Vec<f64>,
    pub importance: Vec<f64>,
    pub vote_pearson: Vec<bool>,
    pub vote_mutual_information: Vec<bool>,
    pub vote_importance: Vec<bool>,
    pub relevant: Vec<bool>,
    /// The forest never split, so importances are uniform placeholders.
    pub importance_degenerate: bool,
    /// No feature won a majority and one was forced relevant.
    pub forced: bool,
}

impl FeatureVerdict {
    pub fn relevant_indices(&self) -> Vec<usize> {
        self.relevant
            .iter()
            .enumerate()
            .filter_map(|(j, &r)| r.then_some(j))
            .collect()
    }

    /// CSV with one row per feature.
    pub fn write_csv(&self, names: &[String], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(names, file).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn write_csv_to<W: std::io::Write>(&self, names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "feature_name",
            "pearson",
            "mi",
            "importance",
            "vote_p",
            "vote_mi",
            "vote_fi",
            "relevant",
        ])?;
        for j in 0..self.relevant.len() {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("f{j}"));
            w.write_record([
                name,
                format!("{:.6}", self.pearson[j]),
                format!("{:.6}", self.mutual_information[j]),
                format!("{:.6}", self.importance[j]),
                self.vote_pearson[j].to_string(),
                self.vote_mutual_information[j].to_string(),
                self.vote_importance[j].to_string(),
                self.relevant[j].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}

/// `|r|` between each feature and the label; constant features score 0.
pub fn pearson_scores(data: &Dataset) -> Result<Vec<f64>> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidData("correlation needs at least 2 objects".into()));
    }
    data.require_both_classes()?;
    let y: Vec<f64> = data.labels().iter().map(|&l| f64::from(l)).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let syy: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    Ok((0..data.dim())
        .map(|j| {
            let x = data.features().column(j);
            let x_mean = x.iter().sum::<f64>() / n as f64;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (xi, yi) in x.iter().zip(&y) {
                let dx = xi - x_mean;
                sxy += dx * (yi - y_mean);
                sxx += dx * dx;
            }
            if sxx <= 0.0 {
                0.0
            } else {
                (sxy / (sxx.sqrt() * syy.sqrt())).abs().min(1.0)
            }
        })
        .collect())
}

/// Mutual information in bits between each equal-width-binned feature and
/// the label.
pub fn mutual_information_scores(data: &Dataset, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::InvalidParameter("mutual information needs at least 2 bins".into()));
    }
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = data.labels();
    let [n0, n1] = data.class_counts();
    let nf = n as f64;
    Ok((0..data.dim())
        .map(|j| {
            let x = data.features().column(j);
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = hi - lo;
            let mut joint = vec![[0usize; 2]; bins];
            for (v, &l) in x.iter().zip(labels) {
                let b = if width > 0.0 {
                    (((v - lo) / width * bins as f64) as usize).min(bins - 1)
                } else {
                    0
                };
                joint[b][l as usize] += 1;
            }
            let class_totals = [n0 as f64, n1 as f64];
            let mut mi = 0.0;
            for cell in &joint {
                let bin_total = (cell[0] + cell[1]) as f64;
                for c in 0..2 {
                    if cell[c] > 0 {
                        let p = cell[c] as f64 / nf;
                        mi += p * (p * nf * nf / (bin_total * class_totals[c])).log2();
                    }
                }
            }
            mi.max(0.0)
        })
        .collect())
}

/// Mean impurity-decrease importance from a forest fitted on `data`. The flag
/// is set when no tree could split; scores are then uniform.
pub fn importance_scores(data: &Dataset, forest: &ModelSpec, seed: u64) -> Result<(Vec<f64>, bool)> {
    if forest.family != Family::RandomForest {
        return Err(Error::InvalidParameter(format!(
            "importance needs a random-forest spec, got {}",
            forest.acronym()
        )));
    }
    let d = data.dim();
    let uniform = vec![1.0 / d as f64; d];
    let fitted = fit_classifier(&forest.clone().with_seed(seed), data)?;
    match &fitted.state {
        FittedState::Forest(rf) if rf.any_split() => Ok((rf.feature_importances().to_vec(), false)),
        _ => {
            warn!("no forest split was possible; using uniform importances");
            Ok((uniform, true))
        }
    }
}

fn above_mean(scores: &[f64]) -> Vec<bool> {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    scores.iter().map(|&s| s > mean).collect()
}

/// 1-based average ranks, larger score gets the larger rank.
fn ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut out = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn select_features(data: &Dataset, bins: usize, forest: &ModelSpec, seed: u64) -> Result<FeatureVerdict> {
    if data.dim() == 0 {
        return Err(Error::InvalidData("no features to select from".into()));
    }
    let pearson = pearson_scores(data)?;
    let mutual_information = mutual_information_scores(data, bins)?;
    let (importance, importance_degenerate) = importance_scores(data, forest, seed)?;
    let vote_pearson = above_mean(&pearson);
    let vote_mutual_information = above_mean(&mutual_information);
    let vote_importance = above_mean(&importance);
    let mut relevant: Vec<bool> = (0..data.dim())
        .map(|j| {
            u8::from(vote_pearson[j]) + u8::from(vote_mutual_information[j]) + u8::from(vote_importance[j]) >= 2
        })
        .collect();
    let forced = !relevant.contains(&true);
    if forced {
        let (rp, rm, ri) = (ranks(&pearson), ranks(&mutual_information), ranks(&importance));
        let mut best = 0;
        let mut best_sum = f64::NEG_INFINITY;
        for j in 0..relevant.len() {
            let s = rp[j] + rm[j] + ri[j];
            if s > best_sum {
                best_sum = s;
                best = j;
            }
        }
        relevant[best] = true;
    }
    Ok(FeatureVerdict {
        pearson,
        mutual_information,
        importance,
        vote_pearson,
        vote_mutual_information,
        vote_importance,
        relevant,
        importance_degenerate,
        forced,
    })
}
