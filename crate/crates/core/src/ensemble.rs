//! Majority-vote (CC-MV) and OR-logic (CC-OR) aggregation of member
//! decisions, plus enumeration of candidate ensembles over a model pool.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::BinaryClassifier;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Mode of the member decisions; needs an odd member count.
    MajorityVote,
    /// Fraud as soon as any member says fraud.
    Or,
}

impl Rule {
    pub fn tag(self) -> &'static str {
        match self {
            Rule::MajorityVote => "MV",
            Rule::Or => "OR",
        }
    }

    /// Label prefix used in reports (`CC-MV`, `CC-OR`).
    pub fn prefix(self) -> &'static str {
        match self {
            Rule::MajorityVote => "CC-MV",
            Rule::Or => "CC-OR",
        }
    }

    /// Ensemble sizes swept by [`enumerate_ensembles`].
    pub fn sizes(self) -> &'static [usize] {
        match self {
            Rule::MajorityVote => &[3, 5],
            Rule::Or => &[2, 3, 4, 5],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MV" | "CC-MV" => Ok(Rule::MajorityVote),
            "OR" | "CC-OR" => Ok(Rule::Or),
            other => Err(Error::Config(format!("unknown aggregation rule '{other}'"))),
        }
    }
}

/// Ordered member list plus aggregation rule. Members are positions in the
/// model pool the ensemble was enumerated from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnsembleSpec {
    /// Stable 1-based index within its rule's enumeration.
    pub index: usize,
    pub rule: Rule,
    pub members: Vec<usize>,
}

impl EnsembleSpec {
    pub fn new(index: usize, rule: Rule, members: Vec<usize>) -> Result<Self> {
        let spec = Self { index, rule, members };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.members.len();
        match self.rule {
            Rule::MajorityVote if m % 2 == 0 => {
                return Err(Error::InvalidEnsemble(format!("majority vote needs an odd member count, got {m}")))
            }
            Rule::Or if m < 2 => return Err(Error::InvalidEnsemble(format!("OR needs at least 2 members, got {m}"))),
            _ => {}
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.members.iter().find(|&&x| !seen.insert(x)) {
            return Err(Error::InvalidEnsemble(format!("member {dup} listed twice")));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{} {}", self.rule.prefix(), self.index)
    }

    pub fn composition(&self, pool: &[String]) -> String {
        self.members
            .iter()
            .map(|&i| pool.get(i).map_or("?", String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `n x m` matrix of member decisions, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl VoteMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidData("ragged vote matrix".into()));
            }
            if r.iter().any(|&v| v > 1) {
                return Err(Error::InvalidData("votes must be 0 or 1".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Build from per-member decision columns.
    pub fn from_columns(columns: &[&[u8]]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidData("member columns differ in length".into()));
        }
        let mut data = vec![0u8; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidData("votes must be 0 or 1".into()));
                }
                data[i * cols + j] = v;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn members(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn aggregate_mv(votes: &VoteMatrix) -> Result<Vec<u8>> {
    let m = votes.members();
    if m % 2 == 0 {
        return Err(Error::InvalidEnsemble(format!("majority vote needs an odd member count, got {m}")));
    }
    Ok((0..votes.rows())
        .map(|i| {
            let ones = votes.row(i).iter().filter(|&&v| v == 1).count();
            u8::from(2 * ones > m)
        })
        .collect())
}

pub fn aggregate_or(votes: &VoteMatrix) -> Vec<u8> {
    (0..votes.rows())
        .map(|i| u8::from(votes.row(i).contains(&1)))
        .collect()
}

/// Majority vote over decision columns without materialising a matrix.
pub fn majority_of_columns(columns: &[&[u8]]) -> Vec<u8> {
    let n = columns.first().map_or(0, |c| c.len());
    let m = columns.len();
    let mut ones = vec![0usize; n];
    for col in columns {
        for (acc, &v) in ones.iter_mut().zip(col.iter()) {
            *acc += v as usize;
        }
    }
    ones.into_iter().map(|c| u8::from(2 * c > m)).collect()
}

pub fn or_of_columns(columns: &[&[u8]]) -> Vec<u8> {
    let n = columns.first().map_or(0, |c| c.len());
    let mut out = vec![0u8; n];
    for col in columns {
        for (acc, &v) in out.iter_mut().zip(col.iter()) {
            *acc |= v;
        }
    }
    out
}

pub fn aggregate_columns(rule: Rule, columns: &[&[u8]]) -> Vec<u8> {
    match rule {
        Rule::MajorityVote => majority_of_columns(columns),
        Rule::Or => or_of_columns(columns),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsemblePrediction {
    pub labels: Vec<u8>,
    /// How many objects each member was asked to classify.
    pub invocations: Vec<usize>,
}

/// Classify with fitted members in spec order. OR stops at the first member
/// that flags an object; MV always consults every member.
pub fn predict_ensemble<C: BinaryClassifier + ?Sized>(
    spec: &EnsembleSpec,
    members: &[&C],
    features: &Matrix,
) -> Result<EnsemblePrediction> {
    spec.validate()?;
    if members.len() != spec.members.len() {
        return Err(Error::InvalidEnsemble(format!(
            "{} fitted members for a {}-member spec",
            members.len(),
            spec.members.len()
        )));
    }
    for m in members {
        features.check_cols(m.dim())?;
    }
    let m = members.len();
    let per_row: Vec<(u8, Vec<bool>)> = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            let x = features.row(i);
            let mut asked = vec![false; m];
            let label = match spec.rule {
                Rule::Or => {
                    let mut hit = 0;
                    for (j, member) in members.iter().enumerate() {
                        asked[j] = true;
                        if member.predict_one(x) == 1 {
                            hit = 1;
                            break;
                        }
                    }
                    hit
                }
                Rule::MajorityVote => {
                    let ones: usize = members
                        .iter()
                        .enumerate()
                        .map(|(j, member)| {
                            asked[j] = true;
                            member.predict_one(x) as usize
                        })
                        .sum();
                    u8::from(2 * ones > m)
                }
            };
            (label, asked)
        })
        .collect();
    let mut invocations = vec![0usize; m];
    let mut labels = Vec::with_capacity(per_row.len());
    for (label, asked) in per_row {
        labels.push(label);
        for (c, a) in invocations.iter_mut().zip(asked) {
            *c += usize::from(a);
        }
    }
    Ok(EnsemblePrediction { labels, invocations })
}

/// Every subset of the pool at the rule's sizes; sizes ascending, members
/// lexicographic by pool position within a size. Indices start at 1.
pub fn enumerate_ensembles(pool: &[String], rule: Rule) -> Result<Vec<EnsembleSpec>> {
    let mut seen = HashSet::new();
    if let Some(dup) = pool.iter().find(|p| !seen.insert(p.as_str())) {
        return Err(Error::InvalidEnsemble(format!("pool lists '{dup}' twice")));
    }
    let n = pool.len();
    let mut out = Vec::new();
    for &size in rule.sizes() {
        if size > n {
            continue;
        }
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(EnsembleSpec {
                index: out.len() + 1,
                rule,
                members: combo.clone(),
            });
            // advance to the next combination in lexicographic order
            let Some(pos) = (0..size).rev().find(|&i| combo[i] < n - size + i) else {
                break;
            };
            combo[pos] += 1;
            for i in pos + 1..size {
                combo[i] = combo[i - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// CSV with columns `index,rule,label,members`.
pub fn write_composition_csv(specs: &[EnsembleSpec], pool: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "rule", "label", "members"])?;
    for s in specs {
        w.write_record([
            s.index.to_string(),
            s.rule.tag().to_string(),
            s.label(),
            s.composition(pool),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
