use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::DEFAULT_LABEL_COLUMN;
use crate::ensemble::Rule;
use crate::error::{Error, Result};
use crate::feature_select::DEFAULT_BINS;
use crate::learners::{ModelSpec, ROSTER_ACRONYMS};

/// Bumped whenever [`default_grids`] changes.
pub const DEFAULT_GRID_VERSION: u32 = 1;

/// Search grids keyed by family short name; they apply to every variant of
/// the family unless a config names the acronym itself.
pub fn default_grids() -> BTreeMap<String, BTreeMap<String, Vec<f64>>> {
    let entries: [(&str, &str, &[f64]); 5] = [
        ("KNN", "k", &[1.0, 3.0, 5.0]),
        ("LR", "lambda", &[0.0, 0.01]),
        ("RF", "max_depth", &[0.0, 8.0]),
        ("GBT", "rounds", &[50.0, 100.0]),
        ("MLP", "hidden", &[32.0, 64.0]),
    ];
    let mut grids = BTreeMap::new();
    for (family, key, values) in entries {
        grids
            .entry(family.to_string())
            .or_insert_with(BTreeMap::new)
            .insert(key.to_string(), values.to_vec());
    }
    grids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub label_column: String,
    /// Columns dropped on load.
    pub exclude: Vec<String>,
    /// Separate evaluation file; without one, evaluation is k-fold on `data`.
    pub validation: Option<PathBuf>,
    pub seed: u64,
    pub feature_selection: bool,
    pub bins: usize,
    /// Trees in the forest behind importance scores.
    pub selection_trees: usize,
    pub rebalance: bool,
    pub k_values: Vec<usize>,
    pub roster: Vec<String>,
    pub rules: Vec<Rule>,
    pub search: bool,
    pub grids: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    /// Fixed hyperparameters, keyed like `grids`.
    pub params: BTreeMap<String, BTreeMap<String, f64>>,
    pub folds: usize,
    /// Test share of the holdout split used by the search.
    pub holdout_fraction: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
            exclude: Vec::new(),
            validation: None,
            seed: 0,
            feature_selection: true,
            bins: DEFAULT_BINS,
            selection_trees: 50,
            rebalance: true,
            k_values: vec![2, 3, 4, 5],
            roster: ROSTER_ACRONYMS.iter().map(|s| s.to_string()).collect(),
            rules: vec![Rule::MajorityVote, Rule::Or],
            search: true,
            grids: default_grids(),
            params: BTreeMap::new(),
            folds: 10,
            holdout_fraction: 0.2,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn is_none(v: &str) -> bool {
    v.is_empty() || v.eq_ignore_ascii_case("none")
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut grids_seen = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(rest) = key.strip_prefix("grid.") {
                if !grids_seen {
                    // an explicit grid section replaces the defaults
                    cfg.grids.clear();
                    grids_seen = true;
                }
                let (target, param) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| Error::Config(format!("line {}: grid keys look like grid.<model>.<param>", n + 1)))?;
                cfg.grids
                    .entry(target.to_string())
                    .or_default()
                    .insert(param.to_string(), parse_list(key, value)?);
                continue;
            }
            if let Some(rest) = key.strip_prefix("param.") {
                let (target, param) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| Error::Config(format!("line {}: param keys look like param.<model>.<param>", n + 1)))?;
                cfg.params
                    .entry(target.to_string())
                    .or_default()
                    .insert(param.to_string(), parse_num(key, value)?);
                continue;
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Apply one scalar key; used for both file entries and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| (!is_none(v)).then(|| PathBuf::from(v));
        match key {
            "data" => self.data = path(value),
            "label_column" => self.label_column = value.to_string(),
            "exclude" => self.exclude = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
            "validation" => self.validation = path(value),
            "seed" => self.seed = parse_num(key, value)?,
            "feature_selection" => self.feature_selection = parse_bool(key, value)?,
            "bins" => self.bins = parse_num(key, value)?,
            "selection_trees" => self.selection_trees = parse_num(key, value)?,
            "rebalance" => self.rebalance = parse_bool(key, value)?,
            "k_values" => self.k_values = parse_list(key, value)?,
            "roster" => {
                self.roster = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "rules" => {
                self.rules = if is_none(value) {
                    Vec::new()
                } else {
                    value.split(',').map(Rule::parse).collect::<Result<_>>()?
                }
            }
            "search" => self.search = parse_bool(key, value)?,
            "folds" => self.folds = parse_num(key, value)?,
            "holdout_fraction" => self.holdout_fraction = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values must not be empty".into()));
        }
        if self.k_values.contains(&0) {
            return Err(Error::Config("k values start at 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.roster.is_empty() {
            return Err(Error::Config("roster must not be empty".into()));
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        for a in &self.roster {
            ModelSpec::from_acronym(a)?;
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.roster.iter().find(|a| !seen.insert(a.as_str())) {
            return Err(Error::Config(format!("roster lists '{dup}' twice")));
        }
        Ok(())
    }

    /// Roster specs with fixed parameters applied; search is separate.
    pub fn roster_specs(&self) -> Result<Vec<ModelSpec>> {
        self.roster
            .iter()
            .map(|a| {
                let mut spec = ModelSpec::from_acronym(a)?.with_seed(self.seed);
                if let Some(p) = lookup(&self.params, &spec) {
                    for (k, v) in p {
                        spec = spec.with_param(k, *v);
                    }
                }
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn grid_for(&self, spec: &ModelSpec) -> Option<&BTreeMap<String, Vec<f64>>> {
        lookup(&self.grids, spec).filter(|g| !g.is_empty())
    }

    /// Stable text form; everything but the output directory.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(s, "data={}", opt(&self.data));
        let _ = writeln!(s, "label_column={}", self.label_column);
        let _ = writeln!(s, "exclude={}", self.exclude.join(","));
        let _ = writeln!(s, "validation={}", opt(&self.validation));
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "feature_selection={}", self.feature_selection);
        let _ = writeln!(s, "bins={}", self.bins);
        let _ = writeln!(s, "selection_trees={}", self.selection_trees);
        let _ = writeln!(s, "rebalance={}", self.rebalance);
        let _ = writeln!(s, "k_values={}", join(self.k_values.iter().map(|k| k.to_string()).collect()));
        let _ = writeln!(s, "roster={}", self.roster.join(","));
        let _ = writeln!(s, "rules={}", join(self.rules.iter().map(|r| r.tag().to_string()).collect()));
        let _ = writeln!(s, "search={}", self.search);
        let _ = writeln!(s, "folds={}", self.folds);
        let _ = writeln!(s, "holdout_fraction={}", self.holdout_fraction);
        let _ = writeln!(s, "grid_version={DEFAULT_GRID_VERSION}");
        for (target, g) in &self.grids {
            for (k, vs) in g {
                let _ = writeln!(s, "grid.{target}.{k}={}", join(vs.iter().map(|v| v.to_string()).collect()));
            }
        }
        for (target, p) in &self.params {
            for (k, v) in p {
                let _ = writeln!(s, "param.{target}.{k}={v}");
            }
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

/// Exact acronym first, then the family short name.
fn lookup<'a, V>(map: &'a BTreeMap<String, V>, spec: &ModelSpec) -> Option<&'a V> {
    map.get(&spec.acronym()).or_else(|| map.get(spec.family.short()))
}
