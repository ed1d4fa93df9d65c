use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Knn,
    NaiveBayes,
    Logistic,
    RandomForest,
    GradientBoosting,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Knn,
        Family::NaiveBayes,
        Family::Logistic,
        Family::RandomForest,
        Family::GradientBoosting,
        Family::Mlp,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::NaiveBayes => "nb",
            Family::Logistic => "lr",
            Family::RandomForest => "rf",
            Family::GradientBoosting => "gbt",
            Family::Mlp => "mlp",
        }
    }

    /// Acronym stem shared by every variant of the family.
    pub fn short(self) -> &'static str {
        match self {
            Family::Knn => "KNN",
            Family::NaiveBayes => "NB",
            Family::Logistic => "LR",
            Family::RandomForest => "RF",
            Family::GradientBoosting => "GBT",
            Family::Mlp => "MLP",
        }
    }

    /// Documented hyperparameters with their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Family::Knn => &[("k", 5.0)],
            Family::NaiveBayes => &[("var_floor", 1e-9)],
            Family::Logistic => &[
                ("lambda", 0.0),
                ("learning_rate", 0.1),
                ("max_iter", 5000.0),
                ("tol", 1e-6),
            ],
            // max_depth 0 means unlimited; max_features 0 means ceil(sqrt(d))
            Family::RandomForest => &[
                ("trees", 100.0),
                ("max_depth", 0.0),
                ("min_leaf", 1.0),
                ("max_features", 0.0),
            ],
            Family::GradientBoosting => &[
                ("rounds", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 3.0),
                ("min_leaf", 1.0),
            ],
            Family::Mlp => &[
                ("hidden", 64.0),
                ("epochs", 200.0), // 50 leaves small sets badly underfit
                ("learning_rate", 1e-3),
                ("batch_size", 128.0),
                ("max_iter", 200.0),
                ("history", 10.0),
                ("l2", 0.0),
            ],
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.key().eq_ignore_ascii_case(s) || f.short().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model family '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Classical,
    ClassWeighted,
}

impl Variant {
    pub fn key(self) -> &'static str {
        match self {
            Variant::Classical => "classical",
            Variant::ClassWeighted => "class_weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Optimizer {
    AdamSgd,
    Lbfgs,
}

impl Optimizer {
    pub fn key(self) -> &'static str {
        match self {
            Optimizer::AdamSgd => "adam_sgd",
            Optimizer::Lbfgs => "lbfgs",
        }
    }
}

/// Declarative learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub variant: Variant,
    pub optimizer: Option<Optimizer>,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
}

impl ModelSpec {
    /// Spec with no explicit hyperparameters (defaults apply).
    pub fn new(family: Family, variant: Variant) -> Self {
        let optimizer = (family == Family::Mlp).then_some(Optimizer::AdamSgd);
        Self {
            family,
            variant,
            optimizer,
            params: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn mlp(optimizer: Optimizer, variant: Variant) -> Self {
        Self {
            optimizer: Some(optimizer),
            ..Self::new(Family::Mlp, variant)
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Explicit value, or the family default.
    pub fn param(&self, key: &str) -> f64 {
        self.params.get(key).copied().unwrap_or_else(|| {
            self.family
                .defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN)
        })
    }

    pub(crate) fn usize_param(&self, key: &str) -> usize {
        self.param(key) as usize
    }

    pub fn is_class_weighted(&self) -> bool {
        self.variant == Variant::ClassWeighted
    }

    /// Result-table acronym, e.g. `KNN-m`, `MLP-l`.
    pub fn acronym(&self) -> String {
        let mut s = self.family.short().to_string();
        match self.optimizer {
            Some(Optimizer::AdamSgd) => s.push_str("-A"),
            Some(Optimizer::Lbfgs) => s.push_str("-l"),
            None => {}
        }
        if self.is_class_weighted() {
            s.push_str("-m");
        }
        s
    }

    pub fn from_acronym(acronym: &str) -> Result<Self> {
        let (base, variant) = match acronym.strip_suffix("-m") {
            Some(b) => (b, Variant::ClassWeighted),
            None => (acronym, Variant::Classical),
        };
        let spec = match base {
            "MLP-A" => ModelSpec::mlp(Optimizer::AdamSgd, variant),
            "MLP-l" => ModelSpec::mlp(Optimizer::Lbfgs, variant),
            "MLP" => return Err(Error::Config("MLP acronym needs an optimizer suffix (-A or -l)".into())),
            other => ModelSpec::new(other.parse()?, variant),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Error::InvalidHyperparameter {
            family: self.family.key().to_string(),
            key: key.to_string(),
            message,
        };
        match (self.family, self.optimizer) {
            (Family::Mlp, None) => return Err(bad("optimizer", "MLP requires an optimizer".into())),
            (Family::Mlp, Some(_)) | (_, None) => {}
            (_, Some(_)) => return Err(bad("optimizer", "only MLP takes an optimizer".into())),
        }
        let defaults = self.family.defaults();
        for (key, &value) in &self.params {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(bad(key, "not a documented key for this family".into()));
            }
            if !value.is_finite() {
                return Err(bad(key, format!("{value} is not finite")));
            }
        }
        let positive_int = |key: &str| -> Result<()> {
            let v = self.param(key);
            if v < 1.0 || v.fract() != 0.0 {
                return Err(bad(key, format!("{v} must be a positive integer")));
            }
            Ok(())
        };
        let non_negative = |key: &str| -> Result<()> {
            let v = self.param(key);
            if v < 0.0 {
                return Err(bad(key, format!("{v} must be non-negative")));
            }
            Ok(())
        };
        let positive = |key: &str| -> Result<()> {
            let v = self.param(key);
            if v <= 0.0 {
                return Err(bad(key, format!("{v} must be positive")));
            }
            Ok(())
        };
        match self.family {
            Family::Knn => positive_int("k")?,
            Family::NaiveBayes => positive("var_floor")?,
            Family::Logistic => {
                non_negative("lambda")?;
                positive("learning_rate")?;
                positive_int("max_iter")?;
                positive("tol")?;
            }
            Family::RandomForest => {
                positive_int("trees")?;
                positive_int("min_leaf")?;
                non_negative("max_depth")?;
                non_negative("max_features")?;
            }
            Family::GradientBoosting => {
                positive_int("rounds")?;
                positive("learning_rate")?;
                positive_int("max_depth")?;
                positive_int("min_leaf")?;
            }
            Family::Mlp => {
                positive_int("hidden")?;
                positive_int("epochs")?;
                positive("learning_rate")?;
                positive_int("batch_size")?;
                positive_int("max_iter")?;
                positive_int("history")?;
                non_negative("l2")?;
            }
        }
        Ok(())
    }

    /// Plain-text `key = value` block.
    pub fn to_config_block(&self) -> String {
        let mut out = format!(
            "family = {}\nvariant = {}\n",
            self.family.key(),
            self.variant.key()
        );
        if let Some(opt) = self.optimizer {
            out.push_str(&format!("optimizer = {}\n", opt.key()));
        }
        out.push_str(&format!("seed = {}\n", self.seed));
        for (k, v) in &self.params {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn parse_config_block(text: &str) -> Result<Self> {
        let mut family = None;
        let mut variant = Variant::Classical;
        let mut optimizer = None;
        let mut seed = 0;
        let mut params = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            match key {
                "family" => family = Some(value.parse::<Family>()?),
                "variant" => {
                    variant = match value {
                        "classical" => Variant::Classical,
                        "class_weighted" => Variant::ClassWeighted,
                        other => return Err(Error::Config(format!("unknown variant '{other}'"))),
                    }
                }
                "optimizer" => {
                    optimizer = Some(match value {
                        "adam_sgd" => Optimizer::AdamSgd,
                        "lbfgs" => Optimizer::Lbfgs,
                        other => return Err(Error::Config(format!("unknown optimizer '{other}'"))),
                    })
                }
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad seed '{value}'")))?
                }
                _ => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| Error::Config(format!("'{key}': '{value}' is not a number")))?;
                    params.insert(key.to_string(), v);
                }
            }
        }
        let family = family.ok_or_else(|| Error::Config("missing 'family'".into()))?;
        let spec = ModelSpec {
            family,
            variant,
            optimizer,
            params,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.acronym())?;
        if !self.params.is_empty() {
            let parts: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "[{}]", parts.join(","))?;
        }
        Ok(())
    }
}

/// The 13 result-table acronyms in roster order.
pub const ROSTER_ACRONYMS: [&str; 13] = [
    "NB", "KNN", "KNN-m", "LR", "LR-m", "RF", "RF-m", "GBT", "GBT-m", "MLP-A", "MLP-A-m", "MLP-l",
    "MLP-l-m",
];

/// Default roster with every member seeded from `seed`.
pub fn default_roster(seed: u64) -> Vec<ModelSpec> {
    ROSTER_ACRONYMS
        .iter()
        .map(|a| ModelSpec::from_acronym(a).expect("roster acronyms parse").with_seed(seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_round_trips_acronyms() {
        let roster = default_roster(3);
        let names: Vec<String> = roster.iter().map(ModelSpec::acronym).collect();
        assert_eq!(names, ROSTER_ACRONYMS.map(String::from).to_vec());
        for spec in &roster {
            spec.validate().unwrap();
            assert_eq!(spec.optimizer.is_some(), spec.family == Family::Mlp);
        }
    }

    #[test]
    fn config_block_round_trip() {
        let spec = ModelSpec::mlp(Optimizer::Lbfgs, Variant::ClassWeighted)
            .with_param("hidden", 16.0)
            .with_seed(9);
        let parsed = ModelSpec::parse_config_block(&spec.to_config_block()).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(ModelSpec::new(Family::Knn, Variant::Classical)
            .with_param("k", 0.0)
            .validate()
            .is_err());
        assert!(ModelSpec::new(Family::Knn, Variant::Classical)
            .with_param("trees", 3.0)
            .validate()
            .is_err());
        let mut lr = ModelSpec::new(Family::Logistic, Variant::Classical);
        lr.optimizer = Some(Optimizer::Lbfgs);
        assert!(lr.validate().is_err());
        let mut mlp = ModelSpec::mlp(Optimizer::AdamSgd, Variant::Classical);
        mlp.optimizer = None;
        assert!(mlp.validate().is_err());
        assert!(ModelSpec::parse_config_block("family = knn\nk = abc\n").is_err());
    }
}
