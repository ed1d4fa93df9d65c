//! End-to-end experiment sweeps: flat (individual models plus every
//! enumerated ensemble) and cluster-then-classify for each requested k.

mod config;

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{default_grids, ExperimentConfig, DEFAULT_GRID_VERSION};

use crate::clustering;
use crate::dataset::{apply_scaler, fit_scaler, load_csv_excluding, Dataset};
use crate::ensemble::{aggregate_columns, enumerate_ensembles, write_composition_csv, EnsembleSpec};
use crate::error::{Error, Result};
use crate::eval::{build_report, complement, confusion, holdout_search, metrics, stratified_folds, ConfusionCounts, EvaluationReport, ReportRow};
use crate::feature_select::{select_features, FeatureVerdict};
use crate::learners::{fit_with_policy, BinaryClassifier, Family, ModelSpec, TrainingPolicy, Variant};
use crate::mixed::{degenerate_cluster, partition};

/// Everything fixed before evaluation: selected columns, tuned roster and
/// the train/test splits the sweep evaluates on.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub roster: Vec<ModelSpec>,
    pub verdict: Option<FeatureVerdict>,
    pub selected: Vec<String>,
    /// Holdout F1 of the chosen grid point, per roster acronym.
    pub search_f1: BTreeMap<String, Option<f64>>,
    pub splits: Vec<(Dataset, Dataset)>,
    pub ensembles: Vec<EnsembleSpec>,
}

impl Prepared {
    pub fn pool(&self) -> Vec<String> {
        self.roster.iter().map(ModelSpec::acronym).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub label: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub failures: Vec<Failure>,
}

pub fn load_inputs(config: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>)> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no training data given".into()))?;
    let train = load_csv_excluding(data, &config.label_column, &config.exclude)?;
    let validation = config
        .validation
        .as_ref()
        .map(|p| load_csv_excluding(p, &config.label_column, &config.exclude))
        .transpose()?;
    if let Some(v) = &validation {
        if v.feature_names() != train.feature_names() {
            return Err(Error::Config("validation columns differ from training columns".into()));
        }
    }
    Ok((train, validation))
}

fn policy(config: &ExperimentConfig) -> TrainingPolicy {
    TrainingPolicy {
        rebalance_classical: config.rebalance,
    }
}

/// Scale, select features, tune the roster and build evaluation splits.
/// Without a validation set the splits are stratified folds of `train`, each
/// rescaled from the raw training fold.
pub fn prepare(config: &ExperimentConfig, train: &Dataset, validation: Option<&Dataset>) -> Result<Prepared> {
    config.validate()?;
    train.require_both_classes()?;
    let scaler = fit_scaler(train)?;
    let scaled = apply_scaler(&scaler, train)?;

    let (verdict, columns) = if config.feature_selection {
        let forest = ModelSpec::new(Family::RandomForest, Variant::Classical)
            .with_param("trees", config.selection_trees as f64);
        let v = select_features(&scaled, config.bins, &forest, config.seed)?;
        let cols = v.relevant_indices();
        (Some(v), cols)
    } else {
        (None, (0..train.dim()).collect())
    };
    let selected: Vec<String> = columns.iter().map(|&j| train.feature_names()[j].clone()).collect();
    info!("{} of {} features kept", columns.len(), train.dim());
    let scaled = scaled.select_features(&columns);
    let raw = train.select_features(&columns);

    let mut roster = config.roster_specs()?;
    let mut search_f1 = BTreeMap::new();
    if config.search {
        for spec in roster.iter_mut() {
            if let Some(grid) = config.grid_for(spec) {
                let out = holdout_search(grid, spec, &scaled, config.holdout_fraction, config.seed, policy(config))?;
                info!("{}: chose {} (F1 {:?})", spec.acronym(), out.best, out.f1);
                search_f1.insert(spec.acronym(), out.f1);
                *spec = out.best;
            }
        }
    }

    let splits = match validation {
        Some(v) => {
            let v = apply_scaler(&scaler, v)?.select_features(&columns);
            vec![(scaled, v)]
        }
        None => {
            let folds = stratified_folds(raw.labels(), config.folds, config.seed)?;
            (0..folds.len())
                .map(|f| {
                    let tr = raw.subset(&complement(&folds, f));
                    let te = raw.subset(&folds[f]);
                    let s = fit_scaler(&tr)?;
                    Ok((apply_scaler(&s, &tr)?, apply_scaler(&s, &te)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let pool: Vec<String> = roster.iter().map(ModelSpec::acronym).collect();
    let mut ensembles = Vec::new();
    for &rule in &config.rules {
        ensembles.extend(enumerate_ensembles(&pool, rule)?);
    }
    Ok(Prepared {
        roster,
        verdict,
        selected,
        search_f1,
        splits,
        ensembles,
    })
}

/// Decision columns on the test side of one split, one per roster model.
type Votes = Vec<std::result::Result<Vec<u8>, String>>;

fn flat_votes(roster: &[ModelSpec], train: &Dataset, test: &Dataset, policy: TrainingPolicy) -> Votes {
    roster
        .par_iter()
        .map(|spec| {
            fit_with_policy(spec, train, policy)
                .and_then(|m| m.predict(test.features()))
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Member votes when each cluster has its own fitted copy of every model.
/// Degenerate clusters vote their constant label for every model, which is
/// also what any ensemble of those constants outputs.
fn clustered_votes(
    roster: &[ModelSpec],
    train: &Dataset,
    test: &Dataset,
    k: usize,
    seed: u64,
    policy: TrainingPolicy,
) -> Result<Votes> {
    let km = clustering::fit_kmeans(train, k, seed, clustering::DEFAULT_MAX_ITER, clustering::DEFAULT_TOL)?;
    let train_parts = partition(&clustering::assign(&km, train.features())?, k);
    let test_parts = partition(&clustering::assign(&km, test.features())?, k);
    let mut votes: Votes = vec![Ok(vec![0u8; test.len()]); roster.len()];
    for (c, (tr_idx, te_idx)) in train_parts.iter().zip(&test_parts).enumerate() {
        let cluster_train = train.subset(tr_idx);
        let cluster_test = test.subset(te_idx);
        let column: Votes = match degenerate_cluster(cluster_train.class_counts()) {
            Some((label, reason)) => {
                info!("k={k} cluster {c}: constant {label} ({reason})");
                vec![Ok(vec![label; te_idx.len()]); roster.len()]
            }
            None => flat_votes(roster, &cluster_train, &cluster_test, policy),
        };
        for (dst, src) in votes.iter_mut().zip(column) {
            match (dst.as_mut(), src) {
                (Ok(d), Ok(s)) => {
                    for (&i, v) in te_idx.iter().zip(s) {
                        d[i] = v;
                    }
                }
                (Ok(_), Err(e)) => *dst = Err(format!("cluster {c}: {e}")),
                (Err(_), _) => {}
            }
        }
    }
    Ok(votes)
}

fn assemble(title: &str, prepared: &Prepared, per_split: &[Votes]) -> RunOutput {
    let pool = prepared.pool();
    let mut failures = Vec::new();
    let mut failed = vec![false; pool.len()];
    for votes in per_split {
        for (j, v) in votes.iter().enumerate() {
            if let Err(e) = v {
                if !failed[j] {
                    warn!("{} failed: {e}", pool[j]);
                    failures.push(Failure {
                        label: pool[j].clone(),
                        message: e.clone(),
                    });
                }
                failed[j] = true;
            }
        }
    }
    let labels: Vec<&[u8]> = prepared.splits.iter().map(|(_, te)| te.labels()).collect();
    let row_for = |label: String, composition: String, columns_per_split: Vec<Vec<u8>>| {
        let fold_counts: Vec<ConfusionCounts> = columns_per_split
            .iter()
            .zip(&labels)
            .map(|(pred, actual)| confusion(pred, actual).expect("vote columns match test length"))
            .collect();
        let counts: ConfusionCounts = fold_counts.iter().copied().sum();
        ReportRow {
            label,
            composition,
            counts,
            metrics: metrics(&counts),
            folds: if fold_counts.len() > 1 {
                fold_counts.iter().map(metrics).collect()
            } else {
                Vec::new()
            },
        }
    };
    let column = |s: usize, j: usize| -> &[u8] {
        per_split[s][j].as_ref().map(Vec::as_slice).expect("failed members are filtered out")
    };
    let n_splits = per_split.len();

    let mut rows: Vec<ReportRow> = (0..pool.len())
        .filter(|&j| !failed[j])
        .map(|j| row_for(pool[j].clone(), pool[j].clone(), (0..n_splits).map(|s| column(s, j).to_vec()).collect()))
        .collect();
    let ensemble_rows: Vec<ReportRow> = prepared
        .ensembles
        .par_iter()
        .filter(|e| e.members.iter().all(|&j| !failed[j]))
        .map(|e| {
            let cols = (0..n_splits)
                .map(|s| {
                    let member_cols: Vec<&[u8]> = e.members.iter().map(|&j| column(s, j)).collect();
                    aggregate_columns(e.rule, &member_cols)
                })
                .collect();
            row_for(e.label(), e.composition(&pool), cols)
        })
        .collect();
    for e in prepared.ensembles.iter().filter(|e| e.members.iter().any(|&j| failed[j])) {
        failures.push(Failure {
            label: e.label(),
            message: "a member failed to fit".into(),
        });
    }
    rows.extend(ensemble_rows);
    RunOutput {
        report: build_report(title, rows),
        failures,
    }
}

pub fn flat_report(config: &ExperimentConfig, prepared: &Prepared) -> RunOutput {
    let per_split: Vec<Votes> = prepared
        .splits
        .iter()
        .map(|(tr, te)| flat_votes(&prepared.roster, tr, te, policy(config)))
        .collect();
    assemble("flat", prepared, &per_split)
}

/// One report per k. A k whose clustering fails yields no report and a
/// failure entry.
pub fn mixed_reports(config: &ExperimentConfig, prepared: &Prepared) -> Vec<(usize, std::result::Result<RunOutput, Failure>)> {
    config
        .k_values
        .iter()
        .map(|&k| {
            let per_split = prepared
                .splits
                .iter()
                .map(|(tr, te)| clustered_votes(&prepared.roster, tr, te, k, config.seed, policy(config)))
                .collect::<Result<Vec<_>>>();
            let out = per_split
                .map(|v| assemble(&format!("mixed k={k}"), prepared, &v))
                .map_err(|e| Failure {
                    label: format!("k={k}"),
                    message: e.to_string(),
                });
            (k, out)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    experiment: String,
    config_hash: String,
    seed: u64,
    grid_version: u32,
    selected_features: Vec<String>,
    hyperparameters: BTreeMap<String, BTreeMap<String, f64>>,
    search_f1: BTreeMap<String, Option<f64>>,
    reports: BTreeMap<String, usize>,
    failures: Vec<Failure>,
}

fn write_manifest(
    config: &ExperimentConfig,
    prepared: &Prepared,
    experiment: &str,
    reports: BTreeMap<String, usize>,
    failures: Vec<Failure>,
) -> Result<()> {
    let manifest = Manifest {
        experiment: experiment.to_string(),
        config_hash: config.hash(),
        seed: config.seed,
        grid_version: DEFAULT_GRID_VERSION,
        selected_features: prepared.selected.clone(),
        hyperparameters: prepared.roster.iter().map(|s| (s.acronym(), s.params.clone())).collect(),
        search_f1: prepared.search_f1.clone(),
        reports,
        failures,
    };
    let path = config.out.join(format!("{experiment}_manifest.json"));
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn write_common(config: &ExperimentConfig, prepared: &Prepared, train: &Dataset) -> Result<()> {
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if let Some(v) = &prepared.verdict {
        v.write_csv(train.feature_names(), out.join("feature_selection.csv"))?;
    }
    let pool = prepared.pool();
    for &rule in &config.rules {
        let specs: Vec<EnsembleSpec> = prepared.ensembles.iter().filter(|e| e.rule == rule).cloned().collect();
        write_composition_csv(&specs, &pool, out.join(format!("ensembles_{}.csv", rule.tag())))?;
    }
    Ok(())
}

fn write_report(out: &Path, name: &str, report: &EvaluationReport) -> Result<()> {
    report.write(out.join(format!("{name}.csv")), out.join(format!("{name}.txt")))
}

/// Load, prepare, evaluate, and write `flat_report.{csv,txt}` plus a manifest.
pub fn run_flat_experiment(config: &ExperimentConfig) -> Result<EvaluationReport> {
    let (train, validation) = load_inputs(config)?;
    let prepared = prepare(config, &train, validation.as_ref())?;
    write_common(config, &prepared, &train)?;
    let run = flat_report(config, &prepared);
    write_report(&config.out, "flat_report", &run.report)?;
    let reports = BTreeMap::from([("flat_report".to_string(), run.report.len())]);
    write_manifest(config, &prepared, "flat", reports, run.failures)?;
    Ok(run.report)
}

/// Like [`run_flat_experiment`] with one `mixed_k{k}_report` per k.
pub fn run_mixed_experiment(config: &ExperimentConfig) -> Result<Vec<(usize, EvaluationReport)>> {
    let (train, validation) = load_inputs(config)?;
    let prepared = prepare(config, &train, validation.as_ref())?;
    write_common(config, &prepared, &train)?;
    let mut reports = BTreeMap::new();
    let mut failures = Vec::new();
    let mut out = Vec::new();
    for (k, result) in mixed_reports(config, &prepared) {
        match result {
            Ok(run) => {
                let name = format!("mixed_k{k}_report");
                write_report(&config.out, &name, &run.report)?;
                reports.insert(name, run.report.len());
                failures.extend(run.failures);
                out.push((k, run.report));
            }
            Err(f) => failures.push(f),
        }
    }
    write_manifest(config, &prepared, "mixed", reports, failures)?;
    Ok(out)
}
