use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use fraudkit::dataset::{apply_scaler, fit_scaler, load_csv_excluding};
use fraudkit::ensemble::{enumerate_ensembles, write_composition_csv, Rule};
use fraudkit::eval::{confusion, metrics};
use fraudkit::feature_select::select_features;
use fraudkit::learners::{Family, ModelSpec, Variant};
use fraudkit::runner::{run_flat_experiment, run_mixed_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fraudkit", version, about = "Fraud-detection model sweeps: single models, ensembles and cluster-then-classify")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training CSV (overrides the config).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation CSV; without one, evaluation is k-fold on the data.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Individual models plus every enumerated ensemble.
    Flat(RunArgs),
    /// Cluster-then-classify, one report per k.
    Mixed {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated cluster counts.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Score features and write the relevance verdict.
    SelectFeatures {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (printed to stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ensemble composition table.
    Enumerate {
        /// MV, OR, or both when absent.
        #[arg(long)]
        rule: Option<String>,
        /// Comma-separated pool (defaults to the standard roster).
        #[arg(long, value_delimiter = ',')]
        roster: Option<Vec<String>>,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from a CSV with `predicted` and `actual` columns.
    Metrics {
        predictions: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if let Some(v) = &args.validation {
        cfg.validation = Some(v.clone());
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.seed = args.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn read_predictions(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{} has no '{name}' column", path.display()))
    };
    let (p, a) = (col("predicted")?, col("actual")?);
    let parse = |s: &str, line: usize| -> Result<u8> {
        match s.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => bail!("line {line}: expected 0 or 1, got '{other}'"),
        }
    };
    let (mut predicted, mut actual) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        predicted.push(parse(&rec[p], i + 2)?);
        actual.push(parse(&rec[a], i + 2)?);
    }
    Ok((predicted, actual))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    match cli.command {
        Command::Flat(args) => {
            let cfg = load_config(&args)?;
            let report = run_flat_experiment(&cfg)?;
            info!("{} rows written to {}", report.len(), cfg.out.display());
            print!("{}", report.to_table().lines().take(12).collect::<Vec<_>>().join("\n"));
            println!();
        }
        Command::Mixed { run, k } => {
            let mut cfg = load_config(&run)?;
            if let Some(k) = k {
                cfg.k_values = k;
                cfg.validate()?;
            }
            for (k, report) in run_mixed_experiment(&cfg)? {
                info!("k={k}: {} rows", report.len());
                println!("{}", report.to_table().lines().take(6).collect::<Vec<_>>().join("\n"));
            }
        }
        Command::SelectFeatures { config, data, seed, out } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::from_file(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(d) = data {
                cfg.data = Some(d);
            }
            let path = cfg.data.clone().context("no data given")?;
            let ds = load_csv_excluding(&path, &cfg.label_column, &cfg.exclude)?;
            let ds = apply_scaler(&fit_scaler(&ds)?, &ds)?;
            let forest = ModelSpec::new(Family::RandomForest, Variant::Classical)
                .with_param("trees", cfg.selection_trees as f64);
            let verdict = select_features(&ds, cfg.bins, &forest, seed)?;
            match out {
                Some(o) => verdict.write_csv(ds.feature_names(), &o)?,
                None => verdict.write_csv_to(ds.feature_names(), std::io::stdout().lock())?,
            }
        }
        Command::Enumerate { rule, roster, out } => {
            let pool: Vec<String> = match roster {
                Some(r) => r,
                None => fraudkit::learners::ROSTER_ACRONYMS.iter().map(|s| s.to_string()).collect(),
            };
            let rules = match rule {
                Some(r) => vec![Rule::parse(&r)?],
                None => vec![Rule::MajorityVote, Rule::Or],
            };
            let mut all = Vec::new();
            for r in rules {
                all.extend(enumerate_ensembles(&pool, r)?);
            }
            for e in &all {
                println!("{}\t{}", e.label(), e.composition(&pool));
            }
            if let Some(o) = out {
                write_composition_csv(&all, &pool, &o)?;
            }
        }
        Command::Metrics { predictions } => {
            let (p, a) = read_predictions(&predictions)?;
            let c = confusion(&p, &a)?;
            let m = metrics(&c);
            println!("tp={} tn={} fp={} fn={}", c.tp, c.tn, c.fp, c.fn_);
            println!("acc={}", fmt(m.acc));
            println!("bcr={}", fmt(m.bcr));
            println!("sens={}", fmt(m.sens));
            println!("spec={}", fmt(m.spec));
            println!("f1={}", fmt(m.f1));
            println!("mean4={}", fmt(m.mean4));
        }
    }
    Ok(())
}
