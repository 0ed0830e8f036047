use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use hqi::engine::{
    recall_at_k, tune_nprobe, Batching, HybridIndex, NprobePlan, RunMetrics, Strategy, StrategyConfig, TuneOutcome,
    METRICS_SCHEMA_VERSION,
};
use hqi::ivf::Neighbor;
use hqi::model::{VectorDatabase, Workload};
use hqi::storage;
use hqi::workloadgen::{gen_kg_style_workload, gen_synthetic, KgSpec, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::strategy::{effective_seed, resolve_config, StrategyParams};
use crate::{usage, Outcome};

/// Contents of a `gen` spec file, selected by its `kind` field.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GenSpec {
    /// Uniform attributes `A`, `B` with nested threshold filters.
    Synthetic(SyntheticSpec),
    /// Typed entities with a skewed template workload.
    Kg(KgSpec),
}

#[derive(Args)]
pub struct GenArgs {
    /// JSON spec: {"kind": "synthetic", "n", "d", "n_q", "seed", ...} or
    /// {"kind": "kg", "n", "d", "n_queries", "seed", ...}.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for vectors.bin, attrs.jsonl and workload.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GenReport {
    schema_version: u32,
    kind: &'static str,
    seed: u64,
    n: usize,
    d: usize,
    queries: usize,
    files: Vec<String>,
}

pub fn gen(args: GenArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: GenSpec =
        serde_json::from_str(&text).map_err(|e| usage(format!("bad spec {}: {e}", args.spec.display())))?;
    let (kind, seed, (db, workload)) = match spec {
        GenSpec::Synthetic(mut s) => {
            s.seed = effective_seed(s.seed)?;
            ("synthetic", s.seed, gen_synthetic(&s).map_err(|e| usage(e.to_string()))?)
        }
        GenSpec::Kg(mut s) => {
            s.seed = effective_seed(s.seed)?;
            ("kg", s.seed, gen_kg_style_workload(&s).map_err(|e| usage(e.to_string()))?)
        }
    };
    storage::save_dataset(&args.out, &db)?;
    storage::save_workload(&args.out.join(storage::WORKLOAD_FILE), &workload)?;
    print_json(&GenReport {
        schema_version: METRICS_SCHEMA_VERSION,
        kind,
        seed,
        n: db.len(),
        d: db.dim(),
        queries: workload.len(),
        files: [storage::VECTORS_FILE, storage::ATTRS_FILE, storage::WORKLOAD_FILE]
            .iter()
            .map(|f| args.out.join(f).display().to_string())
            .collect(),
    })?;
    Ok(Outcome::Done)
}

#[derive(Args)]
pub struct BuildArgs {
    /// Dataset directory (vectors.bin and attrs.jsonl).
    #[arg(long)]
    pub data: PathBuf,
    /// Historical workload used to shape the layout (default: the
    /// dataset's workload.jsonl when present).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Index directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// exhaustive, prefilter, range, postfilter or hqi.
    #[arg(long, default_value = "hqi")]
    pub strategy: String,
    /// Strategy config as JSON, replacing the strategy flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: StrategyParams,
}

#[derive(Serialize)]
struct BuildReport {
    schema_version: u32,
    config: StrategyConfig,
    build_time_ms: f64,
    partitions: usize,
    partition_sizes: Vec<usize>,
    manifest: String,
}

pub fn load_data(dir: &Path) -> Result<VectorDatabase> {
    storage::load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

/// `explicit` if given, else `dir/workload.jsonl` if it exists.
pub fn load_workload_or_default(explicit: Option<&PathBuf>, dir: &Path, db: &VectorDatabase) -> Result<Option<Workload>> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => {
            let p = dir.join(storage::WORKLOAD_FILE);
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    let w = storage::load_workload(&path, Some(db)).with_context(|| format!("loading workload {}", path.display()))?;
    Ok(Some(w))
}

pub fn build(args: BuildArgs) -> Result<Outcome> {
    let db = load_data(&args.data)?;
    let training = load_workload_or_default(args.train.as_ref(), &args.data, &db)?.unwrap_or_default();
    let config = resolve_config(args.config.as_ref(), &args.strategy, &args.params, &db)?;
    let index = HybridIndex::build(&db, &training, &config)?;
    storage::save_index(&args.out, &index)?;
    print_json(&BuildReport {
        schema_version: METRICS_SCHEMA_VERSION,
        config,
        build_time_ms: index.build_time().as_secs_f64() * 1e3,
        partitions: index.partitions().len(),
        partition_sizes: index.partitions().iter().map(|p| p.positions.len()).collect(),
        manifest: args.out.join(storage::MANIFEST_FILE).display().to_string(),
    })?;
    Ok(Outcome::Done)
}

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Index directory written by `build`.
    #[arg(long)]
    pub index: PathBuf,
    /// Workload to answer (default: the dataset's workload.jsonl).
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// A number, `max` for every posting list, or `auto` to tune per
    /// constraint against the ground truth.
    #[arg(long, default_value = "auto")]
    pub nprobe: String,
    /// Ground-truth results file; computed exactly when omitted and
    /// needed.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long = "target_recall", visible_alias = "target-recall", default_value_t = 0.8)]
    pub target_recall: f64,
    /// none, constraint or full.
    #[arg(long, default_value = "full")]
    pub batching: String,
    /// Per-query results file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the metrics record here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

pub enum NprobeArg {
    Fixed(usize),
    Max,
    Auto,
}

pub fn parse_nprobe(s: &str) -> Result<NprobeArg> {
    match s {
        "auto" => Ok(NprobeArg::Auto),
        "max" => Ok(NprobeArg::Max),
        n => match n.parse::<usize>() {
            Ok(v) if v > 0 => Ok(NprobeArg::Fixed(v)),
            _ => Err(usage(format!("--nprobe must be a positive integer, `max` or `auto`, got `{n}`"))),
        },
    }
}

pub fn parse_batching(s: &str) -> Result<Batching> {
    Batching::parse(s).ok_or_else(|| usage(format!("--batching must be none, constraint or full, got `{s}`")))
}

pub fn check_target(target: f64) -> Result<()> {
    if (0.0..=1.0).contains(&target) {
        Ok(())
    } else {
        Err(usage(format!("target recall {target} is outside [0, 1]")))
    }
}

/// Exact filtered top-`k` for every query.
pub fn exact_truth(db: &VectorDatabase, workload: &Workload, k: usize) -> Result<Vec<Vec<Neighbor>>> {
    let oracle = HybridIndex::build(db, &Workload::default(), &StrategyConfig::new(Strategy::ExhaustiveA, 0))?;
    Ok(oracle
        .execute(db, workload, k, &NprobePlan::uniform(1), Batching::Constraint)?
        .results)
}

#[derive(Serialize)]
struct QueryReport {
    #[serde(flatten)]
    metrics: RunMetrics,
    entries_visited: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning: Option<std::collections::BTreeMap<String, TuneOutcome>>,
    load_time_ms: f64,
}

pub fn query(args: QueryArgs) -> Result<Outcome> {
    if args.k == 0 {
        return Err(usage("--k must be positive"));
    }
    check_target(args.target_recall)?;
    let nprobe = parse_nprobe(&args.nprobe)?;
    let batching = parse_batching(&args.batching)?;
    let db = load_data(&args.data)?;
    let workload = load_workload_or_default(args.workload.as_ref(), &args.data, &db)?
        .ok_or_else(|| usage("no workload given and the dataset has no workload.jsonl"))?;
    let start = Instant::now();
    let index = storage::load_index(&args.index, &db).with_context(|| format!("loading index {}", args.index.display()))?;
    let load_time_ms = start.elapsed().as_secs_f64() * 1e3;
    for q in &workload.queries {
        if q.vector.len() != db.dim() {
            return Err(hqi::Error::DimMismatch {
                expected: db.dim(),
                got: q.vector.len(),
            }
            .into());
        }
    }

    let mut truth = match &args.truth {
        Some(p) => Some(storage::load_results(p, &workload).with_context(|| format!("loading truth {}", p.display()))?),
        None => None,
    };
    let mut outcome = Outcome::Done;
    let mut tuning = None;
    let plan = match nprobe {
        NprobeArg::Fixed(n) => NprobePlan::uniform(n),
        NprobeArg::Max => NprobePlan::exhaustive(),
        NprobeArg::Auto => {
            let t = match truth.take() {
                Some(t) => t,
                None => exact_truth(&db, &workload, args.k)?,
            };
            let report = tune_nprobe(&index, &db, &workload, &t, args.k, args.target_recall)?;
            if !report.all_reached() {
                outcome = Outcome::TargetMissed;
            }
            tuning = Some(report.outcomes);
            truth = Some(t);
            report.plan
        }
    };
    let result = index.execute(&db, &workload, args.k, &plan, batching)?;
    let recall = truth.as_ref().map(|t| recall_at_k(&result.results, t, args.k));
    if let Some(out) = &args.out {
        storage::save_results(out, &workload, &result.results)?;
    }
    let report = QueryReport {
        metrics: RunMetrics::new(&index, args.k, &plan, &result, recall),
        entries_visited: result.stats.entries_visited,
        target_recall: tuning.as_ref().map(|_| args.target_recall),
        tuning,
        load_time_ms,
    };
    if let Some(path) = &args.metrics {
        storage::write_atomic(path, &serde_json::to_vec_pretty(&report)?)?;
    }
    print_json(&report)?;
    Ok(outcome)
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
