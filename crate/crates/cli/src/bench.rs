use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use hqi::engine::{
    recall_at_k, tune_nprobe, Batching, HybridIndex, NprobePlan, StrategyConfig, TuneReport, METRICS_SCHEMA_VERSION,
};
use hqi::ivf::Neighbor;
use hqi::model::{VectorDatabase, Workload};
use hqi::storage;
use serde::Serialize;

use crate::commands::{check_target, exact_truth, load_data, load_workload_or_default, parse_batching, print_json};
use crate::strategy::{effective_seed, NotApplicable, StrategyParams};
use crate::{usage, Outcome};

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Workload to run (default: the dataset's workload.jsonl).
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Historical workload for layout building (default: the run workload).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Comma-separated strategies to compare.
    #[arg(long, value_delimiter = ',', default_value = "exhaustive,prefilter,range,postfilter,hqi")]
    pub strategies: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long = "target_recall", visible_alias = "target-recall", default_value_t = 0.8)]
    pub target_recall: f64,
    /// Batching used for the main comparison: none, constraint or full.
    #[arg(long, default_value = "full")]
    pub batching: String,
    /// Batch sizes for a throughput sweep, e.g. 1,10,100,1000.
    #[arg(long = "batch_sizes", visible_alias = "batch-sizes", value_delimiter = ',')]
    pub batch_sizes: Vec<usize>,
    /// Batching modes swept over the batch sizes.
    #[arg(long = "sweep_modes", visible_alias = "sweep-modes", value_delimiter = ',', default_value = "constraint,full")]
    pub sweep_modes: Vec<String>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: StrategyParams,
}

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub strategy: String,
    pub config: StrategyConfig,
    pub partitions: usize,
    pub build_time_ms: f64,
    pub nprobe: NprobePlan,
    pub recall: f64,
    pub target_reached: bool,
    pub tuples_scanned: u64,
    pub posting_lists_scanned: u64,
    pub entries_visited: u64,
    pub wall_time_ms: f64,
    /// Wall time relative to the reference strategy.
    pub slowdown: f64,
}

#[derive(Debug, Serialize)]
pub struct FilterRow {
    pub strategy: String,
    pub constraint: String,
    pub queries: usize,
    pub nprobe: usize,
    pub recall: f64,
    pub target_reached: bool,
    pub mean_tuples_scanned: f64,
    pub mean_posting_lists_scanned: f64,
    pub mean_entries_visited: f64,
    pub mean_partitions_routed: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub strategy: String,
    pub batching: &'static str,
    pub batch_size: usize,
    pub queries: usize,
    pub wall_time_ms: f64,
    pub queries_per_sec: f64,
}

#[derive(Debug, Serialize)]
pub struct Skipped {
    pub strategy: String,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub k: usize,
    pub target_recall: f64,
    pub batching: &'static str,
    pub queries: usize,
    /// Strategy every slowdown is relative to: hqi when present, else the
    /// first strategy that ran.
    pub reference: Option<String>,
    pub rows: Vec<BenchRow>,
    pub skipped: Vec<Skipped>,
    pub per_filter: Vec<FilterRow>,
    pub batch_sweep: Vec<SweepRow>,
}

struct Run {
    index: HybridIndex,
    plan: NprobePlan,
    tuning: TuneReport,
}

pub fn run(args: BenchArgs) -> Result<Outcome> {
    if args.k == 0 {
        return Err(usage("--k must be positive"));
    }
    if args.strategies.is_empty() {
        return Err(usage("--strategies is empty"));
    }
    check_target(args.target_recall)?;
    let batching = parse_batching(&args.batching)?;
    let sweep_modes = args.sweep_modes.iter().map(|m| parse_batching(m)).collect::<Result<Vec<_>>>()?;
    if args.batch_sizes.contains(&0) {
        return Err(usage("batch sizes must be positive"));
    }
    let db = load_data(&args.data)?;
    let workload = load_workload_or_default(args.workload.as_ref(), &args.data, &db)?
        .ok_or_else(|| usage("no workload given and the dataset has no workload.jsonl"))?;
    let training = match &args.train {
        Some(p) => storage::load_workload(p, Some(&db))?,
        None => workload.clone(),
    };
    let mut params = args.params.clone();
    params.seed = effective_seed(params.seed)?;

    let truth = exact_truth(&db, &workload, args.k)?;
    let groups = workload.group_by_constraint();
    let mut report = BenchReport {
        schema_version: METRICS_SCHEMA_VERSION,
        k: args.k,
        target_recall: args.target_recall,
        batching: batching.name(),
        queries: workload.len(),
        reference: None,
        rows: Vec::new(),
        skipped: Vec::new(),
        per_filter: Vec::new(),
        batch_sweep: Vec::new(),
    };
    let mut runs = Vec::new();
    for name in &args.strategies {
        let strategy = match params.strategy(name, &db)? {
            Ok(s) => s,
            Err(NotApplicable(reason)) => {
                eprintln!("skipping {name}: {reason}");
                report.skipped.push(Skipped {
                    strategy: name.clone(),
                    reason,
                });
                continue;
            }
        };
        let config = StrategyConfig::new(strategy, params.seed);
        let index = HybridIndex::build(&db, &training, &config)?;
        let tuning = tune_nprobe(&index, &db, &workload, &truth, args.k, args.target_recall)?;
        let plan = tuning.plan.clone();
        let result = index.execute(&db, &workload, args.k, &plan, batching)?;
        let strategy = config.strategy.name().to_owned();
        for (constraint, members) in &groups {
            let key = constraint.key();
            let cs = result.per_constraint.get(&key).copied().unwrap_or_default();
            let outcome = tuning.outcomes.get(&key);
            let q = members.len().max(1) as f64;
            report.per_filter.push(FilterRow {
                strategy: strategy.clone(),
                constraint: key.clone(),
                queries: members.len(),
                nprobe: plan.for_key(&key),
                recall: subset_recall(&result.results, &truth, members, args.k),
                target_reached: outcome.is_none_or(|o| o.reached),
                mean_tuples_scanned: cs.stats.tuples_scanned as f64 / q,
                mean_posting_lists_scanned: cs.stats.posting_lists_scanned as f64 / q,
                mean_entries_visited: cs.stats.entries_visited as f64 / q,
                mean_partitions_routed: cs.partitions_routed as f64 / q,
            });
        }
        report.rows.push(BenchRow {
            strategy,
            partitions: index.partitions().len(),
            build_time_ms: index.build_time().as_secs_f64() * 1e3,
            nprobe: plan.clone(),
            recall: recall_at_k(&result.results, &truth, args.k),
            target_reached: tuning.all_reached(),
            tuples_scanned: result.stats.tuples_scanned,
            posting_lists_scanned: result.stats.posting_lists_scanned,
            entries_visited: result.stats.entries_visited,
            wall_time_ms: result.wall_time.as_secs_f64() * 1e3,
            slowdown: 1.0,
            config,
        });
        runs.push(Run { index, plan, tuning });
    }

    let reference = report
        .rows
        .iter()
        .position(|r| r.strategy == "hqi")
        .or(if report.rows.is_empty() { None } else { Some(0) });
    if let Some(r) = reference {
        let base = report.rows[r].wall_time_ms;
        report.reference = Some(report.rows[r].strategy.clone());
        for row in &mut report.rows {
            row.slowdown = if base > 0.0 { row.wall_time_ms / base } else { 1.0 };
        }
    }

    for (row, run) in report.rows.iter().zip(&runs) {
        for &mode in &sweep_modes {
            for &size in &args.batch_sizes {
                let wall = sweep(&run.index, &db, &workload, args.k, &run.plan, mode, size)?;
                report.batch_sweep.push(SweepRow {
                    strategy: row.strategy.clone(),
                    batching: mode.name(),
                    batch_size: size,
                    queries: workload.len(),
                    wall_time_ms: wall * 1e3,
                    queries_per_sec: if wall > 0.0 { workload.len() as f64 / wall } else { f64::INFINITY },
                });
            }
        }
    }

    print_table(&report);
    if let Some(out) = &args.out {
        storage::write_atomic(out, &serde_json::to_vec_pretty(&report)?)?;
    }
    print_json(&report)?;
    let missed = runs.iter().any(|r| !r.tuning.all_reached());
    Ok(if missed { Outcome::TargetMissed } else { Outcome::Done })
}

fn subset_recall(results: &[Vec<Neighbor>], truth: &[Vec<Neighbor>], members: &[usize], k: usize) -> f64 {
    let res: Vec<Vec<Neighbor>> = members.iter().map(|&i| results[i].clone()).collect();
    let tru: Vec<Vec<Neighbor>> = members.iter().map(|&i| truth[i].clone()).collect();
    recall_at_k(&res, &tru, k)
}

/// Seconds to run the workload as consecutive batches of `size` queries.
fn sweep(
    index: &HybridIndex,
    db: &VectorDatabase,
    workload: &Workload,
    k: usize,
    plan: &NprobePlan,
    mode: Batching,
    size: usize,
) -> Result<f64> {
    let batches: Vec<Workload> = workload.queries.chunks(size).map(|c| Workload::new(c.to_vec())).collect();
    let start = Instant::now();
    for batch in &batches {
        index.execute(db, batch, k, plan, mode)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

fn print_table(report: &BenchReport) {
    eprintln!(
        "{:<12} {:>6} {:>12} {:>8} {:>14} {:>12} {:>9}",
        "strategy", "parts", "build ms", "recall", "tuples", "wall ms", "slowdown"
    );
    for r in &report.rows {
        eprintln!(
            "{:<12} {:>6} {:>12.1} {:>7.3}{} {:>14} {:>12.1} {:>8.2}x",
            r.strategy,
            r.partitions,
            r.build_time_ms,
            r.recall,
            if r.target_reached { ' ' } else { '!' },
            r.tuples_scanned,
            r.wall_time_ms,
            r.slowdown
        );
    }
    let unreached: BTreeMap<&str, usize> = report
        .per_filter
        .iter()
        .filter(|f| !f.target_reached)
        .fold(BTreeMap::new(), |mut m, f| {
            *m.entry(f.strategy.as_str()).or_default() += 1;
            m
        });
    for (s, n) in unreached {
        eprintln!("{s}: {n} constraint(s) below the target recall");
    }
}
