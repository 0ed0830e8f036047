use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Batching, HybridIndex, NprobePlan};
use crate::error::{Error, Result};
use crate::ivf::Neighbor;
use crate::model::{VectorDatabase, Workload};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Mean over queries of `|result ∩ truth| / min(k, |truth|)`, comparing
/// ids only. Queries whose truth is empty are left out; if every query is
/// left out the recall is vacuously 1.
pub fn recall_at_k(results: &[Vec<Neighbor>], truth: &[Vec<Neighbor>], k: usize) -> f64 {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for (res, tru) in results.iter().zip(truth) {
        let want = k.min(tru.len());
        if want == 0 {
            continue;
        }
        let ids: HashSet<u64> = tru.iter().take(want).map(|n| n.id).collect();
        let hits = res.iter().take(k).filter(|n| ids.contains(&n.id)).count();
        sum += hits.min(want) as f64 / want as f64;
        counted += 1;
    }
    if counted == 0 {
        1.0
    } else {
        sum / counted as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub nprobe: usize,
    pub recall: f64,
    /// False when even the largest nprobe misses the target.
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub plan: NprobePlan,
    pub outcomes: BTreeMap<String, TuneOutcome>,
}

impl TuneReport {
    pub fn all_reached(&self) -> bool {
        self.outcomes.values().all(|o| o.reached)
    }
}

/// Smallest nprobe per distinct constraint whose recall against `truth`
/// reaches `target`: doubling until the target is met, then binary search
/// inside the last doubling step. Unreachable targets report the largest
/// nprobe with the recall it achieved.
pub fn tune_nprobe(
    index: &HybridIndex,
    db: &VectorDatabase,
    workload: &Workload,
    truth: &[Vec<Neighbor>],
    k: usize,
    target: f64,
) -> Result<TuneReport> {
    if truth.len() != workload.len() {
        return Err(Error::Config(format!("{} truth lists for {} queries", truth.len(), workload.len())));
    }
    let max = index.max_nprobe();
    let mut outcomes = BTreeMap::new();
    for (constraint, members) in workload.group_by_constraint() {
        let sub = Workload::new(members.iter().map(|&i| workload.queries[i].clone()).collect());
        let sub_truth: Vec<Vec<Neighbor>> = members.iter().map(|&i| truth[i].clone()).collect();
        let recall_at = |nprobe: usize| -> Result<f64> {
            let res = index.execute(db, &sub, k, &NprobePlan::uniform(nprobe), Batching::Full)?;
            Ok(recall_at_k(&res.results, &sub_truth, k))
        };

        let mut lo = 0; // largest nprobe known to miss
        let mut hi = 1;
        let mut hi_recall = recall_at(hi)?;
        while hi_recall < target && hi < max {
            lo = hi;
            hi = (hi * 2).min(max);
            hi_recall = recall_at(hi)?;
        }
        let outcome = if hi_recall < target {
            TuneOutcome {
                nprobe: hi,
                recall: hi_recall,
                reached: false,
            }
        } else {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                let r = recall_at(mid)?;
                if r >= target {
                    hi = mid;
                    hi_recall = r;
                } else {
                    lo = mid;
                }
            }
            TuneOutcome {
                nprobe: hi,
                recall: hi_recall,
                reached: true,
            }
        };
        outcomes.insert(constraint.key(), outcome);
    }
    let plan = NprobePlan {
        default: outcomes.values().map(|o| o.nprobe).max().unwrap_or(1),
        per_constraint: outcomes.iter().map(|(k, o)| (k.clone(), o.nprobe)).collect(),
    };
    Ok(TuneReport { plan, outcomes })
}

/// One run's metrics in a machine-readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub strategy: String,
    pub k: usize,
    pub nprobe: NprobePlan,
    pub recall: Option<f64>,
    pub queries: usize,
    pub tuples_scanned: u64,
    pub posting_lists_scanned: u64,
    pub wall_time_ms: f64,
    pub build_time_ms: f64,
}

impl RunMetrics {
    pub fn new(
        index: &HybridIndex,
        k: usize,
        plan: &NprobePlan,
        result: &super::BatchResult,
        recall: Option<f64>,
    ) -> Self {
        Self {
            schema_version: METRICS_SCHEMA_VERSION,
            strategy: index.config().strategy.name().to_owned(),
            k,
            nprobe: plan.clone(),
            recall,
            queries: result.results.len(),
            tuples_scanned: result.stats.tuples_scanned,
            posting_lists_scanned: result.stats.posting_lists_scanned,
            wall_time_ms: result.wall_time.as_secs_f64() * 1e3,
            build_time_ms: index.build_time().as_secs_f64() * 1e3,
        }
    }
}
