use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{HybridIndex, Layout, NprobePlan, PartitionIndex, Strategy};
use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::ivf::{Neighbor, QueryGroup, ResultsHeap, SearchStats, TopK};
use crate::model::{
    build_attribute_bitmap, eval_constraint, AttributeConstraint, CompareOp, HybridQuery, Literal, Predicate,
    VectorDatabase, Workload,
};

/// How much work queries share during execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// Every query builds its own bitmap and scans on its own.
    None,
    /// Queries with the same constraint share one bitmap per partition.
    Constraint,
    /// Constraint sharing plus shared posting-list scans across queries
    /// probing the same list.
    Full,
}

impl Batching {
    pub fn name(self) -> &'static str {
        match self {
            Batching::None => "none",
            Batching::Constraint => "constraint",
            Batching::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Batching::None),
            "constraint" => Some(Batching::Constraint),
            "full" => Some(Batching::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintStats {
    pub queries: usize,
    /// Partition visits summed over the constraint's queries.
    pub partitions_routed: u64,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// Top-k per query in workload order, best first.
    pub results: Vec<Vec<Neighbor>>,
    pub stats: SearchStats,
    /// Keyed by canonical constraint key.
    pub per_constraint: BTreeMap<String, ConstraintStats>,
    pub wall_time: Duration,
}

impl HybridIndex {
    /// Answers every query in `workload` with its top-`k` tuples.
    pub fn execute(
        &self,
        db: &VectorDatabase,
        workload: &Workload,
        k: usize,
        plan: &NprobePlan,
        batching: Batching,
    ) -> Result<BatchResult> {
        if db.len() != self.len || db.dim() != self.dim {
            return Err(Error::Config(format!(
                "index covers {} tuples of dim {}, database has {} of dim {}",
                self.len,
                self.dim,
                db.len(),
                db.dim()
            )));
        }
        for q in &workload.queries {
            if q.vector.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    got: q.vector.len(),
                });
            }
        }
        let start = Instant::now();
        let overfetch = match self.config.strategy {
            Strategy::PostFilterD { overfetch_factor } => Some(overfetch_factor),
            _ => None,
        };
        let width = overfetch.map_or(k, |f| k.saturating_mul(f));
        let mut heaps = ResultsHeap::new(workload.len(), width);
        let mut stats = SearchStats::default();
        let mut per_constraint = BTreeMap::new();

        for (constraint, members) in workload.group_by_constraint() {
            let key = constraint.key();
            let mut cs = ConstraintStats {
                queries: members.len(),
                ..Default::default()
            };
            if let Layout::Exhaustive = self.layout {
                cs.stats = exhaustive_group(db, workload, &constraint, &members, batching, &mut heaps)?;
            } else {
                // post-filtering searches unfiltered and checks afterwards
                let pushdown = if overfetch.is_some() { None } else { Some(&constraint) };
                let nprobe = plan.for_key(&key);
                for (p, routed) in self.route_group(workload, &constraint, &members) {
                    cs.partitions_routed += routed.len() as u64;
                    let part = &self.partitions[p];
                    cs.stats += search_partition(db, part, workload, pushdown, &routed, nprobe, batching, &mut heaps)?;
                }
            }
            stats += cs.stats;
            per_constraint.insert(key, cs);
        }

        let mut results = heaps.into_sorted();
        if overfetch.is_some() {
            for q in 0..workload.len() {
                let constraint = &workload.queries[q].constraint;
                let mut kept = Vec::with_capacity(k);
                for n in &results[q] {
                    if kept.len() == k {
                        break;
                    }
                    let pos = self
                        .position_of(n.id)
                        .ok_or_else(|| Error::Format(format!("index returned unknown tuple {}", n.id)))?;
                    if eval_constraint(constraint, &db.tuple(pos as usize).attrs, None)? {
                        kept.push(*n);
                    }
                }
                results[q] = kept;
            }
        }
        Ok(BatchResult {
            results,
            stats,
            per_constraint,
            wall_time: start.elapsed(),
        })
    }

    /// Partitions each member query of a constraint group must visit, as
    /// `(partition, members)` pairs in partition order.
    pub fn route_group(
        &self,
        workload: &Workload,
        constraint: &AttributeConstraint,
        members: &[usize],
    ) -> Vec<(usize, Vec<usize>)> {
        let everyone = |parts: Vec<usize>| parts.into_iter().map(|p| (p, members.to_vec())).collect();
        match &self.layout {
            Layout::Exhaustive => Vec::new(),
            Layout::Single => everyone(vec![0]),
            Layout::Range { attr, .. } => everyone(
                (0..self.partitions.len())
                    .filter(|&p| range_admits(&self.partitions[p], attr, constraint))
                    .collect(),
            ),
            Layout::QdTree {
                tree,
                augmentation: None,
            } => {
                let probe = HybridQuery {
                    id: 0,
                    vector: Vec::new(),
                    constraint: constraint.clone(),
                };
                everyone(tree.route_query(&probe))
            }
            Layout::QdTree {
                tree,
                augmentation: Some(aug),
            } => {
                let mut by_part: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for &q in members {
                    let augmented = aug.augment_query(&workload.queries[q]);
                    for p in tree.route_query(&augmented) {
                        by_part.entry(p).or_default().push(q);
                    }
                }
                by_part.into_iter().collect()
            }
        }
    }
}

/// Whether a range partition can hold tuples satisfying every predicate on
/// the partitioning attribute. Anything it cannot reason about is admitted.
fn range_admits(part: &PartitionIndex, attr: &str, constraint: &AttributeConstraint) -> bool {
    let Some((lo, hi)) = part.bounds else {
        return true;
    };
    constraint.predicates.iter().all(|p| match p {
        Predicate::Compare { attr: a, op, value } if a == attr => match value.as_f64() {
            Some(v) if !v.is_nan() => match op {
                CompareOp::Lt => lo < v,
                CompareOp::Le => lo <= v,
                CompareOp::Gt => hi > v,
                CompareOp::Ge => hi >= v,
                CompareOp::Eq => lo <= v && v <= hi,
            },
            _ => true,
        },
        Predicate::In { attr: a, values } if a == attr => values.iter().any(|l| match l {
            Literal::Str(_) => true,
            num => num.as_f64().is_none_or(|v| v.is_nan() || (lo <= v && v <= hi)),
        }),
        _ => true,
    })
}

fn partition_bitmap(db: &VectorDatabase, part: &PartitionIndex, constraint: &AttributeConstraint) -> Result<Option<Bitmap>> {
    if constraint.is_empty() {
        return Ok(None);
    }
    build_attribute_bitmap(constraint, part.positions.iter().map(|&p| db.tuple(p as usize))).map(Some)
}

#[allow(clippy::too_many_arguments)]
fn search_partition(
    db: &VectorDatabase,
    part: &PartitionIndex,
    workload: &Workload,
    constraint: Option<&AttributeConstraint>,
    members: &[usize],
    nprobe: usize,
    batching: Batching,
    heaps: &mut ResultsHeap,
) -> Result<SearchStats> {
    let shared = match (batching, constraint) {
        (Batching::None, _) | (_, None) => None,
        (_, Some(c)) => partition_bitmap(db, part, c)?,
    };
    let mut stats = SearchStats::default();
    match batching {
        Batching::Full => {
            let group = QueryGroup {
                filter: shared.as_ref(),
                queries: members.iter().map(|&q| (q, workload.queries[q].vector.as_slice())).collect(),
                nprobe,
            };
            stats += part.ivf.search_group(&group, heaps);
        }
        Batching::Constraint => {
            for &q in members {
                stats += part.ivf.search_into(&workload.queries[q].vector, nprobe, shared.as_ref(), heaps.get_mut(q));
            }
        }
        Batching::None => {
            for &q in members {
                let own = match constraint {
                    Some(c) => partition_bitmap(db, part, c)?,
                    None => None,
                };
                stats += part.ivf.search_into(&workload.queries[q].vector, nprobe, own.as_ref(), heaps.get_mut(q));
            }
        }
    }
    Ok(stats)
}

fn exhaustive_group(
    db: &VectorDatabase,
    workload: &Workload,
    constraint: &AttributeConstraint,
    members: &[usize],
    batching: Batching,
    heaps: &mut ResultsHeap,
) -> Result<SearchStats> {
    let matching = |db: &VectorDatabase| -> Result<Vec<u32>> {
        let bitmap = build_attribute_bitmap(constraint, db.tuples().iter())?;
        Ok(bitmap.iter_ones().map(|p| p as u32).collect())
    };
    let shared = if batching == Batching::None { None } else { Some(matching(db)?) };
    let mut stats = SearchStats::default();
    let metric = db.metric();
    for &q in members {
        let own;
        let positions = match &shared {
            Some(s) => s,
            None => {
                own = matching(db)?;
                &own
            }
        };
        let v = &workload.queries[q].vector;
        let heap: &mut TopK = heaps.get_mut(q);
        for &p in positions {
            let t = db.tuple(p as usize);
            heap.push(t.id, metric.score(v, &t.vector));
        }
        stats.tuples_scanned += positions.len() as u64;
        stats.entries_visited += db.len() as u64;
    }
    Ok(stats)
}
