//! Index construction and batch execution for every search strategy: the
//! exhaustive oracle, pre-filtering and post-filtering over one IVF index,
//! range partitioning on an attribute, and the workload-aware qd-tree layout.

mod execute;
mod tune;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use execute::{BatchResult, Batching, ConstraintStats};
pub use tune::{recall_at_k, tune_nprobe, RunMetrics, TuneOutcome, TuneReport, METRICS_SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::ivf::{build_ivf, IvfIndex};
use crate::model::{AttributeValue, Metric, Tuple, VectorDatabase, Workload};
use crate::qdtree::{augment, construct_balanced_qdtree, default_min_size, Augmentation, QdTree, QdTreeConfig};

pub const DEFAULT_OVERFETCH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Exact filtered scan; the ground truth for recall.
    ExhaustiveA,
    /// One IVF index searched with the constraint bitmap pushed down.
    PreFilterB,
    /// Equal-width ranges over one numeric attribute, one IVF each.
    RangeC { partition_attr: String, partition_count: usize },
    /// Unfiltered IVF search for `overfetch_factor * k` candidates, then
    /// the constraint is applied.
    PostFilterD { overfetch_factor: usize },
    /// Workload-aware qd-tree partitions, one IVF each.
    Hqi {
        /// Defaults to `max(256, n / 1024)`.
        min_size: Option<usize>,
        /// Defaults to `round(sqrt(n))`.
        num_centroids: Option<usize>,
        /// Nearest centroids attached to each query; 0 disables centroid
        /// routing.
        m: usize,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::ExhaustiveA => "exhaustive",
            Strategy::PreFilterB => "prefilter",
            Strategy::RangeC { .. } => "range",
            Strategy::PostFilterD { .. } => "postfilter",
            Strategy::Hqi { .. } => "hqi",
        }
    }

    pub fn post_filter() -> Self {
        Strategy::PostFilterD {
            overfetch_factor: DEFAULT_OVERFETCH,
        }
    }

    pub fn hqi(m: usize) -> Self {
        Strategy::Hqi {
            min_size: None,
            num_centroids: None,
            m,
        }
    }
}

/// Per-constraint nprobe with a fallback for constraints not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NprobePlan {
    pub default: usize,
    #[serde(default)]
    pub per_constraint: BTreeMap<String, usize>,
}

impl NprobePlan {
    pub fn uniform(nprobe: usize) -> Self {
        Self {
            default: nprobe,
            per_constraint: BTreeMap::new(),
        }
    }

    /// Probes every posting list of every partition.
    pub fn exhaustive() -> Self {
        Self::uniform(usize::MAX)
    }

    pub fn for_key(&self, key: &str) -> usize {
        self.per_constraint.get(key).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        Self { strategy, seed }
    }
}

/// One physical partition with its own IVF index. `positions` are database
/// positions in ascending order; the IVF scope is the same list.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionIndex {
    pub positions: Vec<u32>,
    pub ivf: IvfIndex,
    /// Smallest and largest partitioning-attribute value, range layout only.
    pub bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub enum Layout {
    /// No index at all.
    Exhaustive,
    /// Every tuple in partition 0.
    Single,
    Range {
        attr: String,
        /// `partition_count + 1` equal-width boundaries.
        edges: Vec<f64>,
    },
    QdTree {
        tree: QdTree,
        augmentation: Option<Augmentation>,
    },
}

#[derive(Debug, Clone)]
pub struct HybridIndex {
    config: StrategyConfig,
    metric: Metric,
    dim: usize,
    len: usize,
    layout: Layout,
    partitions: Vec<PartitionIndex>,
    position_of: HashMap<u64, u32>,
    build_time: Duration,
}

impl HybridIndex {
    /// Builds the index for `config` over `db`. `training` is the historical
    /// workload; only the qd-tree layout looks at it.
    pub fn build(db: &VectorDatabase, training: &Workload, config: &StrategyConfig) -> Result<Self> {
        if db.is_empty() {
            return Err(Error::Config("cannot index an empty database".into()));
        }
        let start = Instant::now();
        let seed = config.seed;
        let (layout, partitions) = match &config.strategy {
            Strategy::ExhaustiveA => (Layout::Exhaustive, Vec::new()),
            Strategy::PreFilterB => (Layout::Single, vec![partition(db, (0..db.len() as u32).collect(), seed, None)?]),
            Strategy::PostFilterD { overfetch_factor } => {
                if *overfetch_factor == 0 {
                    return Err(Error::Config("overfetch_factor must be at least 1".into()));
                }
                (Layout::Single, vec![partition(db, (0..db.len() as u32).collect(), seed, None)?])
            }
            Strategy::RangeC {
                partition_attr,
                partition_count,
            } => build_range(db, partition_attr, *partition_count, seed)?,
            Strategy::Hqi {
                min_size,
                num_centroids,
                m,
            } => build_hqi(db, training, *min_size, *num_centroids, *m, seed)?,
        };
        let mut index = Self::from_parts(config.clone(), db.metric(), db.dim(), layout, partitions, db)?;
        index.build_time = start.elapsed();
        Ok(index)
    }

    /// Reassembles an index from stored parts.
    pub fn from_parts(
        config: StrategyConfig,
        metric: Metric,
        dim: usize,
        layout: Layout,
        partitions: Vec<PartitionIndex>,
        db: &VectorDatabase,
    ) -> Result<Self> {
        if db.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: db.dim(),
            });
        }
        let mut seen = vec![false; db.len()];
        for part in &partitions {
            if part.positions.len() != part.ivf.len() {
                return Err(Error::Format("partition size does not match its IVF index".into()));
            }
            for (&p, &id) in part.positions.iter().zip(part.ivf.ids()) {
                let slot = seen
                    .get_mut(p as usize)
                    .ok_or_else(|| Error::Format(format!("partition position {p} out of range")))?;
                if std::mem::replace(slot, true) {
                    return Err(Error::Format(format!("position {p} appears in two partitions")));
                }
                if db.tuple(p as usize).id != id {
                    return Err(Error::Format(format!("position {p} does not hold tuple {id}")));
                }
            }
        }
        if !matches!(layout, Layout::Exhaustive) && seen.iter().any(|&s| !s) {
            return Err(Error::Format("partitions do not cover the database".into()));
        }
        if let Layout::QdTree { tree, .. } = &layout {
            if tree.leaf_count() != partitions.len() {
                return Err(Error::Format("qd-tree leaves do not match partitions".into()));
            }
        }
        let position_of = db.tuples().iter().enumerate().map(|(p, t)| (t.id, p as u32)).collect();
        Ok(Self {
            config,
            metric,
            dim,
            len: db.len(),
            layout,
            partitions,
            position_of,
            build_time: Duration::ZERO,
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of database tuples the index covers.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn partitions(&self) -> &[PartitionIndex] {
        &self.partitions
    }

    pub fn build_time(&self) -> Duration {
        self.build_time
    }

    pub fn set_build_time(&mut self, t: Duration) {
        self.build_time = t;
    }

    /// Largest nprobe that changes anything: the biggest partition nlist.
    pub fn max_nprobe(&self) -> usize {
        self.partitions.iter().map(|p| p.ivf.nlist()).max().unwrap_or(1)
    }

    pub(crate) fn position_of(&self, id: u64) -> Option<u32> {
        self.position_of.get(&id).copied()
    }
}

fn scope<'a>(db: &'a VectorDatabase, positions: &[u32]) -> Vec<&'a Tuple> {
    positions.iter().map(|&p| db.tuple(p as usize)).collect()
}

fn partition(db: &VectorDatabase, positions: Vec<u32>, seed: u64, bounds: Option<(f64, f64)>) -> Result<PartitionIndex> {
    let ivf = build_ivf(&scope(db, &positions), db.metric(), None, seed)?;
    Ok(PartitionIndex { positions, ivf, bounds })
}

fn numeric(db: &VectorDatabase, attr: &str) -> Result<Vec<f64>> {
    db.tuples()
        .iter()
        .map(|t| match t.attrs.get(attr) {
            Some(AttributeValue::Float(v)) if !v.is_nan() => Ok(*v),
            Some(AttributeValue::Int(v)) => Ok(*v as f64),
            Some(other) => Err(Error::Config(format!(
                "range attribute {attr} must be numeric on every tuple, tuple {} has {}",
                t.id,
                other.kind().name()
            ))),
            None => Err(Error::Config(format!("range attribute {attr} missing on tuple {}", t.id))),
        })
        .collect()
}

fn build_range(db: &VectorDatabase, attr: &str, count: usize, seed: u64) -> Result<(Layout, Vec<PartitionIndex>)> {
    if count == 0 {
        return Err(Error::Config("partition_count must be at least 1".into()));
    }
    let values = numeric(db, attr)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / count as f64;
    let edges: Vec<f64> = (0..=count).map(|i| if i == count { hi } else { lo + width * i as f64 }).collect();
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); count];
    for (pos, &v) in values.iter().enumerate() {
        let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
        buckets[b.min(count - 1)].push(pos as u32);
    }
    let mut parts = Vec::new();
    for (i, positions) in buckets.into_iter().enumerate() {
        if positions.is_empty() {
            continue;
        }
        let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &positions {
            mn = mn.min(values[p as usize]);
            mx = mx.max(values[p as usize]);
        }
        parts.push(partition(db, positions, seed.wrapping_add(i as u64), Some((mn, mx)))?);
    }
    Ok((
        Layout::Range {
            attr: attr.to_owned(),
            edges,
        },
        parts,
    ))
}

fn build_hqi(
    db: &VectorDatabase,
    training: &Workload,
    min_size: Option<usize>,
    num_centroids: Option<usize>,
    m: usize,
    seed: u64,
) -> Result<(Layout, Vec<PartitionIndex>)> {
    let n = db.len();
    let config = QdTreeConfig {
        min_size: min_size.unwrap_or_else(|| default_min_size(n)),
    };
    let (tree, augmentation) = if m == 0 {
        (construct_balanced_qdtree(db, None, training, config)?, None)
    } else {
        let centroids = num_centroids.unwrap_or_else(|| crate::ivf::default_nlist(n)).clamp(1, n);
        let (aug, augmented) = augment(db, training, centroids, m, seed)?;
        let tree = construct_balanced_qdtree(db, Some(&aug.tuple_centroids), &augmented, config)?;
        (tree, Some(aug))
    };
    let parts = tree
        .leaves()
        .enumerate()
        .map(|(i, leaf)| partition(db, leaf.positions.clone().unwrap_or_default(), seed.wrapping_add(i as u64), None))
        .collect::<Result<Vec<_>>>()?;
    Ok((Layout::QdTree { tree, augmentation }, parts))
}
