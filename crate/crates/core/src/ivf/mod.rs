//! Inverted-file index over one scope of tuples (the whole database or a
//! single partition), with bitmap pushdown into the posting-list scan and a
//! batched multi-query executor that shares each scan across a query group.

pub mod distance;
pub mod heap;
pub mod kmeans;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

pub use heap::{Neighbor, ResultsHeap, TopK};
pub use kmeans::{assign_nearest, kmeans, CentroidSet, DEFAULT_MAX_ITERS};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::model::{build_attribute_bitmap, Metric, Tuple, Workload};

/// Candidates per distance block in batched execution.
pub const BLOCK_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Query-vector distance computations against tuples.
    pub tuples_scanned: u64,
    pub posting_lists_scanned: u64,
    /// Posting-list entries examined, whether or not the filter let them
    /// through; counted once per query probing the list.
    #[serde(default)]
    pub entries_visited: u64,
}

impl AddAssign for SearchStats {
    fn add_assign(&mut self, rhs: Self) {
        self.tuples_scanned += rhs.tuples_scanned;
        self.posting_lists_scanned += rhs.posting_lists_scanned;
        self.entries_visited += rhs.entries_visited;
    }
}

/// Entries of one inverted list: scope positions and their vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PostingList {
    positions: Vec<u32>,
    vectors: Vec<f32>,
}

impl PostingList {
    pub fn new(positions: Vec<u32>, vectors: Vec<f32>, dim: usize) -> Result<Self> {
        if vectors.len() != positions.len() * dim {
            return Err(Error::Format(format!(
                "posting list holds {} positions but {} floats (dim {dim})",
                positions.len(),
                vectors.len()
            )));
        }
        Ok(Self { positions, vectors })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }
}

/// `round(sqrt(n))` clamped to `[1, n]`.
pub fn default_nlist(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(1, n.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    metric: Metric,
    centroids: CentroidSet,
    lists: Vec<PostingList>,
    /// Tuple id of each scope position.
    ids: Vec<u64>,
}

/// Queries sharing one attribute constraint, searched together.
#[derive(Debug, Clone)]
pub struct QueryGroup<'a> {
    /// Scope-position bitmap of tuples satisfying the constraint; `None`
    /// means every tuple qualifies.
    pub filter: Option<&'a Bitmap>,
    /// `(result slot, query vector)` pairs.
    pub queries: Vec<(usize, &'a [f32])>,
    pub nprobe: usize,
}

impl IvfIndex {
    /// Trains `nlist` centroids (default `round(sqrt(n))`) over the row-major
    /// `vectors` and files every vector under its best centroid.
    pub fn build(
        vectors: &[f32],
        ids: Vec<u64>,
        dim: usize,
        metric: Metric,
        nlist: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || vectors.len() != ids.len() * dim {
            return Err(Error::DimMismatch {
                expected: ids.len() * dim,
                got: vectors.len(),
            });
        }
        let n = ids.len();
        if n == 0 {
            return Err(Error::Config("cannot build an IVF index over an empty scope".into()));
        }
        let nlist = nlist.unwrap_or_else(|| default_nlist(n)).clamp(1, n);
        let centroids = kmeans(vectors, dim, nlist, seed, DEFAULT_MAX_ITERS)?;
        let mut lists = vec![PostingList::default(); nlist];
        for (pos, v) in vectors.chunks_exact(dim).enumerate() {
            let list = &mut lists[centroids.nearest(v, metric) as usize];
            list.positions.push(pos as u32);
            list.vectors.extend_from_slice(v);
        }
        Ok(Self {
            metric,
            centroids,
            lists,
            ids,
        })
    }

    /// Reassembles an index from stored parts, checking that the posting
    /// lists partition the scope.
    pub fn from_parts(metric: Metric, centroids: CentroidSet, lists: Vec<PostingList>, ids: Vec<u64>) -> Result<Self> {
        if lists.len() != centroids.len() {
            return Err(Error::Format(format!(
                "{} posting lists for {} centroids",
                lists.len(),
                centroids.len()
            )));
        }
        let mut seen = Bitmap::zeros(ids.len());
        for list in &lists {
            if list.vectors.len() != list.positions.len() * centroids.dim() {
                return Err(Error::Format("posting list vector buffer has wrong length".into()));
            }
            for &p in &list.positions {
                let p = p as usize;
                if p >= ids.len() || seen.get(p) {
                    return Err(Error::Format(format!("posting lists do not partition the scope at {p}")));
                }
                seen.set(p);
            }
        }
        if seen.count_ones() != ids.len() {
            return Err(Error::Format("posting lists do not cover the scope".into()));
        }
        Ok(Self {
            metric,
            centroids,
            lists,
            ids,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    /// Number of indexed tuples.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn centroids(&self) -> &CentroidSet {
        &self.centroids
    }

    pub fn lists(&self) -> &[PostingList] {
        &self.lists
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// The `nprobe` lists whose centroids score best against `q`.
    pub fn probe_order(&self, q: &[f32], nprobe: usize) -> Vec<u32> {
        let nprobe = nprobe.clamp(1, self.nlist());
        if nprobe == 1 {
            return vec![self.centroids.nearest(q, self.metric)];
        }
        self.centroids.nearest_m(q, nprobe, self.metric)
    }

    pub fn search(&self, q: &[f32], k: usize, nprobe: usize, filter: Option<&Bitmap>) -> (Vec<Neighbor>, SearchStats) {
        let mut heap = TopK::new(k);
        let stats = self.search_into(q, nprobe, filter, &mut heap);
        (heap.into_sorted(), stats)
    }

    /// Scans the probed lists and pushes every qualifying tuple into `heap`.
    /// Tuples whose filter bit is clear are skipped without a distance
    /// computation.
    pub fn search_into(&self, q: &[f32], nprobe: usize, filter: Option<&Bitmap>, heap: &mut TopK) -> SearchStats {
        debug_assert_eq!(q.len(), self.dim());
        let dim = self.dim();
        let mut stats = SearchStats::default();
        for c in self.probe_order(q, nprobe) {
            let list = &self.lists[c as usize];
            stats.posting_lists_scanned += 1;
            stats.entries_visited += list.len() as u64;
            for (e, &pos) in list.positions.iter().enumerate() {
                if filter.is_some_and(|f| !f.get(pos as usize)) {
                    continue;
                }
                let s = self.metric.score(q, &list.vectors[e * dim..(e + 1) * dim]);
                heap.push(self.ids[pos as usize], s);
                stats.tuples_scanned += 1;
            }
        }
        stats
    }

    /// Batched execution of one query group: every query picks its probe
    /// lists, queries are regrouped by list, each list is filtered once, and
    /// the filtered candidates are scored against all queries probing that
    /// list in fixed-size blocks.
    pub fn search_group(&self, group: &QueryGroup<'_>, heaps: &mut ResultsHeap) -> SearchStats {
        let dim = self.dim();
        let mut stats = SearchStats::default();
        let mut by_list: Vec<Vec<usize>> = vec![Vec::new(); self.nlist()];
        for (qi, (_, v)) in group.queries.iter().enumerate() {
            debug_assert_eq!(v.len(), dim);
            for c in self.probe_order(v, group.nprobe) {
                by_list[c as usize].push(qi);
            }
        }
        let mut candidates: Vec<u32> = Vec::new();
        for (c, probing) in by_list.iter().enumerate() {
            if probing.is_empty() {
                continue;
            }
            let list = &self.lists[c];
            stats.posting_lists_scanned += 1;
            stats.entries_visited += (list.len() * probing.len()) as u64;
            candidates.clear();
            match group.filter {
                Some(f) => candidates.extend(
                    (0..list.len() as u32).filter(|&e| f.get(list.positions[e as usize] as usize)),
                ),
                None => candidates.extend(0..list.len() as u32),
            }
            if candidates.is_empty() {
                continue;
            }
            for block in candidates.chunks(BLOCK_SIZE) {
                for &qi in probing {
                    let (slot, q) = group.queries[qi];
                    let heap = heaps.get_mut(slot);
                    for &e in block {
                        let e = e as usize;
                        let s = self.metric.score(q, &list.vectors[e * dim..(e + 1) * dim]);
                        heap.push(self.ids[list.positions[e] as usize], s);
                    }
                }
            }
            stats.tuples_scanned += (candidates.len() * probing.len()) as u64;
        }
        stats
    }
}

/// Builds an IVF index over `scope`; positions in the index are offsets
/// into `scope`.
pub fn build_ivf(scope: &[&Tuple], metric: Metric, nlist: Option<usize>, seed: u64) -> Result<IvfIndex> {
    let dim = scope.first().map(|t| t.vector.len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(scope.len() * dim);
    for t in scope {
        if t.vector.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: t.vector.len(),
            });
        }
        flat.extend_from_slice(&t.vector);
    }
    IvfIndex::build(&flat, scope.iter().map(|t| t.id).collect(), dim.max(1), metric, nlist, seed)
}

/// Exhaustive top-`k` over `candidates`, ties toward the smaller id.
pub fn exact_knn<'a>(q: &[f32], candidates: impl IntoIterator<Item = &'a Tuple>, k: usize, metric: Metric) -> Vec<Neighbor> {
    let mut heap = TopK::new(k);
    for t in candidates {
        heap.push(t.id, metric.score(q, &t.vector));
    }
    heap.into_sorted()
}

/// Runs a whole workload against one index: queries are grouped by
/// constraint, each group's bitmap is built once over `scope`, and each
/// group is executed with [`IvfIndex::search_group`].
pub fn batch_search(
    index: &IvfIndex,
    scope: &[&Tuple],
    workload: &Workload,
    k: usize,
    nprobe: usize,
) -> Result<(Vec<Vec<Neighbor>>, SearchStats)> {
    if scope.len() != index.len() {
        return Err(Error::Config(format!(
            "scope has {} tuples, index covers {}",
            scope.len(),
            index.len()
        )));
    }
    for q in &workload.queries {
        if q.vector.len() != index.dim() {
            return Err(Error::DimMismatch {
                expected: index.dim(),
                got: q.vector.len(),
            });
        }
    }
    let mut heaps = ResultsHeap::new(workload.len(), k);
    let mut stats = SearchStats::default();
    for (constraint, members) in workload.group_by_constraint() {
        let bitmap = if constraint.is_empty() {
            None
        } else {
            Some(build_attribute_bitmap(&constraint, scope.iter().copied())?)
        };
        let group = QueryGroup {
            filter: bitmap.as_ref(),
            queries: members.iter().map(|&i| (i, workload.queries[i].vector.as_slice())).collect(),
            nprobe,
        };
        stats += index.search_group(&group, &mut heaps);
    }
    Ok((heaps.into_sorted(), stats))
}
