use std::collections::BTreeMap;

use super::{CutPredicateSet, QdTree, QdTreeNode, RoutingKey, SemanticDescription};
use crate::error::{Error, Result};
use crate::model::{eval_predicate, Predicate, VectorDatabase, Workload};

/// Smallest partition size worth splitting further for a database of `n`
/// tuples.
pub fn default_min_size(n: usize) -> usize {
    (n / 1024).max(256)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QdTreeConfig {
    /// Nodes with at most this many tuples become leaves.
    pub min_size: usize,
}

impl QdTreeConfig {
    pub fn for_size(n: usize) -> Self {
        Self {
            min_size: default_min_size(n),
        }
    }
}

/// Precomputed state for greedy qd-tree construction: which cut predicates
/// each tuple satisfies, and the workload reduced to weighted routing keys.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    cuts: CutPredicateSet,
    len: usize,
    /// CSR rows: cut indices each tuple satisfies, ascending.
    offsets: Vec<usize>,
    truths: Vec<u32>,
    keys: Vec<RoutingKey>,
    weights: Vec<u64>,
    query_keys: Vec<usize>,
    config: QdTreeConfig,
}

impl TreeBuilder {
    /// Uses the cut predicates extracted from `workload`. Pass the augmented
    /// workload together with the tuple centroids when augmentation is on.
    pub fn new(
        db: &VectorDatabase,
        tuple_centroids: Option<&[u32]>,
        workload: &Workload,
        config: QdTreeConfig,
    ) -> Result<Self> {
        Self::with_cuts(db, tuple_centroids, CutPredicateSet::from_workload(workload), workload, config)
    }

    pub fn with_cuts(
        db: &VectorDatabase,
        tuple_centroids: Option<&[u32]>,
        cuts: CutPredicateSet,
        workload: &Workload,
        config: QdTreeConfig,
    ) -> Result<Self> {
        if let Some(tc) = tuple_centroids {
            if tc.len() != db.len() {
                return Err(Error::Config(format!("{} centroid assignments for {} tuples", tc.len(), db.len())));
            }
        }
        let mut offsets = Vec::with_capacity(db.len() + 1);
        let mut truths = Vec::new();
        offsets.push(0);
        for (pos, t) in db.tuples().iter().enumerate() {
            let centroid = tuple_centroids.map(|tc| tc[pos]);
            let row_start = truths.len();
            for (i, p) in cuts.predicates().iter().enumerate() {
                if let Predicate::CentroidIn { .. } = p {
                    // centroid singletons are looked up directly below
                    if centroid.is_none() {
                        return Err(Error::MissingCentroid);
                    }
                    continue;
                }
                if eval_predicate(p, &t.attrs, centroid)? {
                    truths.push(i as u32);
                }
            }
            if let Some(c) = centroid {
                for (i, p) in cuts.predicates().iter().enumerate() {
                    if let Predicate::CentroidIn { centroids } = p {
                        if centroids.contains(&c) {
                            truths.push(i as u32);
                        }
                    }
                }
                truths[row_start..].sort_unstable();
            }
            offsets.push(truths.len());
        }

        let raw: Vec<RoutingKey> = workload.queries.iter().map(|q| cuts.routing_key(q)).collect();
        // distinct keys in sorted order so construction ignores query order
        let mut keys = raw.clone();
        keys.sort();
        keys.dedup();
        let mut weights = vec![0u64; keys.len()];
        let query_keys: Vec<usize> = raw
            .iter()
            .map(|k| {
                let id = keys.binary_search(k).unwrap_or_default();
                weights[id] += 1;
                id
            })
            .collect();

        Ok(Self {
            cuts,
            len: db.len(),
            offsets,
            truths,
            keys,
            weights,
            query_keys,
            config,
        })
    }

    pub fn cuts(&self) -> &CutPredicateSet {
        &self.cuts
    }

    /// Cut indices satisfied by the tuple at `pos`.
    pub fn truths(&self, pos: u32) -> &[u32] {
        &self.truths[self.offsets[pos as usize]..self.offsets[pos as usize + 1]]
    }

    pub fn describe(&self, positions: &[u32]) -> SemanticDescription {
        let mut counts = vec![0usize; self.cuts.len()];
        for &p in positions {
            for &c in self.truths(p) {
                counts[c as usize] += 1;
            }
        }
        SemanticDescription::from_counts(&counts, positions.len())
    }

    /// Weighted distinct keys for a subset of workload queries.
    fn weigh(&self, queries: &[usize]) -> Vec<(usize, u64)> {
        let mut m: BTreeMap<usize, u64> = BTreeMap::new();
        for &q in queries {
            *m.entry(self.query_keys[q]).or_default() += 1;
        }
        m.into_iter().collect()
    }

    /// Splitting cost of each candidate on its own: queries admitted by the
    /// left child plus queries admitted by the right child.
    pub fn split_costs(&self, positions: &[u32], queries: &[usize], candidates: &[usize]) -> Vec<u64> {
        self.costs_for(positions, &self.weigh(queries), candidates)
    }

    /// The candidate with the lowest splitting cost, ties going to the
    /// earliest in canonical order, together with that cost.
    pub fn min_cost_predicate(&self, positions: &[u32], queries: &[usize], candidates: &[usize]) -> Result<(usize, u64)> {
        if candidates.is_empty() {
            return Err(Error::Config("no candidate predicates left".into()));
        }
        let keys = self.weigh(queries);
        let costs = self.costs_for(positions, &keys, candidates);
        let mut best = None;
        let mut min_cost: u64 = 2 * keys.iter().map(|&(_, w)| w).sum::<u64>();
        for (&c, &cost) in candidates.iter().zip(&costs) {
            if cost < min_cost {
                min_cost = cost;
                best = Some(c);
            }
        }
        let first = *candidates.iter().min().unwrap_or(&0);
        Ok(match best {
            Some(c) => (c, min_cost),
            None => (first, costs[candidates.iter().position(|&c| c == first).unwrap_or(0)]),
        })
    }

    fn costs_for(&self, positions: &[u32], keys: &[(usize, u64)], candidates: &[usize]) -> Vec<u64> {
        // local numbering over every cut the keys or candidates mention
        let mut local = vec![usize::MAX; self.cuts.len()];
        let mut relevant = Vec::new();
        let mention = |c: usize, local: &mut Vec<usize>, relevant: &mut Vec<usize>| {
            if local[c] == usize::MAX {
                local[c] = relevant.len();
                relevant.push(c);
            }
        };
        for &(k, _) in keys {
            for g in self.keys[k].groups() {
                for &c in g {
                    mention(c, &mut local, &mut relevant);
                }
            }
        }
        for &c in candidates {
            mention(c, &mut local, &mut relevant);
        }
        let r = relevant.len();
        let mut count = vec![0u64; r];
        let mut co = vec![0u64; r * r];
        let mut row = Vec::new();
        for &p in positions {
            row.clear();
            row.extend(self.truths(p).iter().map(|&c| local[c as usize]).filter(|&l| l != usize::MAX));
            for &a in &row {
                count[a] += 1;
                for &b in &row {
                    co[a * r + b] += 1;
                }
            }
        }
        let size = positions.len() as u64;
        candidates
            .iter()
            .map(|&cand| {
                let p = local[cand];
                let left_size = count[p];
                let right_size = size - left_size;
                let co_p = &co[p * r..(p + 1) * r];
                keys.iter()
                    .map(|&(k, w)| {
                        let key = &self.keys[k];
                        let left = left_size == 0 || key.admits(|c| co_p[local[c]] > 0);
                        let right = right_size == 0 || key.admits(|c| count[local[c]] > co_p[local[c]]);
                        w * (left as u64 + right as u64)
                    })
                    .sum()
            })
            .collect()
    }

    /// Builds the tree over every tuple and every workload query.
    pub fn build(&self) -> Result<QdTree> {
        struct Pending {
            id: usize,
            positions: Vec<u32>,
            keys: Vec<usize>,
        }

        let root_positions: Vec<u32> = (0..self.len as u32).collect();
        let mut nodes = vec![QdTreeNode {
            split: Vec::new(),
            children: None,
            description: self.describe(&root_positions),
            size: self.len,
            positions: None,
        }];
        let root_keys: Vec<usize> = (0..self.keys.len()).filter(|&k| self.weights[k] > 0).collect();
        let mut stack = vec![Pending {
            id: 0,
            positions: root_positions,
            keys: root_keys,
        }];

        while let Some(Pending { id, positions, keys }) = stack.pop() {
            match self.split_node(&positions, &keys) {
                None => {
                    nodes[id].positions = Some(positions);
                }
                Some((split, left, right)) => {
                    let left_desc = self.describe(&left);
                    let right_desc = self.describe(&right);
                    let admitted = |d: &SemanticDescription| -> Vec<usize> {
                        keys.iter()
                            .copied()
                            .filter(|&k| self.keys[k].admits(|c| d.state(c) != super::TriState::AllFalse))
                            .collect()
                    };
                    let left_keys = admitted(&left_desc);
                    let right_keys = admitted(&right_desc);
                    let l = nodes.len();
                    let r = l + 1;
                    nodes.push(QdTreeNode {
                        split: Vec::new(),
                        children: None,
                        description: left_desc,
                        size: left.len(),
                        positions: None,
                    });
                    nodes.push(QdTreeNode {
                        split: Vec::new(),
                        children: None,
                        description: right_desc,
                        size: right.len(),
                        positions: None,
                    });
                    nodes[id].split = split;
                    nodes[id].children = Some((l, r));
                    stack.push(Pending {
                        id: r,
                        positions: right,
                        keys: right_keys,
                    });
                    stack.push(Pending {
                        id: l,
                        positions: left,
                        keys: left_keys,
                    });
                }
            }
        }
        QdTree::from_nodes(self.cuts.clone(), nodes)
    }

    /// Chooses the split for one node, or `None` if it should be a leaf.
    /// Returns the accumulated split predicates and the left/right positions.
    fn split_node(&self, positions: &[u32], keys: &[usize]) -> Option<(Vec<usize>, Vec<u32>, Vec<u32>)> {
        let size = positions.len();
        if size <= self.config.min_size {
            return None;
        }
        let mut candidates: Vec<usize> = keys
            .iter()
            .flat_map(|&k| self.keys[k].groups().iter().flatten().copied())
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.is_empty() {
            return None;
        }

        // A candidate's cost depends only on the node, not on what was
        // already chosen, so repeated greedy picks follow ascending cost.
        let weighted: Vec<(usize, u64)> = keys.iter().map(|&k| (k, self.weights[k])).collect();
        let costs = self.costs_for(positions, &weighted, &candidates);
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by_key(|&i| (costs[i], candidates[i]));

        // tuples of this node satisfying each candidate
        let mut slot = vec![usize::MAX; self.cuts.len()];
        for (i, &c) in candidates.iter().enumerate() {
            slot[c] = i;
        }
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); candidates.len()];
        for (local, &p) in positions.iter().enumerate() {
            for &c in self.truths(p) {
                let s = slot[c as usize];
                if s != usize::MAX {
                    members[s].push(local as u32);
                }
            }
        }

        let mut in_left = vec![false; size];
        let mut left_size = 0;
        let mut split = Vec::new();
        for i in order {
            if 2 * left_size > size {
                break;
            }
            split.push(candidates[i]);
            for &l in &members[i] {
                if !std::mem::replace(&mut in_left[l as usize], true) {
                    left_size += 1;
                }
            }
        }
        if 2 * left_size <= size || left_size == size {
            return None;
        }
        let mut left = Vec::with_capacity(left_size);
        let mut right = Vec::with_capacity(size - left_size);
        for (l, &p) in positions.iter().enumerate() {
            if in_left[l] {
                left.push(p);
            } else {
                right.push(p);
            }
        }
        Some((split, left, right))
    }
}

/// Builds a balanced qd-tree over `db` for `workload`.
pub fn construct_balanced_qdtree(
    db: &VectorDatabase,
    tuple_centroids: Option<&[u32]>,
    workload: &Workload,
    config: QdTreeConfig,
) -> Result<QdTree> {
    TreeBuilder::new(db, tuple_centroids, workload, config)?.build()
}
