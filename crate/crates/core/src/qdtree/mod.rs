//! Workload-aware partitioning. A qd-tree splits the database with cut
//! predicates drawn from the query workload; each leaf carries a semantic
//! description that lets queries skip partitions that cannot hold answers.

mod augment;
mod build;

use std::collections::HashMap;
use std::fmt;

pub use augment::{augment, Augmentation};
pub use build::{construct_balanced_qdtree, default_min_size, QdTreeConfig, TreeBuilder};

use crate::error::{Error, Result};
use crate::model::{eval_predicate, extract_cut_predicates, AttributeRecord, HybridQuery, Predicate, Workload};

/// What a partition's tuples say about one cut predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriState {
    AllTrue,
    AllFalse,
    Mixed,
}

impl TriState {
    pub fn from_count(true_count: usize, size: usize) -> Self {
        if size == 0 {
            TriState::Mixed
        } else if true_count == 0 {
            TriState::AllFalse
        } else if true_count == size {
            TriState::AllTrue
        } else {
            TriState::Mixed
        }
    }

    pub fn symbol(self) -> char {
        match self {
            TriState::AllTrue => 'T',
            TriState::AllFalse => 'F',
            TriState::Mixed => 'M',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'T' => Some(TriState::AllTrue),
            'F' => Some(TriState::AllFalse),
            'M' => Some(TriState::Mixed),
            _ => None,
        }
    }
}

/// Per-cut-predicate tri-state summary of a partition, indexed like the
/// owning [`CutPredicateSet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticDescription {
    states: Vec<TriState>,
}

impl SemanticDescription {
    pub fn new(states: Vec<TriState>) -> Self {
        Self { states }
    }

    pub fn all_mixed(len: usize) -> Self {
        Self {
            states: vec![TriState::Mixed; len],
        }
    }

    pub fn from_counts(counts: &[usize], size: usize) -> Self {
        Self {
            states: counts.iter().map(|&c| TriState::from_count(c, size)).collect(),
        }
    }

    pub fn state(&self, cut: usize) -> TriState {
        self.states[cut]
    }

    pub fn states(&self) -> &[TriState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| TriState::from_symbol(c).ok_or_else(|| Error::Format(format!("bad tri-state symbol {c:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

impl fmt::Display for SemanticDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.states {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

/// A query reduced to what the cut predicates can say about it: a
/// conjunction of groups, each satisfied if any member cut predicate might
/// hold. Plain predicates form singleton groups; a centroid set forms one
/// group of centroid singletons.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoutingKey {
    groups: Vec<Vec<usize>>,
}

impl RoutingKey {
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// True unless some group has every member ruled out by `possible`.
    #[inline]
    pub fn admits(&self, mut possible: impl FnMut(usize) -> bool) -> bool {
        self.groups.iter().all(|g| g.iter().any(|&c| possible(c)))
    }
}

/// Deduplicated cut predicates in canonical order.
#[derive(Debug, Clone, Default)]
pub struct CutPredicateSet {
    predicates: Vec<Predicate>,
    by_key: HashMap<String, usize>,
    by_centroid: HashMap<u32, usize>,
}

impl CutPredicateSet {
    pub fn from_workload(workload: &Workload) -> Self {
        Self::from_sorted(extract_cut_predicates(workload))
    }

    /// Canonicalizes an arbitrary predicate list (sort + dedup by key).
    pub fn from_predicates(predicates: Vec<Predicate>) -> Self {
        let mut keyed: Vec<(String, Predicate)> = predicates.into_iter().map(|p| (p.key(), p)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        Self::from_sorted(keyed.into_iter().map(|(_, p)| p).collect())
    }

    fn from_sorted(predicates: Vec<Predicate>) -> Self {
        let mut by_key = HashMap::with_capacity(predicates.len());
        let mut by_centroid = HashMap::new();
        for (i, p) in predicates.iter().enumerate() {
            by_key.insert(p.key(), i);
            if let Predicate::CentroidIn { centroids } = p {
                if centroids.len() == 1 {
                    by_centroid.insert(*centroids.iter().next().unwrap_or(&0), i);
                }
            }
        }
        Self {
            predicates,
            by_key,
            by_centroid,
        }
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn get(&self, i: usize) -> &Predicate {
        &self.predicates[i]
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn position(&self, p: &Predicate) -> Option<usize> {
        self.by_key.get(&p.key()).copied()
    }

    pub fn centroid_position(&self, c: u32) -> Option<usize> {
        self.by_centroid.get(&c).copied()
    }

    /// Predicates outside the cut set cannot prune and are dropped, as is a
    /// centroid set naming any centroid without a cut predicate.
    pub fn routing_key(&self, query: &HybridQuery) -> RoutingKey {
        let mut groups = Vec::new();
        for p in &query.constraint.predicates {
            match p {
                Predicate::CentroidIn { centroids } => {
                    let members: Option<Vec<usize>> =
                        centroids.iter().map(|&c| self.centroid_position(c)).collect();
                    if let Some(mut m) = members {
                        m.sort_unstable();
                        groups.push(m);
                    }
                }
                other => {
                    if let Some(i) = self.position(other) {
                        groups.push(vec![i]);
                    }
                }
            }
        }
        groups.sort();
        groups.dedup();
        RoutingKey { groups }
    }

    /// Evaluates every cut predicate on one tuple.
    pub fn evaluate(&self, attrs: &AttributeRecord, centroid: Option<u32>) -> Result<Vec<bool>> {
        self.predicates.iter().map(|p| eval_predicate(p, attrs, centroid)).collect()
    }
}

/// Whether a partition described by `description` may hold tuples
/// satisfying `query`. Only an `AllFalse` state can rule a partition out, so
/// a partition containing any satisfying tuple always subsumes the query.
pub fn subsumes(description: &SemanticDescription, cuts: &CutPredicateSet, query: &HybridQuery) -> bool {
    cuts.routing_key(query)
        .admits(|c| description.state(c) != TriState::AllFalse)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QdTreeNode {
    /// Cut predicates whose disjunction sends a tuple left; empty at leaves.
    pub split: Vec<usize>,
    pub children: Option<(usize, usize)>,
    pub description: SemanticDescription,
    pub size: usize,
    /// Database positions, ascending; present only at leaves.
    pub positions: Option<Vec<u32>>,
}

impl QdTreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// One physical partition: a leaf's tuples and their description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub positions: Vec<u32>,
    pub description: SemanticDescription,
}

#[derive(Debug, Clone)]
pub struct QdTree {
    cuts: CutPredicateSet,
    nodes: Vec<QdTreeNode>,
    /// Node ids of the leaves, left to right.
    leaves: Vec<usize>,
    /// Leaf ordinal of each node id (`usize::MAX` for internal nodes).
    ordinal: Vec<usize>,
}

impl QdTree {
    /// Assembles a tree from its node arena (root at index 0), checking
    /// structural consistency.
    pub fn from_nodes(cuts: CutPredicateSet, nodes: Vec<QdTreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("qd-tree has no nodes".into()));
        }
        let mut leaves = Vec::new();
        let mut stack = vec![0usize];
        let mut visited = vec![false; nodes.len()];
        while let Some(id) = stack.pop() {
            let node = nodes
                .get(id)
                .ok_or_else(|| Error::Format(format!("qd-tree child {id} out of range")))?;
            if std::mem::replace(&mut visited[id], true) {
                return Err(Error::Format(format!("qd-tree node {id} reached twice")));
            }
            if node.description.len() != cuts.len() {
                return Err(Error::Format(format!("node {id} describes {} cuts, expected {}", node.description.len(), cuts.len())));
            }
            if node.split.iter().any(|&c| c >= cuts.len()) {
                return Err(Error::Format(format!("node {id} splits on an unknown cut")));
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    if node.positions.as_ref().map(Vec::len) != Some(node.size) {
                        return Err(Error::Format(format!("leaf {id} positions do not match its size")));
                    }
                    leaves.push(id);
                }
            }
        }
        let mut ordinal = vec![usize::MAX; nodes.len()];
        for (i, &id) in leaves.iter().enumerate() {
            ordinal[id] = i;
        }
        Ok(Self {
            cuts,
            nodes,
            leaves,
            ordinal,
        })
    }

    pub fn cuts(&self) -> &CutPredicateSet {
        &self.cuts
    }

    pub fn nodes(&self) -> &[QdTreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &QdTreeNode {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// The `i`-th leaf from the left.
    pub fn leaf(&self, i: usize) -> &QdTreeNode {
        &self.nodes[self.leaves[i]]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &QdTreeNode> {
        self.leaves.iter().map(|&id| &self.nodes[id])
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.leaves()
            .map(|leaf| Partition {
                positions: leaf.positions.clone().unwrap_or_default(),
                description: leaf.description.clone(),
            })
            .collect()
    }

    /// Leaf ordinal a tuple lands in: at each internal node it goes left iff
    /// it satisfies any of the node's split predicates.
    pub fn route_tuple(&self, attrs: &AttributeRecord, centroid: Option<u32>) -> Result<usize> {
        let mut id = 0;
        while let Some((l, r)) = self.nodes[id].children {
            let mut left = false;
            for &c in &self.nodes[id].split {
                if eval_predicate(self.cuts.get(c), attrs, centroid)? {
                    left = true;
                    break;
                }
            }
            id = if left { l } else { r };
        }
        Ok(self.ordinal[id])
    }

    /// Leaf ordinals whose description subsumes the query.
    pub fn route_query(&self, query: &HybridQuery) -> Vec<usize> {
        let key = self.cuts.routing_key(query);
        self.route_key(&key)
    }

    pub fn route_key(&self, key: &RoutingKey) -> Vec<usize> {
        self.leaves()
            .enumerate()
            .filter(|(_, leaf)| key.admits(|c| leaf.description.state(c) != TriState::AllFalse))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Tuples accessed by the workload under a partitioning: each partition's
/// size times the number of queries it subsumes.
pub fn cost(partitions: &[Partition], cuts: &CutPredicateSet, workload: &Workload) -> u64 {
    let keys: Vec<RoutingKey> = workload.queries.iter().map(|q| cuts.routing_key(q)).collect();
    partitions
        .iter()
        .map(|p| {
            let hits = keys
                .iter()
                .filter(|k| k.admits(|c| p.description.state(c) != TriState::AllFalse))
                .count();
            p.positions.len() as u64 * hits as u64
        })
        .sum()
}

/// Brute-force description of an arbitrary set of database positions.
pub fn describe(
    db: &crate::model::VectorDatabase,
    tuple_centroids: Option<&[u32]>,
    cuts: &CutPredicateSet,
    positions: &[u32],
) -> Result<SemanticDescription> {
    let mut counts = vec![0usize; cuts.len()];
    for &p in positions {
        let t = db.tuple(p as usize);
        let c = tuple_centroids.map(|tc| tc[p as usize]);
        for (i, hit) in cuts.evaluate(&t.attrs, c)?.into_iter().enumerate() {
            counts[i] += hit as usize;
        }
    }
    Ok(SemanticDescription::from_counts(&counts, positions.len()))
}
