use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// One search hit. Lower scores are better; equal scores order by id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    pub score: f32,
}

impl Neighbor {
    pub fn cmp_rank(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked(Neighbor);

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp_rank(&other.0)
    }
}

/// Bounded heap keeping the `k` best neighbors, worst on top.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Ranked>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1024) + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Score a candidate must beat to enter a full heap.
    #[inline]
    pub fn worst(&self) -> Option<Neighbor> {
        self.heap.peek().map(|r| r.0)
    }

    #[inline]
    pub fn push(&mut self, id: u64, score: f32) {
        if self.k == 0 {
            return;
        }
        let cand = Ranked(Neighbor { id, score });
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if cand < *top {
                *top = cand;
            }
        }
    }

    pub fn extend(&mut self, hits: impl IntoIterator<Item = Neighbor>) {
        for n in hits {
            self.push(n.id, n.score);
        }
    }

    /// Best first.
    pub fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }
}

/// One bounded heap per query of a batch.
#[derive(Debug, Clone)]
pub struct ResultsHeap {
    heaps: Vec<TopK>,
}

impl ResultsHeap {
    pub fn new(num_results: usize, max_size: usize) -> Self {
        Self {
            heaps: (0..num_results).map(|_| TopK::new(max_size)).collect(),
        }
    }

    #[inline]
    pub fn push(&mut self, query: usize, id: u64, score: f32) {
        self.heaps[query].push(id, score);
    }

    pub fn get_mut(&mut self, query: usize) -> &mut TopK {
        &mut self.heaps[query]
    }

    pub fn len(&self) -> usize {
        self.heaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heaps.is_empty()
    }

    pub fn into_sorted(self) -> Vec<Vec<Neighbor>> {
        self.heaps.into_iter().map(TopK::into_sorted).collect()
    }
}
