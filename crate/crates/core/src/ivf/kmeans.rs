//! Lloyd's k-means with k-means++ seeding, used both for IVF coarse
//! quantizers and for centroid augmentation of the qd-tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::distance::l2_sq;
use crate::error::{Error, Result};
use crate::model::Metric;

pub const DEFAULT_MAX_ITERS: usize = 25;

/// `k` centroids of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    dim: usize,
    data: Vec<f32>,
}

impl CentroidSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Format(format!(
                "centroid buffer of {} floats is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| x.is_nan()) {
            return Err(Error::Format("centroid contains NaN".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Index of the best-scoring centroid, ties toward the smaller id.
    #[inline]
    pub fn nearest(&self, v: &[f32], metric: Metric) -> u32 {
        let mut best = (f32::INFINITY, 0u32);
        for (i, c) in self.iter().enumerate() {
            let s = metric.score(v, c);
            if s < best.0 {
                best = (s, i as u32);
            }
        }
        best.1
    }

    /// The `m` best centroids, best first, ties toward the smaller id.
    pub fn nearest_m(&self, v: &[f32], m: usize, metric: Metric) -> Vec<u32> {
        let mut scored: Vec<(f32, u32)> = self
            .iter()
            .enumerate()
            .map(|(i, c)| (metric.score(v, c), i as u32))
            .collect();
        let m = m.min(scored.len());
        if m == 0 {
            return Vec::new();
        }
        let by_rank = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if m < scored.len() {
            scored.select_nth_unstable_by(m - 1, by_rank);
            scored.truncate(m);
        }
        scored.sort_unstable_by(by_rank);
        scored.into_iter().map(|(_, i)| i).collect()
    }
}

/// Per-vector list of the `m` nearest centroid ids, best first.
pub fn assign_nearest(vectors: &[f32], centroids: &CentroidSet, m: usize, metric: Metric) -> Vec<Vec<u32>> {
    vectors
        .chunks_exact(centroids.dim())
        .map(|v| {
            if m == 1 {
                vec![centroids.nearest(v, metric)]
            } else {
                centroids.nearest_m(v, m, metric)
            }
        })
        .collect()
}

/// Clusters the row-major `vectors` into `k` groups. Deterministic for a
/// fixed seed; stops when no assignment changes or after `max_iters` rounds.
pub fn kmeans(vectors: &[f32], dim: usize, k: usize, seed: u64, max_iters: usize) -> Result<CentroidSet> {
    if dim == 0 || vectors.len() % dim != 0 {
        return Err(Error::Config(format!("vector buffer is not a multiple of dim {dim}")));
    }
    let n = vectors.len() / dim;
    if n == 0 {
        return Err(Error::Config("k-means over an empty vector set".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {n}, got k = {k}")));
    }
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(vectors, dim, k, &mut rng);

    let mut assign = vec![u32::MAX; n];
    let mut counts = vec![0usize; k];
    for iter in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let v = row(i);
            let mut best = (f32::INFINITY, 0u32);
            for (c, cent) in centroids.chunks_exact(dim).enumerate() {
                let d = l2_sq(v, cent);
                if d < best.0 {
                    best = (d, c as u32);
                }
            }
            if *slot != best.1 {
                *slot = best.1;
                changed = true;
            }
        }
        if iter > 0 && !changed {
            break;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for &a in &assign {
            counts[a as usize] += 1;
        }
        reseed_empty(vectors, dim, &centroids, &mut assign, &mut counts);
        recompute_means(vectors, dim, &assign, &counts, &mut centroids);
    }
    CentroidSet::new(dim, centroids)
}

fn plus_plus_init(vectors: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = vectors.len() / dim;
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut min_d: Vec<f64> = (0..n).map(|i| l2_sq(row(i), row(first)) as f64).collect();
    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // all points coincide with a chosen centre
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = l2_sq(row(i), &c) as f64;
            if nd < *d {
                *d = nd;
            }
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Moves the farthest point of the largest cluster into each empty one.
fn reseed_empty(vectors: &[f32], dim: usize, centroids: &[f32], assign: &mut [u32], counts: &mut [usize]) {
    let k = counts.len();
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
        if counts[largest] < 2 {
            return;
        }
        let cent = &centroids[largest * dim..(largest + 1) * dim];
        let mut far = (f32::NEG_INFINITY, usize::MAX);
        for (i, &a) in assign.iter().enumerate() {
            if a as usize == largest {
                let d = l2_sq(&vectors[i * dim..(i + 1) * dim], cent);
                if d > far.0 {
                    far = (d, i);
                }
            }
        }
        assign[far.1] = empty as u32;
        counts[largest] -= 1;
        counts[empty] = 1;
    }
}

fn recompute_means(vectors: &[f32], dim: usize, assign: &[u32], counts: &[usize], centroids: &mut [f32]) {
    let k = counts.len();
    let mut sums = vec![0.0f64; k * dim];
    for (i, &a) in assign.iter().enumerate() {
        let s = &mut sums[a as usize * dim..(a as usize + 1) * dim];
        for (acc, &x) in s.iter_mut().zip(&vectors[i * dim..(i + 1) * dim]) {
            *acc += x as f64;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let inv = 1.0 / counts[c] as f64;
        for j in 0..dim {
            centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
        }
    }
}
