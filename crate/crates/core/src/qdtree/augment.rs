use crate::error::Result;
use crate::ivf::{assign_nearest, kmeans, CentroidSet, DEFAULT_MAX_ITERS};
use crate::model::{HybridQuery, Metric, Predicate, VectorDatabase, Workload};

/// Centroid assignments that let vector similarity take part in cuts: each
/// tuple carries its nearest centroid, each query its `m` nearest.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub centroids: CentroidSet,
    pub tuple_centroids: Vec<u32>,
    pub m: usize,
    pub metric: Metric,
}

impl Augmentation {
    /// Assigns every tuple of `db` to its nearest centroid.
    pub fn from_centroids(db: &VectorDatabase, centroids: CentroidSet, m: usize) -> Self {
        let tuple_centroids = db.tuples().iter().map(|t| centroids.nearest(&t.vector, db.metric())).collect();
        let m = m.min(centroids.len());
        Self {
            centroids,
            tuple_centroids,
            m,
            metric: db.metric(),
        }
    }

    pub fn query_centroids(&self, vector: &[f32]) -> Vec<u32> {
        if self.m == 0 {
            return Vec::new();
        }
        assign_nearest(vector, &self.centroids, self.m, self.metric).remove(0)
    }

    /// The query with its constraint extended by `CentroidIn(q.c)`; a no-op
    /// when `m` is zero.
    pub fn augment_query(&self, query: &HybridQuery) -> HybridQuery {
        let mut q = query.clone();
        if self.m > 0 {
            q.constraint.predicates.push(Predicate::centroid_in(self.query_centroids(&query.vector)));
        }
        q
    }

    pub fn augment_workload(&self, workload: &Workload) -> Workload {
        Workload::new(workload.queries.iter().map(|q| self.augment_query(q)).collect())
    }
}

/// Clusters the database vectors into `num_centroids` groups, assigns each
/// tuple its nearest centroid and extends each query with its `m` nearest.
pub fn augment(
    db: &VectorDatabase,
    workload: &Workload,
    num_centroids: usize,
    m: usize,
    seed: u64,
) -> Result<(Augmentation, Workload)> {
    let centroids = kmeans(&db.flat_vectors(), db.dim(), num_centroids, seed, DEFAULT_MAX_ITERS)?;
    let aug = Augmentation::from_centroids(db, centroids, m);
    let augmented = aug.augment_workload(workload);
    Ok((aug, augmented))
}
