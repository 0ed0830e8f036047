//! Synthetic datasets and workloads: uniform or clustered vectors with two
//! uniform float attributes and nested-threshold range filters, plus a
//! knowledge-graph style generator with skewed entity types and query
//! templates.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeConstraint, AttributeRecord, AttributeValue, CompareOp, HybridQuery, Metric, Predicate, Tuple,
    VectorDatabase, Workload,
};

/// Filters per attribute: thresholds `2^0 .. 2^-9`.
pub const FILTER_LEVELS: u32 = 10;
pub const FILTER_ATTRS: [&str; 2] = ["A", "B"];

const VECTOR_STREAM: u64 = 1;
const ATTR_STREAM: u64 = 2;
const QUERY_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorDistribution {
    /// I.i.d. uniform in `[0, 1)^d`.
    Uniform,
    /// Equal-weight Gaussian components with means uniform in
    /// `[0, scale)^d` and isotropic standard deviation `spread`.
    Mixture { components: usize, scale: f32, spread: f32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    pub seed: u64,
    /// Query vectors to draw; the workload is every filter times every
    /// query vector.
    pub n_q: usize,
    #[serde(default = "default_distribution")]
    pub vectors: VectorDistribution,
}

fn default_metric() -> Metric {
    Metric::L2
}

fn default_distribution() -> VectorDistribution {
    VectorDistribution::Uniform
}

impl SyntheticSpec {
    pub fn uniform(n: usize, d: usize, n_q: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            metric: Metric::L2,
            seed,
            n_q,
            vectors: VectorDistribution::Uniform,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.n_q == 0 {
            return Err(Error::Config("n, d and n_q must all be positive".into()));
        }
        if let VectorDistribution::Mixture { components, spread, .. } = self.vectors {
            if components == 0 || !(spread >= 0.0) {
                return Err(Error::Config("mixture needs at least one component and a non-negative spread".into()));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Component means of a mixture spec, in component order.
    pub fn mixture_means(&self) -> Vec<Vec<f32>> {
        match self.vectors {
            VectorDistribution::Uniform => Vec::new(),
            VectorDistribution::Mixture { components, scale, .. } => {
                let mut rng = self.rng(0);
                (0..components)
                    .map(|_| (0..self.d).map(|_| rng.random::<f32>() * scale).collect())
                    .collect()
            }
        }
    }

    fn draw_vectors(&self, count: usize, stream: u64) -> Result<Vec<Vec<f32>>> {
        let mut rng = self.rng(stream);
        match self.vectors {
            VectorDistribution::Uniform => Ok((0..count)
                .map(|_| (0..self.d).map(|_| rng.random::<f32>()).collect())
                .collect()),
            VectorDistribution::Mixture { components, spread, .. } => {
                let means = self.mixture_means();
                let noise = Normal::new(0.0f32, spread).map_err(|e| Error::Config(e.to_string()))?;
                Ok((0..count)
                    .map(|_| {
                        let m = &means[rng.random_range(0..components)];
                        m.iter().map(|&c| c + noise.sample(&mut rng)).collect()
                    })
                    .collect())
            }
        }
    }
}

/// Tuples with ids `0..n`, vectors from the spec's distribution and
/// attributes `A`, `B` uniform in `[0, 1)`.
pub fn gen_dataset(spec: &SyntheticSpec) -> Result<VectorDatabase> {
    spec.validate()?;
    let vectors = spec.draw_vectors(spec.n, VECTOR_STREAM)?;
    let mut rng = spec.rng(ATTR_STREAM);
    let tuples = vectors
        .into_iter()
        .enumerate()
        .map(|(i, vector)| {
            let attrs: AttributeRecord = FILTER_ATTRS
                .iter()
                .map(|&a| (a.to_owned(), AttributeValue::Float(rng.random::<f64>())))
                .collect();
            Tuple {
                id: i as u64,
                vector,
                attrs,
            }
        })
        .collect();
    VectorDatabase::new(spec.d, spec.metric, tuples)
}

pub fn gen_query_vectors(spec: &SyntheticSpec) -> Result<Vec<Vec<f32>>> {
    spec.validate()?;
    spec.draw_vectors(spec.n_q, QUERY_STREAM)
}

/// `A < 2^-i` for every level, then the same for `B`.
pub fn gen_filters() -> Vec<Predicate> {
    FILTER_ATTRS
        .iter()
        .flat_map(|&a| (0..FILTER_LEVELS).map(move |i| Predicate::compare(a, CompareOp::Lt, 0.5f64.powi(i as i32))))
        .collect()
}

/// Every filter paired with every query vector, filter-major.
pub fn gen_workload(filters: &[Predicate], query_vectors: &[Vec<f32>]) -> Workload {
    let mut queries = Vec::with_capacity(filters.len() * query_vectors.len());
    for f in filters {
        for v in query_vectors {
            queries.push(HybridQuery {
                id: queries.len() as u64,
                vector: v.clone(),
                constraint: AttributeConstraint::new(vec![f.clone()]),
            });
        }
    }
    Workload::new(queries)
}

/// Dataset and the full filter-by-vector workload for `spec`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(VectorDatabase, Workload)> {
    let db = gen_dataset(spec)?;
    let workload = gen_workload(&gen_filters(), &gen_query_vectors(spec)?);
    Ok((db, workload))
}

/// A query shape and how often it occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub weight: f64,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgSpec {
    pub n: usize,
    pub d: usize,
    pub n_queries: usize,
    pub seed: u64,
    #[serde(default = "default_kg_templates")]
    pub templates: Vec<Template>,
}

/// Entity types and their frequencies, most common first.
pub const KG_TYPES: [(&str, f64); 8] = [
    ("person", 0.30),
    ("song", 0.20),
    ("film", 0.14),
    ("place", 0.10),
    ("artist", 0.09),
    ("album", 0.07),
    ("book", 0.06),
    ("team", 0.04),
];

/// Ten templates whose four most frequent cover 80% of queries.
pub fn default_kg_templates() -> Vec<Template> {
    let types = |ts: &[&str]| Predicate::is_in("type", ts.iter().copied()).unwrap_or_else(|_| Predicate::not_null("type"));
    let t = |name: &str, weight: f64, predicates: Vec<Predicate>| Template {
        name: name.to_owned(),
        weight,
        predicates,
    };
    vec![
        t("T1", 0.35, vec![types(&["person"])]),
        t("T2", 0.20, vec![types(&["song", "album"])]),
        t("T3", 0.15, vec![types(&["artist"]), Predicate::not_null("birth_year")]),
        t("T4", 0.10, vec![types(&["film"]), Predicate::compare("popularity", CompareOp::Gt, 0.5)]),
        t("T5", 0.05, vec![types(&["place"])]),
        t("T6", 0.04, vec![types(&["book", "film"])]),
        t("T7", 0.04, vec![Predicate::not_null("birth_year")]),
        t("T8", 0.03, vec![types(&["team"]), Predicate::compare("popularity", CompareOp::Gt, 0.9)]),
        t("T9", 0.02, vec![types(&["person"]), Predicate::compare("popularity", CompareOp::Gt, 0.99)]),
        t("T10", 0.02, vec![types(&["album"]), Predicate::compare("popularity", CompareOp::Lt, 0.01)]),
    ]
}

impl KgSpec {
    pub fn new(n: usize, d: usize, n_queries: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            n_queries,
            seed,
            templates: default_kg_templates(),
        }
    }
}

/// Entities of skewed types whose vectors cluster by type, and a workload
/// drawing templates by weight. People and artists carry a `birth_year`;
/// other types leave it null.
pub fn gen_kg_style_workload(spec: &KgSpec) -> Result<(VectorDatabase, Workload)> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::Config("n and d must be positive".into()));
    }
    if spec.templates.is_empty() && spec.n_queries > 0 {
        return Err(Error::Config("a workload needs at least one template".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f32>> = KG_TYPES
        .iter()
        .map(|_| (0..spec.d).map(|_| rng.random::<f32>() * 4.0).collect())
        .collect();
    let type_pick = WeightedIndex::new(KG_TYPES.iter().map(|&(_, w)| w)).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0f32, 0.5).map_err(|e| Error::Config(e.to_string()))?;

    let tuples: Vec<Tuple> = (0..spec.n)
        .map(|i| {
            let ty = type_pick.sample(&mut rng);
            let vector = centers[ty].iter().map(|&c| c + noise.sample(&mut rng)).collect();
            let name = KG_TYPES[ty].0;
            let birth_year = if matches!(name, "person" | "artist") {
                AttributeValue::Int(rng.random_range(1900..2010))
            } else {
                AttributeValue::Null
            };
            let attrs: AttributeRecord = [
                ("type".to_owned(), AttributeValue::Str(name.to_owned())),
                ("popularity".to_owned(), AttributeValue::Float(rng.random())),
                ("birth_year".to_owned(), birth_year),
            ]
            .into_iter()
            .collect();
            Tuple {
                id: i as u64,
                vector,
                attrs,
            }
        })
        .collect();

    let mut queries = Vec::with_capacity(spec.n_queries);
    if spec.n_queries > 0 {
        let template_pick = WeightedIndex::new(spec.templates.iter().map(|t| t.weight))
            .map_err(|e| Error::Config(format!("template weights: {e}")))?;
        for i in 0..spec.n_queries {
            let t = &spec.templates[template_pick.sample(&mut rng)];
            let anchor = &tuples[rng.random_range(0..tuples.len())].vector;
            let vector = anchor.iter().map(|&c| c + noise.sample(&mut rng)).collect();
            queries.push(HybridQuery {
                id: i as u64,
                vector,
                constraint: AttributeConstraint::new(t.predicates.clone()),
            });
        }
    }
    Ok((VectorDatabase::new(spec.d, Metric::L2, tuples)?, Workload::new(queries)))
}
