use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use hqi::engine::{Strategy, StrategyConfig, DEFAULT_OVERFETCH};
use hqi::model::{AttributeValue, VectorDatabase};

use crate::usage;

pub const SEED_ENV: &str = "HQI_SEED";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PARTITION_COUNT: usize = 8;

/// Strategy parameters. Flag names follow the config field names; the
/// dashed spellings are accepted too.
#[derive(Args, Debug, Clone)]
pub struct StrategyParams {
    /// Seed for every randomized build step; `HQI_SEED` overrides it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Numeric attribute for range partitioning (default: first numeric
    /// attribute present on every tuple).
    #[arg(long = "partition_attr", visible_alias = "partition-attr")]
    pub partition_attr: Option<String>,
    #[arg(long = "partition_count", visible_alias = "partition-count", default_value_t = DEFAULT_PARTITION_COUNT)]
    pub partition_count: usize,
    /// Candidates fetched per requested result by post-filtering.
    #[arg(long = "overfetch_factor", visible_alias = "overfetch-factor", default_value_t = DEFAULT_OVERFETCH)]
    pub overfetch_factor: usize,
    /// Smallest qd-tree partition (default: max(256, n/1024)).
    #[arg(long = "min_size", visible_alias = "min-size")]
    pub min_size: Option<usize>,
    /// Centroids used for query routing (default: round(sqrt(n))).
    #[arg(long = "num_centroids", visible_alias = "num-centroids")]
    pub num_centroids: Option<usize>,
    /// Nearest centroids attached to each query; 0 disables centroid
    /// routing.
    #[arg(long, default_value_t = 0)]
    pub m: usize,
}

/// Reads `HQI_SEED` if set, otherwise returns `seed`.
pub fn effective_seed(seed: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

/// First attribute, in name order, that is numeric on every tuple.
pub fn default_range_attr(db: &VectorDatabase) -> Option<String> {
    db.schema()
        .iter()
        .filter(|(_, kind)| kind.is_numeric())
        .map(|(name, _)| name)
        .find(|name| {
            db.tuples().iter().all(|t| match t.attrs.get(name.as_str()) {
                Some(AttributeValue::Int(_)) => true,
                Some(AttributeValue::Float(v)) => !v.is_nan(),
                _ => false,
            })
        })
        .cloned()
}

/// Why a strategy cannot run on a dataset; reported instead of a row.
#[derive(Debug)]
pub struct NotApplicable(pub String);

impl StrategyParams {
    /// The strategy named `name` with these parameters. `Ok(Err(_))` means
    /// the strategy does not apply to `db`.
    pub fn strategy(&self, name: &str, db: &VectorDatabase) -> Result<std::result::Result<Strategy, NotApplicable>> {
        Ok(Ok(match name.to_ascii_lowercase().as_str() {
            "exhaustive" | "a" => Strategy::ExhaustiveA,
            "prefilter" | "b" => Strategy::PreFilterB,
            "range" | "c" => {
                let attr = match &self.partition_attr {
                    Some(a) => a.clone(),
                    None => match default_range_attr(db) {
                        Some(a) => a,
                        None => return Ok(Err(NotApplicable("no numeric attribute present on every tuple".into()))),
                    },
                };
                Strategy::RangeC {
                    partition_attr: attr,
                    partition_count: self.partition_count,
                }
            }
            "postfilter" | "d" => Strategy::PostFilterD {
                overfetch_factor: self.overfetch_factor,
            },
            "hqi" => Strategy::Hqi {
                min_size: self.min_size,
                num_centroids: self.num_centroids,
                m: self.m,
            },
            other => {
                return Err(usage(format!(
                    "unknown strategy `{other}` (expected exhaustive, prefilter, range, postfilter or hqi)"
                )))
            }
        }))
    }
}

/// A strategy config from a JSON file, or from the name and flags.
pub fn resolve_config(
    file: Option<&PathBuf>,
    name: &str,
    params: &StrategyParams,
    db: &VectorDatabase,
) -> Result<StrategyConfig> {
    let mut config = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<StrategyConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match params.strategy(name, db)? {
            Ok(strategy) => StrategyConfig::new(strategy, params.seed),
            Err(NotApplicable(why)) => return Err(usage(format!("strategy {name} cannot run: {why}"))),
        },
    };
    config.seed = effective_seed(config.seed)?;
    Ok(config)
}
