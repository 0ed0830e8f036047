//! Vector database rows, attribute values and the conjunctive predicate
//! language used by hybrid queries.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};

/// A single attribute value. `Null` marks an attribute that is declared but
/// has no value; it is distinct from an empty string-set and from zero.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Float(f64),
    Int(i64),
    Str(String),
    StrSet(BTreeSet<String>),
    Null,
}

impl AttributeValue {
    pub fn str_set<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AttributeValue::StrSet(items.into_iter().map(Into::into).collect())
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::Float(_) => ValueKind::Float,
            AttributeValue::Int(_) => ValueKind::Int,
            AttributeValue::Str(_) => ValueKind::Str,
            AttributeValue::StrSet(_) => ValueKind::StrSet,
            AttributeValue::Null => ValueKind::Null,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match *self {
            AttributeValue::Float(v) => Some(v),
            AttributeValue::Int(v) => Some(v as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKind {
    Float,
    Int,
    Str,
    StrSet,
    Null,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Float => "float",
            ValueKind::Int => "int",
            ValueKind::Str => "string",
            ValueKind::StrSet => "string-set",
            ValueKind::Null => "null",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Float | ValueKind::Int)
    }
}

pub type AttributeRecord = BTreeMap<String, AttributeValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tuple {
    pub id: u64,
    pub vector: Vec<f32>,
    pub attrs: AttributeRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "ip", alias = "inner_product")]
    InnerProduct,
}

impl Metric {
    /// Smaller is better for both metrics: squared L2 distance, or the
    /// negated inner product.
    #[inline]
    pub fn score(self, a: &[f32], b: &[f32]) -> f32 {
        match self {
            Metric::L2 => crate::ivf::distance::l2_sq(a, b),
            Metric::InnerProduct => -crate::ivf::distance::dot(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::InnerProduct => "ip",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Some(Metric::L2),
            "ip" | "inner_product" => Some(Metric::InnerProduct),
            _ => None,
        }
    }
}

/// The static set of tuples every index is built over.
#[derive(Debug, Clone)]
pub struct VectorDatabase {
    tuples: Vec<Tuple>,
    dim: usize,
    metric: Metric,
    schema: BTreeMap<String, ValueKind>,
}

impl VectorDatabase {
    pub fn new(dim: usize, metric: Metric, tuples: Vec<Tuple>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(tuples.len());
        let mut schema: BTreeMap<String, ValueKind> = BTreeMap::new();
        for t in &tuples {
            if t.vector.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: t.vector.len(),
                });
            }
            if !ids.insert(t.id) {
                return Err(Error::DuplicateId(t.id));
            }
            for (name, value) in &t.attrs {
                let kind = value.kind();
                match schema.get(name) {
                    None | Some(ValueKind::Null) => {
                        schema.insert(name.clone(), kind);
                    }
                    Some(&existing) if kind != ValueKind::Null && kind != existing => {
                        return Err(Error::Schema {
                            attr: name.clone(),
                            first: existing.name(),
                            second: kind.name(),
                        });
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Self {
            tuples,
            dim,
            metric,
            schema,
        })
    }

    pub fn tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub fn tuple(&self, position: usize) -> &Tuple {
        &self.tuples[position]
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Declared attributes and their value kinds.
    pub fn schema(&self) -> &BTreeMap<String, ValueKind> {
        &self.schema
    }

    /// Row-major copy of all vectors.
    pub fn flat_vectors(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.tuples.len() * self.dim);
        for t in &self.tuples {
            out.extend_from_slice(&t.vector);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "=",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            CompareOp::Lt => "lt",
            CompareOp::Le => "le",
            CompareOp::Gt => "gt",
            CompareOp::Ge => "ge",
            CompareOp::Eq => "eq",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CompareOp::Lt => ord == Ordering::Less,
            CompareOp::Le => ord != Ordering::Greater,
            CompareOp::Gt => ord == Ordering::Greater,
            CompareOp::Ge => ord != Ordering::Less,
            CompareOp::Eq => ord == Ordering::Equal,
        }
    }
}

/// A constant on the right-hand side of a predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Float(f64),
    Int(i64),
    Str(String),
}

impl Literal {
    pub fn kind(&self) -> ValueKind {
        match self {
            Literal::Float(_) => ValueKind::Float,
            Literal::Int(_) => ValueKind::Int,
            Literal::Str(_) => ValueKind::Str,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Literal::Float(v) => Some(v),
            Literal::Int(v) => Some(v as f64),
            Literal::Str(_) => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Float(v) => write!(f, "{v:?}"),
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<f64> for Literal {
    fn from(v: f64) -> Self {
        Literal::Float(v)
    }
}

impl From<i64> for Literal {
    fn from(v: i64) -> Self {
        Literal::Int(v)
    }
}

impl From<&str> for Literal {
    fn from(v: &str) -> Self {
        Literal::Str(v.to_owned())
    }
}

/// Name under which centroid predicates appear in canonical keys. The `@`
/// prefix keeps it out of the attribute namespace.
pub const CENTROID_ATTR: &str = "@centroid";

/// A unary Boolean predicate over one tuple. Serialized as
/// `{"attr": .., "op": .., "value": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PredicateRecord", try_from = "PredicateRecord")]
pub enum Predicate {
    Compare {
        attr: String,
        op: CompareOp,
        value: Literal,
    },
    In {
        attr: String,
        values: Vec<Literal>,
    },
    NotNull {
        attr: String,
    },
    /// Only produced by centroid augmentation; never part of a user query.
    CentroidIn { centroids: BTreeSet<u32> },
}

impl Predicate {
    pub fn compare(attr: impl Into<String>, op: CompareOp, value: impl Into<Literal>) -> Self {
        Predicate::Compare {
            attr: attr.into(),
            op,
            value: value.into(),
        }
    }

    /// Set membership. Literals are sorted and deduplicated by their
    /// canonical form; an empty set is rejected.
    pub fn is_in<I, L>(attr: impl Into<String>, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<Literal>,
    {
        let attr = attr.into();
        let mut values: Vec<Literal> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("IN on `{attr}` needs at least one value")));
        }
        values.sort_by_cached_key(|v| v.to_string());
        values.dedup_by(|a, b| a.to_string() == b.to_string());
        Ok(Predicate::In { attr, values })
    }

    pub fn not_null(attr: impl Into<String>) -> Self {
        Predicate::NotNull { attr: attr.into() }
    }

    pub fn centroid_in(centroids: impl IntoIterator<Item = u32>) -> Self {
        Predicate::CentroidIn {
            centroids: centroids.into_iter().collect(),
        }
    }

    /// Attribute the predicate reads, `None` for centroid predicates.
    pub fn attr(&self) -> Option<&str> {
        match self {
            Predicate::Compare { attr, .. }
            | Predicate::In { attr, .. }
            | Predicate::NotNull { attr } => Some(attr),
            Predicate::CentroidIn { .. } => None,
        }
    }

    /// Canonical serialization. Defines predicate identity and ordering.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { attr, op, value } => write!(f, "{attr} {} {value}", op.symbol()),
            Predicate::In { attr, values } => {
                write!(f, "{attr} in [")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Predicate::NotNull { attr } => write!(f, "{attr} is not null"),
            Predicate::CentroidIn { centroids } => {
                write!(f, "{CENTROID_ATTR} in [")?;
                for (i, c) in centroids.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PredicateRecord {
    attr: String,
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<serde_json::Value>,
}

fn literal_to_json(l: &Literal) -> serde_json::Value {
    match l {
        Literal::Float(v) => serde_json::Value::from(*v),
        Literal::Int(v) => serde_json::Value::from(*v),
        Literal::Str(s) => serde_json::Value::from(s.as_str()),
    }
}

fn literal_from_json(v: &serde_json::Value) -> std::result::Result<Literal, String> {
    match v {
        serde_json::Value::String(s) => Ok(Literal::Str(s.clone())),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(Literal::Int(i)),
            None => n.as_f64().map(Literal::Float).ok_or_else(|| format!("unsupported number {n}")),
        },
        other => Err(format!("unsupported literal {other}")),
    }
}

impl From<Predicate> for PredicateRecord {
    fn from(p: Predicate) -> Self {
        match p {
            Predicate::Compare { attr, op, value } => PredicateRecord {
                attr,
                op: op.code().to_owned(),
                value: Some(literal_to_json(&value)),
            },
            Predicate::In { attr, values } => PredicateRecord {
                attr,
                op: "in".into(),
                value: Some(serde_json::Value::Array(values.iter().map(literal_to_json).collect())),
            },
            Predicate::NotNull { attr } => PredicateRecord {
                attr,
                op: "notnull".into(),
                value: None,
            },
            Predicate::CentroidIn { centroids } => PredicateRecord {
                attr: CENTROID_ATTR.into(),
                op: "centroid_in".into(),
                value: Some(centroids.into_iter().collect::<Vec<u32>>().into()),
            },
        }
    }
}

impl TryFrom<PredicateRecord> for Predicate {
    type Error = String;

    fn try_from(r: PredicateRecord) -> std::result::Result<Self, String> {
        let value = || r.value.as_ref().ok_or_else(|| format!("`{}` on {} needs a value", r.op, r.attr));
        let op = match r.op.as_str() {
            "lt" => CompareOp::Lt,
            "le" => CompareOp::Le,
            "gt" => CompareOp::Gt,
            "ge" => CompareOp::Ge,
            "eq" => CompareOp::Eq,
            "in" => {
                let items = value()?.as_array().ok_or("`in` needs an array value")?;
                let lits = items.iter().map(literal_from_json).collect::<std::result::Result<Vec<_>, _>>()?;
                return Predicate::is_in(r.attr, lits).map_err(|e| e.to_string());
            }
            "notnull" => return Ok(Predicate::not_null(r.attr)),
            "centroid_in" => {
                let ids: Vec<u32> = serde_json::from_value(value()?.clone()).map_err(|e| e.to_string())?;
                return Ok(Predicate::centroid_in(ids));
            }
            other => return Err(format!("unknown predicate op `{other}`")),
        };
        Ok(Predicate::Compare {
            value: literal_from_json(value()?)?,
            attr: r.attr,
            op,
        })
    }
}

fn mismatch(attr: &str, expected: ValueKind, found: ValueKind) -> Error {
    Error::KindMismatch {
        attr: attr.to_owned(),
        expected: expected.name(),
        found: found.name(),
    }
}

/// `None` when the values are incomparable (NaN).
fn compare_scalar(attr: &str, value: &AttributeValue, lit: &Literal) -> Result<Option<Ordering>> {
    match (value, lit) {
        (AttributeValue::Int(a), Literal::Int(b)) => Ok(Some(a.cmp(b))),
        (AttributeValue::Str(a), Literal::Str(b)) => Ok(Some(a.as_str().cmp(b.as_str()))),
        (v, l) => match (v.as_f64(), l.as_f64()) {
            (Some(a), Some(b)) => Ok(a.partial_cmp(&b)),
            _ => Err(mismatch(attr, l.kind(), v.kind())),
        },
    }
}

/// Evaluates one predicate. Comparisons and membership tests on an absent or
/// null attribute are false.
pub fn eval_predicate(p: &Predicate, attrs: &AttributeRecord, centroid: Option<u32>) -> Result<bool> {
    match p {
        Predicate::Compare { attr, op, value } => match attrs.get(attr) {
            None | Some(AttributeValue::Null) => Ok(false),
            Some(v @ AttributeValue::StrSet(_)) => Err(mismatch(attr, value.kind(), v.kind())),
            Some(v) => Ok(compare_scalar(attr, v, value)?.is_some_and(|ord| op.holds(ord))),
        },
        Predicate::In { attr, values } => match attrs.get(attr) {
            None | Some(AttributeValue::Null) => Ok(false),
            Some(AttributeValue::StrSet(set)) => {
                let mut hit = false;
                for lit in values {
                    match lit {
                        Literal::Str(s) => hit |= set.contains(s),
                        other => return Err(mismatch(attr, other.kind(), ValueKind::StrSet)),
                    }
                }
                Ok(hit)
            }
            Some(v) => {
                let mut hit = false;
                for lit in values {
                    hit |= compare_scalar(attr, v, lit)? == Some(Ordering::Equal);
                }
                Ok(hit)
            }
        },
        Predicate::NotNull { attr } => Ok(!matches!(attrs.get(attr), None | Some(AttributeValue::Null))),
        Predicate::CentroidIn { centroids } => {
            let c = centroid.ok_or(Error::MissingCentroid)?;
            Ok(centroids.contains(&c))
        }
    }
}

/// A conjunction of predicates. The empty conjunction is true.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeConstraint {
    pub predicates: Vec<Predicate>,
}

impl AttributeConstraint {
    pub fn new(predicates: Vec<Predicate>) -> Self {
        Self { predicates }
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    /// Canonical identity: sorted, deduplicated predicate keys.
    pub fn key(&self) -> String {
        if self.predicates.is_empty() {
            return "true".to_owned();
        }
        let keys: BTreeSet<String> = self.predicates.iter().map(Predicate::key).collect();
        keys.into_iter().collect::<Vec<_>>().join(" and ")
    }

    /// The constraint with any centroid predicates removed.
    pub fn without_centroids(&self) -> AttributeConstraint {
        AttributeConstraint {
            predicates: self
                .predicates
                .iter()
                .filter(|p| !matches!(p, Predicate::CentroidIn { .. }))
                .cloned()
                .collect(),
        }
    }
}

pub fn eval_constraint(f: &AttributeConstraint, attrs: &AttributeRecord, centroid: Option<u32>) -> Result<bool> {
    for p in &f.predicates {
        if !eval_predicate(p, attrs, centroid)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Evaluates `f` against every tuple of `scope`; bit `i` is set iff the
/// `i`-th tuple satisfies it.
pub fn build_attribute_bitmap<'a, I>(f: &AttributeConstraint, scope: I) -> Result<Bitmap>
where
    I: IntoIterator<Item = &'a Tuple>,
    I::IntoIter: ExactSizeIterator,
{
    let scope = scope.into_iter();
    let mut bitmap = Bitmap::zeros(scope.len());
    for (i, t) in scope.enumerate() {
        if eval_constraint(f, &t.attrs, None)? {
            bitmap.set(i);
        }
    }
    Ok(bitmap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridQuery {
    pub id: u64,
    pub vector: Vec<f32>,
    pub constraint: AttributeConstraint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workload {
    pub queries: Vec<HybridQuery>,
}

impl Workload {
    pub fn new(queries: Vec<HybridQuery>) -> Self {
        Self { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Distinct constraints in canonical order, each with the indices of the
    /// queries that carry it.
    pub fn group_by_constraint(&self) -> Vec<(AttributeConstraint, Vec<usize>)> {
        let mut groups: BTreeMap<String, (AttributeConstraint, Vec<usize>)> = BTreeMap::new();
        for (i, q) in self.queries.iter().enumerate() {
            groups
                .entry(q.constraint.key())
                .or_insert_with(|| (q.constraint.clone(), Vec::new()))
                .1
                .push(i);
        }
        groups.into_values().collect()
    }
}

/// All distinct unary predicates appearing in the workload, in canonical
/// order. Centroid sets are broken into one singleton predicate per centroid.
pub fn extract_cut_predicates(workload: &Workload) -> Vec<Predicate> {
    let mut seen: BTreeMap<String, Predicate> = BTreeMap::new();
    for q in &workload.queries {
        for p in &q.constraint.predicates {
            match p {
                Predicate::CentroidIn { centroids } => {
                    for &c in centroids {
                        let single = Predicate::centroid_in([c]);
                        seen.entry(single.key()).or_insert(single);
                    }
                }
                other => {
                    seen.entry(other.key()).or_insert_with(|| other.clone());
                }
            }
        }
    }
    seen.into_values().collect()
}
