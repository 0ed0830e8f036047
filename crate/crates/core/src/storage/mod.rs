//! On-disk formats: binary vector files, JSON-lines attribute, workload and
//! result files, and index directories (a JSON manifest plus checksummed
//! per-partition blobs). Every file is written to a temporary sibling and
//! renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{HybridIndex, Layout, PartitionIndex, StrategyConfig};
use crate::error::{Error, Result};
use crate::ivf::{CentroidSet, IvfIndex, Neighbor, PostingList};
use crate::model::{
    AttributeConstraint, AttributeRecord, AttributeValue, HybridQuery, Metric, Predicate, Tuple, VectorDatabase,
    Workload,
};
use crate::qdtree::{Augmentation, CutPredicateSet, QdTree, QdTreeNode, SemanticDescription};

pub const VECTOR_MAGIC: &[u8; 4] = b"HQIV";
pub const VECTOR_FORMAT_VERSION: u32 = 1;
pub const INDEX_FORMAT_VERSION: u32 = 1;

pub const VECTORS_FILE: &str = "vectors.bin";
pub const ATTRS_FILE: &str = "attrs.jsonl";
pub const WORKLOAD_FILE: &str = "workload.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn metric_code(m: Metric) -> u8 {
    match m {
        Metric::L2 => 0,
        Metric::InnerProduct => 1,
    }
}

fn push_f32s(buf: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Little-endian cursor over a byte buffer with descriptive errors.
struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'a str) -> Self {
        Self { bytes, at: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("{} is truncated", self.what)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| Error::Format(format!("{} is truncated", self.what)))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Format(format!("{} has {} trailing bytes", self.what, self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

/// Encodes row-major vectors as a vectors file.
pub fn encode_vectors(metric: Metric, dim: usize, vectors: &[f32]) -> Result<Vec<u8>> {
    if dim == 0 || vectors.len() % dim != 0 {
        return Err(Error::Config(format!("{} floats do not form rows of dim {dim}", vectors.len())));
    }
    let n = u32::try_from(vectors.len() / dim).map_err(|_| Error::Config("too many vectors".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::Config("dimension too large".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + vectors.len() * 4);
    buf.extend_from_slice(VECTOR_MAGIC);
    buf.extend_from_slice(&VECTOR_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&dim32.to_le_bytes());
    buf.push(metric_code(metric));
    push_f32s(&mut buf, vectors);
    Ok(buf)
}

/// Row-major vectors decoded from a vectors file.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub metric: Metric,
    pub dim: usize,
    pub vectors: Vec<f32>,
}

impl VectorFile {
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn decode_vectors(bytes: &[u8]) -> Result<VectorFile> {
    let mut r = Reader::new(bytes, "vectors file");
    if r.take(4)? != VECTOR_MAGIC {
        return Err(Error::Format("vectors file has a bad magic number".into()));
    }
    let version = r.u32()?;
    if version != VECTOR_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported vectors file version {version}")));
    }
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::Format("vectors file declares dimension 0".into()));
    }
    let metric = match r.take(1)?[0] {
        0 => Metric::L2,
        1 => Metric::InnerProduct,
        other => return Err(Error::Format(format!("unknown metric code {other}"))),
    };
    let vectors = r.f32s(n * dim)?;
    r.finish()?;
    Ok(VectorFile { metric, dim, vectors })
}

fn value_to_json(v: &AttributeValue) -> Value {
    match v {
        AttributeValue::Float(x) => Value::from(*x),
        AttributeValue::Int(x) => Value::from(*x),
        AttributeValue::Str(s) => Value::from(s.as_str()),
        AttributeValue::StrSet(set) => Value::Array(set.iter().map(|s| Value::from(s.as_str())).collect()),
        AttributeValue::Null => Value::Null,
    }
}

fn value_from_json(attr: &str, v: &Value) -> Result<AttributeValue> {
    Ok(match v {
        Value::Null => AttributeValue::Null,
        Value::String(s) => AttributeValue::Str(s.clone()),
        Value::Number(n) => match n.as_i64() {
            Some(i) => AttributeValue::Int(i),
            None => AttributeValue::Float(
                n.as_f64()
                    .ok_or_else(|| Error::Format(format!("attribute {attr}: unsupported number {n}")))?,
            ),
        },
        Value::Array(items) => AttributeValue::StrSet(
            items
                .iter()
                .map(|i| {
                    i.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| Error::Format(format!("attribute {attr}: string-set holds a non-string")))
                })
                .collect::<Result<_>>()?,
        ),
        other => return Err(Error::Format(format!("attribute {attr}: unsupported value {other}"))),
    })
}

#[derive(Serialize, Deserialize)]
struct AttrLine {
    id: u64,
    attrs: BTreeMap<String, Value>,
}

fn encode_attrs(tuples: &[Tuple]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for t in tuples {
        let mut attrs = BTreeMap::new();
        for (name, v) in &t.attrs {
            if let AttributeValue::Float(x) = v {
                if !x.is_finite() {
                    return Err(Error::Config(format!("tuple {}: attribute {name} is not finite", t.id)));
                }
            }
            attrs.insert(name.clone(), value_to_json(v));
        }
        serde_json::to_writer(&mut buf, &AttrLine { id: t.id, attrs })?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Non-blank lines of a JSON-lines file with 1-based line numbers.
fn json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes `db` into `dir` as a vectors file and an attributes file.
pub fn save_dataset(dir: &Path, db: &VectorDatabase) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(VECTORS_FILE), &encode_vectors(db.metric(), db.dim(), &db.flat_vectors())?)?;
    write_atomic(&dir.join(ATTRS_FILE), &encode_attrs(db.tuples())?)
}

/// Reads a dataset written by [`save_dataset`]. Row `i` of the vectors file
/// belongs to line `i` of the attributes file.
pub fn load_dataset(dir: &Path) -> Result<VectorDatabase> {
    let vf = decode_vectors(&fs::read(dir.join(VECTORS_FILE))?)?;
    let lines: Vec<AttrLine> = json_lines(&dir.join(ATTRS_FILE))?;
    if lines.len() != vf.len() {
        return Err(Error::Format(format!(
            "{} attribute records for {} vectors",
            lines.len(),
            vf.len()
        )));
    }
    let tuples = lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let attrs = line
                .attrs
                .iter()
                .map(|(k, v)| Ok((k.clone(), value_from_json(k, v)?)))
                .collect::<Result<AttributeRecord>>()?;
            Ok(Tuple {
                id: line.id,
                vector: vf.row(i).to_vec(),
                attrs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VectorDatabase::new(vf.dim, vf.metric, tuples)
}

#[derive(Serialize, Deserialize)]
struct QueryLine {
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<Vec<f32>>,
    /// Id of a database tuple whose vector is the query vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector_ref: Option<u64>,
    #[serde(default)]
    filter: Vec<Predicate>,
}

pub fn save_workload(path: &Path, workload: &Workload) -> Result<()> {
    let mut buf = Vec::new();
    for q in &workload.queries {
        let line = QueryLine {
            id: q.id,
            vector: Some(q.vector.clone()),
            vector_ref: None,
            filter: q.constraint.predicates.clone(),
        };
        serde_json::to_writer(&mut buf, &line)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Reads a workload file. Queries given by `vector_ref` need `db` to
/// resolve the referenced tuple.
pub fn load_workload(path: &Path, db: Option<&VectorDatabase>) -> Result<Workload> {
    let lines: Vec<QueryLine> = json_lines(path)?;
    let by_id: Option<std::collections::HashMap<u64, usize>> =
        if lines.iter().any(|l| l.vector.is_none()) {
            db.map(|db| db.tuples().iter().enumerate().map(|(p, t)| (t.id, p)).collect())
        } else {
            None
        };
    let queries = lines
        .into_iter()
        .map(|line| {
            let vector = match (line.vector, line.vector_ref) {
                (Some(v), None) => v,
                (None, Some(r)) => {
                    let (db, map) = db.zip(by_id.as_ref()).ok_or_else(|| {
                        Error::Config(format!("query {} uses vector_ref but no dataset was given", line.id))
                    })?;
                    let pos = map
                        .get(&r)
                        .ok_or_else(|| Error::Format(format!("query {}: vector_ref {r} is not a tuple id", line.id)))?;
                    db.tuple(*pos).vector.clone()
                }
                _ => {
                    return Err(Error::Format(format!(
                        "query {} needs exactly one of vector and vector_ref",
                        line.id
                    )))
                }
            };
            Ok(HybridQuery {
                id: line.id,
                vector,
                constraint: AttributeConstraint::new(line.filter),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Workload::new(queries))
}

#[derive(Serialize, Deserialize)]
struct ResultLine {
    id: u64,
    neighbors: Vec<Neighbor>,
}

/// Writes per-query results (also the ground-truth format) in workload
/// order.
pub fn save_results(path: &Path, workload: &Workload, results: &[Vec<Neighbor>]) -> Result<()> {
    if workload.len() != results.len() {
        return Err(Error::Config(format!(
            "{} result lists for {} queries",
            results.len(),
            workload.len()
        )));
    }
    let mut buf = Vec::new();
    for (q, res) in workload.queries.iter().zip(results) {
        serde_json::to_writer(
            &mut buf,
            &ResultLine {
                id: q.id,
                neighbors: res.clone(),
            },
        )?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Reads a results file and lines it up with `workload` by query id.
pub fn load_results(path: &Path, workload: &Workload) -> Result<Vec<Vec<Neighbor>>> {
    let lines: Vec<ResultLine> = json_lines(path)?;
    let mut by_id: std::collections::HashMap<u64, Vec<Neighbor>> = std::collections::HashMap::new();
    for line in lines {
        if by_id.insert(line.id, line.neighbors).is_some() {
            return Err(Error::Format(format!("query {} appears twice in {}", line.id, path.display())));
        }
    }
    workload
        .queries
        .iter()
        .map(|q| {
            by_id
                .get(&q.id)
                .cloned()
                .ok_or_else(|| Error::Format(format!("no results for query {} in {}", q.id, path.display())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRef {
    pub file: String,
    pub bytes: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub size: usize,
    pub nlist: usize,
    /// Database positions of the partition's tuples, ascending.
    pub positions: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
    pub centroids: BlobRef,
    pub postings: BlobRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeManifest {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub split: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<(usize, usize)>,
    /// One of `T`, `F`, `M` per cut predicate.
    pub description: String,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationManifest {
    pub m: usize,
    pub num_centroids: usize,
    pub centroids: BlobRef,
    /// Nearest centroid per database position, as little-endian u32.
    pub tuple_centroids: BlobRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutManifest {
    Exhaustive,
    Single,
    Range {
        attr: String,
        edges: Vec<f64>,
    },
    QdTree {
        cuts: Vec<Predicate>,
        nodes: Vec<NodeManifest>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        augmentation: Option<AugmentationManifest>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub metric: Metric,
    pub dim: usize,
    pub num_tuples: usize,
    pub seed: u64,
    pub config: StrategyConfig,
    pub layout: LayoutManifest,
    pub partitions: Vec<PartitionManifest>,
}

impl IndexManifest {
    /// Every blob the manifest references.
    pub fn blobs(&self) -> Vec<&BlobRef> {
        let mut out: Vec<&BlobRef> = self.partitions.iter().flat_map(|p| [&p.centroids, &p.postings]).collect();
        if let LayoutManifest::QdTree {
            augmentation: Some(a), ..
        } = &self.layout
        {
            out.push(&a.centroids);
            out.push(&a.tuple_centroids);
        }
        out
    }
}

fn write_blob(dir: &Path, file: String, bytes: &[u8]) -> Result<BlobRef> {
    write_atomic(&dir.join(&file), bytes)?;
    Ok(BlobRef {
        file,
        bytes: bytes.len() as u64,
        crc32: crc32fast::hash(bytes),
    })
}

fn read_blob(dir: &Path, blob: &BlobRef) -> Result<Vec<u8>> {
    if blob.file.contains(['/', '\\']) || blob.file.starts_with('.') {
        return Err(Error::Format(format!("blob name {:?} escapes the index directory", blob.file)));
    }
    let bytes = fs::read(dir.join(&blob.file))?;
    if bytes.len() as u64 != blob.bytes || crc32fast::hash(&bytes) != blob.crc32 {
        return Err(Error::Checksum(blob.file.clone()));
    }
    Ok(bytes)
}

fn encode_postings(ivf: &IvfIndex) -> Vec<u8> {
    let mut buf = Vec::new();
    for list in ivf.lists() {
        buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
        for (p, v) in list.positions().iter().zip(list.vectors().chunks_exact(ivf.dim())) {
            buf.extend_from_slice(&p.to_le_bytes());
            push_f32s(&mut buf, v);
        }
    }
    buf
}

fn decode_postings(bytes: &[u8], nlist: usize, dim: usize, what: &str) -> Result<Vec<PostingList>> {
    let mut r = Reader::new(bytes, what);
    let mut lists = Vec::with_capacity(nlist);
    for _ in 0..nlist {
        let count = r.u32()? as usize;
        let mut positions = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count * dim);
        for _ in 0..count {
            positions.push(r.u32()?);
            vectors.extend(r.f32s(dim)?);
        }
        lists.push(PostingList::new(positions, vectors, dim)?);
    }
    r.finish()?;
    Ok(lists)
}

fn encode_f32s(xs: &[f32]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    push_f32s(&mut buf, xs);
    buf
}

fn decode_f32s(bytes: &[u8], what: &str) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("{what} is not a whole number of floats")));
    }
    let mut r = Reader::new(bytes, what);
    r.f32s(bytes.len() / 4)
}

/// Writes `index` into `dir`: one centroid blob and one postings blob per
/// partition, then the manifest. Returns the manifest written.
pub fn save_index(dir: &Path, index: &HybridIndex) -> Result<IndexManifest> {
    fs::create_dir_all(dir)?;
    let mut partitions = Vec::with_capacity(index.partitions().len());
    for (i, part) in index.partitions().iter().enumerate() {
        let centroids = write_blob(dir, format!("part-{i:05}.centroids"), &encode_f32s(part.ivf.centroids().as_flat()))?;
        let postings = write_blob(dir, format!("part-{i:05}.postings"), &encode_postings(&part.ivf))?;
        partitions.push(PartitionManifest {
            size: part.positions.len(),
            nlist: part.ivf.nlist(),
            positions: part.positions.clone(),
            bounds: part.bounds,
            centroids,
            postings,
        });
    }
    let layout = match index.layout() {
        Layout::Exhaustive => LayoutManifest::Exhaustive,
        Layout::Single => LayoutManifest::Single,
        Layout::Range { attr, edges } => LayoutManifest::Range {
            attr: attr.clone(),
            edges: edges.clone(),
        },
        Layout::QdTree { tree, augmentation } => {
            let augmentation = match augmentation {
                None => None,
                Some(aug) => {
                    let tc: Vec<u8> = aug.tuple_centroids.iter().flat_map(|c| c.to_le_bytes()).collect();
                    Some(AugmentationManifest {
                        m: aug.m,
                        num_centroids: aug.centroids.len(),
                        centroids: write_blob(dir, "augment.centroids".into(), &encode_f32s(aug.centroids.as_flat()))?,
                        tuple_centroids: write_blob(dir, "augment.assignments".into(), &tc)?,
                    })
                }
            };
            LayoutManifest::QdTree {
                cuts: tree.cuts().predicates().to_vec(),
                nodes: tree
                    .nodes()
                    .iter()
                    .map(|n| NodeManifest {
                        split: n.split.clone(),
                        children: n.children,
                        description: n.description.to_string(),
                        size: n.size,
                        positions: n.positions.clone(),
                    })
                    .collect(),
                augmentation,
            }
        }
    };
    let manifest = IndexManifest {
        format_version: INDEX_FORMAT_VERSION,
        metric: index.metric(),
        dim: index.dim(),
        num_tuples: index.len(),
        seed: index.config().seed,
        config: index.config().clone(),
        layout,
        partitions,
    };
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<IndexManifest> {
    let manifest: IndexManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != INDEX_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported index format version {}",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Loads an index saved by [`save_index`] over the database it was built
/// on, verifying every blob checksum.
pub fn load_index(dir: &Path, db: &VectorDatabase) -> Result<HybridIndex> {
    let manifest = read_manifest(dir)?;
    if manifest.dim != db.dim() || manifest.num_tuples != db.len() || manifest.metric != db.metric() {
        return Err(Error::Config(format!(
            "index was built over {} tuples of dim {} ({}), dataset has {} of dim {} ({})",
            manifest.num_tuples,
            manifest.dim,
            manifest.metric.name(),
            db.len(),
            db.dim(),
            db.metric().name()
        )));
    }
    let dim = manifest.dim;
    let mut partitions = Vec::with_capacity(manifest.partitions.len());
    for pm in &manifest.partitions {
        let centroids = CentroidSet::new(dim, decode_f32s(&read_blob(dir, &pm.centroids)?, &pm.centroids.file)?)?;
        if centroids.len() != pm.nlist {
            return Err(Error::Format(format!("{} holds {} centroids, expected {}", pm.centroids.file, centroids.len(), pm.nlist)));
        }
        let lists = decode_postings(&read_blob(dir, &pm.postings)?, pm.nlist, dim, &pm.postings.file)?;
        let ids = pm
            .positions
            .iter()
            .map(|&p| {
                db.tuples()
                    .get(p as usize)
                    .map(|t| t.id)
                    .ok_or_else(|| Error::Format(format!("partition position {p} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ivf = IvfIndex::from_parts(manifest.metric, centroids, lists, ids)?;
        partitions.push(PartitionIndex {
            positions: pm.positions.clone(),
            ivf,
            bounds: pm.bounds,
        });
    }
    let layout = match &manifest.layout {
        LayoutManifest::Exhaustive => Layout::Exhaustive,
        LayoutManifest::Single => Layout::Single,
        LayoutManifest::Range { attr, edges } => Layout::Range {
            attr: attr.clone(),
            edges: edges.clone(),
        },
        LayoutManifest::QdTree {
            cuts,
            nodes,
            augmentation,
        } => {
            let cut_set = CutPredicateSet::from_predicates(cuts.clone());
            if cut_set.predicates() != cuts.as_slice() {
                return Err(Error::Format("cut predicates are not in canonical order".into()));
            }
            let nodes = nodes
                .iter()
                .map(|n| {
                    Ok(QdTreeNode {
                        split: n.split.clone(),
                        children: n.children,
                        description: SemanticDescription::parse(&n.description)?,
                        size: n.size,
                        positions: n.positions.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let tree = QdTree::from_nodes(cut_set, nodes)?;
            let augmentation = match augmentation {
                None => None,
                Some(am) => {
                    let centroids =
                        CentroidSet::new(dim, decode_f32s(&read_blob(dir, &am.centroids)?, &am.centroids.file)?)?;
                    let raw = read_blob(dir, &am.tuple_centroids)?;
                    if raw.len() != db.len() * 4 {
                        return Err(Error::Format("centroid assignments do not cover the database".into()));
                    }
                    let tuple_centroids: Vec<u32> = raw
                        .chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect();
                    if centroids.len() != am.num_centroids || tuple_centroids.iter().any(|&c| c as usize >= centroids.len()) {
                        return Err(Error::Format("centroid assignments name unknown centroids".into()));
                    }
                    Some(Augmentation {
                        centroids,
                        tuple_centroids,
                        m: am.m,
                        metric: manifest.metric,
                    })
                }
            };
            Layout::QdTree { tree, augmentation }
        }
    };
    HybridIndex::from_parts(manifest.config.clone(), manifest.metric, dim, layout, partitions, db)
}
