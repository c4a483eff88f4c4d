//! City embedding dumps and cosine-complement semantic distance.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::PairMatrix;

/// Sidecar describing how a dump was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub model_id: String,
    pub dimension: usize,
    pub count: usize,
    #[serde(default)]
    pub pooling: String,
    #[serde(default)]
    pub layer: String,
    #[serde(default)]
    pub extraction_version: String,
}

impl EmbeddingManifest {
    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let m: EmbeddingManifest =
            serde_json::from_reader(r).map_err(|e| Error::format(Some(e.line() as u64), e.to_string()))?;
        if m.dimension == 0 {
            return Err(Error::format(None, "manifest dimension must be positive"));
        }
        Ok(m)
    }

    /// Whether two dumps were extracted with different settings.
    pub fn differs_in_extraction(&self, other: &EmbeddingManifest) -> bool {
        (&self.pooling, &self.layer, &self.extraction_version)
            != (&other.pooling, &other.layer, &other.extraction_version)
    }
}

#[derive(Deserialize, Serialize)]
struct RecordLine<V> {
    key: u64,
    vector: V,
}

/// Validated embeddings, one per geoname id, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    manifest: EmbeddingManifest,
    keys: Vec<u64>,
    index: HashMap<u64, usize>,
    vectors: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
}

impl EmbeddingSet {
    /// Builds a set from in-memory records; every vector is validated.
    pub fn from_records<I>(manifest: EmbeddingManifest, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, Vec<f64>)>,
    {
        let mut set = EmbeddingSet {
            manifest,
            keys: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            sq_norms: Vec::new(),
        };
        for (key, vector) in records {
            set.push(key, vector)?;
        }
        Ok(set)
    }

    fn push(&mut self, key: u64, vector: Vec<f64>) -> Result<()> {
        let d = self.manifest.dimension;
        let fail = |message: String| Error::Embedding { key, message };
        if vector.len() != d {
            return Err(fail(format!(
                "has {} components, manifest dimension is {d}",
                vector.len()
            )));
        }
        if let Some(i) = vector.iter().position(|x| !x.is_finite()) {
            return Err(fail(format!("component {i} is not finite")));
        }
        let sq_norm: f64 = vector.iter().map(|x| x * x).sum();
        if sq_norm == 0.0 {
            return Err(fail("zero vector".into()));
        }
        if !sq_norm.is_finite() {
            return Err(fail("squared norm overflows".into()));
        }
        if self.index.insert(key, self.keys.len()).is_some() {
            return Err(fail("duplicate key".into()));
        }
        self.keys.push(key);
        self.vectors.push(vector);
        self.sq_norms.push(sq_norm);
        Ok(())
    }

    pub fn manifest(&self) -> &EmbeddingManifest {
        &self.manifest
    }

    pub fn model_id(&self) -> &str {
        &self.manifest.model_id
    }

    pub fn dimension(&self) -> usize {
        self.manifest.dimension
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn contains(&self, key: u64) -> bool {
        self.index.contains_key(&key)
    }

    pub fn get(&self, key: u64) -> Option<&[f64]> {
        self.index.get(&key).map(|&i| self.vectors[i].as_slice())
    }

    /// Copy with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let records = self
            .keys
            .iter()
            .zip(&self.vectors)
            .map(|(&k, v)| (k, v.iter().map(|x| x * factor).collect()));
        EmbeddingSet::from_records(self.manifest.clone(), records)
    }

    /// Writes the set as JSON Lines. Floats use the shortest representation
    /// that parses back to the same double.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (&key, vector) in self.keys.iter().zip(&self.vectors) {
            serde_json::to_writer(&mut w, &RecordLine { key, vector })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads a manifest and its JSON Lines dump.
pub fn load_embeddings<M: Read, D: BufRead>(manifest: M, data: D) -> Result<EmbeddingSet> {
    let manifest = EmbeddingManifest::from_reader(manifest)?;
    let declared = manifest.count;
    let mut set = EmbeddingSet::from_records(manifest, std::iter::empty())?;
    for (i, line) in data.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i as u64 + 1;
        let rec: RecordLine<Vec<f64>> =
            serde_json::from_str(&line).map_err(|e| Error::format(Some(lineno), e.to_string()))?;
        set.push(rec.key, rec.vector)?;
    }
    if set.len() != declared {
        return Err(Error::format(
            None,
            format!("manifest declares {declared} records, dump has {}", set.len()),
        ));
    }
    Ok(set)
}

/// `1 - cos(a, b)`, computed in double precision and clamped to `[0, 2]`.
pub fn semantic_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("zero-norm vector"));
    }
    Ok(cosine_complement(a, b, na, nb))
}

/// Takes squared norms; a single square root of their product keeps
/// parallel and opposite vectors at exactly 0 and 2.
#[inline]
fn cosine_complement(a: &[f64], b: &[f64], sq_na: f64, sq_nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (sq_na * sq_nb).sqrt()).clamp(0.0, 2.0)
}

pub fn semantic_distance_matrix(s: &EmbeddingSet, keys: &[u64]) -> Result<PairMatrix> {
    semantic_distance_matrix_with(s, keys, Execution::default())
}

pub fn semantic_distance_matrix_with(s: &EmbeddingSet, keys: &[u64], exec: Execution) -> Result<PairMatrix> {
    let rows: Vec<usize> = keys
        .iter()
        .map(|&k| s.index.get(&k).copied().ok_or(Error::MissingKey(k)))
        .collect::<Result<_>>()?;
    PairMatrix::from_fn(keys.to_vec(), exec, |i, j| {
        let (a, b) = (rows[i], rows[j]);
        cosine_complement(&s.vectors[a], &s.vectors[b], s.sq_norms[a], s.sq_norms[b])
    })
}
