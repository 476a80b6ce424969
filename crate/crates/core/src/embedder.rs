//! Embedding providers and vector math.
//!
//! Two providers ship with the engine: [`TestEmbedder`], a deterministic
//! hashed bag-of-stems encoder that needs no model files, and
//! [`PrecomputedEmbedder`], which serves vectors produced offline by a real
//! model, keyed by the BLAKE2b digest of the text.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::digest::content_digest;
use crate::error::{Error, Result};
use crate::textindex::tokenize_stem;

pub const DEFAULT_DIMENSION: usize = 384;
pub const MIN_TEST_DIMENSION: usize = 8;

/// Coordinates touched by each term in the test embedder.
const TERM_BUNDLE: usize = 8;

/// A unit-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `values` to unit length. Fails on an all-zero or
    /// non-finite input.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self(
            values
                .into_iter()
                .map(|v| (f64::from(v) / norm) as f32)
                .collect(),
        ))
    }

    /// The `i`-th standard basis vector.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut values = vec![0.0; dim];
        values[i] = 1.0;
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
/// Every distance in the crate goes through this function, which keeps
/// scores bit-identical between the index scan and the pipeline.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut sum = (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]);
    for (x, y) in tail_a.iter().zip(tail_b) {
        sum += x * y;
    }
    sum
}

/// `1 - dot(a, b)` clamped to `[0, 2]`, for unit vectors of equal length.
#[inline]
pub fn unit_distance(a: &[f32], b: &[f32]) -> f64 {
    (1.0 - f64::from(dot(a, b))).clamp(0.0, 2.0)
}

pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(unit_distance(a.as_slice(), b.as_slice()))
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn model_id(&self) -> &str;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>>;

    fn embed_one(&self, text: &str) -> Result<Embedding> {
        Ok(self.embed(&[text])?.remove(0))
    }
}

/// Deterministic hashed bag-of-stems embedder.
///
/// Each Porter-stemmed term is hashed to a bundle of signed coordinates;
/// a text's vector is the L2-normalized sum over its terms. Texts sharing
/// vocabulary land close together, disjoint vocabularies are nearly
/// orthogonal. Text with no terms maps to `e1`.
#[derive(Debug, Clone)]
pub struct TestEmbedder {
    dim: usize,
    model_id: String,
}

impl TestEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < MIN_TEST_DIMENSION {
            return Err(Error::InvalidArgument(format!(
                "test embedder needs dim >= {MIN_TEST_DIMENSION}, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            model_id: format!("test-hash-v1/{dim}"),
        })
    }

    fn embed_text(&self, text: &str) -> Embedding {
        let mut values = vec![0.0f32; self.dim];
        for term in tokenize_stem(text) {
            let mut state = fnv1a(term.as_bytes());
            for _ in 0..TERM_BUNDLE {
                let x = splitmix64(&mut state);
                let index = ((x >> 1) % self.dim as u64) as usize;
                values[index] += if x & 1 == 0 { 1.0 } else { -1.0 };
            }
        }
        Embedding::normalized(values).unwrap_or_else(|_| Embedding::basis(self.dim, 0))
    }
}

impl Default for TestEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION).expect("default dimension is valid")
    }
}

impl EmbeddingProvider for TestEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// Convenience wrapper matching the library-level operation.
pub fn test_embed(texts: &[&str], dim: usize) -> Result<Vec<Embedding>> {
    TestEmbedder::new(dim)?.embed(texts)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Serves vectors from a file of `digest<TAB>v1,v2,...` lines.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    dim: usize,
    model_id: String,
    vectors: HashMap<String, Embedding>,
}

impl PrecomputedEmbedder {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&Embedding> {
        self.vectors.get(&content_digest(text))
    }
}

impl EmbeddingProvider for PrecomputedEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|text| {
                let digest = content_digest(text);
                self.vectors
                    .get(&digest)
                    .cloned()
                    .ok_or(Error::UnknownText(digest))
            })
            .collect()
    }
}

pub fn load_precomputed(path: &Path) -> Result<PrecomputedEmbedder> {
    let content = fs::read_to_string(path)?;
    let mut vectors = HashMap::new();
    let mut dim = None;
    for (lineno, line) in content.lines().enumerate() {
        let location = || format!("{}:{}", path.display(), lineno + 1);
        if line.trim().is_empty() {
            continue;
        }
        let (digest, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(location(), "expected <digest><TAB><floats>"))?;
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::parse(location(), "digest must be 64 hex characters"));
        }
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::parse(location(), e.to_string()))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    location(),
                    format!("dimension {} differs from earlier entries ({d})", values.len()),
                ));
            }
            Some(_) => {}
        }
        let embedding =
            Embedding::normalized(values).map_err(|e| Error::parse(location(), e.to_string()))?;
        vectors.insert(digest.to_ascii_lowercase(), embedding);
    }
    let dim = dim.ok_or_else(|| Error::parse(path.display().to_string(), "no vectors"))?;
    Ok(PrecomputedEmbedder {
        dim,
        model_id: format!("precomputed:{}", path.display()),
        vectors,
    })
}

/// Writes vectors for `texts` in the precomputed format.
pub fn write_precomputed<'a>(
    path: &Path,
    entries: impl IntoIterator<Item = (&'a str, &'a Embedding)>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (text, embedding) in entries {
        write!(out, "{}\t", content_digest(text))?;
        for (i, v) in embedding.as_slice().iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Provider selector as written on the command line or in store config:
/// `test`, `test:<dim>` or `precomputed:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Test { dim: usize },
    Precomputed(PathBuf),
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Test {
            dim: DEFAULT_DIMENSION,
        }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbedderSpec::Test { dim } => Box::new(TestEmbedder::new(*dim)?),
            EmbedderSpec::Precomputed(path) => Box::new(load_precomputed(path)?),
        })
    }
}

impl FromStr for EmbedderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "test" {
            return Ok(EmbedderSpec::default());
        }
        if let Some(dim) = s.strip_prefix("test:") {
            let dim = dim
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad dimension in {s:?}")))?;
            return Ok(EmbedderSpec::Test { dim });
        }
        if let Some(path) = s.strip_prefix("precomputed:") {
            if path.is_empty() {
                return Err(Error::InvalidArgument("precomputed: needs a path".into()));
            }
            return Ok(EmbedderSpec::Precomputed(PathBuf::from(path)));
        }
        Err(Error::InvalidArgument(format!(
            "unknown embedder {s:?} (expected test, test:<dim> or precomputed:<path>)"
        )))
    }
}

impl fmt::Display for EmbedderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedderSpec::Test { dim } if *dim == DEFAULT_DIMENSION => f.write_str("test"),
            EmbedderSpec::Test { dim } => write!(f, "test:{dim}"),
            EmbedderSpec::Precomputed(path) => write!(f, "precomputed:{}", path.display()),
        }
    }
}
