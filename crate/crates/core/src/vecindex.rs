//! Exact nearest-neighbour search over unit vectors.

use std::cmp::Ordering;

use crate::embedder::{unit_distance, Embedding};
use crate::error::{Error, Result};
use crate::store::ChunkId;

/// Vectors stored row-major in one contiguous buffer, ordered by chunk id.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<ChunkId>,
    data: Vec<f32>,
}

fn by_distance_then_id(a: &(f64, ChunkId), b: &(f64, ChunkId)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            ids: Vec::with_capacity(n),
            data: Vec::with_capacity(n * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends an entry. Ids must arrive in strictly ascending order.
    pub fn push(&mut self, chunk_id: ChunkId, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if let Some(&last) = self.ids.last() {
            if chunk_id <= last {
                return Err(Error::InvalidArgument(format!(
                    "chunk ids must be ascending ({chunk_id} after {last})"
                )));
            }
        }
        self.ids.push(chunk_id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn vector(&self, chunk_id: ChunkId) -> Option<&[f32]> {
        let row = self.ids.binary_search(&chunk_id).ok()?;
        Some(&self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn ids(&self) -> &[ChunkId] {
        &self.ids
    }

    /// Exact top-`n` by cosine distance, ascending, ties by ascending id.
    pub fn knn(&self, query: &Embedding, n: usize) -> Result<Vec<(ChunkId, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let q = query.as_slice();
        let mut scored: Vec<(f64, ChunkId)> = self
            .data
            .chunks_exact(self.dim)
            .zip(&self.ids)
            .map(|(row, &id)| (unit_distance(q, row), id))
            .collect();
        if n < scored.len() {
            if n == 0 {
                return Ok(Vec::new());
            }
            scored.select_nth_unstable_by(n - 1, by_distance_then_id);
            scored.truncate(n);
        }
        scored.sort_unstable_by(by_distance_then_id);
        Ok(scored.into_iter().map(|(d, id)| (id, d)).collect())
    }
}
