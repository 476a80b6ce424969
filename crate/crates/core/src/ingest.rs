//! Idempotent single-document ingestion shared by the CLI and the C ABI.

use std::path::Path;

use serde::Serialize;

use crate::chunker::{code_chunk, semantic_chunk, Language, DEFAULT_MAX_TOKENS, DEFAULT_OVERLAP};
use crate::digest::content_digest;
use crate::embedder::EmbeddingProvider;
use crate::error::Result;
use crate::store::{Completeness, DocId, NewChunk, NewDocument, SourceType, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestStatus {
    /// A complete copy with identical chunks already exists.
    Skipped,
    Ingested,
    /// A partial copy was found and replaced.
    Repaired,
}

impl IngestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            IngestStatus::Skipped => "skipped (complete)",
            IngestStatus::Ingested => "ingested",
            IngestStatus::Repaired => "repaired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkerChoice {
    Prose,
    Code(Language),
}

impl ChunkerChoice {
    /// Code chunking for recognized source extensions, prose otherwise.
    pub fn for_path(path: &Path) -> Self {
        match Language::from_path(path) {
            Language::Unknown => ChunkerChoice::Prose,
            lang => ChunkerChoice::Code(lang),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestOutcome {
    pub status: IngestStatus,
    pub doc_id: DocId,
    pub chunks: usize,
}

/// Chunks, embeds and stores `text` under `(source_uri, collection)`.
/// A complete document with the same chunk digests is left untouched.
pub fn ingest_text(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    source_uri: &str,
    collection: &str,
    text: &str,
    chunker: ChunkerChoice,
    tags: &[String],
) -> Result<IngestOutcome> {
    let spans = match chunker {
        ChunkerChoice::Prose => semantic_chunk(text, DEFAULT_MAX_TOKENS, DEFAULT_OVERLAP)?,
        ChunkerChoice::Code(lang) => code_chunk(text, lang, DEFAULT_MAX_TOKENS)?,
    };
    let completeness = store.doc_completeness(source_uri, collection)?;
    if completeness == Completeness::Complete {
        if let Some(doc) = store.document_by_source(source_uri, collection)? {
            let stored: Vec<String> = store
                .document_chunks(doc.doc_id)?
                .into_iter()
                .map(|c| c.content_digest)
                .collect();
            let fresh: Vec<String> = spans.iter().map(|s| content_digest(&s.text)).collect();
            if stored == fresh {
                return Ok(IngestOutcome {
                    status: IngestStatus::Skipped,
                    doc_id: doc.doc_id,
                    chunks: stored.len(),
                });
            }
        }
    }
    let texts: Vec<&str> = spans.iter().map(|s| s.text.as_str()).collect();
    let vectors = embedder.embed(&texts)?;
    let chunks: Vec<NewChunk> = spans.into_iter().map(NewChunk::from).collect();
    let meta = NewDocument {
        tags: tags.to_vec(),
        source_type: match chunker {
            ChunkerChoice::Prose => SourceType::Text,
            ChunkerChoice::Code(_) => SourceType::Code,
        },
        ..NewDocument::new(source_uri, collection)
    };
    let doc_id = store.add_document(&meta, &chunks, &vectors)?;
    Ok(IngestOutcome {
        status: if completeness == Completeness::Partial {
            IngestStatus::Repaired
        } else {
            IngestStatus::Ingested
        },
        doc_id,
        chunks: chunks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::TestEmbedder;

    #[test]
    fn second_ingest_of_same_text_is_skipped() {
        let dir = tempfile::TempDir::new().unwrap();
        let store = Store::open(dir.path().join("s.db"), true).unwrap();
        let emb = TestEmbedder::new(16).unwrap();
        let first = ingest_text(&store, &emb, "a.md", "default", "some prose here", ChunkerChoice::Prose, &[]).unwrap();
        assert_eq!(first.status, IngestStatus::Ingested);
        let again = ingest_text(&store, &emb, "a.md", "default", "some prose here", ChunkerChoice::Prose, &[]).unwrap();
        assert_eq!(again.status, IngestStatus::Skipped);
        assert_eq!(again.doc_id, first.doc_id);
        let changed = ingest_text(&store, &emb, "a.md", "default", "different prose", ChunkerChoice::Prose, &[]).unwrap();
        assert_eq!(changed.status, IngestStatus::Ingested);
        assert_eq!(store.documents().unwrap().len(), 1);
    }

    #[test]
    fn partial_copy_is_repaired() {
        let dir = tempfile::TempDir::new().unwrap();
        let store = Store::open(dir.path().join("s.db"), true).unwrap();
        let emb = TestEmbedder::new(16).unwrap();
        let out = ingest_text(&store, &emb, "a.md", "default", "one two three", ChunkerChoice::Prose, &[]).unwrap();
        store
            .conn()
            .execute("DELETE FROM vectors WHERE chunk_id IN (SELECT chunk_id FROM chunks WHERE doc_id = ?1)", [out.doc_id])
            .unwrap();
        let again = ingest_text(&store, &emb, "a.md", "default", "one two three", ChunkerChoice::Prose, &[]).unwrap();
        assert_eq!(again.status, IngestStatus::Repaired);
        assert_eq!(store.doc_completeness("a.md", "default").unwrap(), Completeness::Complete);
    }
}
