//! Single-file transactional persistence.
//!
//! Everything lives in one SQLite database in WAL mode: documents, chunks,
//! vectors, the inverted-index postings, search telemetry and the schema
//! metadata. Query-side structures (the flat vector index, the in-memory
//! inverted index and its IDF vocabulary) are built lazily from the tables
//! into an [`IndexSnapshot`] and dropped by every write that touches
//! documents or chunks.

mod integrity;
pub mod schema;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use rusqlite::{params, params_from_iter, Connection, ErrorCode, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};

pub use integrity::{Invariant, InvariantResult, IntegrityReport, Offender, RepairReport};
pub use schema::{KNOWN_SCHEMA_VERSIONS, SCHEMA_VERSION};

use crate::chunker::SpanKind;
use crate::digest::content_digest;
use crate::embedder::{Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::limits::LimitsConfig;
use crate::observability::Observability;
use crate::retrieval::RelevanceTier;
use crate::textindex::{term_frequencies, InvertedIndex, Posting};
use crate::vecindex::FlatIndex;

pub type ChunkId = i64;
pub type DocId = i64;

/// Ids per lookup statement in [`Store::get_chunks`].
pub const CHUNK_LOOKUP_BATCH: usize = 900;
pub const EVENT_LOG_CAPACITY: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Text,
    Code,
    Imported,
}

impl SourceType {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceType::Text => "text",
            SourceType::Code => "code",
            SourceType::Imported => "imported",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(SourceType::Text),
            "code" => Ok(SourceType::Code),
            "imported" => Ok(SourceType::Imported),
            other => Err(Error::Corrupt(format!("unknown source_type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewDocument {
    pub source_uri: String,
    pub collection: String,
    pub tags: Vec<String>,
    pub source_type: SourceType,
}

impl NewDocument {
    pub fn new(source_uri: impl Into<String>, collection: impl Into<String>) -> Self {
        Self {
            source_uri: source_uri.into(),
            collection: collection.into(),
            tags: Vec::new(),
            source_type: SourceType::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewChunk {
    pub text: String,
    pub token_count: usize,
    pub kind: SpanKind,
}

impl NewChunk {
    pub fn prose(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            token_count: crate::chunker::token_count(&text).max(1),
            text,
            kind: SpanKind::Prose,
        }
    }
}

impl From<crate::chunker::ChunkSpan> for NewChunk {
    fn from(span: crate::chunker::ChunkSpan) -> Self {
        Self {
            text: span.text,
            token_count: span.token_count.max(1),
            kind: span.kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentRecord {
    pub doc_id: DocId,
    pub source_uri: String,
    pub collection: String,
    pub tags: Vec<String>,
    pub source_type: SourceType,
    pub chunk_count: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkRecord {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub seq: usize,
    pub text: String,
    pub token_count: usize,
    pub kind: SpanKind,
    pub access_count: u64,
    pub last_accessed_at: Option<DateTime<Utc>>,
    pub content_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    Missing,
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEvent {
    pub query: String,
    pub best_distance: f64,
    pub tier: RelevanceTier,
    pub result_count: usize,
    pub dismissed: bool,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredEvent {
    pub event_id: i64,
    #[serde(flatten)]
    pub event: SearchEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkLookup {
    pub records: Vec<ChunkRecord>,
    pub missing: Vec<ChunkId>,
}

/// Where a write barrier fired inside [`Store::add_document`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarrierPoint {
    pub chunks_written: usize,
    pub total_chunks: usize,
}

/// Test hook called inside ingest transactions; returning an error (or
/// killing the process) aborts the transaction.
pub type WriteBarrier = Box<dyn Fn(BarrierPoint) -> Result<()> + Send + Sync>;

#[derive(Debug, Clone, Default)]
pub struct OpenOptions {
    pub create_if_missing: bool,
    pub dimension: Option<usize>,
    pub embedder: Option<String>,
    pub limits: LimitsConfig,
}

impl OpenOptions {
    pub fn create() -> Self {
        Self {
            create_if_missing: true,
            ..Self::default()
        }
    }
}

/// Query-side view of the store, rebuilt after writes.
#[derive(Debug)]
pub struct IndexSnapshot {
    pub vectors: FlatIndex,
    pub text: InvertedIndex,
    pub corpus_mean_idf: f64,
    chunk_docs: HashMap<ChunkId, (DocId, usize)>,
    doc_created: HashMap<DocId, DateTime<Utc>>,
}

impl IndexSnapshot {
    pub fn doc_of(&self, chunk_id: ChunkId) -> Option<DocId> {
        self.chunk_docs.get(&chunk_id).map(|&(d, _)| d)
    }

    pub fn seq_of(&self, chunk_id: ChunkId) -> Option<usize> {
        self.chunk_docs.get(&chunk_id).map(|&(_, s)| s)
    }

    pub fn doc_created_at(&self, doc_id: DocId) -> Option<DateTime<Utc>> {
        self.doc_created.get(&doc_id).copied()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunk_docs.len()
    }

    pub fn chunks_of_doc(&self, doc_id: DocId) -> Vec<ChunkId> {
        let mut ids: Vec<ChunkId> = self
            .chunk_docs
            .iter()
            .filter(|(_, &(d, _))| d == doc_id)
            .map(|(&c, _)| c)
            .collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StoreStats {
    pub schema_version: i64,
    pub documents: usize,
    pub chunks: usize,
    pub vectors: usize,
    pub dimension: Option<usize>,
    pub embedder: Option<String>,
    pub collections: Vec<(String, usize)>,
    pub chunk_kinds: Vec<(String, usize)>,
    pub search_events: usize,
    /// Per tier: (events, dismissed).
    pub tier_events: Vec<(String, usize, usize)>,
}

pub struct Store {
    conn: Mutex<Connection>,
    path: PathBuf,
    schema_version: i64,
    config: RwLock<serde_json::Map<String, serde_json::Value>>,
    warnings: Vec<String>,
    snapshot: RwLock<Option<Arc<IndexSnapshot>>>,
    obs: Arc<Observability>,
    barrier: Mutex<Option<WriteBarrier>>,
    limits: LimitsConfig,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("path", &self.path)
            .field("schema_version", &self.schema_version)
            .finish_non_exhaustive()
    }
}

pub(crate) fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

pub(crate) fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Corrupt(format!("bad timestamp {s:?}: {e}")))
}

pub(crate) fn encode_vector(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn decode_vector(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

fn map_open_error(e: rusqlite::Error) -> Error {
    match e.sqlite_error_code() {
        Some(ErrorCode::NotADatabase) | Some(ErrorCode::DatabaseCorrupt) => {
            Error::Corrupt(e.to_string())
        }
        _ => Error::Storage(e),
    }
}

const CHUNK_COLUMNS: &str = "chunk_id, doc_id, seq, text, token_count, kind, access_count, last_accessed_at, content_digest";

fn chunk_from_row(row: &rusqlite::Row<'_>) -> rusqlite::Result<(ChunkRecord, String, Option<String>)> {
    let kind: String = row.get(5)?;
    let last: Option<String> = row.get(7)?;
    Ok((
        ChunkRecord {
            chunk_id: row.get(0)?,
            doc_id: row.get(1)?,
            seq: row.get::<_, i64>(2)? as usize,
            text: row.get(3)?,
            token_count: row.get::<_, i64>(4)? as usize,
            kind: SpanKind::Prose,
            access_count: row.get::<_, i64>(6)? as u64,
            last_accessed_at: None,
            content_digest: row.get(8)?,
        },
        kind,
        last,
    ))
}

fn finish_chunk(parts: (ChunkRecord, String, Option<String>)) -> Result<ChunkRecord> {
    let (mut record, kind, last) = parts;
    record.kind = SpanKind::parse(&kind)
        .ok_or_else(|| Error::Corrupt(format!("unknown chunk kind {kind:?}")))?;
    record.last_accessed_at = last.as_deref().map(parse_ts).transpose()?;
    Ok(record)
}

impl Store {
    /// Opens (or creates) a store.
    pub fn open(path: impl AsRef<Path>, create_if_missing: bool) -> Result<Self> {
        Self::open_with(
            path,
            OpenOptions {
                create_if_missing,
                ..OpenOptions::default()
            },
        )
    }

    pub fn open_with(path: impl AsRef<Path>, options: OpenOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let exists = path.exists();
        if !exists && !options.create_if_missing {
            return Err(Error::StoreMissing(path));
        }
        let conn = Connection::open(&path).map_err(map_open_error)?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        conn.pragma_update(None, "journal_mode", "WAL")
            .map_err(map_open_error)?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;

        let has_meta: bool = conn
            .query_row(
                "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table' AND name = 'store_meta'",
                [],
                |r| r.get::<_, i64>(0),
            )
            .map_err(map_open_error)?
            > 0;

        if !has_meta {
            let empty: i64 = conn.query_row("SELECT COUNT(*) FROM sqlite_master", [], |r| r.get(0))?;
            if empty > 0 {
                return Err(Error::Corrupt(format!(
                    "{} is a database but not a store",
                    path.display()
                )));
            }
            let mut config = serde_json::Map::new();
            if let Some(dim) = options.dimension {
                config.insert("dimension".into(), dim.into());
            }
            if let Some(embedder) = &options.embedder {
                config.insert("embedder".into(), embedder.clone().into());
            }
            config.insert(
                "created_by".into(),
                concat!("vstash-core ", env!("CARGO_PKG_VERSION")).into(),
            );
            conn.execute_batch("BEGIN IMMEDIATE;")?;
            conn.execute_batch(schema::CREATE_TABLES)?;
            conn.execute(
                "INSERT INTO store_meta (key, value) VALUES ('schema_version', ?1), ('config', ?2)",
                params![SCHEMA_VERSION.to_string(), serde_json::Value::Object(config).to_string()],
            )?;
            conn.execute_batch("COMMIT;")?;
        }

        let version: String = conn
            .query_row(
                "SELECT value FROM store_meta WHERE key = 'schema_version'",
                [],
                |r| r.get(0),
            )
            .optional()?
            .ok_or_else(|| Error::Corrupt("store_meta has no schema_version".into()))?;
        let schema_version: i64 = version
            .trim()
            .parse()
            .map_err(|_| Error::Corrupt(format!("bad schema_version {version:?}")))?;
        if !KNOWN_SCHEMA_VERSIONS.contains(&schema_version) {
            return Err(Error::SchemaVersion {
                found: schema_version,
                known: KNOWN_SCHEMA_VERSIONS.to_vec(),
            });
        }

        let raw_config: Option<String> = conn
            .query_row("SELECT value FROM store_meta WHERE key = 'config'", [], |r| r.get(0))
            .optional()?;
        let config = match raw_config {
            None => serde_json::Map::new(),
            Some(raw) => match serde_json::from_str::<serde_json::Value>(&raw) {
                Ok(serde_json::Value::Object(map)) => map,
                _ => return Err(Error::Corrupt("store config is not a JSON object".into())),
            },
        };
        let mut warnings = Vec::new();
        for key in config.keys() {
            if !schema::KNOWN_CONFIG_KEYS.contains(&key.as_str()) {
                let msg = format!("unknown store config key {key:?} (preserved, ignored)");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }

        Ok(Self {
            conn: Mutex::new(conn),
            path,
            schema_version,
            config: RwLock::new(config),
            warnings,
            snapshot: RwLock::new(None),
            obs: Arc::new(Observability::default()),
            barrier: Mutex::new(None),
            limits: options.limits,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn schema_version(&self) -> i64 {
        self.schema_version
    }

    /// Warnings raised while opening (unknown config keys).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn limits(&self) -> &LimitsConfig {
        &self.limits
    }

    pub fn observability(&self) -> &Arc<Observability> {
        &self.obs
    }

    pub fn dimension(&self) -> Option<usize> {
        self.config
            .read()
            .expect("config lock")
            .get("dimension")
            .and_then(|v| v.as_u64())
            .map(|d| d as usize)
    }

    /// Embedder selector recorded in the store config, if any.
    pub fn embedder_spec(&self) -> Option<String> {
        self.config
            .read()
            .expect("config lock")
            .get("embedder")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
    }

    pub fn config_value(&self, key: &str) -> Option<serde_json::Value> {
        self.config.read().expect("config lock").get(key).cloned()
    }

    fn write_config(&self, tx: &Transaction<'_>, update: impl FnOnce(&mut serde_json::Map<String, serde_json::Value>)) -> Result<()> {
        let mut config = self.config.write().expect("config lock");
        update(&mut config);
        tx.execute(
            "INSERT INTO store_meta (key, value) VALUES ('config', ?1)
             ON CONFLICT(key) DO UPDATE SET value = excluded.value",
            params![serde_json::Value::Object(config.clone()).to_string()],
        )?;
        Ok(())
    }

    pub fn set_embedder_spec(&self, spec: &str) -> Result<()> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        self.write_config(&tx, |c| {
            c.insert("embedder".into(), spec.into());
        })?;
        tx.commit()?;
        Ok(())
    }

    pub fn set_write_barrier(&self, barrier: Option<WriteBarrier>) {
        *self.barrier.lock().expect("barrier lock") = barrier;
    }

    pub(crate) fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().expect("connection lock poisoned")
    }

    fn invalidate(&self) {
        *self.snapshot.write().expect("snapshot lock") = None;
    }

    /// Folds WAL content back into the main file.
    pub fn checkpoint(&self) -> Result<()> {
        self.conn()
            .query_row("PRAGMA wal_checkpoint(TRUNCATE)", [], |_| Ok(()))?;
        Ok(())
    }

    /// Adds one document atomically, replacing any earlier copy with the
    /// same `(source_uri, collection)`.
    pub fn add_document(&self, meta: &NewDocument, chunks: &[NewChunk], vectors: &[Embedding]) -> Result<DocId> {
        Ok(self.add_documents_batch(&[(meta.clone(), chunks.to_vec(), vectors.to_vec())])?[0])
    }

    /// Adds several documents in a single transaction.
    pub fn add_documents_batch(&self, docs: &[(NewDocument, Vec<NewChunk>, Vec<Embedding>)]) -> Result<Vec<DocId>> {
        let store_dim = self.dimension();
        let mut dim = store_dim;
        for (meta, chunks, vectors) in docs {
            if chunks.is_empty() {
                return Err(Error::EmptyDocument);
            }
            if chunks.len() != vectors.len() {
                return Err(Error::ArityMismatch {
                    chunks: chunks.len(),
                    vectors: vectors.len(),
                });
            }
            let bytes: usize = chunks.iter().map(|c| c.text.len()).sum();
            self.limits.check_document(chunks.len(), bytes)?;
            self.limits.check_tags(&meta.tags)?;
            for v in vectors {
                let expected = *dim.get_or_insert(v.dim());
                if v.dim() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        actual: v.dim(),
                    });
                }
            }
        }

        let barrier = self.barrier.lock().expect("barrier lock");
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(rusqlite::TransactionBehavior::Immediate)?;
        if store_dim.is_none() {
            if let Some(d) = dim {
                self.write_config(&tx, |c| {
                    c.insert("dimension".into(), d.into());
                })?;
            }
        }
        let now = ts(Utc::now());
        let mut ids = Vec::with_capacity(docs.len());
        for (meta, chunks, vectors) in docs {
            delete_documents_where(&tx, "source_uri = ?1 AND collection = ?2", params![meta.source_uri, meta.collection])?;
            tx.execute(
                "INSERT INTO documents (source_uri, collection, tags, source_type, chunk_count, created_at)
                 VALUES (?1, ?2, ?3, ?4, 0, ?5)",
                params![
                    meta.source_uri,
                    meta.collection,
                    serde_json::to_string(&meta.tags)?,
                    meta.source_type.as_str(),
                    now
                ],
            )?;
            let doc_id = tx.last_insert_rowid();
            for (seq, (chunk, vector)) in chunks.iter().zip(vectors).enumerate() {
                insert_chunk(&tx, doc_id, seq, chunk, vector)?;
                if let Some(hook) = barrier.as_ref() {
                    hook(BarrierPoint {
                        chunks_written: seq + 1,
                        total_chunks: chunks.len(),
                    })?;
                }
            }
            tx.execute(
                "UPDATE documents SET chunk_count = ?1 WHERE doc_id = ?2",
                params![chunks.len() as i64, doc_id],
            )?;
            ids.push(doc_id);
        }
        tx.commit()?;
        drop(conn);
        self.invalidate();
        self.obs.metrics.add_ingests(docs.len() as u64);
        Ok(ids)
    }

    /// Removes a document and everything derived from it.
    pub fn delete_document(&self, doc_id: DocId) -> Result<bool> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        let n = delete_documents_where(&tx, "doc_id = ?1", params![doc_id])?;
        tx.commit()?;
        drop(conn);
        self.invalidate();
        Ok(n > 0)
    }

    pub fn doc_completeness(&self, source_uri: &str, collection: &str) -> Result<Completeness> {
        let conn = self.conn();
        let docs: Vec<(DocId, i64)> = conn
            .prepare_cached("SELECT doc_id, chunk_count FROM documents WHERE source_uri = ?1 AND collection = ?2")?
            .query_map(params![source_uri, collection], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<rusqlite::Result<_>>()?;
        let (doc_id, chunk_count) = match docs.as_slice() {
            [] => return Ok(Completeness::Missing),
            [one] => *one,
            _ => return Ok(Completeness::Partial),
        };
        let (rows, distinct_seq, min_seq, max_seq, with_vec, with_text): (i64, i64, Option<i64>, Option<i64>, i64, i64) = conn.query_row(
            "SELECT COUNT(*), COUNT(DISTINCT c.seq), MIN(c.seq), MAX(c.seq),
                    COALESCE(SUM(v.chunk_id IS NOT NULL), 0), COALESCE(SUM(t.chunk_id IS NOT NULL), 0)
             FROM chunks c
             LEFT JOIN vectors v ON v.chunk_id = c.chunk_id
             LEFT JOIN text_entries t ON t.chunk_id = c.chunk_id
             WHERE c.doc_id = ?1",
            params![doc_id],
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?)),
        )?;
        let complete = rows > 0
            && rows == chunk_count
            && distinct_seq == rows
            && min_seq == Some(0)
            && max_seq == Some(rows - 1)
            && with_vec == rows
            && with_text == rows;
        Ok(if complete {
            Completeness::Complete
        } else {
            Completeness::Partial
        })
    }

    pub fn document(&self, doc_id: DocId) -> Result<Option<DocumentRecord>> {
        let conn = self.conn();
        let row = conn
            .prepare_cached(
                "SELECT doc_id, source_uri, collection, tags, source_type, chunk_count, created_at
                 FROM documents WHERE doc_id = ?1",
            )?
            .query_row(params![doc_id], document_row)
            .optional()?;
        row.map(finish_document).transpose()
    }

    pub fn document_by_source(&self, source_uri: &str, collection: &str) -> Result<Option<DocumentRecord>> {
        let conn = self.conn();
        let row = conn
            .prepare_cached(
                "SELECT doc_id, source_uri, collection, tags, source_type, chunk_count, created_at
                 FROM documents WHERE source_uri = ?1 AND collection = ?2 ORDER BY doc_id DESC LIMIT 1",
            )?
            .query_row(params![source_uri, collection], document_row)
            .optional()?;
        row.map(finish_document).transpose()
    }

    /// All documents with the given source uri, in any collection.
    pub fn documents_by_uri(&self, source_uri: &str) -> Result<Vec<DocumentRecord>> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT doc_id, source_uri, collection, tags, source_type, chunk_count, created_at
             FROM documents WHERE source_uri = ?1 ORDER BY doc_id",
        )?;
        let rows = stmt
            .query_map(params![source_uri], document_row)?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter().map(finish_document).collect()
    }

    pub fn documents(&self) -> Result<Vec<DocumentRecord>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT doc_id, source_uri, collection, tags, source_type, chunk_count, created_at
             FROM documents ORDER BY doc_id",
        )?;
        let rows = stmt
            .query_map([], document_row)?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter().map(finish_document).collect()
    }

    /// Keyed lookup of chunk records, in input order. Statements carry at
    /// most [`CHUNK_LOOKUP_BATCH`] ids each.
    pub fn get_chunks(&self, ids: &[ChunkId]) -> Result<ChunkLookup> {
        self.limits.check_batch(ids.len())?;
        let mut found: HashMap<ChunkId, ChunkRecord> = HashMap::with_capacity(ids.len());
        let conn = self.conn();
        let mut batches = 0u64;
        for batch in ids.chunks(CHUNK_LOOKUP_BATCH) {
            batches += 1;
            let placeholders = vec!["?"; batch.len()].join(",");
            let sql = format!("SELECT {CHUNK_COLUMNS} FROM chunks WHERE chunk_id IN ({placeholders})");
            let mut stmt = conn.prepare_cached(&sql)?;
            let rows = stmt
                .query_map(params_from_iter(batch.iter()), chunk_from_row)?
                .collect::<rusqlite::Result<Vec<_>>>()?;
            for row in rows {
                let record = finish_chunk(row)?;
                found.insert(record.chunk_id, record);
            }
        }
        drop(conn);
        self.obs.metrics.add_batch_lookups(batches);
        let mut lookup = ChunkLookup::default();
        for id in ids {
            match found.get(id) {
                Some(r) => lookup.records.push(r.clone()),
                None => lookup.missing.push(*id),
            }
        }
        Ok(lookup)
    }

    pub fn get_chunk(&self, id: ChunkId) -> Result<ChunkRecord> {
        self.get_chunks(&[id])?
            .records
            .pop()
            .ok_or(Error::MissingChunk(id))
    }

    /// Chunks of `doc_id` with `seq` in `lo..=hi`, ordered by seq.
    pub fn chunk_window(&self, doc_id: DocId, lo: usize, hi: usize) -> Result<Vec<ChunkRecord>> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(&format!(
            "SELECT {CHUNK_COLUMNS} FROM chunks WHERE doc_id = ?1 AND seq BETWEEN ?2 AND ?3 ORDER BY seq"
        ))?;
        let rows = stmt
            .query_map(params![doc_id, lo as i64, hi as i64], chunk_from_row)?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter().map(finish_chunk).collect()
    }

    pub fn document_chunks(&self, doc_id: DocId) -> Result<Vec<ChunkRecord>> {
        self.chunk_window(doc_id, 0, i64::MAX as usize)
    }

    pub fn all_chunks(&self) -> Result<Vec<ChunkRecord>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(&format!("SELECT {CHUNK_COLUMNS} FROM chunks ORDER BY chunk_id"))?;
        let rows = stmt
            .query_map([], chunk_from_row)?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter().map(finish_chunk).collect()
    }

    pub fn chunk_count(&self) -> Result<usize> {
        let n: i64 = self.conn().query_row("SELECT COUNT(*) FROM chunks", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    /// Returns the query-side snapshot, building it if a write dropped it.
    pub fn snapshot(&self) -> Result<Arc<IndexSnapshot>> {
        if let Some(s) = self.snapshot.read().expect("snapshot lock").as_ref() {
            return Ok(Arc::clone(s));
        }
        let mut slot = self.snapshot.write().expect("snapshot lock");
        if let Some(s) = slot.as_ref() {
            return Ok(Arc::clone(s));
        }
        let built = Arc::new(self.build_snapshot()?);
        *slot = Some(Arc::clone(&built));
        Ok(built)
    }

    fn build_snapshot(&self) -> Result<IndexSnapshot> {
        let conn = self.conn();
        let dim = self.dimension().unwrap_or(0);
        let n: i64 = conn.query_row("SELECT COUNT(*) FROM vectors", [], |r| r.get(0))?;
        let mut vectors = FlatIndex::with_capacity(dim, n as usize);
        let mut chunk_docs = HashMap::new();
        {
            let mut stmt = conn.prepare(
                "SELECT c.chunk_id, c.doc_id, c.seq, v.data FROM chunks c
                 JOIN vectors v ON v.chunk_id = c.chunk_id ORDER BY c.chunk_id",
            )?;
            let mut rows = stmt.query([])?;
            while let Some(row) = rows.next()? {
                let id: ChunkId = row.get(0)?;
                let doc: DocId = row.get(1)?;
                let seq: i64 = row.get(2)?;
                let data = row.get_ref(3)?.as_blob().map_err(rusqlite::Error::from)?;
                if data.len() == dim * 4 {
                    vectors.push(id, &decode_vector(data))?;
                }
                chunk_docs.insert(id, (doc, seq as usize));
            }
        }
        let mut text = InvertedIndex::new();
        {
            let mut stmt = conn.prepare("SELECT chunk_id, length FROM text_entries")?;
            let mut rows = stmt.query([])?;
            while let Some(row) = rows.next()? {
                text.set_length(row.get(0)?, row.get::<_, i64>(1)? as u32);
            }
            let mut stmt = conn.prepare("SELECT chunk_id, term, tf FROM postings ORDER BY chunk_id, term")?;
            let mut rows = stmt.query([])?;
            while let Some(row) = rows.next()? {
                let chunk_id: ChunkId = row.get(0)?;
                text.push_posting(
                    row.get(1)?,
                    Posting {
                        chunk_id,
                        term_frequency: row.get::<_, i64>(2)? as u32,
                    },
                );
            }
        }
        let mut doc_created = HashMap::new();
        {
            let mut stmt = conn.prepare("SELECT doc_id, created_at FROM documents")?;
            let mut rows = stmt.query([])?;
            while let Some(row) = rows.next()? {
                let at: String = row.get(1)?;
                doc_created.insert(row.get(0)?, parse_ts(&at)?);
            }
        }
        let corpus_mean_idf = text.corpus_mean_idf();
        Ok(IndexSnapshot {
            vectors,
            text,
            corpus_mean_idf,
            chunk_docs,
            doc_created,
        })
    }

    /// Increments access counters of returned chunks.
    pub fn record_access(&self, chunk_ids: &[ChunkId], at: DateTime<Utc>) -> Result<()> {
        if chunk_ids.is_empty() {
            return Ok(());
        }
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        {
            let mut stmt = tx.prepare_cached(
                "UPDATE chunks SET access_count = access_count + 1, last_accessed_at = ?1 WHERE chunk_id = ?2",
            )?;
            let at = ts(at);
            for id in chunk_ids {
                stmt.execute(params![at, id])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    /// Overwrites access statistics; chunks not listed are reset to zero.
    pub fn reset_access_stats(&self, stats: &[(ChunkId, u64, Option<DateTime<Utc>>)]) -> Result<()> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute("UPDATE chunks SET access_count = 0, last_accessed_at = NULL", [])?;
        {
            let mut stmt = tx.prepare_cached(
                "UPDATE chunks SET access_count = ?1, last_accessed_at = ?2 WHERE chunk_id = ?3",
            )?;
            for (id, count, at) in stats {
                stmt.execute(params![*count as i64, at.map(ts), id])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    /// Appends a search event and prunes the log to the newest
    /// [`EVENT_LOG_CAPACITY`] entries.
    pub fn record_search_event(&self, event: &SearchEvent) -> Result<i64> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO search_events (query, best_distance, tier, result_count, dismissed, at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                event.query,
                event.best_distance,
                event.tier.as_str(),
                event.result_count as i64,
                event.dismissed,
                ts(event.at)
            ],
        )?;
        let id = tx.last_insert_rowid();
        tx.execute(
            "DELETE FROM search_events WHERE event_id NOT IN
             (SELECT event_id FROM search_events ORDER BY event_id DESC LIMIT ?1)",
            params![EVENT_LOG_CAPACITY as i64],
        )?;
        tx.commit()?;
        Ok(id)
    }

    pub fn mark_dismissed(&self, event_id: i64) -> Result<bool> {
        let n = self.conn().execute(
            "UPDATE search_events SET dismissed = 1 WHERE event_id = ?1",
            params![event_id],
        )?;
        Ok(n > 0)
    }

    /// Event log, oldest first.
    pub fn search_events(&self) -> Result<Vec<StoredEvent>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT event_id, query, best_distance, tier, result_count, dismissed, at
             FROM search_events ORDER BY event_id",
        )?;
        let rows = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, f64>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, i64>(4)?,
                    r.get::<_, bool>(5)?,
                    r.get::<_, String>(6)?,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter()
            .map(|(event_id, query, best_distance, tier, result_count, dismissed, at)| {
                Ok(StoredEvent {
                    event_id,
                    event: SearchEvent {
                        query,
                        best_distance,
                        tier: RelevanceTier::parse(&tier)
                            .ok_or_else(|| Error::Corrupt(format!("bad tier {tier:?}")))?,
                        result_count: result_count as usize,
                        dismissed,
                        at: parse_ts(&at)?,
                    },
                })
            })
            .collect()
    }

    /// Re-embeds every chunk with `provider` in one transaction. Nothing is
    /// written unless every chunk embeds successfully.
    pub fn replace_vectors(&self, provider: &dyn EmbeddingProvider, spec: &str) -> Result<usize> {
        let chunks = self.all_chunks()?;
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = provider.embed(&texts)?;
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(rusqlite::TransactionBehavior::Immediate)?;
        tx.execute("DELETE FROM vectors", [])?;
        {
            let mut stmt = tx.prepare_cached("INSERT INTO vectors (chunk_id, data) VALUES (?1, ?2)")?;
            for (chunk, v) in chunks.iter().zip(&vectors) {
                stmt.execute(params![chunk.chunk_id, encode_vector(v.as_slice())])?;
            }
        }
        self.write_config(&tx, |c| {
            c.insert("dimension".into(), provider.dimension().into());
            c.insert("embedder".into(), spec.into());
        })?;
        tx.commit()?;
        drop(conn);
        self.invalidate();
        Ok(chunks.len())
    }

    pub fn stats(&self) -> Result<StoreStats> {
        let conn = self.conn();
        let count = |sql: &str| -> Result<usize> {
            Ok(conn.query_row(sql, [], |r| r.get::<_, i64>(0))? as usize)
        };
        let documents = count("SELECT COUNT(*) FROM documents")?;
        let chunks = count("SELECT COUNT(*) FROM chunks")?;
        let vectors = count("SELECT COUNT(*) FROM vectors")?;
        let search_events = count("SELECT COUNT(*) FROM search_events")?;
        let pairs = |sql: &str| -> Result<Vec<(String, usize)>> {
            let mut stmt = conn.prepare(sql)?;
            let rows = stmt
                .query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)? as usize)))?
                .collect::<rusqlite::Result<Vec<_>>>()?;
            Ok(rows)
        };
        let collections = pairs("SELECT collection, COUNT(*) FROM documents GROUP BY collection ORDER BY collection")?;
        let chunk_kinds = pairs("SELECT kind, COUNT(*) FROM chunks GROUP BY kind ORDER BY kind")?;
        let mut stmt = conn.prepare(
            "SELECT tier, COUNT(*), SUM(dismissed) FROM search_events GROUP BY tier ORDER BY tier",
        )?;
        let tier_events = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, i64>(1)? as usize,
                    r.get::<_, i64>(2)? as usize,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        drop(stmt);
        drop(conn);
        Ok(StoreStats {
            schema_version: self.schema_version,
            documents,
            chunks,
            vectors,
            dimension: self.dimension(),
            embedder: self.embedder_spec(),
            collections,
            chunk_kinds,
            search_events,
            tier_events,
        })
    }
}

type DocumentRow = (DocId, String, String, String, String, i64, String);

fn document_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<DocumentRow> {
    Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?, r.get(6)?))
}

fn finish_document(row: DocumentRow) -> Result<DocumentRecord> {
    let (doc_id, source_uri, collection, tags, source_type, chunk_count, created_at) = row;
    Ok(DocumentRecord {
        doc_id,
        source_uri,
        collection,
        tags: serde_json::from_str(&tags).map_err(|e| Error::Corrupt(format!("bad tags: {e}")))?,
        source_type: SourceType::parse(&source_type)?,
        chunk_count: chunk_count.max(0) as usize,
        created_at: parse_ts(&created_at)?,
    })
}

pub(crate) fn insert_chunk(tx: &Transaction<'_>, doc_id: DocId, seq: usize, chunk: &NewChunk, vector: &Embedding) -> Result<ChunkId> {
    tx.prepare_cached(
        "INSERT INTO chunks (doc_id, seq, text, token_count, kind, content_digest)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
    )?
    .execute(params![
        doc_id,
        seq as i64,
        chunk.text,
        chunk.token_count as i64,
        chunk.kind.as_str(),
        content_digest(&chunk.text)
    ])?;
    let chunk_id = tx.last_insert_rowid();
    tx.prepare_cached("INSERT INTO vectors (chunk_id, data) VALUES (?1, ?2)")?
        .execute(params![chunk_id, encode_vector(vector.as_slice())])?;
    index_chunk_text(tx, chunk_id, &chunk.text)?;
    Ok(chunk_id)
}

pub(crate) fn index_chunk_text(tx: &Transaction<'_>, chunk_id: ChunkId, text: &str) -> Result<()> {
    let (terms, length) = term_frequencies(text);
    tx.prepare_cached("INSERT INTO text_entries (chunk_id, length) VALUES (?1, ?2)")?
        .execute(params![chunk_id, i64::from(length)])?;
    let mut stmt = tx.prepare_cached("INSERT INTO postings (chunk_id, term, tf) VALUES (?1, ?2, ?3)")?;
    for (term, tf) in &terms {
        stmt.execute(params![chunk_id, term, i64::from(*tf)])?;
    }
    Ok(())
}

pub(crate) fn delete_chunk_rows(tx: &Transaction<'_>, chunk_id: ChunkId) -> Result<()> {
    for sql in [
        "DELETE FROM postings WHERE chunk_id = ?1",
        "DELETE FROM text_entries WHERE chunk_id = ?1",
        "DELETE FROM vectors WHERE chunk_id = ?1",
        "DELETE FROM chunks WHERE chunk_id = ?1",
    ] {
        tx.prepare_cached(sql)?.execute(params![chunk_id])?;
    }
    Ok(())
}

fn delete_documents_where(tx: &Transaction<'_>, predicate: &str, args: impl rusqlite::Params + Clone) -> Result<usize> {
    let doc_ids: Vec<DocId> = tx
        .prepare(&format!("SELECT doc_id FROM documents WHERE {predicate}"))?
        .query_map(args, |r| r.get(0))?
        .collect::<rusqlite::Result<_>>()?;
    for doc_id in &doc_ids {
        let chunk_ids: Vec<ChunkId> = tx
            .prepare_cached("SELECT chunk_id FROM chunks WHERE doc_id = ?1")?
            .query_map(params![doc_id], |r| r.get(0))?
            .collect::<rusqlite::Result<_>>()?;
        for chunk_id in chunk_ids {
            delete_chunk_rows(tx, chunk_id)?;
        }
        tx.prepare_cached("DELETE FROM documents WHERE doc_id = ?1")?
            .execute(params![doc_id])?;
    }
    Ok(doc_ids.len())
}

#[cfg(test)]
mod tests;
