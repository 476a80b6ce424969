//! Five-invariant integrity check and repair.

use std::collections::{BTreeMap, BTreeSet};

use rusqlite::{params, Connection, Transaction};
use serde::Serialize;

use super::{decode_vector, delete_chunk_rows, encode_vector, index_chunk_text, ChunkId, Store};
use crate::digest::content_digest;
use crate::embedder::{EmbedderSpec, EmbeddingProvider};
use crate::error::Result;
use crate::textindex::term_frequencies;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    ChunkCountParity,
    VectorParity,
    TextIndexConsistency,
    OrphanChunks,
    StorageStructure,
}

impl Invariant {
    pub const ALL: [Invariant; 5] = [
        Invariant::ChunkCountParity,
        Invariant::VectorParity,
        Invariant::TextIndexConsistency,
        Invariant::OrphanChunks,
        Invariant::StorageStructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Invariant::ChunkCountParity => "chunk_count_parity",
            Invariant::VectorParity => "vector_parity",
            Invariant::TextIndexConsistency => "text_index_consistency",
            Invariant::OrphanChunks => "orphan_chunks",
            Invariant::StorageStructure => "storage_structure",
        }
    }
}

/// Offending row id: a doc_id for chunk-count parity, a chunk_id for the
/// vector, text-index and orphan invariants. Structural failures carry no
/// ids, only `details`.
pub type Offender = i64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariantResult {
    pub invariant: Invariant,
    pub pass: bool,
    pub offenders: Vec<Offender>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl InvariantResult {
    fn new(invariant: Invariant, offenders: BTreeSet<i64>, details: Vec<String>) -> Self {
        Self {
            invariant,
            pass: offenders.is_empty() && details.is_empty(),
            offenders: offenders.into_iter().collect(),
            details,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntegrityReport {
    pub results: Vec<InvariantResult>,
}

impl IntegrityReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn get(&self, invariant: Invariant) -> &InvariantResult {
        self.results
            .iter()
            .find(|r| r.invariant == invariant)
            .expect("report covers every invariant")
    }

    pub fn failing(&self) -> impl Iterator<Item = &InvariantResult> {
        self.results.iter().filter(|r| !r.pass)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RepairReport {
    pub reindexed: bool,
    pub orphans_deleted: usize,
    pub stray_rows_deleted: usize,
    pub vectors_rebuilt: usize,
    pub text_entries_rebuilt: usize,
    pub digests_fixed: usize,
    pub chunk_counts_fixed: usize,
    pub seqs_renumbered: usize,
    pub unrepaired: Vec<String>,
}

impl RepairReport {
    pub fn changes(&self) -> usize {
        usize::from(self.reindexed)
            + self.orphans_deleted
            + self.stray_rows_deleted
            + self.vectors_rebuilt
            + self.text_entries_rebuilt
            + self.digests_fixed
            + self.chunk_counts_fixed
            + self.seqs_renumbered
    }

    pub fn is_noop(&self) -> bool {
        self.changes() == 0 && self.unrepaired.is_empty()
    }
}

fn ids(conn: &Connection, sql: &str) -> Result<BTreeSet<i64>> {
    let mut stmt = conn.prepare(sql)?;
    let rows = stmt
        .query_map([], |r| r.get::<_, i64>(0))?
        .collect::<rusqlite::Result<BTreeSet<_>>>()?;
    Ok(rows)
}

fn chunk_count_parity(conn: &Connection) -> Result<InvariantResult> {
    let offenders = ids(
        conn,
        "SELECT d.doc_id FROM documents d
         LEFT JOIN (SELECT doc_id, COUNT(*) AS n, COUNT(DISTINCT seq) AS s, MIN(seq) AS lo, MAX(seq) AS hi
                    FROM chunks GROUP BY doc_id) c ON c.doc_id = d.doc_id
         WHERE d.chunk_count != COALESCE(c.n, 0)
            OR (c.n IS NOT NULL AND (c.s != c.n OR c.lo != 0 OR c.hi != c.n - 1))",
    )?;
    Ok(InvariantResult::new(Invariant::ChunkCountParity, offenders, Vec::new()))
}

fn vector_parity(conn: &Connection, dim: Option<usize>) -> Result<InvariantResult> {
    let mut offenders = ids(
        conn,
        "SELECT c.chunk_id FROM chunks c LEFT JOIN vectors v ON v.chunk_id = c.chunk_id
         WHERE v.chunk_id IS NULL
         UNION SELECT v.chunk_id FROM vectors v LEFT JOIN chunks c ON c.chunk_id = v.chunk_id
         WHERE c.chunk_id IS NULL",
    )?;
    let mut stmt = conn.prepare("SELECT chunk_id, data FROM vectors")?;
    let mut rows = stmt.query([])?;
    while let Some(row) = rows.next()? {
        let id: ChunkId = row.get(0)?;
        let data = row.get_ref(1)?.as_blob().map_err(rusqlite::Error::from)?;
        let bad_len = data.len() % 4 != 0 || dim.is_some_and(|d| data.len() != d * 4);
        let bad_norm = !bad_len && {
            let v = decode_vector(data);
            let norm: f64 = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            !norm.is_finite() || (norm - 1.0).abs() > 1e-4
        };
        if bad_len || bad_norm {
            offenders.insert(id);
        }
    }
    Ok(InvariantResult::new(Invariant::VectorParity, offenders, Vec::new()))
}

/// Postings grouped per chunk, each group sorted by term.
type PostingMap = BTreeMap<ChunkId, Vec<(String, u32)>>;

fn load_postings(conn: &Connection) -> Result<PostingMap> {
    let mut map: PostingMap = BTreeMap::new();
    let mut stmt = conn.prepare("SELECT chunk_id, term, tf FROM postings ORDER BY chunk_id, term")?;
    let mut rows = stmt.query([])?;
    while let Some(row) = rows.next()? {
        map.entry(row.get(0)?)
            .or_default()
            .push((row.get(1)?, row.get::<_, i64>(2)? as u32));
    }
    Ok(map)
}

fn text_index_consistency(conn: &Connection) -> Result<InvariantResult> {
    let mut offenders = ids(
        conn,
        "SELECT t.chunk_id FROM text_entries t LEFT JOIN chunks c ON c.chunk_id = t.chunk_id
         WHERE c.chunk_id IS NULL
         UNION SELECT DISTINCT p.chunk_id FROM postings p LEFT JOIN text_entries t ON t.chunk_id = p.chunk_id
         WHERE t.chunk_id IS NULL",
    )?;
    let mut postings = load_postings(conn)?;
    let lengths: BTreeMap<ChunkId, u32> = conn
        .prepare("SELECT chunk_id, length FROM text_entries")?
        .query_map([], |r| Ok((r.get(0)?, r.get::<_, i64>(1)? as u32)))?
        .collect::<rusqlite::Result<_>>()?;
    let mut stmt = conn.prepare("SELECT chunk_id, text, content_digest FROM chunks")?;
    let mut rows = stmt.query([])?;
    while let Some(row) = rows.next()? {
        let id: ChunkId = row.get(0)?;
        let text: String = row.get(1)?;
        let digest: String = row.get(2)?;
        let (mut expected, length) = term_frequencies(&text);
        expected.sort_unstable();
        let stored = postings.remove(&id).unwrap_or_default();
        if lengths.get(&id) != Some(&length) || stored != expected || content_digest(&text) != digest {
            offenders.insert(id);
        }
    }
    Ok(InvariantResult::new(Invariant::TextIndexConsistency, offenders, Vec::new()))
}

fn orphan_chunks(conn: &Connection) -> Result<InvariantResult> {
    let offenders = ids(
        conn,
        "SELECT c.chunk_id FROM chunks c LEFT JOIN documents d ON d.doc_id = c.doc_id
         WHERE d.doc_id IS NULL",
    )?;
    Ok(InvariantResult::new(Invariant::OrphanChunks, offenders, Vec::new()))
}

fn storage_structure(conn: &Connection) -> Result<InvariantResult> {
    let mut stmt = conn.prepare("PRAGMA integrity_check")?;
    let details: Vec<String> = stmt
        .query_map([], |r| r.get::<_, String>(0))?
        .collect::<rusqlite::Result<Vec<_>>>()?
        .into_iter()
        .filter(|line| line != "ok")
        .collect();
    Ok(InvariantResult::new(Invariant::StorageStructure, BTreeSet::new(), details))
}

fn check_all(conn: &Connection, dim: Option<usize>) -> Result<IntegrityReport> {
    Ok(IntegrityReport {
        results: vec![
            chunk_count_parity(conn)?,
            vector_parity(conn, dim)?,
            text_index_consistency(conn)?,
            orphan_chunks(conn)?,
            storage_structure(conn)?,
        ],
    })
}

impl Store {
    /// Evaluates all five invariants. Read-only; failures are report entries.
    pub fn integrity_check(&self) -> Result<IntegrityReport> {
        let conn = self.conn();
        check_all(&conn, self.dimension())
    }

    /// Repairs whatever `integrity_check` reports. Missing vectors are
    /// re-embedded with `embedder`, or with the store's configured embedder
    /// when none is given. Only orphan chunks are ever deleted.
    pub fn integrity_repair(&self, embedder: Option<&dyn EmbeddingProvider>) -> Result<RepairReport> {
        let mut report = RepairReport::default();
        let dim = self.dimension();
        let before = self.integrity_check()?;
        if before.passed() {
            return Ok(report);
        }

        if !before.get(Invariant::StorageStructure).pass {
            self.conn().execute_batch("REINDEX;")?;
            report.reindexed = true;
        }

        let owned;
        let embedder = match embedder {
            Some(e) => Some(e),
            None => match self.embedder_spec().map(|s| s.parse::<EmbedderSpec>()) {
                Some(Ok(spec)) => match spec.build() {
                    Ok(e) => {
                        owned = e;
                        Some(owned.as_ref())
                    }
                    Err(e) => {
                        log::warn!("configured embedder unavailable for repair: {e}");
                        None
                    }
                },
                _ => None,
            },
        };

        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(rusqlite::TransactionBehavior::Immediate)?;

        for id in &orphan_chunks(&tx)?.offenders {
            delete_chunk_rows(&tx, *id)?;
            report.orphans_deleted += 1;
        }

        report.stray_rows_deleted += tx.execute(
            "DELETE FROM vectors WHERE chunk_id NOT IN (SELECT chunk_id FROM chunks)",
            [],
        )?;
        let vector_offenders = vector_parity(&tx, dim)?.offenders;
        if !vector_offenders.is_empty() {
            repair_vectors(&tx, &vector_offenders, embedder, &mut report)?;
        }

        if !text_index_consistency(&tx)?.pass {
            rebuild_text_index(&tx, &mut report)?;
        }

        fix_counts(&tx, &mut report)?;
        tx.commit()?;
        drop(conn);
        self.invalidate();
        Ok(report)
    }
}

fn repair_vectors(
    tx: &Transaction<'_>,
    offenders: &[ChunkId],
    embedder: Option<&dyn EmbeddingProvider>,
    report: &mut RepairReport,
) -> Result<()> {
    let Some(embedder) = embedder else {
        report
            .unrepaired
            .push(format!("{} chunk vectors need an embedder to rebuild", offenders.len()));
        return Ok(());
    };
    let mut texts = Vec::with_capacity(offenders.len());
    {
        let mut stmt = tx.prepare_cached("SELECT text FROM chunks WHERE chunk_id = ?1")?;
        for id in offenders {
            texts.push(stmt.query_row(params![id], |r| r.get::<_, String>(0))?);
        }
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = embedder.embed(&refs)?;
    let mut stmt = tx.prepare_cached("INSERT OR REPLACE INTO vectors (chunk_id, data) VALUES (?1, ?2)")?;
    for (id, v) in offenders.iter().zip(&vectors) {
        stmt.execute(params![id, encode_vector(v.as_slice())])?;
        report.vectors_rebuilt += 1;
    }
    Ok(())
}

fn rebuild_text_index(tx: &Transaction<'_>, report: &mut RepairReport) -> Result<()> {
    tx.execute("DELETE FROM postings", [])?;
    tx.execute("DELETE FROM text_entries", [])?;
    let chunks: Vec<(ChunkId, String, String)> = tx
        .prepare("SELECT chunk_id, text, content_digest FROM chunks ORDER BY chunk_id")?
        .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?
        .collect::<rusqlite::Result<_>>()?;
    for (id, text, digest) in &chunks {
        index_chunk_text(tx, *id, text)?;
        let fresh = content_digest(text);
        if &fresh != digest {
            tx.execute(
                "UPDATE chunks SET content_digest = ?1 WHERE chunk_id = ?2",
                params![fresh, id],
            )?;
            report.digests_fixed += 1;
        }
    }
    report.text_entries_rebuilt = chunks.len();
    Ok(())
}

fn fix_counts(tx: &Transaction<'_>, report: &mut RepairReport) -> Result<()> {
    for doc_id in chunk_count_parity(tx)?.offenders {
        let chunks: Vec<(ChunkId, i64)> = tx
            .prepare_cached("SELECT chunk_id, seq FROM chunks WHERE doc_id = ?1 ORDER BY seq, chunk_id")?
            .query_map(params![doc_id], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<rusqlite::Result<_>>()?;
        for (i, (chunk_id, seq)) in chunks.iter().enumerate() {
            if *seq != i as i64 {
                tx.execute("UPDATE chunks SET seq = ?1 WHERE chunk_id = ?2", params![i as i64, chunk_id])?;
                report.seqs_renumbered += 1;
            }
        }
        let n = tx.execute(
            "UPDATE documents SET chunk_count = ?1 WHERE doc_id = ?2 AND chunk_count != ?1",
            params![chunks.len() as i64, doc_id],
        )?;
        report.chunk_counts_fixed += n;
    }
    Ok(())
}
