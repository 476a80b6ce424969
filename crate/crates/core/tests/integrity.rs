//! Crash safety and integrity detection on real store files.

use std::path::Path;
use std::process::Command;

use rusqlite::Connection;
use tempfile::TempDir;

use vstash_core::embedder::{EmbeddingProvider, TestEmbedder};
use vstash_core::store::{Completeness, Invariant, NewChunk, NewDocument, OpenOptions, Store};

const CHILD_ENV: &str = "VSTASH_CRASH_CHILD_STORE";

fn open(path: &Path) -> Store {
    Store::open_with(
        path,
        OpenOptions {
            embedder: Some("test:16".into()),
            ..OpenOptions::create()
        },
    )
    .unwrap()
}

fn add(store: &Store, uri: &str, texts: &[&str]) -> i64 {
    let emb = TestEmbedder::new(16).unwrap();
    let chunks: Vec<NewChunk> = texts.iter().map(|t| NewChunk::prose(*t)).collect();
    store
        .add_document(&NewDocument::new(uri, "default"), &chunks, &emb.embed(texts).unwrap())
        .unwrap()
}

/// Runs only inside the child process: aborts midway through an ingest.
#[test]
fn crash_child() {
    let Some(path) = std::env::var_os(CHILD_ENV) else {
        return;
    };
    let store = open(Path::new(&path));
    store.set_write_barrier(Some(Box::new(|p| {
        if p.chunks_written == 2 {
            std::process::abort();
        }
        Ok(())
    })));
    add(&store, "victim.md", &["one", "two", "three", "four", "five"]);
    unreachable!("barrier should have aborted");
}

#[test]
fn process_abort_mid_ingest_leaves_no_partial_document() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("store.db");
    {
        let store = open(&path);
        add(&store, "survivor.md", &["kept alpha", "kept beta"]);
    }
    let status = Command::new(std::env::current_exe().unwrap())
        .args(["--exact", "crash_child", "--nocapture", "--test-threads=1"])
        .env(CHILD_ENV, &path)
        .status()
        .unwrap();
    assert!(!status.success(), "child should have died");

    let store = Store::open(&path, false).unwrap();
    let report = store.integrity_check().unwrap();
    assert!(report.passed(), "{:?}", report.results);
    assert_eq!(store.doc_completeness("victim.md", "default").unwrap(), Completeness::Missing);
    assert_eq!(store.doc_completeness("survivor.md", "default").unwrap(), Completeness::Complete);
    assert_eq!(store.chunk_count().unwrap(), 2);
}

#[test]
fn injected_faults_name_their_offenders() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("store.db");
    let (a, b) = {
        let store = open(&path);
        (add(&store, "a.md", &["alpha one", "alpha two"]), add(&store, "b.md", &["beta one"]))
    };
    let chunk_b: i64 = Connection::open(&path)
        .unwrap()
        .query_row("SELECT chunk_id FROM chunks WHERE doc_id = ?1", [b], |r| r.get(0))
        .unwrap();
    let raw = Connection::open(&path).unwrap();
    raw.execute("UPDATE documents SET chunk_count = 5 WHERE doc_id = ?1", [a]).unwrap();
    raw.execute("DELETE FROM vectors WHERE chunk_id = ?1", [chunk_b]).unwrap();
    drop(raw);

    let store = Store::open(&path, false).unwrap();
    let report = store.integrity_check().unwrap();
    let parity = report.get(Invariant::ChunkCountParity);
    assert!(!parity.pass);
    assert_eq!(parity.offenders, vec![a]);
    let vectors = report.get(Invariant::VectorParity);
    assert!(!vectors.pass);
    assert_eq!(vectors.offenders, vec![chunk_b]);
    assert!(report.get(Invariant::OrphanChunks).pass);

    let emb = TestEmbedder::new(16).unwrap();
    let repair = store.integrity_repair(Some(&emb)).unwrap();
    assert!(!repair.is_noop());
    assert!(store.integrity_check().unwrap().passed());
    assert!(store.integrity_repair(Some(&emb)).unwrap().is_noop());
    // Re-embedding restores the exact vector the embedder produces.
    let restored = store.get_chunks(&[chunk_b]).unwrap();
    assert!(restored.missing.is_empty());
}

#[test]
fn healthy_store_repair_is_noop() {
    let dir = TempDir::new().unwrap();
    let store = open(&dir.path().join("store.db"));
    add(&store, "a.md", &["alpha", "beta"]);
    assert!(store.integrity_check().unwrap().passed());
    assert!(store.integrity_repair(None).unwrap().is_noop());
}
