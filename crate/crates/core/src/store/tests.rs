use chrono::{Duration, TimeZone};
use tempfile::TempDir;

use super::*;
use crate::embedder::TestEmbedder;

fn fresh() -> (TempDir, Store, TestEmbedder) {
    let dir = TempDir::new().unwrap();
    let store = Store::open(dir.path().join("s.db"), true).unwrap();
    (dir, store, TestEmbedder::new(16).unwrap())
}

fn add(store: &Store, emb: &TestEmbedder, uri: &str, texts: &[&str]) -> DocId {
    let chunks: Vec<NewChunk> = texts.iter().map(|t| NewChunk::prose(*t)).collect();
    let vectors = emb.embed(texts).unwrap();
    store.add_document(&NewDocument::new(uri, "default"), &chunks, &vectors).unwrap()
}

#[test]
fn round_trip_preserves_text_and_order() {
    let (_d, store, emb) = fresh();
    let doc = add(&store, &emb, "a.txt", &["first chunk", "second chunk", "third chunk"]);
    let chunks = store.document_chunks(doc).unwrap();
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    assert_eq!(texts, ["first chunk", "second chunk", "third chunk"]);
    assert_eq!(chunks.iter().map(|c| c.seq).collect::<Vec<_>>(), [0, 1, 2]);
    assert_eq!(store.document(doc).unwrap().unwrap().chunk_count, 3);
    assert_eq!(store.doc_completeness("a.txt", "default").unwrap(), Completeness::Complete);
    assert_eq!(store.doc_completeness("b.txt", "default").unwrap(), Completeness::Missing);
    assert_eq!(store.dimension(), Some(16));
}

#[test]
fn reingest_replaces_same_source() {
    let (_d, store, emb) = fresh();
    add(&store, &emb, "a.txt", &["old text"]);
    let doc = add(&store, &emb, "a.txt", &["new text", "more"]);
    assert_eq!(store.documents().unwrap().len(), 1);
    assert_eq!(store.chunk_count().unwrap(), 2);
    assert_eq!(store.document_chunks(doc).unwrap()[0].text, "new text");
    assert!(store.integrity_check().unwrap().passed());
}

#[test]
fn rejects_mismatched_input_without_writing() {
    let (_d, store, emb) = fresh();
    let v = emb.embed_one("x").unwrap();
    let meta = NewDocument::new("a", "default");
    assert!(matches!(
        store.add_document(&meta, &[NewChunk::prose("x"), NewChunk::prose("y")], std::slice::from_ref(&v)),
        Err(Error::ArityMismatch { .. })
    ));
    assert!(matches!(store.add_document(&meta, &[], &[]), Err(Error::EmptyDocument)));
    add(&store, &emb, "b", &["y"]);
    let wide = TestEmbedder::new(32).unwrap().embed_one("x").unwrap();
    assert!(matches!(
        store.add_document(&meta, &[NewChunk::prose("x")], &[wide]),
        Err(Error::DimensionMismatch { expected: 16, actual: 32 })
    ));
    assert_eq!(store.documents().unwrap().len(), 1);
}

#[test]
fn barrier_error_rolls_back_whole_document() {
    let (_d, store, emb) = fresh();
    store.set_write_barrier(Some(Box::new(|p: BarrierPoint| {
        if p.chunks_written == 2 {
            Err(Error::Aborted("injected".into()))
        } else {
            Ok(())
        }
    })));
    let chunks = [NewChunk::prose("a"), NewChunk::prose("b"), NewChunk::prose("c")];
    let vectors = emb.embed(&["a", "b", "c"]).unwrap();
    let err = store.add_document(&NewDocument::new("x", "default"), &chunks, &vectors);
    assert!(matches!(err, Err(Error::Aborted(_))));
    store.set_write_barrier(None);
    assert_eq!(store.doc_completeness("x", "default").unwrap(), Completeness::Missing);
    assert_eq!(store.chunk_count().unwrap(), 0);
    assert!(store.integrity_check().unwrap().passed());
}

#[test]
fn batch_lookup_reports_missing_ids_in_input_order() {
    let (_d, store, emb) = fresh();
    let doc = add(&store, &emb, "a", &["one", "two"]);
    let ids: Vec<ChunkId> = store.document_chunks(doc).unwrap().iter().map(|c| c.chunk_id).collect();
    let lookup = store.get_chunks(&[ids[1], 999, ids[0]]).unwrap();
    assert_eq!(lookup.records.iter().map(|r| r.chunk_id).collect::<Vec<_>>(), [ids[1], ids[0]]);
    assert_eq!(lookup.missing, [999]);
    assert!(matches!(store.get_chunk(999), Err(Error::MissingChunk(999))));
}

#[test]
fn lookups_split_into_bounded_statements() {
    let (_d, store, emb) = fresh();
    add(&store, &emb, "a", &["one"]);
    let before = store.observability().metrics.snapshot().batch_lookups;
    let ids: Vec<ChunkId> = (0..(CHUNK_LOOKUP_BATCH as i64 * 2 + 1)).collect();
    store.get_chunks(&ids).unwrap();
    assert_eq!(store.observability().metrics.snapshot().batch_lookups - before, 3);
}

#[test]
fn delete_removes_derived_rows_and_invalidates_snapshot() {
    let (_d, store, emb) = fresh();
    let doc = add(&store, &emb, "a", &["alpha beta"]);
    add(&store, &emb, "b", &["gamma"]);
    assert_eq!(store.snapshot().unwrap().chunk_count(), 2);
    assert!(store.delete_document(doc).unwrap());
    assert!(!store.delete_document(doc).unwrap());
    let snap = store.snapshot().unwrap();
    assert_eq!(snap.chunk_count(), 1);
    assert_eq!(snap.vectors.len(), 1);
    assert_eq!(snap.text.document_frequency("alpha"), 0);
    assert!(store.integrity_check().unwrap().passed());
}

#[test]
fn access_stats_record_and_reset() {
    let (_d, store, emb) = fresh();
    let doc = add(&store, &emb, "a", &["one", "two"]);
    let ids: Vec<ChunkId> = store.document_chunks(doc).unwrap().iter().map(|c| c.chunk_id).collect();
    let at = Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap();
    store.record_access(&[ids[0], ids[0]], at).unwrap();
    let c = store.get_chunk(ids[0]).unwrap();
    assert_eq!((c.access_count, c.last_accessed_at), (2, Some(at)));
    store.reset_access_stats(&[(ids[1], 7, None)]).unwrap();
    assert_eq!(store.get_chunk(ids[0]).unwrap().access_count, 0);
    assert_eq!(store.get_chunk(ids[1]).unwrap().access_count, 7);
}

#[test]
fn event_log_is_bounded_and_dismissable() {
    let (_d, store, _) = fresh();
    let at = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    let mut last = 0;
    for i in 0..EVENT_LOG_CAPACITY + 5 {
        last = store
            .record_search_event(&SearchEvent {
                query: format!("q{i}"),
                best_distance: 0.5,
                tier: RelevanceTier::Medium,
                result_count: 3,
                dismissed: false,
                at: at + Duration::seconds(i as i64),
            })
            .unwrap();
    }
    let events = store.search_events().unwrap();
    assert_eq!(events.len(), EVENT_LOG_CAPACITY);
    assert_eq!(events[0].event.query, "q5");
    assert!(store.mark_dismissed(last).unwrap());
    assert!(store.search_events().unwrap().last().unwrap().event.dismissed);
    assert!(!store.mark_dismissed(1).unwrap());
}

#[test]
fn reopen_keeps_data_and_flags_unknown_config() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.db");
    let emb = TestEmbedder::new(16).unwrap();
    {
        let store = Store::open(&path, true).unwrap();
        add(&store, &emb, "a", &["persisted text"]);
        store
            .conn()
            .execute(
                "UPDATE store_meta SET value = json_set(value, '$.future_knob', 1) WHERE key = 'config'",
                [],
            )
            .unwrap();
    }
    let store = Store::open(&path, false).unwrap();
    assert_eq!(store.chunk_count().unwrap(), 1);
    assert_eq!(store.warnings().len(), 1);
    assert!(store.warnings()[0].contains("future_knob"));
    assert_eq!(store.config_value("future_knob"), Some(serde_json::json!(1)));
}

#[test]
fn open_refusals() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(
        Store::open(dir.path().join("none.db"), false),
        Err(Error::StoreMissing(_))
    ));
    let path = dir.path().join("s.db");
    drop(Store::open(&path, true).unwrap());
    {
        let conn = Connection::open(&path).unwrap();
        conn.execute("UPDATE store_meta SET value = '99' WHERE key = 'schema_version'", [])
            .unwrap();
    }
    assert!(matches!(
        Store::open(&path, false),
        Err(Error::SchemaVersion { found: 99, .. })
    ));
    let junk = dir.path().join("junk.db");
    std::fs::write(&junk, vec![0x5a; 8192]).unwrap();
    assert!(matches!(Store::open(&junk, false), Err(Error::Corrupt(_))));
}

#[test]
fn replace_vectors_switches_dimension() {
    let (_d, store, emb) = fresh();
    add(&store, &emb, "a", &["one", "two"]);
    let wide = TestEmbedder::new(24).unwrap();
    assert_eq!(store.replace_vectors(&wide, "test:24").unwrap(), 2);
    assert_eq!(store.dimension(), Some(24));
    assert_eq!(store.embedder_spec().as_deref(), Some("test:24"));
    assert_eq!(store.snapshot().unwrap().vectors.dim(), 24);
    assert!(store.integrity_check().unwrap().passed());
}

#[test]
fn vector_codec_round_trips() {
    let v = [0.25f32, -1.5, 3.0e-7, 0.0];
    assert_eq!(decode_vector(&encode_vector(&v)), v);
}
