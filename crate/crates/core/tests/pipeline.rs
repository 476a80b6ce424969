//! Search pipeline, evaluation harness and federation over real stores.

use std::collections::HashSet;

use tempfile::TempDir;

use vstash_core::embedder::TestEmbedder;
use vstash_core::eval::fixtures::{separable_bundle, synthetic_bundle, SyntheticSpec};
use vstash_core::eval::{ingest_bundle, load_beir, run_eval, write_beir, EvalOptions};
use vstash_core::ingest::{ingest_text, ChunkerChoice};
use vstash_core::observability::{miss_analysis, MissVerdict};
use vstash_core::retrieval::{expand_context, federated_search, FusionConfig, Profile, SearchMode, SearchOptions};
use vstash_core::store::{OpenOptions, Store};
use vstash_core::search;

fn store(dir: &TempDir, name: &str) -> Store {
    Store::open_with(
        dir.path().join(name),
        OpenOptions {
            embedder: Some("test".into()),
            ..OpenOptions::create()
        },
    )
    .unwrap()
}

fn ranking(store: &Store, emb: &TestEmbedder, query: &str, mode: SearchMode) -> Vec<i64> {
    let opts = SearchOptions {
        mode,
        ..SearchOptions::raw_fusion(10)
    };
    search(store, emb, query, &opts, &FusionConfig::default())
        .unwrap()
        .results
        .iter()
        .map(|r| r.chunk_id)
        .collect()
}

#[test]
fn search_modes_produce_distinct_rankings() {
    let dir = TempDir::new().unwrap();
    let s = store(&dir, "s.db");
    let emb = TestEmbedder::default();
    let bundle = synthetic_bundle(&SyntheticSpec { topics: 4, ..SyntheticSpec::default() });
    ingest_bundle(&s, &emb, &bundle, "fixture").unwrap();
    let mut distinct = 0;
    for query in bundle.queries.values() {
        let rankings: HashSet<Vec<i64>> = [SearchMode::Hybrid, SearchMode::Vector, SearchMode::Fts]
            .into_iter()
            .map(|m| ranking(&s, &emb, query, m))
            .collect();
        if rankings.len() == 3 {
            distinct += 1;
        }
    }
    assert!(distinct * 2 > bundle.queries.len(), "only {distinct} queries rank differently in all modes");
}

#[test]
fn separable_corpus_scores_perfectly_and_deterministically() {
    let dir = TempDir::new().unwrap();
    let s = store(&dir, "s.db");
    let emb = TestEmbedder::default();
    let bundle = separable_bundle(5, 20);
    ingest_bundle(&s, &emb, &bundle, "fixture").unwrap();
    let opts = EvalOptions::default();
    let first = run_eval(&s, &emb, &bundle, &opts).unwrap();
    assert_eq!(first.report.ndcg(10), 1.0);
    assert_eq!(first.report.mrr, 1.0);
    let second = run_eval(&s, &emb, &bundle, &opts).unwrap();
    assert_eq!(first.report.without_latency(), second.report.without_latency());
    let untimed = |run: &vstash_core::eval::EvalRun| {
        run.per_query.iter().map(|q| (q.query_id.clone(), q.ranked_docs.clone(), q.results.clone())).collect::<Vec<_>>()
    };
    assert_eq!(untimed(&first), untimed(&second));
}

#[test]
fn beir_directory_round_trips() {
    let dir = TempDir::new().unwrap();
    let bundle = synthetic_bundle(&SyntheticSpec { topics: 2, ..SyntheticSpec::default() });
    write_beir(&bundle, &dir.path().join("beir")).unwrap();
    let loaded = load_beir(&dir.path().join("beir")).unwrap();
    assert_eq!(loaded, bundle);
}

#[test]
fn beir_loader_rejects_dangling_judgments() {
    let dir = TempDir::new().unwrap();
    let mut bundle = separable_bundle(1, 3);
    bundle.qrels.values_mut().next().unwrap().insert("ghost".into(), 1);
    write_beir(&bundle, &dir.path().join("beir")).unwrap();
    let err = load_beir(&dir.path().join("beir")).unwrap_err();
    assert!(err.to_string().contains("ghost"), "{err}");
}

#[test]
fn federated_search_fuses_identical_content_across_profiles() {
    let dir = TempDir::new().unwrap();
    let (work, home) = (store(&dir, "work.db"), store(&dir, "home.db"));
    let emb = TestEmbedder::default();
    let shared = "quarterly planning notes for the storage team";
    for (s, own) in [(&work, "work only memo about budgets"), (&home, "home only recipe for bread")] {
        ingest_text(s, &emb, "shared.md", "default", shared, ChunkerChoice::Prose, &[]).unwrap();
        ingest_text(s, &emb, "own.md", "default", own, ChunkerChoice::Prose, &[]).unwrap();
    }
    let profiles = [
        Profile { name: "work".into(), store: &work, embedder: &emb },
        Profile { name: "home".into(), store: &home, embedder: &emb },
    ];
    let results = federated_search(&profiles, "storage planning notes", &SearchOptions::with_k(5).read_only(), &FusionConfig::default()).unwrap();
    let top = &results[0];
    assert_eq!(top.context, shared);
    assert_eq!(top.hits.len(), 2);
    let names: HashSet<&str> = top.hits.iter().map(|h| h.profile.as_str()).collect();
    assert_eq!(names, HashSet::from(["work", "home"]));
    assert!(results.iter().filter(|r| r.context == shared).count() == 1);
}

#[test]
fn miss_analysis_explains_each_outcome() {
    let dir = TempDir::new().unwrap();
    let s = store(&dir, "s.db");
    let emb = TestEmbedder::default();
    let a = ingest_text(&s, &emb, "a.md", "default", "raft consensus leader election", ChunkerChoice::Prose, &[]).unwrap();
    let b = ingest_text(&s, &emb, "b.md", "default", "sourdough bread hydration", ChunkerChoice::Prose, &[]).unwrap();
    let opts = SearchOptions::with_k(1);
    let cfg = FusionConfig::default();
    let hit = miss_analysis(&s, &emb, "raft consensus", a.doc_id, &opts, &cfg).unwrap();
    assert_eq!(hit.verdict, MissVerdict::Retrieved);
    let miss = miss_analysis(&s, &emb, "raft consensus", b.doc_id, &opts, &cfg).unwrap();
    assert_ne!(miss.verdict, MissVerdict::Retrieved);
    assert_ne!(miss.verdict, MissVerdict::NotInCorpus);
    assert!(miss.details.is_some());
    let absent = miss_analysis(&s, &emb, "raft consensus", 999, &opts, &cfg).unwrap();
    assert_eq!(absent.verdict, MissVerdict::NotInCorpus);
    assert!(s.search_events().unwrap().is_empty(), "miss analysis must not record telemetry");
}

#[test]
fn context_expansion_joins_neighbouring_chunks() {
    let dir = TempDir::new().unwrap();
    let s = store(&dir, "s.db");
    let emb = TestEmbedder::default();
    let paragraphs: Vec<String> = (0..5).map(|i| format!("paragraph{i} ").repeat(700)).collect();
    let text = paragraphs.join("\n\n");
    let out = ingest_text(&s, &emb, "long.md", "default", &text, ChunkerChoice::Prose, &[]).unwrap();
    assert!(out.chunks >= 3, "{} chunks", out.chunks);
    let middle = s.document_chunks(out.doc_id).unwrap()[1].clone();
    let expanded = expand_context(&s, middle.chunk_id, 1).unwrap();
    assert!(expanded.len() > middle.text.len());
    assert!(expanded.contains(&middle.text));
    assert_eq!(expand_context(&s, middle.chunk_id, 0).unwrap(), middle.text);
}
