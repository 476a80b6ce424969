//! End-to-end tests of the `vstash` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rusqlite::Connection;
use serde_json::Value;
use tempfile::TempDir;

use vstash_core::eval::fixtures::two_cluster_mining_corpus;

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        Env { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn store(&self) -> PathBuf {
        self.path("store.db")
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_vstash"))
            .args(args)
            .current_dir(self.dir.path())
            .env("VSTASH_STORE", self.store())
            .env("XDG_CONFIG_HOME", self.dir.path())
            .env_remove("VSTASH_TRAINER")
            .output()
            .unwrap()
    }

    fn json(&self, args: &[&str]) -> (i32, Value) {
        let mut full = vec!["--json"];
        full.extend_from_slice(args);
        let out = self.run(&full);
        let value = serde_json::from_slice(&out.stdout)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)));
        (out.status.code().unwrap(), value)
    }
}

/// Every row of every table, rendered in a fixed order.
fn logical_dump(path: &Path) -> String {
    let conn = Connection::open(path).unwrap();
    let tables: Vec<String> = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name")
        .unwrap()
        .query_map([], |r| r.get(0))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    let mut out = String::new();
    for t in tables {
        let mut stmt = conn.prepare(&format!("SELECT * FROM \"{t}\" ORDER BY 1, 2")).unwrap();
        let cols = stmt.column_count();
        let mut rows = stmt.query([]).unwrap();
        while let Some(row) = rows.next().unwrap() {
            out.push_str(&t);
            for i in 0..cols {
                out.push_str(&format!("|{:?}", row.get_ref(i).unwrap()));
            }
            out.push('\n');
        }
    }
    out
}

#[test]
fn ingest_reports_each_file_and_skips_complete_documents() {
    let env = Env::new();
    env.write("docs/a.md", "alpha beta gamma\n\ndelta epsilon");
    env.write("docs/empty.md", "");
    env.write("docs/c.py", "def f(x):\n    return x\n");
    let (code, first) = env.json(&["ingest", "docs"]);
    assert_eq!(code, 0, "partial success still exits 0");
    assert_eq!(first["succeeded"], 2);
    assert_eq!(first["failed"], 1);
    let files = first["files"].as_array().unwrap();
    let by_name = |n: &str| files.iter().find(|f| f["path"].as_str().unwrap().ends_with(n)).unwrap().clone();
    assert_eq!(by_name("a.md")["status"], "ingested");
    assert_eq!(by_name("empty.md")["error"], "empty input");

    let (_, again) = env.json(&["ingest", "docs/a.md"]);
    assert_eq!(again["files"][0]["status"], "skipped");
    let plain = env.run(&["ingest", "docs/a.md"]);
    assert!(String::from_utf8_lossy(&plain.stdout).contains("skipped (complete)"));

    let (_, stats) = env.json(&["stats"]);
    assert_eq!(stats["documents"], 2);
    assert_eq!(stats["chunks"], stats["vectors"]);
}

#[test]
fn ingest_with_only_failures_exits_nonzero() {
    let env = Env::new();
    env.write("empty.md", "   ");
    let out = env.run(&["ingest", "empty.md"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_and_missing_component_exit_codes() {
    let env = Env::new();
    assert_eq!(env.run(&["search", "anything"]).status.code(), Some(2), "missing store");
    env.write("a.md", "some text here");
    env.run(&["ingest", "a.md"]);
    assert_eq!(env.run(&["search", ""]).status.code(), Some(2), "empty query");
    assert_eq!(env.run(&["search", "x", "--mode", "psychic"]).status.code(), Some(2), "bad mode");
    assert_eq!(env.run(&["search", "x", "-k", "0"]).status.code(), Some(2), "k = 0");
    assert_eq!(env.run(&["frobnicate"]).status.code(), Some(2), "unknown subcommand");
    let retrain = env.run(&["retrain", "--triples", "t.jsonl", "--out", "model"]);
    assert_eq!(retrain.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&retrain.stderr).contains("trainer component not found"));
}

#[test]
fn search_json_has_documented_shape() {
    let env = Env::new();
    env.write("a.md", "raft consensus leader election");
    env.write("b.md", "paxos consensus protocol");
    env.run(&["ingest", "a.md", "b.md"]);
    let (code, v) = env.json(&["search", "raft consensus", "-k", "5"]);
    assert_eq!(code, 0);
    for key in ["query", "mode", "tier", "best_distance", "w_vec", "w_fts", "results"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let first = &v["results"][0];
    for key in ["chunk_id", "doc_id", "score", "tier", "context", "diagnostics"] {
        assert!(first.get(key).is_some(), "missing result.{key}");
    }
    assert!(first["context"].as_str().unwrap().contains("raft"));
    let (w_vec, w_fts) = (v["w_vec"].as_f64().unwrap(), v["w_fts"].as_f64().unwrap());
    assert!((w_vec + w_fts - 1.0).abs() < 1e-12);
}

#[test]
fn read_only_commands_leave_store_untouched() {
    let env = Env::new();
    env.write("a.md", "alpha beta gamma delta");
    env.write("b.md", "epsilon zeta eta theta");
    env.run(&["ingest", "a.md", "b.md"]);
    let before = logical_dump(&env.store());
    for args in [
        vec!["check"],
        vec!["stats"],
        vec!["search", "alpha", "--no-record"],
        vec!["miss", "alpha", "--uri", "b.md"],
    ] {
        let out = env.run(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(logical_dump(&env.store()), before, "{args:?} changed the store");
    }
    env.run(&["search", "alpha"]);
    assert_ne!(logical_dump(&env.store()), before, "recorded search should log an event");
}

#[test]
fn check_reports_corruption_with_exit_one() {
    let env = Env::new();
    env.write("a.md", "alpha beta gamma");
    env.run(&["ingest", "a.md"]);
    let (code, ok) = env.json(&["check"]);
    assert_eq!((code, ok["passed"].as_bool()), (0, Some(true)));

    Connection::open(env.store())
        .unwrap()
        .execute("UPDATE documents SET chunk_count = 7", [])
        .unwrap();
    let (code, bad) = env.json(&["check"]);
    assert_eq!(code, 1);
    let failing: Vec<&str> = bad["results"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["pass"] == false)
        .map(|r| r["invariant"].as_str().unwrap())
        .collect();
    assert_eq!(failing, ["chunk_count_parity"]);
    let (code, repaired) = env.json(&["check", "--repair"]);
    assert_eq!(code, 0, "{repaired}");
    assert_eq!(env.json(&["check"]).0, 0);

    fs::write(env.store(), b"definitely not a database file, just junk bytes....").unwrap();
    for suffix in ["-wal", "-shm"] {
        let _ = fs::remove_file(env.path(&format!("store.db{suffix}")));
    }
    let (code, junk) = env.json(&["check"]);
    assert_eq!(code, 1);
    assert_eq!(junk["passed"], false);
    let structure = junk["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["invariant"] == "storage_structure")
        .unwrap();
    assert_eq!(structure["pass"], false);
}

#[test]
fn mine_writes_triples_in_both_directions() {
    let env = Env::new();
    let fixture = two_cluster_mining_corpus(31);
    let mut paths = Vec::new();
    for (uri, text) in &fixture.docs {
        paths.push(env.write(&format!("corpus/{uri}.txt"), text));
    }
    env.run(&["ingest", "corpus"]);
    let (code, report) = env.json(&["mine", "--out", "triples.jsonl"]);
    assert_eq!(code, 0, "{report}");
    let text = fs::read_to_string(env.path("triples.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    assert_eq!(report["triples_written"].as_u64().unwrap() as usize, lines.len());
    for l in &lines {
        for key in ["query", "positive", "negative", "direction", "source"] {
            assert!(l.get(key).is_some(), "missing {key} in {l}");
        }
        assert_ne!(l["positive"], l["negative"]);
    }
    for dir in ["dense_blind_spot", "lexical_blind_spot"] {
        assert!(lines.iter().any(|l| l["direction"] == dir), "no {dir} triples");
    }

    // Without --append the file is replaced; with it, lines accumulate.
    env.run(&["mine", "--out", "triples.jsonl"]);
    assert_eq!(fs::read_to_string(env.path("triples.jsonl")).unwrap().lines().count(), lines.len());
    env.run(&["mine", "--out", "triples.jsonl", "--append"]);
    assert_eq!(fs::read_to_string(env.path("triples.jsonl")).unwrap().lines().count(), 2 * lines.len());
}

#[cfg(unix)]
#[test]
fn retrain_drives_external_trainer_and_reembeds() {
    use std::os::unix::fs::PermissionsExt;
    let env = Env::new();
    env.write("a.md", "alpha beta gamma");
    env.write("b.md", "delta epsilon zeta");
    env.run(&["ingest", "a.md", "b.md"]);
    env.write("triples.jsonl", "{\"query\":\"q\",\"positive\":\"p\",\"negative\":\"n\",\"direction\":\"dense_blind_spot\",\"source\":\"s\"}\n");
    // Fake trainer: records its arguments and emits a 4-d vector per chunk.
    let script = env.write(
        "fake-trainer.sh",
        r#"#!/bin/sh
out=""
prev=""
for a in "$@"; do
  if [ "$prev" = "--out" ]; then out="$a"; fi
  prev="$a"
done
echo "$@" > "$out/args.txt"
n=0
sed 's/.*"digest":"\([0-9a-f]*\)".*/\1/' "$out/chunks.jsonl" | while read -r d; do
  n=$((n + 1))
  printf '%s\t%s,1,0,0\n' "$d" "$n"
done > "$out/vectors.tsv"
"#,
    );
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    let (code, v) = env.json(&[
        "retrain", "--triples", "triples.jsonl", "--out", "model", "--epochs", "1", "--lr", "0.001", "--batch", "8",
        "--seed", "5", "--trainer", script.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["reembedded"], 2);
    let args = fs::read_to_string(env.path("model/args.txt")).unwrap();
    for expected in ["--triples triples.jsonl", "--epochs 1", "--lr 0.001", "--batch 8", "--seed 5"] {
        assert!(args.contains(expected), "{args}");
    }
    let (_, stats) = env.json(&["stats"]);
    assert_eq!(stats["dimension"], 4);
    assert!(stats["embedder"].as_str().unwrap().starts_with("precomputed:"));
    assert_eq!(env.json(&["check"]).0, 0);
}

#[cfg(unix)]
#[test]
fn failing_trainer_leaves_store_unchanged() {
    use std::os::unix::fs::PermissionsExt;
    let env = Env::new();
    env.write("a.md", "alpha beta gamma");
    env.run(&["ingest", "a.md"]);
    env.write("triples.jsonl", "");
    let script = env.write("bad-trainer.sh", "#!/bin/sh\nexit 4\n");
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    let before = logical_dump(&env.store());
    let out = env.run(&["retrain", "--triples", "triples.jsonl", "--out", "model", "--trainer", script.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(logical_dump(&env.store()), before);
}

#[test]
fn eval_scores_beir_directory() {
    let env = Env::new();
    let bundle = vstash_core::eval::fixtures::separable_bundle(3, 12);
    vstash_core::eval::write_beir(&bundle, &env.path("beir")).unwrap();
    let (code, v) = env.json(&["eval", "beir", "--min-ndcg", "0.99"]);
    assert_eq!(code, 0, "{v}");
    assert!(!env.store().exists(), "eval must not create the configured store");
    let (code, _) = env.json(&["eval", "beir", "--min-ndcg", "1.01"]);
    assert_eq!(code, 1);
}
