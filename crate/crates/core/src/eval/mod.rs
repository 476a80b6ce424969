//! Evaluation harness: BEIR loading, ranking metrics, relevance sweeps,
//! access simulation with scorer grid search, and scale benchmarks.

mod access;
pub mod fixtures;
mod metrics;
mod run;
mod scale;
mod sweep;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use access::{
    scoring_grid_search, simulate_access_pattern, AccessPattern, AccessSimulation, AccessSummary, GridConfig,
    GridReport, GridRow, DEFAULT_GRID, ZIPF_EXPONENT,
};
pub use metrics::{mrr, ndcg_at_k, percentile, precision_at_k, LatencyPercentiles};
pub use run::{ingest_bundle, run_eval, EvalOptions, EvalRun, MetricsReport, QueryRun};
pub use scale::{scale_benchmark, ScaleOptions, ScaleReport, ScaleRow};
pub use sweep::{relevance_sweep, sweep_distances, SweepReport, SweepRow};

use crate::error::{Error, Result};

/// Graded judgments for one query: doc id to grade.
pub type QueryQrels = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl CorpusDoc {
    /// Title and body as indexed.
    pub fn full_text(&self) -> String {
        if self.title.trim().is_empty() {
            self.text.clone()
        } else {
            format!("{}\n{}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalBundle {
    pub corpus: BTreeMap<String, CorpusDoc>,
    pub queries: BTreeMap<String, String>,
    pub qrels: BTreeMap<String, QueryQrels>,
}

impl EvalBundle {
    /// Checks that every judgment names a known query and document.
    pub fn validate(&self) -> Result<()> {
        for (qid, docs) in &self.qrels {
            if !self.queries.contains_key(qid) {
                return Err(Error::DanglingQrel {
                    kind: "query",
                    id: qid.clone(),
                });
            }
            for did in docs.keys() {
                if !self.corpus.contains_key(did) {
                    return Err(Error::DanglingQrel {
                        kind: "corpus",
                        id: did.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Queries that have at least one positive judgment, in id order.
    pub fn judged_queries(&self) -> Vec<(&str, &str)> {
        self.queries
            .iter()
            .filter(|(qid, _)| self.qrels.get(*qid).is_some_and(|q| q.values().any(|&g| g > 0)))
            .map(|(q, t)| (q.as_str(), t.as_str()))
            .collect()
    }

    pub fn qrels_for(&self, qid: &str) -> QueryQrels {
        self.qrels.get(qid).cloned().unwrap_or_default()
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    #[serde(rename = "_id")]
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Deserialize)]
struct QueryLine {
    #[serde(rename = "_id")]
    id: String,
    text: String,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, mut each: impl FnMut(T)) -> Result<()> {
    let file = File::open(path)?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        each(value);
    }
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing {}", path.display()),
        )))
    }
}

/// Loads `corpus.jsonl`, `queries.jsonl` and `qrels.tsv` (or the BEIR
/// `qrels/test.tsv`) from `dir`, enforcing referential integrity.
pub fn load_beir(dir: &Path) -> Result<EvalBundle> {
    let mut bundle = EvalBundle::default();
    read_jsonl(&require(dir.join("corpus.jsonl"))?, |d: CorpusLine| {
        bundle.corpus.insert(
            d.id,
            CorpusDoc {
                title: d.title,
                text: d.text,
            },
        );
    })?;
    read_jsonl(&require(dir.join("queries.jsonl"))?, |q: QueryLine| {
        bundle.queries.insert(q.id, q.text);
    })?;
    let qrels_path = {
        let flat = dir.join("qrels.tsv");
        if flat.is_file() {
            flat
        } else {
            require(dir.join("qrels").join("test.tsv"))?
        }
    };
    let file = File::open(&qrels_path)?;
    for (i, line) in BufReader::new(file).lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", qrels_path.display(), i + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        let [qid, did, grade] = fields[..] else {
            return Err(Error::parse(loc(), format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let grade: u32 = grade
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), format!("grade {grade:?} is not a non-negative integer")))?;
        bundle
            .qrels
            .entry(qid.trim().to_owned())
            .or_default()
            .insert(did.trim().to_owned(), grade);
    }
    bundle.validate()?;
    Ok(bundle)
}

/// Writes a bundle in the layout [`load_beir`] reads.
pub fn write_beir(bundle: &EvalBundle, dir: &Path) -> Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut corpus = std::io::BufWriter::new(File::create(dir.join("corpus.jsonl"))?);
    for (id, doc) in &bundle.corpus {
        let line = serde_json::json!({"_id": id, "title": doc.title, "text": doc.text});
        writeln!(corpus, "{line}")?;
    }
    corpus.flush()?;
    let mut queries = std::io::BufWriter::new(File::create(dir.join("queries.jsonl"))?);
    for (id, text) in &bundle.queries {
        writeln!(queries, "{}", serde_json::json!({"_id": id, "text": text}))?;
    }
    queries.flush()?;
    let mut qrels = std::io::BufWriter::new(File::create(dir.join("qrels.tsv"))?);
    writeln!(qrels, "query-id\tcorpus-id\tscore")?;
    for (qid, docs) in &bundle.qrels {
        for (did, grade) in docs {
            writeln!(qrels, "{qid}\t{did}\t{grade}")?;
        }
    }
    qrels.flush()?;
    Ok(())
}
