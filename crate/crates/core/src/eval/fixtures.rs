//! Seeded synthetic corpora for tests, benchmarks and the CLI demo data.
//!
//! Words are generated consonant-vowel strings, so every vocabulary is
//! disjoint from real English and from the `zq`-prefixed distractor words
//! used to pad stores.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusDoc, EvalBundle};

const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Generates unique pseudo-words, never repeating one across calls.
#[derive(Debug)]
pub struct WordSource {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: HashSet::new(),
        }
    }

    pub fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=4);
            let mut w = String::with_capacity(syllables * 2);
            for _ in 0..syllables {
                w.push(*CONSONANTS.choose(&mut self.rng).expect("non-empty") as char);
                w.push(*VOWELS.choose(&mut self.rng).expect("non-empty") as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    pub fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

/// Distractor text of `n` random `zq`-prefixed words.
pub fn distractor_text(rng: &mut impl Rng, n: usize) -> String {
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..8);
            let tail: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            format!("zq{tail}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub topics: usize,
    pub docs_per_topic: usize,
    pub topic_vocab: usize,
    /// Words private to a pair of sibling documents.
    pub pair_vocab: usize,
    pub common_vocab: usize,
    pub doc_words: usize,
    pub queries_per_topic: usize,
    pub query_pair_words: usize,
    pub query_topic_words: usize,
    pub query_common_words: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            topics: 20,
            docs_per_topic: 10,
            topic_vocab: 30,
            pair_vocab: 8,
            common_vocab: 40,
            doc_words: 60,
            queries_per_topic: 5,
            query_pair_words: 2,
            query_topic_words: 3,
            query_common_words: 2,
        }
    }
}

/// Topic-clustered corpus with graded judgments.
///
/// Documents come in sibling pairs sharing a private vocabulary. Each
/// query targets one document (grade 2) and its sibling (grade 1), mixing
/// a few private words with topic and common words.
pub fn synthetic_bundle(spec: &SyntheticSpec) -> EvalBundle {
    let mut words = WordSource::new(spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let common = words.words(spec.common_vocab);
    let mut bundle = EvalBundle::default();
    for t in 0..spec.topics {
        let topic = words.words(spec.topic_vocab);
        let pairs: Vec<Vec<String>> = (0..spec.docs_per_topic.div_ceil(2))
            .map(|_| words.words(spec.pair_vocab))
            .collect();
        let mut doc_ids = Vec::new();
        for d in 0..spec.docs_per_topic {
            let private = &pairs[d / 2];
            let text: Vec<&str> = (0..spec.doc_words)
                .map(|_| {
                    let roll: f64 = rng.random();
                    let pool = if roll < 0.45 {
                        &topic
                    } else if roll < 0.65 {
                        private
                    } else {
                        &common
                    };
                    pool.choose(&mut rng).expect("non-empty vocab").as_str()
                })
                .collect();
            let id = format!("t{t:02}d{d:02}");
            bundle.corpus.insert(
                id.clone(),
                CorpusDoc {
                    title: String::new(),
                    text: text.join(" "),
                },
            );
            doc_ids.push(id);
        }
        for q in 0..spec.queries_per_topic.min(spec.docs_per_topic) {
            let target = (q * 2) % spec.docs_per_topic + q * 2 / spec.docs_per_topic;
            let sibling = target ^ 1;
            let private = &pairs[target / 2];
            let mut terms: Vec<&str> = Vec::new();
            terms.extend(private.choose_multiple(&mut rng, spec.query_pair_words).map(String::as_str));
            terms.extend(topic.choose_multiple(&mut rng, spec.query_topic_words).map(String::as_str));
            terms.extend(common.choose_multiple(&mut rng, spec.query_common_words).map(String::as_str));
            terms.shuffle(&mut rng);
            let qid = format!("q{t:02}{q:02}");
            bundle.queries.insert(qid.clone(), terms.join(" "));
            let mut judged = BTreeMap::new();
            judged.insert(doc_ids[target].clone(), 2);
            if sibling < doc_ids.len() {
                judged.insert(doc_ids[sibling].clone(), 1);
            }
            bundle.qrels.insert(qid, judged);
        }
    }
    bundle
}

/// Corpus where every query's target document is the only one containing
/// its words, so both retrieval legs agree perfectly.
pub fn separable_bundle(seed: u64, docs: usize) -> EvalBundle {
    let mut words = WordSource::new(seed);
    let mut bundle = EvalBundle::default();
    for d in 0..docs {
        let vocab = words.words(6);
        let id = format!("doc{d:03}");
        bundle.corpus.insert(
            id.clone(),
            CorpusDoc {
                title: String::new(),
                text: format!("{} {}", vocab.join(" "), vocab[..3].join(" ")),
            },
        );
        let qid = format!("q{d:03}");
        bundle.queries.insert(qid.clone(), vocab[..3].join(" "));
        bundle.qrels.insert(qid, BTreeMap::from([(id, 1)]));
    }
    bundle
}

/// Corpus for disagreement mining: one group of chunks is semantically
/// close to the query without its rare term, another holds the rare term
/// amid unrelated words, and background chunks make the shared words
/// common.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningFixture {
    /// (source uri, text)
    pub docs: Vec<(String, String)>,
    pub query: String,
    pub semantic_uris: Vec<String>,
    pub lexical_uris: Vec<String>,
}

pub fn two_cluster_mining_corpus(seed: u64) -> MiningFixture {
    let mut words = WordSource::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1u64);
    let shared = words.words(4);
    let rare = words.word();
    let filler = words.words(300);
    let query = format!("{rare} {}", shared.join(" "));
    let mut docs = Vec::new();
    let fill = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| filler.choose(rng).expect("filler").clone()).collect()
    };
    let mut semantic_uris = Vec::new();
    for i in 0..6 {
        let mut text: Vec<String> = Vec::new();
        for _ in 0..4 {
            text.extend(shared.iter().cloned());
        }
        text.extend(fill(&mut rng, 4));
        text.shuffle(&mut rng);
        let uri = format!("semantic-{i}");
        semantic_uris.push(uri.clone());
        docs.push((uri, text.join(" ")));
    }
    let mut lexical_uris = Vec::new();
    for i in 0..6 {
        let mut text = fill(&mut rng, 30);
        text.push(rare.clone());
        text.shuffle(&mut rng);
        let uri = format!("lexical-{i}");
        lexical_uris.push(uri.clone());
        docs.push((uri, text.join(" ")));
    }
    for i in 0..28 {
        let mut text = fill(&mut rng, 30);
        text.extend(shared.iter().cloned());
        text.shuffle(&mut rng);
        docs.push((format!("background-{i}"), text.join(" ")));
    }
    MiningFixture {
        docs,
        query,
        semantic_uris,
        lexical_uris,
    }
}

/// Two disjoint topic vocabularies: the corpus covers only the first.
/// Returns (corpus texts, on-topic queries, off-topic queries).
pub fn off_topic_clusters(seed: u64, docs: usize, queries: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut words = WordSource::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ff);
    let inside = words.words(60);
    let outside = words.words(60);
    let sample = |rng: &mut ChaCha8Rng, vocab: &[String], n: usize| -> String {
        vocab.choose_multiple(rng, n).cloned().collect::<Vec<_>>().join(" ")
    };
    let corpus = (0..docs).map(|_| sample(&mut rng, &inside, 12)).collect();
    let on = (0..queries).map(|_| sample(&mut rng, &inside, 4)).collect();
    let off = (0..queries).map(|_| sample(&mut rng, &outside, 4)).collect();
    (corpus, on, off)
}
