pub const SCHEMA_VERSION: i64 = 1;

/// On-disk versions this build can open.
pub const KNOWN_SCHEMA_VERSIONS: &[i64] = &[1];

/// Top-level config keys this build understands; anything else is kept but
/// reported.
pub const KNOWN_CONFIG_KEYS: &[&str] = &["dimension", "embedder", "created_by"];

pub(crate) const CREATE_TABLES: &str = "
CREATE TABLE IF NOT EXISTS store_meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS documents (
    doc_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    source_uri  TEXT NOT NULL,
    collection  TEXT NOT NULL,
    tags        TEXT NOT NULL DEFAULT '[]',
    source_type TEXT NOT NULL,
    chunk_count INTEGER NOT NULL,
    created_at  TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS documents_by_source ON documents (source_uri, collection);
CREATE TABLE IF NOT EXISTS chunks (
    chunk_id         INTEGER PRIMARY KEY AUTOINCREMENT,
    doc_id           INTEGER NOT NULL,
    seq              INTEGER NOT NULL,
    text             TEXT NOT NULL,
    token_count      INTEGER NOT NULL,
    kind             TEXT NOT NULL,
    access_count     INTEGER NOT NULL DEFAULT 0,
    last_accessed_at TEXT,
    content_digest   TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS chunks_by_doc ON chunks (doc_id, seq);
CREATE TABLE IF NOT EXISTS vectors (
    chunk_id INTEGER PRIMARY KEY,
    data     BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS text_entries (
    chunk_id INTEGER PRIMARY KEY,
    length   INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS postings (
    chunk_id INTEGER NOT NULL,
    term     TEXT NOT NULL,
    tf       INTEGER NOT NULL,
    PRIMARY KEY (chunk_id, term)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS search_events (
    event_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    query         TEXT NOT NULL,
    best_distance REAL NOT NULL,
    tier          TEXT NOT NULL,
    result_count  INTEGER NOT NULL,
    dismissed     INTEGER NOT NULL DEFAULT 0,
    at            TEXT NOT NULL
);
";
