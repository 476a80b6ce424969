//! Splitting raw text into retrieval chunks.
//!
//! Prose is cut into token windows with overlap, preferring paragraph
//! breaks. Source code is cut at top-level definitions detected by
//! column-0 patterns, so a definition body never straddles two chunks;
//! definitions too large for one chunk degrade to paragraph and then
//! fixed-window splitting and are marked [`SpanKind::CodeFallback`].
//!
//! A token is a whitespace-delimited word.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 1024;
pub const DEFAULT_OVERLAP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Prose,
    CodeDefinition,
    CodeFallback,
}

impl SpanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpanKind::Prose => "prose",
            SpanKind::CodeDefinition => "code_definition",
            SpanKind::CodeFallback => "code_fallback",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prose" => Some(SpanKind::Prose),
            "code_definition" => Some(SpanKind::CodeDefinition),
            "code_fallback" => Some(SpanKind::CodeFallback),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub text: String,
    pub token_count: usize,
    pub seq: usize,
    pub kind: SpanKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    Python,
    JsTs,
    Go,
    Rust,
    Java,
    Unknown,
}

impl Language {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("py") => Language::Python,
            Some("js" | "jsx" | "mjs" | "cjs" | "ts" | "tsx") => Language::JsTs,
            Some("go") => Language::Go,
            Some("rs") => Language::Rust,
            Some("java") => Language::Java,
            _ => Language::Unknown,
        }
    }

    /// Column-0 prefixes that open a top-level definition.
    fn definition_prefixes(self) -> &'static [&'static str] {
        match self {
            Language::Python => &["def ", "class ", "async def "],
            Language::JsTs => &["function ", "class ", "export "],
            Language::Go => &["func "],
            Language::Rust => &["fn ", "pub fn ", "impl ", "struct ", "enum "],
            Language::Java => &["public ", "private ", "protected ", "class "],
            Language::Unknown => &[],
        }
    }

    /// Column-0 prefixes of lines that belong to the definition below them:
    /// decorators, annotations, attributes and line comments.
    fn attached_prefixes(self) -> &'static [&'static str] {
        match self {
            Language::Python => &["@", "#"],
            Language::JsTs | Language::Java => &["@", "//", "/*"],
            Language::Go => &["//", "/*"],
            Language::Rust => &["#[", "//", "/*"],
            Language::Unknown => &[],
        }
    }

    fn has_block_comments(self) -> bool {
        !matches!(self, Language::Python | Language::Unknown)
    }
}

struct Word {
    start: usize,
    end: usize,
    /// First word of a paragraph (preceded by a blank line).
    para_start: bool,
}

fn words_of(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut newlines_since_word = 0usize;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = word_start.take() {
                let para_start = words.is_empty() || newlines_since_word >= 2;
                words.push(Word { start: s, end: i, para_start });
                newlines_since_word = 0;
            }
            if c == '\n' {
                newlines_since_word += 1;
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        let para_start = words.is_empty() || newlines_since_word >= 2;
        words.push(Word { start: s, end: text.len(), para_start });
    }
    words
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Token-window chunking for prose.
///
/// Each span holds at most `max_tokens` words. When a window has to be cut
/// mid-paragraph the next span repeats the last `overlap` words; when a
/// paragraph break falls in the second half of the window the span ends
/// there instead and the next one starts cleanly at the paragraph.
pub fn semantic_chunk(text: &str, max_tokens: usize, overlap: usize) -> Result<Vec<ChunkSpan>> {
    if max_tokens == 0 || overlap >= max_tokens {
        return Err(Error::InvalidArgument(format!(
            "need max_tokens > overlap (got {max_tokens} and {overlap})"
        )));
    }
    let words = words_of(text);
    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = words.len();
    let min_paragraph_cut = (max_tokens / 2).max(1);
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let (end, next) = if n - start <= max_tokens {
            (n, None)
        } else {
            let window_end = start + max_tokens;
            let cut = (start + min_paragraph_cut + 1..=window_end)
                .rev()
                .find(|&p| words[p].para_start);
            match cut {
                Some(p) => (p, Some(p)),
                None => (window_end, Some(window_end - overlap)),
            }
        };
        spans.push(ChunkSpan {
            text: text[words[start].start..words[end - 1].end].to_owned(),
            token_count: end - start,
            seq: spans.len(),
            kind: SpanKind::Prose,
        });
        match next {
            Some(s) => start = s,
            None => break,
        }
    }
    Ok(spans)
}

fn starts_with_any(line: &str, prefixes: &[&str]) -> bool {
    prefixes.iter().any(|p| line.starts_with(p))
}

/// First line index of the definition that opens at `def_line`, including
/// decorators and comments stacked directly above it.
fn attached_start(lines: &[&str], def_line: usize, lang: Language, floor: usize) -> usize {
    let mut start = def_line;
    while start > floor {
        let prev = lines[start - 1];
        let attached = starts_with_any(prev, lang.attached_prefixes())
            || (lang.has_block_comments() && {
                let t = prev.trim_start();
                t.starts_with('*') && !prev.starts_with(char::is_alphanumeric)
            });
        if !attached || prev.trim().is_empty() {
            break;
        }
        start -= 1;
    }
    start
}

/// Code-aware chunking using column-0 definition patterns.
pub fn code_chunk(source: &str, language: Language, max_tokens: usize) -> Result<Vec<ChunkSpan>> {
    if max_tokens == 0 {
        return Err(Error::InvalidArgument("max_tokens must be positive".into()));
    }
    if source.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    if language == Language::Unknown {
        let overlap = DEFAULT_OVERLAP.min(max_tokens / 8);
        return semantic_chunk(source, max_tokens, overlap);
    }
    let lines: Vec<&str> = source.lines().collect();
    let mut boundaries = vec![0usize];
    for (i, line) in lines.iter().enumerate() {
        if starts_with_any(line, language.definition_prefixes()) {
            let floor = *boundaries.last().expect("non-empty");
            let start = attached_start(&lines, i, language, floor);
            if start > floor {
                boundaries.push(start);
            }
        }
    }
    boundaries.push(lines.len());

    let mut spans = Vec::new();
    for window in boundaries.windows(2) {
        let segment = &lines[window[0]..window[1]];
        let tokens: usize = segment.iter().map(|l| token_count(l)).sum();
        if tokens == 0 {
            continue;
        }
        if tokens <= max_tokens {
            push_lines(&mut spans, segment, SpanKind::CodeDefinition);
        } else {
            split_oversized(&mut spans, segment, max_tokens);
        }
    }
    Ok(spans)
}

fn push_lines(spans: &mut Vec<ChunkSpan>, lines: &[&str], kind: SpanKind) {
    let end = lines
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |i| i + 1);
    let begin = lines[..end]
        .iter()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(end);
    let text = lines[begin..end].join("\n");
    let tokens = token_count(&text);
    if tokens == 0 {
        return;
    }
    spans.push(ChunkSpan {
        text,
        token_count: tokens,
        seq: spans.len(),
        kind,
    });
}

/// Paragraphs (blank-line separated) packed greedily; paragraphs that are
/// still too large are packed line by line, and single oversized lines are
/// cut into fixed word windows with no overlap.
fn split_oversized(spans: &mut Vec<ChunkSpan>, lines: &[&str], max_tokens: usize) {
    let mut paragraphs: Vec<&[&str]> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        while i < lines.len() && lines[i].trim().is_empty() {
            i += 1;
        }
        let start = i;
        while i < lines.len() && !lines[i].trim().is_empty() {
            i += 1;
        }
        if start < i {
            paragraphs.push(&lines[start..i]);
        }
    }

    let mut pending: Vec<&str> = Vec::new();
    let mut pending_tokens = 0;
    let flush = |spans: &mut Vec<ChunkSpan>, pending: &mut Vec<&str>, pending_tokens: &mut usize| {
        if !pending.is_empty() {
            push_lines(spans, pending, SpanKind::CodeFallback);
            pending.clear();
            *pending_tokens = 0;
        }
    };
    for para in paragraphs {
        let para_tokens: usize = para.iter().map(|l| token_count(l)).sum();
        if para_tokens > max_tokens {
            flush(spans, &mut pending, &mut pending_tokens);
            for line in para {
                let line_tokens = token_count(line);
                if line_tokens > max_tokens {
                    flush(spans, &mut pending, &mut pending_tokens);
                    let words: Vec<&str> = line.split_whitespace().collect();
                    for window in words.chunks(max_tokens) {
                        spans.push(ChunkSpan {
                            text: window.join(" "),
                            token_count: window.len(),
                            seq: spans.len(),
                            kind: SpanKind::CodeFallback,
                        });
                    }
                    continue;
                }
                if pending_tokens + line_tokens > max_tokens {
                    flush(spans, &mut pending, &mut pending_tokens);
                }
                pending.push(line);
                pending_tokens += line_tokens;
            }
            flush(spans, &mut pending, &mut pending_tokens);
            continue;
        }
        if pending_tokens + para_tokens > max_tokens {
            flush(spans, &mut pending, &mut pending_tokens);
        }
        if !pending.is_empty() {
            pending.push("");
        }
        pending.extend_from_slice(para);
        pending_tokens += para_tokens;
    }
    flush(spans, &mut pending, &mut pending_tokens);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn short_text_is_one_span() {
        let spans = semantic_chunk(&words(100), 1024, 128).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].token_count, 100);
    }

    #[test]
    fn long_text_windows_share_overlap() {
        let spans = semantic_chunk(&words(2000), 1024, 128).unwrap();
        // ceil((2000 - 1024) / (1024 - 128)) + 1
        assert_eq!(spans.len(), 3);
        let toks: Vec<Vec<&str>> = spans.iter().map(|s| s.text.split_whitespace().collect()).collect();
        assert_eq!(toks[0].len(), 1024);
        assert_eq!(toks[0][896..], toks[1][..128]);
        assert_eq!(toks[1][896..], toks[2][..128]);
        assert_eq!(toks[2].last(), Some(&"w1999"));
        assert!(spans.iter().enumerate().all(|(i, s)| s.seq == i));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(semantic_chunk("", 1024, 128), Err(Error::EmptyInput)));
        assert!(matches!(semantic_chunk(" \n\t", 1024, 128), Err(Error::EmptyInput)));
        assert!(semantic_chunk("x", 10, 10).is_err());
    }

    #[test]
    fn paragraph_break_ends_a_window() {
        let text = format!("{}\n\n{}", words(80), words(60));
        let spans = semantic_chunk(&text, 100, 10).unwrap();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].token_count, 80);
        assert_eq!(spans[1].token_count, 60);
    }

    #[test]
    fn python_functions_split_at_column_zero() {
        let src = "def a():\n    return 1\n\ndef b():\n    return 2\n";
        let spans = code_chunk(src, Language::Python, 1024).unwrap();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].text, "def a():\n    return 1");
        assert_eq!(spans[1].text, "def b():\n    return 2");
        assert!(spans.iter().all(|s| s.kind == SpanKind::CodeDefinition));
    }

    #[test]
    fn decorator_travels_with_its_function() {
        let src = "import x\n\n@cache\n@other(1)\ndef f():\n    pass\n";
        let spans = code_chunk(src, Language::Python, 1024).unwrap();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[1].text, "@cache\n@other(1)\ndef f():\n    pass");
    }

    #[test]
    fn nested_methods_do_not_start_spans() {
        let src = "class A:\n    def m(self):\n        pass\n\n    def n(self):\n        pass\n";
        let spans = code_chunk(src, Language::Python, 1024).unwrap();
        assert_eq!(spans.len(), 1);
        assert!(spans[0].text.contains("def n"));
    }

    #[test]
    fn rust_attributes_and_docs_attach() {
        let src = "use std::fmt;\n\n/// Doc.\n#[inline]\nfn a() {\n    b();\n}\n\nimpl X {\n    fn m(&self) {}\n}\n";
        let spans = code_chunk(src, Language::Rust, 1024).unwrap();
        assert_eq!(spans.len(), 3);
        assert!(spans[1].text.starts_with("/// Doc.\n#[inline]\nfn a()"));
        assert!(spans[2].text.starts_with("impl X"));
    }

    #[test]
    fn oversized_definition_falls_back() {
        let body: String = (0..50).map(|i| format!("    x{i} = {i}\n")).collect();
        let src = format!("def big():\n{body}\ndef small():\n    pass\n");
        let spans = code_chunk(&src, Language::Python, 40).unwrap();
        assert!(spans.iter().any(|s| s.kind == SpanKind::CodeFallback));
        assert!(spans.iter().all(|s| s.token_count <= 40));
        let last = spans.last().unwrap();
        assert_eq!(last.kind, SpanKind::CodeDefinition);
        assert_eq!(last.text, "def small():\n    pass");
    }

    #[test]
    fn unknown_language_uses_prose_windows() {
        let spans = code_chunk("just some words", Language::Unknown, 100).unwrap();
        assert_eq!(spans[0].kind, SpanKind::Prose);
        assert!(matches!(code_chunk("  \n", Language::Go, 10), Err(Error::EmptyInput)));
    }
}
