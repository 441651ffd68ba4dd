//! Tokenization, part-of-speech tagging and noun-phrase chunking.
//!
//! Everything here is deterministic and locale-independent. Tags come from a
//! bundled lexicon with a small suffix-rule fallback, and chunks follow the
//! grammar `DET? (ADJ|NUM)* NOUN+`.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

const LEXICON_TSV: &str = include_str!("../data/lexicon.tsv");

/// A token produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    /// A lowercased word with numeric separators removed.
    Word(String),
    /// Dropped punctuation. Chunks never span a break.
    Break,
}

/// Coarse part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Det,
    Adj,
    Noun,
    Verb,
    Num,
    Other,
}

impl Tag {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "DET" => Some(Tag::Det),
            "ADJ" => Some(Tag::Adj),
            "NOUN" => Some(Tag::Noun),
            "VERB" => Some(Tag::Verb),
            "NUM" => Some(Tag::Num),
            "OTHER" => Some(Tag::Other),
            _ => None,
        }
    }

    /// True for tags that can appear inside a noun-phrase chunk.
    pub fn is_chunk_tag(self) -> bool {
        matches!(self, Tag::Det | Tag::Adj | Tag::Noun | Tag::Num)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tag::Det => "DET",
            Tag::Adj => "ADJ",
            Tag::Noun => "NOUN",
            Tag::Verb => "VERB",
            Tag::Num => "NUM",
            Tag::Other => "OTHER",
        };
        f.write_str(s)
    }
}

fn lexicon() -> &'static HashMap<String, Tag> {
    static LEXICON: OnceLock<HashMap<String, Tag>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut map = HashMap::new();
        for line in LEXICON_TSV.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(word), Some(tag)) = (parts.next(), parts.next()) else {
                continue;
            };
            if let Some(tag) = Tag::parse(tag.trim()) {
                map.entry(word.trim().to_lowercase()).or_insert(tag);
            }
        }
        map
    })
}

/// Splits text into lowercased word tokens and punctuation breaks.
///
/// Whitespace separates tokens silently. Punctuation separates tokens and
/// leaves a [`Token::Break`], except for characters that are part of a
/// number or a compound: `,` and `_` between digits are removed
/// (`299,792,458` becomes `299792458`), `.` between digits is kept, a
/// leading `$` before a digit and a `%` after a digit are kept, `/` between
/// alphanumerics is kept (`m/s`), and `-` or an apostrophe between letters is
/// kept.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        tokenize_piece(piece, &mut out);
    }
    out
}

fn tokenize_piece(piece: &str, out: &mut Vec<Token>) {
    let chars: Vec<char> = piece.chars().collect();
    let mut buf = String::new();

    let flush = |buf: &mut String, out: &mut Vec<Token>| {
        if !buf.is_empty() {
            out.push(Token::Word(std::mem::take(buf).to_lowercase()));
        }
    };
    let brk = |buf: &mut String, out: &mut Vec<Token>| {
        flush(buf, out);
        if out.last() != Some(&Token::Break) {
            out.push(Token::Break);
        }
    };

    for (i, &c) in chars.iter().enumerate() {
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let next = chars.get(i + 1).copied();
        let digit = |c: Option<char>| c.is_some_and(|c| c.is_ascii_digit());
        let alnum = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
        let alpha = |c: Option<char>| c.is_some_and(char::is_alphabetic);

        if c.is_alphanumeric() {
            buf.push(c);
            continue;
        }
        match c {
            '$' if buf.is_empty() && digit(next) => buf.push(c),
            '%' if !buf.is_empty() && digit(prev) => {
                buf.push(c);
                flush(&mut buf, out);
            }
            ',' | '_' if !buf.is_empty() && digit(prev) && digit(next) => {}
            '.' if !buf.is_empty() && digit(prev) && digit(next) => buf.push(c),
            '/' if !buf.is_empty() && alnum(prev) && alnum(next) => buf.push(c),
            '-' if !buf.is_empty() && alpha(prev) && alpha(next) => buf.push(c),
            '\'' | '\u{2019}' if !buf.is_empty() && alpha(prev) && alpha(next) => buf.push('\''),
            _ => brk(&mut buf, out),
        }
    }
    flush(&mut buf, out);
}

/// Returns only the word tokens of `text`, in order.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|t| match t {
            Token::Word(w) => Some(w),
            Token::Break => None,
        })
        .collect()
}

/// Tags a single lowercased word.
pub fn tag_word(word: &str) -> Tag {
    let first = word.chars().next();
    if first.is_some_and(|c| c.is_ascii_digit() || c == '$') {
        return Tag::Num;
    }
    if let Some(&tag) = lexicon().get(word) {
        return tag;
    }
    suffix_tag(word)
}

fn suffix_tag(word: &str) -> Tag {
    if !word.chars().any(char::is_alphabetic) {
        return Tag::Other;
    }
    if word.chars().count() > 4 {
        if word.ends_with("ly") {
            return Tag::Other;
        }
        const NOUN: [&str; 7] = ["tion", "sion", "ness", "ment", "ity", "ism", "ship"];
        if NOUN.iter().any(|s| word.ends_with(s)) {
            return Tag::Noun;
        }
        const ADJ: [&str; 6] = ["ous", "ful", "ive", "ical", "able", "ible"];
        if ADJ.iter().any(|s| word.ends_with(s)) {
            return Tag::Adj;
        }
        if word.ends_with("ed") {
            return Tag::Verb;
        }
    }
    Tag::Noun
}

/// A tagged word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagged {
    pub word: String,
    pub tag: Tag,
}

/// Tokenizes and tags text, returning break-separated segments.
pub fn tagged_segments(text: &str) -> Vec<Vec<Tagged>> {
    let mut segments = vec![Vec::new()];
    for token in tokenize(text) {
        match token {
            Token::Word(word) => {
                let tag = tag_word(&word);
                segments.last_mut().expect("nonempty").push(Tagged { word, tag });
            }
            Token::Break => segments.push(Vec::new()),
        }
    }
    segments.retain(|s| !s.is_empty());
    segments
}

/// Finds the chunk spans `[start, end)` in one segment.
pub fn chunk_spans(segment: &[Tagged]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let n = segment.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        if segment[j].tag == Tag::Det {
            j += 1;
        }
        while j < n && matches!(segment[j].tag, Tag::Adj | Tag::Num) {
            j += 1;
        }
        let mut k = j;
        while k < n && segment[k].tag == Tag::Noun {
            k += 1;
        }
        if k > j {
            spans.push((i, k));
            i = k;
        } else {
            i += 1;
        }
    }
    spans
}

/// Returns every noun-phrase chunk in `text` as a token sequence, in order of
/// appearance. Single-token chunks are included; callers filter them.
pub fn noun_phrases(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for segment in tagged_segments(text) {
        for (s, e) in chunk_spans(&segment) {
            out.push(segment[s..e].iter().map(|t| t.word.clone()).collect());
        }
    }
    out
}

/// Counts non-overlapping occurrences of `needle` inside the break-separated
/// word segments of `text`.
pub fn count_occurrences(segments: &[Vec<String>], needle: &[String]) -> usize {
    if needle.is_empty() {
        return 0;
    }
    let mut count = 0;
    for seg in segments {
        let mut i = 0;
        while i + needle.len() <= seg.len() {
            if seg[i..i + needle.len()] == *needle {
                count += 1;
                i += needle.len();
            } else {
                i += 1;
            }
        }
    }
    count
}

/// Word segments of `text` split at punctuation breaks.
pub fn word_segments(text: &str) -> Vec<Vec<String>> {
    tagged_segments(text)
        .into_iter()
        .map(|seg| seg.into_iter().map(|t| t.word).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Token {
        Token::Word(s.to_string())
    }

    #[test]
    fn numeric_separators_are_stripped() {
        assert_eq!(tokenize("299,792,458"), vec![w("299792458")]);
        assert_eq!(tokenize("1_000"), vec![w("1000")]);
        assert_eq!(tokenize("3.14"), vec![w("3.14")]);
    }

    #[test]
    fn currency_percent_and_units_survive() {
        assert_eq!(tokenize("$94.8B"), vec![w("$94.8b")]);
        assert_eq!(tokenize("2.5%"), vec![w("2.5%")]);
        assert_eq!(tokenize("m/s."), vec![w("m/s"), Token::Break]);
    }

    #[test]
    fn punctuation_breaks_and_case_folds() {
        assert_eq!(
            tokenize("Paris, France."),
            vec![w("paris"), Token::Break, w("france"), Token::Break]
        );
        assert_eq!(tokenize("well-known"), vec![w("well-known")]);
        assert_eq!(tokenize("Apple\u{2019}s"), vec![w("apple's")]);
    }

    #[test]
    fn tagger_rules() {
        assert_eq!(tag_word("the"), Tag::Det);
        assert_eq!(tag_word("approximately"), Tag::Other);
        assert_eq!(tag_word("299792458"), Tag::Num);
        assert_eq!(tag_word("information"), Tag::Noun);
        assert_eq!(tag_word("zorblax"), Tag::Noun);
        assert_eq!(tag_word("quickly"), Tag::Other);
        assert_eq!(tag_word("station"), Tag::Noun);
        assert_eq!(tag_word("famous"), Tag::Adj);
    }

    #[test]
    fn chunks_follow_grammar() {
        let chunks = noun_phrases("The speed of light in vacuum is approximately 299,792,458 m/s.");
        let joined: Vec<String> = chunks.iter().map(|c| c.join(" ")).collect();
        assert_eq!(joined, vec!["the speed", "light", "vacuum", "299792458 m/s"]);
    }

    #[test]
    fn chunks_do_not_cross_breaks() {
        let chunks = noun_phrases("the storming of the bastille. paris hosts");
        let joined: Vec<String> = chunks.iter().map(|c| c.join(" ")).collect();
        assert_eq!(joined, vec!["the storming", "the bastille", "paris"]);
    }

    #[test]
    fn determiner_without_noun_is_skipped() {
        let chunks = noun_phrases("the very large capital");
        let joined: Vec<String> = chunks.iter().map(|c| c.join(" ")).collect();
        assert_eq!(joined, vec!["large capital"]);
    }

    #[test]
    fn occurrences_are_non_overlapping() {
        let segs = vec![vec!["a".to_string(), "a".into(), "a".into()]];
        assert_eq!(count_occurrences(&segs, &["a".to_string(), "a".into()]), 1);
        assert_eq!(count_occurrences(&segs, &["a".to_string()]), 3);
    }
}
