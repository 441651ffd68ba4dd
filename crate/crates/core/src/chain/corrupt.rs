//! Simulated responder: corruption operators applied to retrieved text.
//!
//! Sentences are handled as whitespace-separated raw words so that an
//! untouched sentence renders byte-identically. Noun-phrase spans are found
//! with the same tagger and grammar as fact extraction.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::text::{chunk_spans, tag_word, tokenize, Tag, Tagged, Token};

const SYNONYMS_TSV: &str = include_str!("../../data/synonyms.tsv");

/// Bundled `word -> replacement` table for non-chunk words.
pub fn synonyms() -> &'static HashMap<String, String> {
    static TABLE: OnceLock<HashMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        SYNONYMS_TSV
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let (a, b) = l.split_once('\t')?;
                Some((a.trim().to_lowercase(), b.trim().to_owned()))
            })
            .collect()
    })
}

/// Per-operator probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRates {
    /// Per chunk: drop the chunk.
    pub delete: f64,
    /// Per chunk: replace it with a chunk from another corpus sentence.
    pub substitute: f64,
    /// Per number: change one digit.
    pub perturb: f64,
    /// Per response: paraphrase (synonym swaps plus sentence reordering).
    pub paraphrase: f64,
    /// Per eligible word, when a paraphrase fires.
    pub synonym: f64,
}

impl CorruptionRates {
    pub const NONE: CorruptionRates = CorruptionRates {
        delete: 0.0,
        substitute: 0.0,
        perturb: 0.0,
        paraphrase: 0.0,
        synonym: 0.0,
    };

    /// Rates driven by a single intensity `p`: deletion, substitution and
    /// digit perturbation at `p / 3` each, paraphrase at `p`.
    pub fn from_intensity(p: f64, synonym: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            delete: p / 3.0,
            substitute: p / 3.0,
            perturb: p / 3.0,
            paraphrase: p,
            synonym,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RawWord {
    core: String,
    suffix: String,
    /// Tag when the core is exactly one word token.
    tag: Option<Tag>,
}

fn split_suffix(raw: &str) -> (String, String) {
    let cut = raw
        .char_indices()
        .rev()
        .take_while(|&(_, c)| matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | ')' | '"'))
        .last()
        .map_or(raw.len(), |(i, _)| i);
    (raw[..cut].to_owned(), raw[cut..].to_owned())
}

fn raw_words(sentence: &str) -> Vec<RawWord> {
    sentence
        .split_whitespace()
        .map(|raw| {
            let (core, suffix) = split_suffix(raw);
            let tokens = tokenize(&core);
            let tag = match tokens.as_slice() {
                [Token::Word(w)] => Some(tag_word(w)),
                _ => None,
            };
            RawWord { core, suffix, tag }
        })
        .collect()
}

/// Chunk spans over raw-word indices.
fn raw_chunk_spans(words: &[RawWord]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut segment: Vec<Tagged> = Vec::new();
    let flush = |start: usize, segment: &mut Vec<Tagged>, spans: &mut Vec<(usize, usize)>| {
        for (s, e) in chunk_spans(segment) {
            spans.push((start + s, start + e));
        }
        segment.clear();
    };
    for (i, w) in words.iter().enumerate() {
        match w.tag {
            Some(tag) => {
                segment.push(Tagged {
                    word: w.core.to_lowercase(),
                    tag,
                });
                if !w.suffix.is_empty() {
                    flush(start, &mut segment, &mut spans);
                    start = i + 1;
                }
            }
            None => {
                flush(start, &mut segment, &mut spans);
                start = i + 1;
            }
        }
    }
    flush(start, &mut segment, &mut spans);
    spans
}

/// Every multi-word chunk of the given sentences, as raw-word cores.
pub fn chunk_pool<'a>(sentences: impl IntoIterator<Item = &'a str>) -> Vec<Vec<String>> {
    let mut pool = Vec::new();
    for s in sentences {
        let words = raw_words(s);
        for (a, b) in raw_chunk_spans(&words) {
            if b - a >= 2 {
                pool.push(words[a..b].iter().map(|w| w.core.to_lowercase()).collect());
            }
        }
    }
    pool
}

fn perturb_digit<R: Rng>(core: &str, rng: &mut R) -> String {
    let positions: Vec<usize> = core
        .char_indices()
        .filter(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i)
        .collect();
    let Some(&pos) = positions.get(rng.random_range(0..positions.len().max(1))) else {
        return core.to_owned();
    };
    let old = core.as_bytes()[pos] - b'0';
    let mut new = (old + rng.random_range(1..10u8)) % 10;
    if pos == positions[0] && new == 0 {
        new = if old == 1 { 2 } else { 1 };
    }
    let mut out = core.to_owned();
    out.replace_range(pos..pos + 1, &char::from(b'0' + new).to_string());
    out
}

fn match_case(template: &str, replacement: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = replacement.chars();
        c.next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default()
    } else {
        replacement.to_owned()
    }
}

fn corrupt_sentence<R: Rng>(
    sentence: &str,
    rates: &CorruptionRates,
    pool: &[Vec<String>],
    swap_synonyms: bool,
    rng: &mut R,
) -> String {
    let words = raw_words(sentence);
    let spans = raw_chunk_spans(&words);
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    let mut i = 0;
    let mut spans = spans.into_iter().peekable();
    while i < words.len() {
        if let Some(&(a, b)) = spans.peek() {
            if a == i {
                spans.next();
                let u: f64 = rng.random();
                let suffix = &words[b - 1].suffix;
                if u < rates.delete {
                    if !suffix.is_empty() {
                        match out.last_mut() {
                            Some(prev) => prev.push_str(suffix),
                            None => out.push(suffix.clone()),
                        }
                    }
                } else if u < rates.delete + rates.substitute && !pool.is_empty() {
                    let sub = &pool[rng.random_range(0..pool.len())];
                    let n = sub.len();
                    for (k, w) in sub.iter().enumerate() {
                        let mut w = if k == 0 {
                            match_case(&words[a].core, w)
                        } else {
                            w.clone()
                        };
                        if k + 1 == n {
                            w.push_str(suffix);
                        }
                        out.push(w);
                    }
                } else {
                    for w in &words[a..b] {
                        let core = if w.tag == Some(Tag::Num) && rng.random::<f64>() < rates.perturb {
                            perturb_digit(&w.core, rng)
                        } else {
                            w.core.clone()
                        };
                        out.push(format!("{core}{}", w.suffix));
                    }
                }
                i = b;
                continue;
            }
        }
        let w = &words[i];
        let mut core = w.core.clone();
        if swap_synonyms && matches!(w.tag, Some(Tag::Verb | Tag::Other)) {
            if let Some(rep) = synonyms().get(&w.core.to_lowercase()) {
                if rng.random::<f64>() < rates.synonym {
                    core = match_case(&w.core, rep);
                }
            }
        } else if w.tag == Some(Tag::Num) && rng.random::<f64>() < rates.perturb {
            core = perturb_digit(&w.core, rng);
        }
        out.push(format!("{core}{}", w.suffix));
        i += 1;
    }
    out.join(" ")
}

/// Applies the corruption operators to a list of sentences and renders the
/// result joined by single spaces. With all rates zero the output equals
/// `sentences.join(" ")`.
pub fn corrupt<R: Rng>(sentences: &[String], rates: &CorruptionRates, pool: &[Vec<String>], rng: &mut R) -> String {
    let paraphrase = rng.random::<f64>() < rates.paraphrase;
    let mut out: Vec<String> = sentences
        .iter()
        .map(|s| corrupt_sentence(s, rates, pool, paraphrase, rng))
        .filter(|s| !s.trim().is_empty())
        .collect();
    if paraphrase {
        out.shuffle(rng);
    }
    out.join(" ")
}
