//! Knowledge corpus: entry schema, templated generator, JSONL I/O.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::McpError;

pub const DEFAULT_CORPUS_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    Science,
    History,
    Technology,
    Arts,
    Sports,
    Geography,
    Literature,
    Mathematics,
}

impl Domain {
    pub const ALL: [Domain; 8] = [
        Domain::Science,
        Domain::History,
        Domain::Technology,
        Domain::Arts,
        Domain::Sports,
        Domain::Geography,
        Domain::Literature,
        Domain::Mathematics,
    ];
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub domain: Domain,
    pub text: String,
}

/// Generator tables for one domain.
#[derive(Debug, Clone, Deserialize)]
pub struct DomainSeed {
    pub domain: Domain,
    pub prefix: String,
    pub adjectives: Vec<String>,
    pub nouns: Vec<String>,
    pub number_range: [u64; 2],
    pub templates: Vec<String>,
}

impl DomainSeed {
    /// All `adjective noun` subjects in table order.
    pub fn subjects(&self) -> Vec<String> {
        self.adjectives
            .iter()
            .flat_map(|a| self.nouns.iter().map(move |n| format!("{a} {n}")))
            .collect()
    }
}

/// Bundled generator tables plus question templates.
#[derive(Debug, Clone, Deserialize)]
pub struct CorpusSeed {
    pub domains: Vec<DomainSeed>,
    /// Fresh-question templates with a `{s}` subject slot.
    pub questions: Vec<String>,
    /// Follow-up templates with an `{f}` fact slot.
    pub followups: Vec<String>,
}

impl CorpusSeed {
    pub fn bundled() -> &'static CorpusSeed {
        static SEED: OnceLock<CorpusSeed> = OnceLock::new();
        SEED.get_or_init(|| {
            serde_json::from_str(include_str!("../../data/corpus_seed.json")).expect("bundled corpus seed is valid")
        })
    }

    pub fn domain(&self, domain: Domain) -> Option<&DomainSeed> {
        self.domains.iter().find(|d| d.domain == domain)
    }
}

/// Formats an integer with comma thousands separators.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn fill(template: &str, subject: &str, rng: &mut ChaCha8Rng, range: [u64; 2]) -> String {
    let (lo, hi) = (range[0].max(1) as f64, range[1].max(range[0]).max(1) as f64);
    let mut out = template.replace("{s}", subject);
    if out.contains("{n}") {
        let n = (rng.random_range(lo.ln()..=hi.ln())).exp().round() as u64;
        out = out.replace("{n}", &group_thousands(n));
    }
    if out.contains("{y}") {
        out = out.replace("{y}", &rng.random_range(1450..=2020u32).to_string());
    }
    if out.contains("{d}") {
        out = out.replace("{d}", &format!("{:.2}", rng.random_range(0.5..25.0f64)));
    }
    out
}

/// Generates the templated corpus: every subject of every domain under every
/// template, with ids `<prefix>_<NNN>`.
pub fn generate_corpus(seed: u64) -> Vec<CorpusEntry> {
    let tables = CorpusSeed::bundled();
    let mut out = Vec::new();
    for (stream, d) in tables.domains.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let mut k = 0;
        for subject in d.subjects() {
            for template in &d.templates {
                k += 1;
                out.push(CorpusEntry {
                    id: format!("{}_{k:03}", d.prefix),
                    domain: d.domain,
                    text: fill(template, &subject, &mut rng, d.number_range),
                });
            }
        }
    }
    out
}

fn check_unique(entries: &[CorpusEntry]) -> Result<(), McpError> {
    let mut seen = BTreeSet::new();
    for e in entries {
        if !seen.insert(e.id.as_str()) {
            return Err(McpError::Config(format!("duplicate corpus id {:?}", e.id)));
        }
    }
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>, McpError> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry =
            serde_json::from_str(&line).map_err(|e| McpError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        entries.push(entry);
    }
    check_unique(&entries)?;
    Ok(entries)
}

pub fn save_corpus(path: &Path, entries: &[CorpusEntry]) -> Result<(), McpError> {
    check_unique(entries)?;
    let mut w = BufWriter::new(File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
