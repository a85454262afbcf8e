//! Scenario-term inverted index and the scope value built on it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Consultation, Corpus, ItemId};

/// English function words dropped by [`normalize`].
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by",
    "can", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "his", "how",
    "i", "if", "in", "into", "is", "it", "its", "me", "my", "no", "not", "of", "on", "or", "our",
    "she", "so", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "to", "too", "was", "we", "were", "what", "which", "who", "will", "with", "you",
    "your",
];

fn is_stopword(tok: &str) -> bool {
    STOPWORDS.binary_search(&tok).is_ok()
}

/// Lowercases, splits on anything that is not alphanumeric, and drops
/// stopwords and single-character tokens. Token order is preserved.
pub fn normalize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() > 1 && !is_stopword(t))
        .collect()
}

/// Distinct normalized tokens of `text`.
pub fn token_set(text: &str) -> BTreeSet<String> {
    normalize(text).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeParams {
    pub lambda_thresh: u32,
}

impl Default for ScopeParams {
    fn default() -> Self {
        Self { lambda_thresh: 4 }
    }
}

impl ScopeParams {
    pub fn new(lambda_thresh: u32) -> Option<Self> {
        (lambda_thresh >= 1).then_some(Self { lambda_thresh })
    }
}

/// Term → sorted, deduplicated item ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<ItemId>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PostingRecord {
    term: String,
    items: Vec<ItemId>,
}

impl InvertedIndex {
    pub fn postings(&self, term: &str) -> Option<&[ItemId]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    /// Number of items carrying `term`.
    pub fn term_count(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.postings.contains_key(term)
    }

    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// One `{"term", "items"}` object per line, terms in lexicographic order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (term, items) in &self.postings {
            let rec = PostingRecord {
                term: term.clone(),
                items: items.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, String> {
        let mut postings = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PostingRecord =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            let mut items = rec.items;
            items.sort();
            items.dedup();
            postings.insert(rec.term, items);
        }
        Ok(Self { postings })
    }
}

pub fn build_index(corpus: &Corpus) -> InvertedIndex {
    let mut postings: BTreeMap<String, BTreeSet<ItemId>> = BTreeMap::new();
    for item in corpus.items.values() {
        let fields = std::iter::once(item.title.as_str()).chain(item.attributes.iter().map(String::as_str));
        for field in fields {
            for tok in normalize(field) {
                postings.entry(tok).or_default().insert(item.id.clone());
            }
        }
    }
    InvertedIndex {
        postings: postings
            .into_iter()
            .map(|(t, ids)| (t, ids.into_iter().collect()))
            .collect(),
    }
}

/// Index terms present as tokens of `text`.
pub fn matched_terms_in(index: &InvertedIndex, text: &str) -> BTreeSet<String> {
    normalize(text)
        .into_iter()
        .filter(|t| index.contains(t))
        .collect()
}

pub fn matched_terms(index: &InvertedIndex, c: &Consultation) -> BTreeSet<String> {
    matched_terms_in(index, &c.text())
}

/// `x / λ` below the threshold, 1 at or above it.
pub fn f_scope(matched: usize, p: ScopeParams) -> f64 {
    let lambda = p.lambda_thresh as usize;
    if matched < lambda {
        matched as f64 / lambda as f64
    } else {
        1.0
    }
}

pub fn scope_value(index: &InvertedIndex, c: &Consultation, p: ScopeParams) -> f64 {
    f_scope(matched_terms(index, c).len(), p)
}
