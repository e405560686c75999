//! Documents, mention spans, clusters and corpus I/O.

mod conll;
mod jsonl;
mod remap;
mod synthetic;

pub use conll::{parse_conll, write_conll};
pub use jsonl::{from_jsonl, to_jsonl};
pub use remap::{chunk_splitter, identity_splitter, remap_spans, unmap_clusters, TokenSplitMap};
pub use synthetic::{gen_synthetic, SyntheticConfig};

use crate::error::{Error, Result};

/// A mention identified by inclusive token indices. The head is assigned by
/// the graph layer, never parsed from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
    pub head: Option<usize>,
}

impl MentionSpan {
    pub fn new(start: usize, end: usize) -> Self {
        MentionSpan {
            start,
            end,
            head: None,
        }
    }

    pub fn with_head(start: usize, end: usize, head: usize) -> Self {
        MentionSpan {
            start,
            end,
            head: Some(head),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn key(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

/// Entity clusters: disjoint sets of mention spans, unique by (start, end)
/// across the whole document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<MentionSpan>>,
}

impl ClusterSet {
    pub fn new(clusters: Vec<Vec<MentionSpan>>) -> Self {
        ClusterSet { clusters }
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn all_spans(&self) -> Vec<MentionSpan> {
        let mut spans: Vec<MentionSpan> = self.clusters.iter().flatten().copied().collect();
        spans.sort();
        spans
    }

    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    /// Clusters with at least two mentions, in canonical order.
    pub fn non_singletons(&self) -> ClusterSet {
        let mut kept: Vec<Vec<MentionSpan>> = self
            .clusters
            .iter()
            .filter(|c| c.len() > 1)
            .cloned()
            .collect();
        for c in &mut kept {
            c.sort();
        }
        kept.sort();
        ClusterSet { clusters: kept }
    }

    /// Sorted clusters of sorted (start, end) pairs, ignoring heads.
    pub fn canonical(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out: Vec<Vec<(usize, usize)>> = self
            .clusters
            .iter()
            .map(|c| {
                let mut v: Vec<(usize, usize)> = c.iter().map(|m| m.key()).collect();
                v.sort();
                v
            })
            .collect();
        out.sort();
        out
    }

    /// Checks disjointness, non-empty clusters and span uniqueness.
    pub fn validate(&self, n_tokens: usize) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for cluster in &self.clusters {
            if cluster.is_empty() {
                return Err(Error::data("empty cluster"));
            }
            for span in cluster {
                if span.start > span.end || span.end >= n_tokens {
                    return Err(Error::data(format!(
                        "span ({}, {}) out of bounds for {} tokens",
                        span.start, span.end, n_tokens
                    )));
                }
                if let Some(h) = span.head {
                    if h < span.start || h > span.end {
                        return Err(Error::data(format!(
                            "head {} outside span ({}, {})",
                            h, span.start, span.end
                        )));
                    }
                }
                if !seen.insert(span.key()) {
                    return Err(Error::DuplicateSpan {
                        start: span.start,
                        end: span.end,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Original CoNLL columns kept verbatim so unrelated annotation layers
/// survive a parse/write round trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passthrough {
    /// One entry per token: all whitespace-separated columns of the line.
    pub columns: Vec<Vec<String>>,
    /// The original `#begin document ...` line.
    pub begin_line: String,
}

/// A tokenized document with optional gold clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    /// End-exclusive sentence boundaries; the last entry equals `tokens.len()`.
    pub sentence_bounds: Vec<usize>,
    pub gold: Option<ClusterSet>,
    pub passthrough: Option<Passthrough>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        let n = tokens.len();
        Document {
            doc_id: doc_id.into(),
            tokens,
            sentence_bounds: vec![n],
            gold: None,
            passthrough: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::data(format!("document {}: no tokens", self.doc_id)));
        }
        let bounds = &self.sentence_bounds;
        if bounds.is_empty() || *bounds.last().unwrap() != n {
            return Err(Error::data(format!(
                "document {}: sentence bounds do not cover the token range",
                self.doc_id
            )));
        }
        let mut prev = 0;
        for &b in bounds {
            if b <= prev && !(prev == 0 && b == 0) {
                return Err(Error::data(format!(
                    "document {}: sentence bounds not strictly increasing",
                    self.doc_id
                )));
            }
            prev = b;
        }
        if let Some(gold) = &self.gold {
            gold.validate(n)?;
        }
        Ok(())
    }

    pub fn gold_spans(&self) -> Vec<MentionSpan> {
        self.gold
            .as_ref()
            .map(|g| g.all_spans())
            .unwrap_or_default()
    }
}
