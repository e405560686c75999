//! Word to sub-token span remapping.
//!
//! A splitter turns each word into one or more sub-tokens. Mention spans are
//! carried to sub-token indices for encoding and mapped back to words before
//! evaluation; the `TokenSplitMap` retains the exact correspondence.

use super::{ClusterSet, Document, MentionSpan};
use crate::error::{Error, Result};

/// Exact word/sub-token correspondence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSplitMap {
    /// Per word: inclusive (first, last) sub-token range.
    pub forward: Vec<(usize, usize)>,
    /// Per sub-token: the originating word.
    pub inverse: Vec<usize>,
}

impl TokenSplitMap {
    /// Word span to sub-token span.
    pub fn map_span(&self, span: &MentionSpan) -> MentionSpan {
        MentionSpan::new(self.forward[span.start].0, self.forward[span.end].1)
    }

    /// Sub-token span back to word indices.
    pub fn unmap_span(&self, span: &MentionSpan) -> MentionSpan {
        MentionSpan::new(self.inverse[span.start], self.inverse[span.end])
    }
}

/// Splits every word of `doc` with `split` and remaps all annotation.
///
/// Errors if the splitter returns zero pieces for any word.
pub fn remap_spans(
    doc: &Document,
    split: &dyn Fn(&str) -> Vec<String>,
) -> Result<(Document, TokenSplitMap)> {
    let mut forward = Vec::with_capacity(doc.tokens.len());
    let mut inverse = Vec::new();
    let mut sub_tokens = Vec::new();
    for (w, word) in doc.tokens.iter().enumerate() {
        let pieces = split(word);
        if pieces.is_empty() {
            return Err(Error::data(format!(
                "splitter returned no pieces for word {w} ({word:?})"
            )));
        }
        let first = sub_tokens.len();
        for piece in pieces {
            inverse.push(w);
            sub_tokens.push(piece);
        }
        forward.push((first, sub_tokens.len() - 1));
    }
    let map = TokenSplitMap { forward, inverse };

    let gold = doc.gold.as_ref().map(|g| {
        ClusterSet::new(
            g.clusters
                .iter()
                .map(|c| c.iter().map(|m| map.map_span(m)).collect())
                .collect(),
        )
    });
    let sentence_bounds = doc
        .sentence_bounds
        .iter()
        .map(|&b| map.forward[b - 1].1 + 1)
        .collect();
    let remapped = Document {
        doc_id: doc.doc_id.clone(),
        tokens: sub_tokens,
        sentence_bounds,
        gold,
        passthrough: None,
    };
    remapped.validate()?;
    Ok((remapped, map))
}

/// Maps sub-token clusters back to word indices, dropping heads.
pub fn unmap_clusters(clusters: &ClusterSet, map: &TokenSplitMap) -> ClusterSet {
    ClusterSet::new(
        clusters
            .clusters
            .iter()
            .map(|c| c.iter().map(|m| map.unmap_span(m)).collect())
            .collect(),
    )
}

/// The default toy splitter: words longer than `max_chars` characters are cut
/// into `max_chars`-character chunks. A deterministic stand-in for a learned
/// sub-word tokenizer.
pub fn chunk_splitter(max_chars: usize) -> impl Fn(&str) -> Vec<String> {
    move |word: &str| {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() <= max_chars {
            return vec![word.to_string()];
        }
        chars
            .chunks(max_chars)
            .map(|c| c.iter().collect())
            .collect()
    }
}

pub fn identity_splitter() -> impl Fn(&str) -> Vec<String> {
    |word: &str| vec![word.to_string()]
}
