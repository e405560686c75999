//! Synthetic gold-annotated corpora for desk-scale training.
//!
//! Every mention of an entity repeats the same distinctive token pattern, so
//! a small model can learn detection and linking from a handful of documents.
//! By default the mentions of an entity are placed as a contiguous run with
//! filler between mentions; `scattered` interleaves entities instead, which
//! makes documents structurally harder and is used by round-trip stress tests
//! rather than training.

use super::{ClusterSet, Document, MentionSpan};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    /// Inclusive token-count range per document.
    pub doc_len: (usize, usize),
    /// Inclusive range of entities per document.
    pub n_entities: (usize, usize),
    /// Inclusive range of mentions per entity.
    pub mentions_per_entity: (usize, usize),
    /// Inclusive range of tokens per mention.
    pub mention_len: (usize, usize),
    pub vocab_size: usize,
    /// Probability that a placed mention receives a nested singleton mention
    /// strictly inside it.
    pub nesting_prob: f64,
    /// Interleave entity mentions instead of keeping each entity contiguous.
    pub scattered: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 20,
            doc_len: (30, 60),
            n_entities: (2, 4),
            mentions_per_entity: (2, 4),
            mention_len: (1, 3),
            vocab_size: 60,
            nesting_prob: 0.0,
            scattered: false,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let ranges = [
            ("doc_len", self.doc_len),
            ("n_entities", self.n_entities),
            ("mentions_per_entity", self.mentions_per_entity),
            ("mention_len", self.mention_len),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi || hi == 0 {
                return Err(Error::data(format!("empty {name} range ({lo}, {hi})")));
            }
        }
        if self.vocab_size < 4 {
            return Err(Error::data("vocab_size must be at least 4"));
        }
        if !(0.0..=1.0).contains(&self.nesting_prob) {
            return Err(Error::data("nesting_prob must lie in [0, 1]"));
        }
        // even the smallest sampleable document must fit the smallest
        // sampleable mention layout
        let min_mentions = self.n_entities.0 * self.mentions_per_entity.0;
        let min_required = min_mentions * self.mention_len.0 + min_mentions.saturating_sub(1);
        if min_required > self.doc_len.1 {
            return Err(Error::data(format!(
                "infeasible synthetic config: at least {min_required} tokens of mentions \
                 and gaps cannot fit in documents of at most {} tokens",
                self.doc_len.1
            )));
        }
        Ok(())
    }
}

/// Generates `cfg.n_docs` documents, reproducibly per seed.
pub fn gen_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let mut docs = Vec::with_capacity(cfg.n_docs);
    for d in 0..cfg.n_docs {
        docs.push(gen_document(cfg, seed, d, &mut rng)?);
    }
    Ok(docs)
}

struct Placement {
    entity: usize,
    length: usize,
}

fn gen_document(cfg: &SyntheticConfig, seed: u64, index: usize, rng: &mut Rng) -> Result<Document> {
    let mut n = rng.range(cfg.doc_len.0, cfg.doc_len.1);
    let mut n_entities = rng.range(cfg.n_entities.0, cfg.n_entities.1);
    let filler_vocab = cfg.vocab_size / 2;

    let mut lengths: Vec<usize> = (0..n_entities)
        .map(|_| rng.range(cfg.mention_len.0, cfg.mention_len.1))
        .collect();
    let mut counts: Vec<usize> = (0..n_entities)
        .map(|_| rng.range(cfg.mentions_per_entity.0, cfg.mentions_per_entity.1))
        .collect();

    // Shrink the sampled layout until it fits: drop mentions above the
    // minimum, then whole entities, then shorten patterns; as a last resort
    // grow the document (validation guarantees the minimal layout fits the
    // maximal length).
    let required = |counts: &[usize], lengths: &[usize]| {
        let mentions: usize = counts.iter().sum();
        counts
            .iter()
            .zip(lengths.iter())
            .map(|(c, l)| c * l)
            .sum::<usize>()
            + mentions.saturating_sub(1)
    };
    while required(&counts, &lengths) > n {
        if let Some(e) = (0..n_entities)
            .filter(|&e| counts[e] > cfg.mentions_per_entity.0)
            .max_by_key(|&e| counts[e])
        {
            counts[e] -= 1;
        } else if n_entities > cfg.n_entities.0 {
            n_entities -= 1;
            counts.pop();
            lengths.pop();
        } else if let Some(e) = (0..n_entities).find(|&e| lengths[e] > cfg.mention_len.0) {
            lengths[e] -= 1;
        } else {
            n = required(&counts, &lengths);
            break;
        }
    }

    // One distinctive pattern per entity, drawn from the upper vocabulary half.
    let mut patterns: Vec<Vec<String>> = Vec::with_capacity(n_entities);
    let mut used_first = std::collections::BTreeSet::new();
    for &len in &lengths {
        let mut pattern = Vec::with_capacity(len);
        let mut first = rng.below(filler_vocab, cfg.vocab_size);
        for _ in 0..50 {
            if used_first.insert(first) {
                break;
            }
            first = rng.below(filler_vocab, cfg.vocab_size);
        }
        pattern.push(format!("n{first}"));
        for _ in 1..len {
            pattern.push(format!("n{}", rng.below(filler_vocab, cfg.vocab_size)));
        }
        patterns.push(pattern);
    }

    // Order of mention placements: contiguous per entity by default.
    let mut placements: Vec<Placement> = Vec::new();
    for (entity, pattern) in patterns.iter().enumerate() {
        for _ in 0..counts[entity] {
            placements.push(Placement {
                entity,
                length: pattern.len(),
            });
        }
    }
    if cfg.scattered {
        rng.shuffle(&mut placements);
    }

    // Distribute the slack over the gaps (one guaranteed filler between
    // consecutive mentions, document edges may be flush).
    let needed: usize =
        placements.iter().map(|p| p.length).sum::<usize>() + placements.len().saturating_sub(1);
    let m = placements.len();
    let mut gaps = vec![0usize; m + 1];
    for gap in gaps.iter_mut().take(m).skip(1) {
        *gap = 1;
    }
    let mut slack = n - needed;
    while slack > 0 {
        let g = rng.below(0, m + 1);
        gaps[g] += 1;
        slack -= 1;
    }

    let mut tokens: Vec<Option<String>> = vec![None; n];
    let mut cluster_spans: Vec<Vec<MentionSpan>> = vec![Vec::new(); n_entities];
    let mut all_spans = std::collections::BTreeSet::new();
    let mut nested: Vec<MentionSpan> = Vec::new();
    let mut pos = gaps[0];
    for (i, placement) in placements.iter().enumerate() {
        let pattern = &patterns[placement.entity];
        let span = MentionSpan::new(pos, pos + placement.length - 1);
        for (k, tok) in pattern.iter().enumerate() {
            tokens[pos + k] = Some(tok.clone());
        }
        cluster_spans[placement.entity].push(span);
        all_spans.insert(span.key());
        pos += placement.length + gaps[i + 1];

        if placement.length >= 2 && rng.coin(cfg.nesting_prob as crate::Scalar) {
            let inner_len = rng.range(1, placement.length - 1);
            let offset = rng.range(0, placement.length - inner_len);
            let inner = MentionSpan::new(span.start + offset, span.start + offset + inner_len - 1);
            if all_spans.insert(inner.key()) {
                nested.push(inner);
            }
        }
    }

    let tokens: Vec<String> = tokens
        .into_iter()
        .map(|t| t.unwrap_or_else(|| format!("w{}", rng.below(0, filler_vocab))))
        .collect();

    let mut clusters: Vec<Vec<MentionSpan>> =
        cluster_spans.into_iter().filter(|c| !c.is_empty()).collect();
    for span in nested {
        clusters.push(vec![span]);
    }

    let mut sentence_bounds = Vec::new();
    let mut b = 0;
    while b < n {
        b = (b + rng.range(5, 12)).min(n);
        sentence_bounds.push(b);
    }

    let doc = Document {
        doc_id: format!("synth{seed}-{index:04}"),
        tokens,
        sentence_bounds,
        gold: Some(ClusterSet::new(clusters)),
        passthrough: None,
    };
    doc.validate()?;
    Ok(doc)
}
