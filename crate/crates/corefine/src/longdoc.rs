//! Length management: overlapping windows with in-order decoding and graph
//! union, the reduced-document two-stage pipeline, and plain truncation.

use std::collections::BTreeMap;

use crate::corpus::{Document, MentionSpan};
use crate::encoder::encode;
use crate::error::{Error, Result};
use crate::graph::{assign_heads_lossy, CorefGraph, GraphKind, RelationCode, COREF};
use crate::mat::Mat;
use crate::model::{EncodedDoc, Model};
use crate::objective::mention_scores;
use crate::refine::{
    run_refinement, select_mention_cells, RefineMode, RefinementConfig, RefinementTrace,
};
use crate::Scalar;

/// Overlapping segment plan: windows of size `window` starting every
/// `window / 2` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub window: usize,
    /// (start, end) token ranges, end exclusive, in decoding order.
    pub segments: Vec<(usize, usize)>,
}

pub fn plan_windows(n: usize, window: usize) -> Result<WindowPlan> {
    if window < 2 {
        return Err(Error::data("window size must be at least 2"));
    }
    if window % 2 != 0 {
        return Err(Error::data(format!("window size {window} must be even")));
    }
    if n == 0 {
        return Err(Error::data("cannot window an empty document"));
    }
    let stride = window / 2;
    let mut segments = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(n);
        segments.push((start, end));
        if end == n {
            break;
        }
        start += stride;
    }
    Ok(WindowPlan { window, segments })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowDiagnostics {
    /// Decoded overlap cells carried into later segments' seed graphs.
    pub seed_cells_used: usize,
    /// Decoded cells whose span crossed the segment boundary and could not
    /// be carried into the next segment's seed graph.
    pub seed_cells_dropped: usize,
    /// Overlap cells re-predicted with a different nonzero code; the later
    /// segment wins.
    pub merge_conflicts: usize,
}

/// Decodes a document segment by segment. The first segment refines from the
/// zero graph; each later segment is seeded with the already-decoded
/// subgraph of the overlap region. The union of the per-segment outputs,
/// with later segments winning conflicts, forms the final graph.
pub fn decode_windows(
    doc: &Document,
    model: &Model,
    cfg: &RefinementConfig,
    window: usize,
) -> Result<(CorefGraph, WindowDiagnostics)> {
    let n = doc.len();
    let plan = plan_windows(n, window)?;
    let full = EncodedDoc::from_document(doc, &model.vocab);
    let mut merged = CorefGraph::new(n, GraphKind::Output);
    let mut diagnostics = WindowDiagnostics::default();
    let mut covered = 0usize;

    for &(start, end) in &plan.segments {
        let len = end - start;
        let seed = if covered > start {
            let mut seed = CorefGraph::new(len, GraphKind::Output);
            let mut any = false;
            for (i, j, code) in merged.cells() {
                let i_in = i >= start && i < covered;
                let j_in = j >= start && j < covered;
                if i_in && j_in {
                    seed.set_raw(i - start, j - start, code);
                    diagnostics.seed_cells_used += 1;
                    any = true;
                } else if i_in || j_in {
                    diagnostics.seed_cells_dropped += 1;
                }
            }
            if any {
                Some(seed)
            } else {
                None
            }
        } else {
            None
        };

        let sample = EncodedDoc {
            doc_id: format!("{}@{start}..{end}", doc.doc_id),
            token_ids: full.token_ids[start..end].to_vec(),
            positions: (0..len).collect(),
            extra: None,
        };
        let trace = run_refinement(&sample, &model.params, cfg, &RefineMode::Joint { seed })?;
        for (i, j, code) in trace.final_graph().cells() {
            let (gi, gj) = (i + start, j + start);
            let existing = merged.code(gi, gj);
            if existing != 0 && existing != code {
                diagnostics.merge_conflicts += 1;
            }
            merged.set_raw(gi, gj, code);
        }
        covered = end;
    }
    Ok((merged, diagnostics))
}

/// Candidate mentions detected by the non-iterative first stage, plus the
/// contextual hidden states carried into the reduced document.
#[derive(Debug, Clone)]
pub struct CandidateDetection {
    /// Headed candidate spans in (start, end) order. Spans whose every token
    /// was already claimed as a head are dropped here and counted.
    pub spans: Vec<MentionSpan>,
    /// The full deduplicated thresholded span set before head assignment.
    /// Monotone in the recall margin: a lower threshold only adds spans.
    pub raw_spans: Vec<MentionSpan>,
    /// One contextual vector per original token; overlap rows come from the
    /// later window.
    pub context: Mat,
    /// Candidate cells dropped during head assignment.
    pub dropped: usize,
}

/// Runs the mention detector over overlapping windows with a lowered
/// threshold. `recall_margin` is subtracted from the configured threshold so
/// the fixed candidate set favors recall.
pub fn detect_candidates(
    doc: &Document,
    detector: &Model,
    window: usize,
    recall_margin: Scalar,
    cfg: &RefinementConfig,
) -> Result<CandidateDetection> {
    let n = doc.len();
    let plan = plan_windows(n, window)?;
    let full = EncodedDoc::from_document(doc, &detector.vocab);
    let d_model = detector.config().d_model;
    let mut context = Mat::zeros(n, d_model);
    let mut cells = std::collections::BTreeSet::new();
    let threshold = cfg.mention_threshold - recall_margin;

    for &(start, end) in &plan.segments {
        let len = end - start;
        let empty = CorefGraph::new(len, GraphKind::Input);
        let positions: Vec<usize> = (0..len).collect();
        let enc = encode(
            &detector.params,
            &full.token_ids[start..end],
            &positions,
            None,
            &empty,
        )?;
        let scores = mention_scores(&enc.hidden, &detector.params.mention_scorer);
        for (i, j) in select_mention_cells(&scores, threshold, cfg) {
            cells.insert((i + start, j + start));
        }
        for i in 0..len {
            context
                .row_mut(start + i)
                .copy_from_slice(enc.hidden.row(i));
        }
    }
    let mut raw_spans: Vec<MentionSpan> = cells
        .into_iter()
        .map(|(end, start)| MentionSpan::new(start, end))
        .collect();
    raw_spans.sort();
    let (mut spans, dropped) = assign_heads_lossy(&raw_spans);
    spans.sort();
    Ok(CandidateDetection {
        spans,
        raw_spans,
        context,
        dropped,
    })
}

/// A candidate span's position in the reduced document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedSpan {
    /// Indices in the original document, head included.
    pub original: MentionSpan,
    /// Indices in the reduced token sequence, head at the same offset.
    pub reduced: MentionSpan,
}

/// Candidate mention tokens concatenated with separators, carrying original
/// positions and detector context vectors.
#[derive(Debug, Clone)]
pub struct ReducedDoc {
    pub tokens: Vec<String>,
    /// Position index per reduced token: the original position for kept
    /// tokens, fresh indices past the document end for separators.
    pub positions: Vec<usize>,
    /// Original index per reduced token; `None` for separators.
    pub to_original: Vec<Option<usize>>,
    /// Original index to all its reduced occurrences (nested candidates
    /// duplicate shared tokens, one occurrence per span).
    pub occurrences: BTreeMap<usize, Vec<usize>>,
    pub spans: Vec<ReducedSpan>,
    /// Contextual vector per reduced token; zero rows for separators.
    pub context: Mat,
}

impl ReducedDoc {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Builds the reduced document from headed candidate spans and the detector
/// hidden states over the original document.
pub fn reduce_document(
    doc: &Document,
    candidates: &[MentionSpan],
    detector_hidden: &Mat,
) -> Result<ReducedDoc> {
    let n = doc.len();
    if detector_hidden.rows() != n {
        return Err(Error::data("detector hidden states do not cover the document"));
    }
    let d_model = detector_hidden.cols();
    let mut sorted = candidates.to_vec();
    sorted.sort();

    let mut tokens = Vec::new();
    let mut positions = Vec::new();
    let mut to_original = Vec::new();
    let mut occurrences: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut spans = Vec::new();
    let mut context_rows: Vec<Vec<Scalar>> = Vec::new();
    let mut separators = 0usize;

    for (idx, cand) in sorted.iter().enumerate() {
        if cand.end >= n {
            return Err(Error::data(format!(
                "candidate span ({}, {}) outside the document",
                cand.start, cand.end
            )));
        }
        let head = cand
            .head
            .ok_or_else(|| Error::data("candidate span without a head"))?;
        if idx > 0 {
            tokens.push(crate::vocab::SEP_TOKEN.to_string());
            positions.push(n + separators);
            to_original.push(None);
            context_rows.push(vec![0.0; d_model]);
            separators += 1;
        }
        let first = tokens.len();
        for t in cand.start..=cand.end {
            occurrences.entry(t).or_default().push(tokens.len());
            tokens.push(doc.tokens[t].clone());
            positions.push(t);
            to_original.push(Some(t));
            context_rows.push(detector_hidden.row(t).to_vec());
        }
        let reduced_head = first + (head - cand.start);
        spans.push(ReducedSpan {
            original: *cand,
            reduced: MentionSpan::with_head(first, first + cand.len() - 1, reduced_head),
        });
    }

    let rows = context_rows.len();
    let context = Mat::from_vec(rows, d_model, context_rows.into_iter().flatten().collect());
    Ok(ReducedDoc {
        tokens,
        positions,
        to_original,
        occurrences,
        spans,
        context,
    })
}

#[derive(Debug, Clone)]
pub struct ReducedOutcome {
    /// Final output graph over the original document.
    pub graph: CorefGraph,
    /// The second-stage refinement trace over the reduced document; absent
    /// when no candidates were detected.
    pub trace: Option<RefinementTrace>,
    pub candidates: Vec<MentionSpan>,
    /// Coreference links whose original head order inverted during
    /// expansion; stored flipped into the lower triangle.
    pub flipped_links: usize,
}

/// The two-stage pipeline: detect candidates over windows, reduce the
/// document, refine coreference links among the fixed candidates, and expand
/// the result back to original indices. Candidates that end up in no
/// coreference link are dropped.
pub fn refine_reduced(
    doc: &Document,
    detector: &Model,
    coref: &Model,
    cfg: &RefinementConfig,
    window: usize,
    recall_margin: Scalar,
) -> Result<ReducedOutcome> {
    if detector.config().d_model != coref.config().d_model {
        return Err(Error::data(
            "detector and coreference models must share d_model",
        ));
    }
    let detection = detect_candidates(doc, detector, window, recall_margin, cfg)?;
    if detection.spans.is_empty() {
        return Ok(ReducedOutcome {
            graph: CorefGraph::new(doc.len(), GraphKind::Output),
            trace: None,
            candidates: Vec::new(),
            flipped_links: 0,
        });
    }
    let reduced = reduce_document(doc, &detection.spans, &detection.context)?;
    let sample = EncodedDoc {
        doc_id: format!("{}@reduced", doc.doc_id),
        token_ids: coref.vocab.ids(&reduced.tokens),
        positions: reduced.positions.clone(),
        extra: Some(reduced.context.clone()),
    };
    let fixed: Vec<MentionSpan> = reduced.spans.iter().map(|r| r.reduced).collect();
    let trace = run_refinement(
        &sample,
        &coref.params,
        cfg,
        &RefineMode::FixedMentions { spans: fixed },
    )?;

    let (graph, flipped) = expand_reduced_graph(doc.len(), &reduced, trace.final_graph());
    Ok(ReducedOutcome {
        graph,
        trace: Some(trace),
        candidates: detection.spans,
        flipped_links: flipped,
    })
}

/// Maps the reduced-space output graph back to original token indices,
/// keeping only candidates that participate in a coreference link.
fn expand_reduced_graph(
    n: usize,
    reduced: &ReducedDoc,
    g_reduced: &CorefGraph,
) -> (CorefGraph, usize) {
    let mut participating = std::collections::BTreeSet::new();
    for (i, j) in g_reduced.coref_cells() {
        participating.insert(i);
        participating.insert(j);
    }
    let mut out = CorefGraph::new(n, GraphKind::Output);
    for span in &reduced.spans {
        if participating.contains(&span.reduced.head.unwrap()) {
            out.set(span.original.end, span.original.start, RelationCode::Mention)
                .expect("cell in range");
        }
    }
    let mut flipped = 0usize;
    for (i, j) in g_reduced.coref_cells() {
        let oi = reduced.to_original[i].expect("coref endpoint is a kept token");
        let oj = reduced.to_original[j].expect("coref endpoint is a kept token");
        debug_assert_ne!(oi, oj, "distinct candidates share an original head");
        let (a, b) = if oi > oj {
            (oi, oj)
        } else {
            flipped += 1;
            (oj, oi)
        };
        out.set_raw(a, b, COREF);
    }
    (out, flipped)
}

/// Builds the fixed-mention training sample of the reduced second stage for
/// one document: candidates from the trained detector, gold clusters mapped
/// onto the candidates they exactly match, chains rebuilt in reduced head
/// space. Returns `None` when the detector finds no candidates.
pub fn reduced_train_sample(
    doc: &Document,
    detector: &Model,
    coref: &Model,
    cfg: &RefinementConfig,
    window: usize,
    recall_margin: Scalar,
) -> Result<Option<crate::refine::TrainSample>> {
    let detection = detect_candidates(doc, detector, window, recall_margin, cfg)?;
    if detection.spans.is_empty() {
        return Ok(None);
    }
    let reduced = reduce_document(doc, &detection.spans, &detection.context)?;
    let needed = doc.len() + reduced.spans.len();
    if needed > coref.config().max_positions {
        return Err(Error::data(format!(
            "document {} needs {} position slots for the reduced stage; \
             raise max_positions",
            doc.doc_id, needed
        )));
    }

    let mut gold_by_span: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    if let Some(gold) = &doc.gold {
        for (cid, cluster) in gold.clusters.iter().enumerate() {
            for span in cluster {
                gold_by_span.insert(span.key(), cid);
            }
        }
    }
    let mut gold_heads: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for span in &reduced.spans {
        if let Some(&cid) = gold_by_span.get(&span.original.key()) {
            let head = span.reduced.head.unwrap();
            gold_heads.insert(head, cid);
            by_cluster.entry(cid).or_default().push(head);
        }
    }
    let fixed: Vec<MentionSpan> = reduced.spans.iter().map(|r| r.reduced).collect();
    let mut gold_output = CorefGraph::new(reduced.len(), GraphKind::Output);
    for span in &fixed {
        gold_output.set(span.end, span.start, RelationCode::Mention)?;
    }
    for heads in by_cluster.values() {
        let mut hs = heads.clone();
        hs.sort_unstable();
        for pair in hs.windows(2) {
            gold_output.set(pair[1], pair[0], RelationCode::Coref)?;
        }
    }

    Ok(Some(crate::refine::TrainSample {
        encoded: EncodedDoc {
            doc_id: doc.doc_id.clone(),
            token_ids: coref.vocab.ids(&reduced.tokens),
            positions: reduced.positions.clone(),
            extra: Some(reduced.context.clone()),
        },
        gold_output,
        gold_spans: fixed.clone(),
        gold_heads,
        mode: crate::refine::TrainMode::FixedMentions { spans: fixed },
    }))
}

/// First `window` tokens of the document; gold spans reaching past the cut
/// are dropped and counted.
pub fn truncate(doc: &Document, window: usize) -> (Document, usize) {
    if doc.len() <= window {
        return (doc.clone(), 0);
    }
    let tokens = doc.tokens[..window].to_vec();
    let mut sentence_bounds: Vec<usize> = doc
        .sentence_bounds
        .iter()
        .copied()
        .filter(|&b| b < window)
        .collect();
    sentence_bounds.push(window);
    let mut dropped = 0usize;
    let gold = doc.gold.as_ref().map(|g| {
        let clusters: Vec<Vec<MentionSpan>> = g
            .clusters
            .iter()
            .map(|cluster| {
                cluster
                    .iter()
                    .filter(|span| {
                        let keep = span.end < window;
                        if !keep {
                            dropped += 1;
                        }
                        keep
                    })
                    .copied()
                    .collect::<Vec<_>>()
            })
            .filter(|c: &Vec<MentionSpan>| !c.is_empty())
            .collect();
        crate::corpus::ClusterSet::new(clusters)
    });
    let passthrough = doc.passthrough.as_ref().map(|p| crate::corpus::Passthrough {
        columns: p.columns[..window].to_vec(),
        begin_line: p.begin_line.clone(),
    });
    (
        Document {
            doc_id: doc.doc_id.clone(),
            tokens,
            sentence_bounds,
            gold,
            passthrough,
        },
        dropped,
    )
}
