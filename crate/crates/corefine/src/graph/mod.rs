//! The coreference graph: a lower-triangular matrix of relation codes over
//! token pairs, plus the conversions between cluster annotation and the two
//! graph encodings.
//!
//! Code 0 means no link, 1 a mention link, 2 a coreference link. Input-kind
//! graphs carry the dense encoding fed to attention (every mention token
//! linked to its head, all head pairs of a cluster linked); output-kind
//! graphs carry the minimal predicted encoding (one last-to-first link per
//! mention, one closest-antecedent link per non-first mention).

mod union_find;

pub use union_find::UnionFind;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::{ClusterSet, Document, MentionSpan};
use crate::error::{Error, Result};

/// The three relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationCode {
    None = 0,
    Mention = 1,
    Coref = 2,
}

impl RelationCode {
    pub fn from_u8(v: u8) -> Option<RelationCode> {
        match v {
            0 => Some(RelationCode::None),
            1 => Some(RelationCode::Mention),
            2 => Some(RelationCode::Coref),
            _ => None,
        }
    }
}

pub const MENTION: u8 = 1;
pub const COREF: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Input,
    Output,
}

/// Sparse lower-triangular relation matrix. Cells are addressed as (i, j)
/// with `j <= i`; only nonzero codes are stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorefGraph {
    n: usize,
    kind: GraphKind,
    cells: BTreeMap<(usize, usize), u8>,
}

impl CorefGraph {
    pub fn new(n: usize, kind: GraphKind) -> Self {
        CorefGraph {
            n,
            kind,
            cells: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Code at (i, j), `j <= i` required.
    pub fn code(&self, i: usize, j: usize) -> u8 {
        debug_assert!(j <= i && i < self.n);
        self.cells.get(&(i, j)).copied().unwrap_or(0)
    }

    /// Symmetric lookup: pairs above the diagonal mirror the stored cell, so
    /// bidirectional attention sees the same relation from both sides.
    pub fn code_sym(&self, i: usize, j: usize) -> u8 {
        let (a, b) = if j <= i { (i, j) } else { (j, i) };
        self.cells.get(&(a, b)).copied().unwrap_or(0)
    }

    pub fn set(&mut self, i: usize, j: usize, code: RelationCode) -> Result<()> {
        if j > i || i >= self.n {
            return Err(Error::data(format!(
                "cell ({i}, {j}) outside the lower triangle of a {}-token graph",
                self.n
            )));
        }
        if i == j && code == RelationCode::Coref {
            return Err(Error::data(format!(
                "coreference code on the diagonal cell ({i}, {i})"
            )));
        }
        match code {
            RelationCode::None => {
                self.cells.remove(&(i, j));
            }
            other => {
                self.cells.insert((i, j), other as u8);
            }
        }
        Ok(())
    }

    /// Writes a raw code without validity checks; exists so tests and dump
    /// parsers can build graphs that `validate` must flag.
    pub fn set_raw(&mut self, i: usize, j: usize, code: u8) {
        if code == 0 {
            self.cells.remove(&(i, j));
        } else {
            self.cells.insert((i, j), code);
        }
    }

    /// Nonzero cells in (i, j) order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        self.cells.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    pub fn mention_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells()
            .filter(|&(_, _, c)| c == MENTION)
            .map(|(i, j, _)| (i, j))
    }

    pub fn coref_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells()
            .filter(|&(_, _, c)| c == COREF)
            .map(|(i, j, _)| (i, j))
    }

    /// Mention spans read from code-1 cells: (end = i, start = j).
    pub fn mention_spans(&self) -> Vec<MentionSpan> {
        let mut spans: Vec<MentionSpan> = self
            .mention_cells()
            .map(|(i, j)| MentionSpan::new(j, i))
            .collect();
        spans.sort();
        spans
    }

    pub fn count_code(&self, code: u8) -> usize {
        self.cells.values().filter(|&&c| c == code).count()
    }

    /// Dense Figure-style text dump: one row per line, codes space-separated.
    pub fn to_dense_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(' ');
                }
                let code = if j <= i { self.code(i, j) } else { 0 };
                let _ = write!(out, "{code}");
            }
            out.push('\n');
        }
        out
    }

    /// Sparse triple list `i j code`, one cell per line.
    pub fn to_triples(&self) -> String {
        let mut out = String::new();
        for (i, j, c) in self.cells() {
            let _ = writeln!(out, "{i} {j} {c}");
        }
        out
    }

    /// Rebuilds a graph from `to_triples` output.
    pub fn from_triples(n: usize, kind: GraphKind, text: &str) -> Result<CorefGraph> {
        let mut g = CorefGraph::new(n, kind);
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::parse(idx + 1, "expected `i j code`"));
            }
            let i: usize = parts[0]
                .parse()
                .map_err(|_| Error::parse(idx + 1, "bad row index"))?;
            let j: usize = parts[1]
                .parse()
                .map_err(|_| Error::parse(idx + 1, "bad column index"))?;
            let c: u8 = parts[2]
                .parse()
                .map_err(|_| Error::parse(idx + 1, "bad code"))?;
            if j > i || i >= n {
                return Err(Error::parse(idx + 1, "cell outside the lower triangle"));
            }
            g.set_raw(i, j, c);
        }
        Ok(g)
    }
}

/// Assigns the head of each span: its first token, or the next free token
/// when that one is already the head of another span. Spans are processed in
/// (start ascending, end ascending) order; the returned list keeps the input
/// order. Duplicate (start, end) pairs and spans whose every token is taken
/// are errors.
pub fn assign_heads(spans: &[MentionSpan]) -> Result<Vec<MentionSpan>> {
    let mut seen = std::collections::BTreeSet::new();
    for span in spans {
        if !seen.insert(span.key()) {
            return Err(Error::DuplicateSpan {
                start: span.start,
                end: span.end,
            });
        }
    }
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&k| spans[k].key());

    let mut used = std::collections::BTreeSet::new();
    let mut out = spans.to_vec();
    for k in order {
        let span = spans[k];
        let head = (span.start..=span.end).find(|t| !used.contains(t));
        match head {
            Some(h) => {
                used.insert(h);
                out[k].head = Some(h);
            }
            None => {
                return Err(Error::HeadExhaustion {
                    start: span.start,
                    end: span.end,
                })
            }
        }
    }
    Ok(out)
}

/// Like `assign_heads`, but drops spans whose tokens are exhausted instead of
/// failing. Model predictions can nest arbitrarily; inference must not abort
/// on them. Returns the surviving spans (input order) and the dropped count.
pub fn assign_heads_lossy(spans: &[MentionSpan]) -> (Vec<MentionSpan>, usize) {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&k| spans[k].key());
    let mut used = std::collections::BTreeSet::new();
    let mut heads: Vec<Option<usize>> = vec![None; spans.len()];
    let mut seen = std::collections::BTreeSet::new();
    let mut dropped = 0;
    for k in order {
        let span = spans[k];
        if !seen.insert(span.key()) {
            dropped += 1;
            continue;
        }
        match (span.start..=span.end).find(|t| !used.contains(t)) {
            Some(h) => {
                used.insert(h);
                heads[k] = Some(h);
            }
            None => dropped += 1,
        }
    }
    let kept = spans
        .iter()
        .zip(heads)
        .filter_map(|(s, h)| h.map(|h| MentionSpan::with_head(s.start, s.end, h)))
        .collect();
    (kept, dropped)
}

/// Assigns heads to every gold span of a document, in place.
pub fn assign_document_heads(doc: &mut Document) -> Result<()> {
    let Some(gold) = doc.gold.as_mut() else {
        return Ok(());
    };
    let spans: Vec<MentionSpan> = gold.clusters.iter().flatten().copied().collect();
    let with_heads = assign_heads(&spans)?;
    let mut lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for span in &with_heads {
        lookup.insert(span.key(), span.head.unwrap());
    }
    for cluster in &mut gold.clusters {
        for span in cluster {
            span.head = Some(lookup[&span.key()]);
        }
    }
    Ok(())
}

/// Builds the minimal output-kind graph from gold clusters.
///
/// Every mention contributes the cell (end, start) = 1. Every non-first
/// mention of a cluster (ordered by head) links its head to the head of the
/// closest preceding cluster-mate with code 2; first mentions carry no
/// coreference cell (the null antecedent is implicit). On the rare cell
/// claimed by both a mention link and a coreference link, code 2 wins.
pub fn clusters_to_output(doc: &Document) -> Result<CorefGraph> {
    let gold = doc
        .gold
        .as_ref()
        .ok_or_else(|| Error::data("document has no gold clusters"))?;
    let n = doc.len();
    let mut g = CorefGraph::new(n, GraphKind::Output);
    let mut heads_seen = std::collections::BTreeSet::new();
    for cluster in &gold.clusters {
        for span in cluster {
            let head = span
                .head
                .ok_or_else(|| Error::data("gold span without an assigned head"))?;
            if !heads_seen.insert(head) {
                return Err(Error::data(format!(
                    "internal error: head {head} assigned to two mentions"
                )));
            }
            g.set(span.end, span.start, RelationCode::Mention)?;
        }
    }
    for cluster in &gold.clusters {
        let mut heads: Vec<usize> = cluster.iter().map(|s| s.head.unwrap()).collect();
        heads.sort_unstable();
        for pair in heads.windows(2) {
            g.set(pair[1], pair[0], RelationCode::Coref)?;
        }
    }
    Ok(g)
}

/// Expands an output-kind graph into the dense input-kind encoding.
///
/// Every token of a mention links to the mention head (stored at
/// (max, min)), the head links to itself on the diagonal, and all head pairs
/// within a cluster link with code 2. Code 2 overwrites code 1 where a head
/// pair coincides with a token-to-head cell.
pub fn output_to_input(g: &CorefGraph, spans: &[MentionSpan]) -> Result<CorefGraph> {
    if g.kind() != GraphKind::Output {
        return Err(Error::data("output_to_input expects an output-kind graph"));
    }
    let from_graph: std::collections::BTreeSet<(usize, usize)> =
        g.mention_cells().map(|(i, j)| (j, i)).collect();
    let from_spans: std::collections::BTreeSet<(usize, usize)> =
        spans.iter().map(|s| s.key()).collect();
    if from_graph != from_spans {
        return Err(Error::data(
            "span list inconsistent with the graph's mention links",
        ));
    }

    let mut out = CorefGraph::new(g.len(), GraphKind::Input);
    let mut head_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (idx, span) in spans.iter().enumerate() {
        let head = span
            .head
            .ok_or_else(|| Error::data("span without an assigned head"))?;
        head_of.insert(head, idx);
        for t in span.start..=span.end {
            let (a, b) = if t >= head { (t, head) } else { (head, t) };
            out.set(a, b, RelationCode::Mention)?;
        }
    }

    // Clusters are the connected components of heads under code-2 cells;
    // cells whose endpoints are not heads are stray predictions and ignored.
    let mut uf = UnionFind::new(spans.len());
    for (i, j) in g.coref_cells() {
        if let (Some(&a), Some(&b)) = (head_of.get(&i), head_of.get(&j)) {
            uf.union(a, b);
        }
    }
    for group in uf.groups() {
        let mut heads: Vec<usize> = group.iter().map(|&k| spans[k].head.unwrap()).collect();
        heads.sort_unstable();
        for a in 0..heads.len() {
            for b in a + 1..heads.len() {
                out.set(heads[b], heads[a], RelationCode::Coref)?;
            }
        }
    }
    Ok(out)
}

/// Diagnostics from decoding an output graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeDiagnostics {
    /// Code-2 cells whose endpoints are not heads of any decoded mention.
    pub stray_coref_cells: usize,
    /// Mention cells dropped because head assignment was exhausted.
    pub dropped_mentions: usize,
}

/// Decodes an output-kind graph to clusters.
///
/// Mentions come from code-1 cells, heads are re-derived, clusters are the
/// connected components of heads under code-2 cells, and singleton mentions
/// are dropped from the result.
pub fn decode_clusters(g: &CorefGraph) -> (ClusterSet, DecodeDiagnostics) {
    let mut diagnostics = DecodeDiagnostics::default();
    let raw_spans = g.mention_spans();
    let (spans, dropped) = assign_heads_lossy(&raw_spans);
    diagnostics.dropped_mentions = dropped;

    let mut head_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (idx, span) in spans.iter().enumerate() {
        head_of.insert(span.head.unwrap(), idx);
    }
    let mut uf = UnionFind::new(spans.len());
    for (i, j) in g.coref_cells() {
        match (head_of.get(&i), head_of.get(&j)) {
            (Some(&a), Some(&b)) => uf.union(a, b),
            _ => diagnostics.stray_coref_cells += 1,
        }
    }
    let mut clusters: Vec<Vec<MentionSpan>> = uf
        .groups()
        .into_iter()
        .filter(|group| group.len() > 1)
        .map(|group| {
            let mut members: Vec<MentionSpan> = group.into_iter().map(|k| spans[k]).collect();
            members.sort();
            members
        })
        .collect();
    clusters.sort();
    (ClusterSet::new(clusters), diagnostics)
}

/// Structural problems found in a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphDiagnostic {
    InvalidCode { i: usize, j: usize, code: u8 },
    /// Input kind: a mention cell where neither endpoint is a self-linked head.
    DanglingMentionLink { i: usize, j: usize },
    /// Output kind: a coreference cell between tokens that are not decoded heads.
    DanglingCorefLink { i: usize, j: usize },
    /// Output kind: a coreference code on the diagonal.
    DiagonalCoref { i: usize },
}

impl std::fmt::Display for GraphDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphDiagnostic::InvalidCode { i, j, code } => {
                write!(f, "invalid code {code} at ({i}, {j})")
            }
            GraphDiagnostic::DanglingMentionLink { i, j } => {
                write!(f, "dangling mention link at ({i}, {j})")
            }
            GraphDiagnostic::DanglingCorefLink { i, j } => {
                write!(f, "dangling coreference link at ({i}, {j})")
            }
            GraphDiagnostic::DiagonalCoref { i } => {
                write!(f, "coreference code on the diagonal at ({i}, {i})")
            }
        }
    }
}

/// Reports invalid codes and dangling links. Never fails: these are
/// diagnostics over possibly model-produced graphs.
pub fn validate(g: &CorefGraph) -> Vec<GraphDiagnostic> {
    let mut out = Vec::new();
    for (i, j, code) in g.cells() {
        if RelationCode::from_u8(code).is_none() {
            out.push(GraphDiagnostic::InvalidCode { i, j, code });
        } else if code == COREF && i == j {
            out.push(GraphDiagnostic::DiagonalCoref { i });
        }
    }
    match g.kind() {
        GraphKind::Input => {
            // every mention link must touch a head, i.e. a token with a
            // diagonal self-link
            let heads: std::collections::BTreeSet<usize> = g
                .mention_cells()
                .filter(|&(i, j)| i == j)
                .map(|(i, _)| i)
                .collect();
            for (i, j) in g.mention_cells() {
                if i != j && !heads.contains(&i) && !heads.contains(&j) {
                    out.push(GraphDiagnostic::DanglingMentionLink { i, j });
                }
            }
        }
        GraphKind::Output => {
            let (spans, _) = assign_heads_lossy(&g.mention_spans());
            let heads: std::collections::BTreeSet<usize> =
                spans.iter().map(|s| s.head.unwrap()).collect();
            for (i, j) in g.coref_cells() {
                if !heads.contains(&i) || !heads.contains(&j) {
                    out.push(GraphDiagnostic::DanglingCorefLink { i, j });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClusterSet, Document};

    fn doc_with_clusters(n: usize, clusters: Vec<Vec<(usize, usize)>>) -> Document {
        let mut doc = Document::new("t", (0..n).map(|i| format!("w{i}")).collect());
        doc.gold = Some(ClusterSet::new(
            clusters
                .into_iter()
                .map(|c| c.into_iter().map(|(s, e)| MentionSpan::new(s, e)).collect())
                .collect(),
        ));
        assign_document_heads(&mut doc).unwrap();
        doc
    }

    #[test]
    fn head_is_first_token() {
        let spans = vec![MentionSpan::new(2, 5)];
        let out = assign_heads(&spans).unwrap();
        assert_eq!(out[0].head, Some(2));
    }

    #[test]
    fn nested_head_fixup_uses_next_token() {
        // (2,3) is processed before (2,5); the longer span moves to token 3
        let spans = vec![MentionSpan::new(2, 5), MentionSpan::new(2, 3)];
        let out = assign_heads(&spans).unwrap();
        assert_eq!(out[0].head, Some(3));
        assert_eq!(out[1].head, Some(2));
    }

    #[test]
    fn duplicate_span_is_an_error() {
        let spans = vec![MentionSpan::new(0, 0), MentionSpan::new(0, 0)];
        assert!(matches!(
            assign_heads(&spans),
            Err(Error::DuplicateSpan { .. })
        ));
    }

    #[test]
    fn head_exhaustion_detected() {
        let spans = vec![
            MentionSpan::new(0, 0),
            MentionSpan::new(0, 1),
            MentionSpan::new(1, 1),
        ];
        assert!(matches!(
            assign_heads(&spans),
            Err(Error::HeadExhaustion { .. })
        ));
        let (kept, dropped) = assign_heads_lossy(&spans);
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn single_mention_output_graph() {
        let doc = doc_with_clusters(4, vec![vec![(0, 1)]]);
        let g = clusters_to_output(&doc).unwrap();
        assert_eq!(g.code(1, 0), MENTION);
        assert_eq!(g.cell_count(), 1);
    }

    #[test]
    fn pair_cluster_output_graph() {
        let doc = doc_with_clusters(6, vec![vec![(0, 1), (3, 4)]]);
        let g = clusters_to_output(&doc).unwrap();
        assert_eq!(g.code(1, 0), MENTION);
        assert_eq!(g.code(4, 3), MENTION);
        assert_eq!(g.code(3, 0), COREF);
        assert_eq!(g.cell_count(), 3);
    }

    #[test]
    fn chain_links_closest_antecedent_only() {
        let doc = doc_with_clusters(10, vec![vec![(0, 1), (3, 4), (7, 8)]]);
        let g = clusters_to_output(&doc).unwrap();
        assert_eq!(g.code(3, 0), COREF);
        assert_eq!(g.code(7, 3), COREF);
        assert_eq!(g.code(7, 0), 0);
    }

    #[test]
    fn input_graph_single_mention() {
        let doc = doc_with_clusters(4, vec![vec![(0, 2)]]);
        let g = clusters_to_output(&doc).unwrap();
        let spans = doc.gold.as_ref().unwrap().all_spans();
        let input = output_to_input(&g, &spans).unwrap();
        assert_eq!(input.code(0, 0), MENTION);
        assert_eq!(input.code(1, 0), MENTION);
        assert_eq!(input.code(2, 0), MENTION);
        assert_eq!(input.cell_count(), 3);
    }

    #[test]
    fn input_graph_closes_head_pairs() {
        let doc = doc_with_clusters(10, vec![vec![(0, 0), (3, 3), (7, 7)]]);
        let g = clusters_to_output(&doc).unwrap();
        let spans = doc.gold.as_ref().unwrap().all_spans();
        let input = output_to_input(&g, &spans).unwrap();
        assert_eq!(input.code(3, 0), COREF);
        assert_eq!(input.code(7, 0), COREF);
        assert_eq!(input.code(7, 3), COREF);
        // diagonal self links survive
        assert_eq!(input.code(0, 0), MENTION);
    }

    #[test]
    fn empty_output_graph_gives_empty_input() {
        let g = CorefGraph::new(5, GraphKind::Output);
        let input = output_to_input(&g, &[]).unwrap();
        assert!(input.is_empty());
    }

    #[test]
    fn output_to_input_is_idempotent_on_same_arguments() {
        let doc = doc_with_clusters(8, vec![vec![(0, 1), (4, 5)], vec![(3, 3)]]);
        let g = clusters_to_output(&doc).unwrap();
        let spans = doc.gold.as_ref().unwrap().all_spans();
        let a = output_to_input(&g, &spans).unwrap();
        let b = output_to_input(&g, &spans).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inconsistent_span_list_rejected() {
        let doc = doc_with_clusters(4, vec![vec![(0, 1)]]);
        let g = clusters_to_output(&doc).unwrap();
        let wrong = vec![MentionSpan::with_head(0, 2, 0)];
        assert!(output_to_input(&g, &wrong).is_err());
    }

    #[test]
    fn decode_round_trips_gold() {
        let doc = doc_with_clusters(
            12,
            vec![vec![(0, 1), (4, 5), (9, 10)], vec![(3, 3), (7, 7)]],
        );
        let g = clusters_to_output(&doc).unwrap();
        let (decoded, diag) = decode_clusters(&g);
        assert_eq!(diag, DecodeDiagnostics::default());
        assert_eq!(
            decoded.canonical(),
            doc.gold.as_ref().unwrap().non_singletons().canonical()
        );
    }

    #[test]
    fn decode_empty_graph() {
        let g = CorefGraph::new(4, GraphKind::Output);
        let (decoded, _) = decode_clusters(&g);
        assert!(decoded.is_empty());
    }

    #[test]
    fn decode_groups_transitively() {
        // mentions (0,1), (3,4), (8,9); links join heads 0-3 and 0-8
        let mut g = CorefGraph::new(10, GraphKind::Output);
        g.set(1, 0, RelationCode::Mention).unwrap();
        g.set(4, 3, RelationCode::Mention).unwrap();
        g.set(9, 8, RelationCode::Mention).unwrap();
        g.set(3, 0, RelationCode::Coref).unwrap();
        g.set(8, 0, RelationCode::Coref).unwrap();
        let (decoded, _) = decode_clusters(&g);
        assert_eq!(decoded.clusters.len(), 1);
        assert_eq!(decoded.clusters[0].len(), 3);
    }

    #[test]
    fn decode_counts_stray_links() {
        let mut g = CorefGraph::new(10, GraphKind::Output);
        g.set(1, 0, RelationCode::Mention).unwrap();
        g.set(4, 3, RelationCode::Mention).unwrap();
        g.set(3, 0, RelationCode::Coref).unwrap();
        g.set(7, 6, RelationCode::Coref).unwrap(); // neither 7 nor 6 is a head
        let (decoded, diag) = decode_clusters(&g);
        assert_eq!(diag.stray_coref_cells, 1);
        assert_eq!(decoded.clusters.len(), 1);
    }

    #[test]
    fn singletons_dropped_from_decode() {
        let doc = doc_with_clusters(6, vec![vec![(0, 0)], vec![(2, 3), (5, 5)]]);
        let g = clusters_to_output(&doc).unwrap();
        let (decoded, _) = decode_clusters(&g);
        assert_eq!(decoded.clusters.len(), 1);
    }

    #[test]
    fn validate_clean_gold_graph() {
        let doc = doc_with_clusters(6, vec![vec![(0, 1), (3, 4)]]);
        let g = clusters_to_output(&doc).unwrap();
        assert!(validate(&g).is_empty());
        let spans = doc.gold.as_ref().unwrap().all_spans();
        let input = output_to_input(&g, &spans).unwrap();
        assert!(validate(&input).is_empty());
    }

    #[test]
    fn validate_flags_invalid_code() {
        let mut g = CorefGraph::new(4, GraphKind::Output);
        g.set_raw(2, 1, 3);
        let diags = validate(&g);
        assert_eq!(
            diags,
            vec![GraphDiagnostic::InvalidCode { i: 2, j: 1, code: 3 }]
        );
    }

    #[test]
    fn validate_flags_dangling_coref() {
        let mut g = CorefGraph::new(6, GraphKind::Output);
        g.set(1, 0, RelationCode::Mention).unwrap(); // head 0
        g.set(5, 2, RelationCode::Coref).unwrap(); // 2 is not a head
        let diags = validate(&g);
        assert!(diags
            .iter()
            .any(|d| matches!(d, GraphDiagnostic::DanglingCorefLink { i: 5, j: 2 })));
    }

    #[test]
    fn validate_flags_dangling_input_mention_link() {
        let mut g = CorefGraph::new(6, GraphKind::Input);
        g.set(3, 1, RelationCode::Mention).unwrap(); // no self-linked head
        let diags = validate(&g);
        assert!(diags
            .iter()
            .any(|d| matches!(d, GraphDiagnostic::DanglingMentionLink { i: 3, j: 1 })));
    }

    #[test]
    fn triples_round_trip() {
        let doc = doc_with_clusters(8, vec![vec![(0, 1), (4, 5)]]);
        let g = clusters_to_output(&doc).unwrap();
        let parsed = CorefGraph::from_triples(8, GraphKind::Output, &g.to_triples()).unwrap();
        assert_eq!(g, parsed);
    }

    #[test]
    fn dense_text_matches_hand_layout() {
        let mut g = CorefGraph::new(3, GraphKind::Output);
        g.set(1, 0, RelationCode::Mention).unwrap();
        g.set(2, 1, RelationCode::Coref).unwrap();
        assert_eq!(g.to_dense_text(), "0 0 0\n1 0 0\n0 2 0\n");
    }

    #[test]
    fn symmetric_lookup_mirrors_lower_triangle() {
        let mut g = CorefGraph::new(5, GraphKind::Input);
        g.set(3, 1, RelationCode::Coref).unwrap();
        assert_eq!(g.code_sym(3, 1), COREF);
        assert_eq!(g.code_sym(1, 3), COREF);
        assert_eq!(g.code_sym(2, 4), 0);
    }
}
