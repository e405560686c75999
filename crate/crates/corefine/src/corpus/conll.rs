//! CoNLL-2012 coreference column format.
//!
//! Only three columns matter here: the document id (column 0), the word and
//! the coreference bracket field (always the last column). Everything else is
//! carried through untouched. Lines with exactly three or four columns are
//! read as the minimal layout `doc_id token coref`; longer lines follow the
//! full CoNLL-2012 layout where the word sits in column 3.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ClusterSet, Document, MentionSpan, Passthrough};
use crate::error::{Error, Result};

/// Parses `#begin document` / `#end document` blocks into documents.
pub fn parse_conll(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut block: Option<Block> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if let Some(rest) = line.strip_prefix("#begin document") {
            if block.is_some() {
                return Err(Error::parse(line_no, "nested #begin document"));
            }
            block = Some(Block::new(line.to_string(), doc_id_from_begin(rest)));
            continue;
        }
        if line.trim() == "#end document" {
            let b = block
                .take()
                .ok_or_else(|| Error::parse(line_no, "#end document without #begin"))?;
            docs.push(b.finish(line_no)?);
            continue;
        }
        match &mut block {
            Some(b) => {
                if line.trim().is_empty() {
                    b.sentence_break();
                } else if line.starts_with('#') {
                    // comment lines inside a block are ignored
                } else {
                    b.token_line(line, line_no)?;
                }
            }
            None => {
                if !line.trim().is_empty() {
                    return Err(Error::parse(line_no, "content outside a document block"));
                }
            }
        }
    }
    if block.is_some() {
        let last = text.lines().count();
        return Err(Error::parse(last, "truncated document block: missing #end document"));
    }
    Ok(docs)
}

fn doc_id_from_begin(rest: &str) -> String {
    let rest = rest.trim();
    if let Some(open) = rest.find('(') {
        if let Some(close) = rest[open..].find(')') {
            return rest[open + 1..open + close].to_string();
        }
    }
    rest.to_string()
}

struct Block {
    begin_line: String,
    doc_id: String,
    tokens: Vec<String>,
    columns: Vec<Vec<String>>,
    sentence_bounds: Vec<usize>,
    /// Per entity id: stack of open bracket start positions.
    open: BTreeMap<usize, Vec<usize>>,
    /// (entity, span) in close order.
    spans: Vec<(usize, MentionSpan)>,
    seen_spans: std::collections::BTreeSet<(usize, usize)>,
}

impl Block {
    fn new(begin_line: String, doc_id: String) -> Self {
        Block {
            begin_line,
            doc_id,
            tokens: Vec::new(),
            columns: Vec::new(),
            sentence_bounds: Vec::new(),
            open: BTreeMap::new(),
            spans: Vec::new(),
            seen_spans: std::collections::BTreeSet::new(),
        }
    }

    fn sentence_break(&mut self) {
        let n = self.tokens.len();
        if n > 0 && self.sentence_bounds.last() != Some(&n) {
            self.sentence_bounds.push(n);
        }
    }

    fn token_line(&mut self, line: &str, line_no: usize) -> Result<()> {
        let cols: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if cols.len() < 3 {
            return Err(Error::parse(
                line_no,
                format!("expected at least 3 columns, found {}", cols.len()),
            ));
        }
        let token_col = if cols.len() >= 5 { 3 } else { 1 };
        let token = cols[token_col].clone();
        let coref = cols.last().unwrap().clone();
        let pos = self.tokens.len();
        self.parse_coref_field(&coref, pos, line_no)?;
        self.tokens.push(token);
        self.columns.push(cols);
        Ok(())
    }

    fn parse_coref_field(&mut self, field: &str, pos: usize, line_no: usize) -> Result<()> {
        if field == "-" || field == "_" {
            return Ok(());
        }
        for item in field.split('|') {
            let opens = item.starts_with('(');
            let closes = item.ends_with(')');
            let digits = item.trim_start_matches('(').trim_end_matches(')');
            let entity: usize = digits.parse().map_err(|_| {
                Error::parse(line_no, format!("malformed coreference item `{item}`"))
            })?;
            if opens {
                self.open.entry(entity).or_default().push(pos);
            }
            if closes {
                let start = self
                    .open
                    .get_mut(&entity)
                    .and_then(|stack| stack.pop())
                    .ok_or_else(|| {
                        Error::parse(line_no, format!("unbalanced close bracket for entity {entity}"))
                    })?;
                let span = MentionSpan::new(start, pos);
                if !self.seen_spans.insert(span.key()) {
                    return Err(Error::parse(
                        line_no,
                        format!("duplicate mention span ({start}, {pos})"),
                    ));
                }
                self.spans.push((entity, span));
            }
            if !opens && !closes {
                return Err(Error::parse(
                    line_no,
                    format!("malformed coreference item `{item}`"),
                ));
            }
        }
        Ok(())
    }

    fn finish(mut self, line_no: usize) -> Result<Document> {
        if self.tokens.is_empty() {
            return Err(Error::parse(line_no, "document block contains no tokens"));
        }
        for (entity, stack) in &self.open {
            if !stack.is_empty() {
                return Err(Error::parse(
                    line_no,
                    format!("unbalanced open bracket for entity {entity}"),
                ));
            }
        }
        self.sentence_break();
        let mut by_entity: BTreeMap<usize, Vec<MentionSpan>> = BTreeMap::new();
        for (entity, span) in self.spans {
            by_entity.entry(entity).or_default().push(span);
        }
        let mut clusters: Vec<Vec<MentionSpan>> = by_entity.into_values().collect();
        for c in &mut clusters {
            c.sort();
        }
        let doc = Document {
            doc_id: self.doc_id,
            tokens: self.tokens,
            sentence_bounds: self.sentence_bounds,
            gold: Some(ClusterSet::new(clusters)),
            passthrough: Some(Passthrough {
                columns: self.columns,
                begin_line: self.begin_line,
            }),
        };
        doc.validate()?;
        Ok(doc)
    }
}

/// Writes documents back to CoNLL text.
///
/// Bracket items per token: opens sorted by span end descending (single-token
/// spans render as `(k)` and sort last), then closes sorted by span start
/// ascending. `parse_conll(write_conll(docs))` reproduces spans and clusters.
pub fn write_conll(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        write_document(&mut out, doc);
    }
    out
}

fn write_document(out: &mut String, doc: &Document) {
    let begin = doc
        .passthrough
        .as_ref()
        .map(|p| p.begin_line.clone())
        .unwrap_or_else(|| format!("#begin document ({}); part 000", doc.doc_id));
    let _ = writeln!(out, "{begin}");

    let fields = coref_fields(doc);
    let mut bound_iter = doc.sentence_bounds.iter().copied().peekable();
    for (t, token) in doc.tokens.iter().enumerate() {
        match doc.passthrough.as_ref() {
            Some(p) => {
                let mut cols = p.columns[t].clone();
                let last = cols.len() - 1;
                cols[last] = fields[t].clone();
                let _ = writeln!(out, "{}", cols.join(" "));
            }
            None => {
                let _ = writeln!(out, "{} {} {}", doc.doc_id, token, fields[t]);
            }
        }
        if bound_iter.peek() == Some(&(t + 1)) {
            bound_iter.next();
            if t + 1 < doc.tokens.len() {
                out.push('\n');
            }
        }
    }
    let _ = writeln!(out, "#end document");
}

fn coref_fields(doc: &Document) -> Vec<String> {
    let n = doc.tokens.len();
    let mut opens: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (end, entity)
    let mut closes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (start, entity)
    if let Some(gold) = &doc.gold {
        for (entity, cluster) in gold.clusters.iter().enumerate() {
            for span in cluster {
                opens[span.start].push((span.end, entity));
                if span.end != span.start {
                    closes[span.end].push((span.start, entity));
                }
            }
        }
    }
    (0..n)
        .map(|t| {
            let mut items = Vec::new();
            // Longest spans open first; single-token spans (end == t) sort last
            // and are rendered as combined open-close items.
            opens[t].sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(end, entity) in &opens[t] {
                if end == t {
                    items.push(format!("({entity})"));
                } else {
                    items.push(format!("({entity}"));
                }
            }
            closes[t].sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, entity) in &closes[t] {
                items.push(format!("{entity})"));
            }
            if items.is_empty() {
                "-".to_string()
            } else {
                items.join("|")
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_block(lines: &[&str]) -> String {
        let mut s = String::from("#begin document (test); part 000\n");
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s.push_str("#end document\n");
        s
    }

    #[test]
    fn single_token_no_annotation() {
        let text = doc_block(&["test word -"]);
        let docs = parse_conll(&text).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].tokens, vec!["word"]);
        assert_eq!(docs[0].gold.as_ref().unwrap().clusters.len(), 0);
    }

    #[test]
    fn single_token_mention() {
        let text = doc_block(&["test word (0)"]);
        let docs = parse_conll(&text).unwrap();
        let gold = docs[0].gold.as_ref().unwrap();
        assert_eq!(gold.clusters, vec![vec![MentionSpan::new(0, 0)]]);
    }

    #[test]
    fn nested_brackets_hand_trace() {
        // fields (0, (1), -, 0) over four tokens: entity 0 spans (0,3),
        // entity 1 spans (1,1)
        let text = doc_block(&["t a (0", "t b (1)", "t c -", "t d 0)"]);
        let docs = parse_conll(&text).unwrap();
        let gold = docs[0].gold.as_ref().unwrap();
        assert_eq!(
            gold.canonical(),
            vec![vec![(0, 3)], vec![(1, 1)]]
        );
    }

    #[test]
    fn unbalanced_close_reports_line() {
        let text = doc_block(&["t a -", "t b 3)"]);
        let err = parse_conll(&text).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unbalanced_open_detected_at_end() {
        let text = doc_block(&["t a (2", "t b -"]);
        assert!(matches!(parse_conll(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn duplicate_span_rejected() {
        let text = doc_block(&["t a (0)|(1)"]);
        assert!(matches!(parse_conll(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn truncated_block_rejected() {
        let text = "#begin document (x); part 000\nt a -\n";
        assert!(matches!(parse_conll(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn writer_emits_dashes_for_empty_clusters() {
        let mut doc = Document::new("d", vec!["a".into(), "b".into()]);
        doc.gold = Some(ClusterSet::default());
        let text = write_conll(&[doc]);
        for line in text.lines() {
            if !line.starts_with('#') {
                assert!(line.ends_with(" -"));
            }
        }
    }

    #[test]
    fn writer_nested_field_order() {
        let mut doc = Document::new("d", vec!["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect());
        doc.gold = Some(ClusterSet::new(vec![
            vec![MentionSpan::new(0, 3)],
            vec![MentionSpan::new(1, 1)],
        ]));
        let text = write_conll(&[doc]);
        let fields: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .map(|l| l.rsplit(' ').next().unwrap())
            .collect();
        assert_eq!(fields, vec!["(0", "(1)", "-", "0)"]);
    }

    #[test]
    fn round_trip_preserves_structure() {
        let text = doc_block(&[
            "t The (0",
            "t old -",
            "t man 0)|(1)",
            "t saw -",
            "t him (0)",
        ]);
        let docs = parse_conll(&text).unwrap();
        let rewritten = write_conll(&docs);
        let reparsed = parse_conll(&rewritten).unwrap();
        assert_eq!(docs[0].tokens, reparsed[0].tokens);
        assert_eq!(
            docs[0].gold.as_ref().unwrap().canonical(),
            reparsed[0].gold.as_ref().unwrap().canonical()
        );
    }

    #[test]
    fn full_layout_uses_column_three() {
        let text = doc_block(&["bc/cctv/00 0 0 With IN (TOP* - - - spk * (0)"]);
        let docs = parse_conll(&text).unwrap();
        assert_eq!(docs[0].tokens, vec!["With"]);
        assert_eq!(docs[0].gold.as_ref().unwrap().mention_count(), 1);
    }

    #[test]
    fn sentence_bounds_from_blank_lines() {
        let text = "#begin document (s); part 000\nt a -\nt b -\n\nt c -\n#end document\n";
        let docs = parse_conll(text).unwrap();
        assert_eq!(docs[0].sentence_bounds, vec![2, 3]);
        // and they survive the round trip
        let reparsed = parse_conll(&write_conll(&docs)).unwrap();
        assert_eq!(reparsed[0].sentence_bounds, vec![2, 3]);
    }
}
