//! JSON-lines fixture format: one document per line with exactly the fields
//! `doc_id`, `tokens` and `clusters` (lists of `[start, end]` pairs).

use serde::{Deserialize, Serialize};

use super::{ClusterSet, Document, MentionSpan};
use crate::error::Result;

#[derive(Serialize, Deserialize)]
struct JsonDoc {
    doc_id: String,
    tokens: Vec<String>,
    clusters: Vec<Vec<(usize, usize)>>,
}

pub fn to_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let clusters = doc
            .gold
            .as_ref()
            .map(|g| {
                g.clusters
                    .iter()
                    .map(|c| c.iter().map(|m| m.key()).collect())
                    .collect()
            })
            .unwrap_or_default();
        let record = JsonDoc {
            doc_id: doc.doc_id.clone(),
            tokens: doc.tokens.clone(),
            clusters,
        };
        out.push_str(&serde_json::to_string(&record).expect("document serialization"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonDoc = serde_json::from_str(line).map_err(|e| {
            crate::error::Error::parse(idx + 1, format!("invalid json document: {e}"))
        })?;
        let clusters = record
            .clusters
            .into_iter()
            .map(|c| c.into_iter().map(|(s, e)| MentionSpan::new(s, e)).collect())
            .collect();
        let mut doc = Document::new(record.doc_id, record.tokens);
        doc.gold = Some(ClusterSet::new(clusters));
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_names_are_exact() {
        let mut doc = Document::new("d1", vec!["a".into(), "b".into()]);
        doc.gold = Some(ClusterSet::new(vec![vec![
            MentionSpan::new(0, 0),
            MentionSpan::new(1, 1),
        ]]));
        let line = to_jsonl(&[doc]);
        let value: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert!(value.get("doc_id").is_some());
        assert!(value.get("tokens").is_some());
        assert!(value.get("clusters").is_some());
        assert_eq!(value["clusters"][0][0], serde_json::json!([0, 0]));
    }

    #[test]
    fn round_trip() {
        let mut doc = Document::new("d1", vec!["x".into(), "y".into(), "z".into()]);
        doc.gold = Some(ClusterSet::new(vec![vec![
            MentionSpan::new(0, 1),
            MentionSpan::new(2, 2),
        ]]));
        let docs = vec![doc];
        let parsed = from_jsonl(&to_jsonl(&docs)).unwrap();
        assert_eq!(parsed[0].doc_id, docs[0].doc_id);
        assert_eq!(parsed[0].tokens, docs[0].tokens);
        assert_eq!(
            parsed[0].gold.as_ref().unwrap().canonical(),
            docs[0].gold.as_ref().unwrap().canonical()
        );
    }

    #[test]
    fn bad_line_is_a_parse_error() {
        assert!(from_jsonl("{not json}\n").is_err());
    }
}
