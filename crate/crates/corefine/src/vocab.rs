//! Token vocabulary with reserved ids.

use std::collections::HashMap;

use crate::corpus::Document;

pub const UNK_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const SEP_TOKEN: &str = "<sep>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from a corpus: `<unk>` and `<sep>` first, then the distinct
    /// corpus tokens in sorted order for determinism.
    pub fn build(docs: &[Document]) -> Vocab {
        let mut distinct: Vec<String> = docs
            .iter()
            .flat_map(|d| d.tokens.iter().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .filter(|t| t != UNK_TOKEN && t != SEP_TOKEN)
            .collect();
        let mut tokens = vec![UNK_TOKEN.to_string(), SEP_TOKEN.to_string()];
        tokens.append(&mut distinct);
        Vocab::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
