//! A parameter set bundled with its vocabulary.

use crate::corpus::Document;
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::vocab::Vocab;

#[derive(Debug, Clone)]
pub struct Model {
    pub params: EncoderParams,
    pub vocab: Vocab,
}

impl Model {
    pub fn new(config: EncoderConfig, vocab: Vocab, seed: u64) -> Result<Model> {
        if config.vocab != vocab.len() {
            return Err(Error::data(format!(
                "config vocab size {} does not match vocabulary of {} tokens",
                config.vocab,
                vocab.len()
            )));
        }
        Ok(Model {
            params: EncoderParams::init(config, seed)?,
            vocab,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.params.config
    }
}

/// Token ids, positions and optional extra input for one encoder pass.
#[derive(Debug, Clone)]
pub struct EncodedDoc {
    pub doc_id: String,
    pub token_ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub extra: Option<Mat>,
}

impl EncodedDoc {
    pub fn from_document(doc: &Document, vocab: &Vocab) -> EncodedDoc {
        EncodedDoc {
            doc_id: doc.doc_id.clone(),
            token_ids: vocab.ids(&doc.tokens),
            positions: (0..doc.len()).collect(),
            extra: None,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}
