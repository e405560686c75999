//! Versioned JSON checkpoints: config plus named tensors, the vocabulary,
//! and optionally the training state needed to resume a run exactly.
//!
//! Tensor names follow `EncoderParams::tensors`: `tok_emb`, `pos_emb`,
//! `layer<k>.<field>` for every layer field, `mention_scorer` and
//! `coref_scorer`. Loading validates every shape against the config.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::Optimizer;
use crate::refine::TrainState;
use crate::rng::Rng;
use crate::vocab::Vocab;
use crate::Scalar;

pub const FORMAT: &str = "corefine-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelData {
    pub config: EncoderConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStateData {
    pub step: usize,
    pub rng_state: u64,
    pub optimizer: Optimizer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub strategy: String,
    pub vocab: Vec<String>,
    pub coref: ModelData,
    #[serde(default)]
    pub detector: Option<ModelData>,
    #[serde(default)]
    pub train_state: Option<TrainStateData>,
}

fn shape_of(name: &str, config: &EncoderConfig) -> Vec<usize> {
    let d = config.d_model;
    let dh = config.d_head();
    let field = name.split('.').nth(1).unwrap_or(name);
    match field {
        "tok_emb" => vec![config.vocab, d],
        "pos_emb" => vec![config.max_positions, d],
        "w_q" | "w_k" | "w_v" | "w_o" => vec![d, d],
        "b_q" | "b_k" | "b_v" | "b_o" | "ln1_gain" | "ln1_bias" | "ln2_gain" | "ln2_bias"
        | "ff_b2" => vec![d],
        "rel_emb" => vec![crate::encoder::RELATION_TYPES, dh],
        "rel_w_key" | "rel_w_value" => vec![dh, dh],
        "ff_w1" => vec![d, config.d_ff],
        "ff_b1" => vec![config.d_ff],
        "ff_w2" => vec![config.d_ff, d],
        "mention_scorer" | "coref_scorer" => vec![2 * d],
        other => panic!("unknown tensor field {other}"),
    }
}

pub fn model_to_data(params: &EncoderParams) -> ModelData {
    let tensors = params
        .tensors()
        .into_iter()
        .map(|(name, data)| {
            let shape = shape_of(&name, &params.config);
            (
                name,
                Tensor {
                    shape,
                    data: data.to_vec(),
                },
            )
        })
        .collect();
    ModelData {
        config: params.config,
        tensors,
    }
}

pub fn data_to_params(data: &ModelData) -> Result<EncoderParams> {
    data.config.validate()?;
    let mut params = EncoderParams::zeros(data.config)?;
    for (name, target) in params.tensors_mut() {
        let tensor = data
            .tensors
            .get(&name)
            .ok_or_else(|| Error::data(format!("checkpoint missing tensor {name}")))?;
        let expected_shape = shape_of(&name, &data.config);
        if tensor.shape != expected_shape {
            return Err(Error::data(format!(
                "tensor {name}: shape {:?} does not match config shape {:?}",
                tensor.shape, expected_shape
            )));
        }
        let expected_len: usize = expected_shape.iter().product();
        if tensor.data.len() != expected_len {
            return Err(Error::data(format!(
                "tensor {name}: {} values for shape {:?}",
                tensor.data.len(),
                tensor.shape
            )));
        }
        target.copy_from_slice(&tensor.data);
    }
    Ok(params)
}

impl Checkpoint {
    pub fn new(strategy: &str, coref: &Model) -> Checkpoint {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            strategy: strategy.to_string(),
            vocab: coref.vocab.tokens().to_vec(),
            coref: model_to_data(&coref.params),
            detector: None,
            train_state: None,
        }
    }

    pub fn with_detector(mut self, detector: &Model) -> Checkpoint {
        self.detector = Some(model_to_data(&detector.params));
        self
    }

    pub fn with_train_state(mut self, state: &TrainState) -> Checkpoint {
        self.train_state = Some(TrainStateData {
            step: state.step,
            rng_state: state.rng.state(),
            optimizer: state.optimizer.clone(),
        });
        self
    }

    pub fn coref_model(&self) -> Result<Model> {
        Ok(Model {
            params: data_to_params(&self.coref)?,
            vocab: Vocab::from_tokens(self.vocab.clone()),
        })
    }

    pub fn detector_model(&self) -> Result<Option<Model>> {
        match &self.detector {
            None => Ok(None),
            Some(data) => Ok(Some(Model {
                params: data_to_params(data)?,
                vocab: Vocab::from_tokens(self.vocab.clone()),
            })),
        }
    }

    pub fn train_state(&self) -> Option<TrainState> {
        self.train_state.as_ref().map(|s| TrainState {
            optimizer: s.optimizer.clone(),
            rng: Rng::from_state(s.rng_state),
            step: s.step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != FORMAT {
            return Err(Error::data(format!(
                "not a {FORMAT} file: format field is {:?}",
                ckpt.format
            )));
        }
        if ckpt.version != VERSION {
            return Err(Error::data(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn model() -> Model {
        let vocab = Vocab::from_tokens(vec![
            "<unk>".into(),
            "<sep>".into(),
            "a".into(),
            "b".into(),
        ]);
        Model::new(
            EncoderConfig {
                layers: 2,
                heads: 2,
                d_model: 8,
                d_ff: 12,
                vocab: 4,
                max_positions: 16,
            },
            vocab,
            5,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_parameters_exactly() {
        let m = model();
        let ckpt = Checkpoint::new("full", &m);
        let dir = std::env::temp_dir().join(format!("corefine-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let restored = loaded.coref_model().unwrap();
        assert_eq!(restored.params, m.params);
        assert_eq!(restored.vocab, m.vocab);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = model();
        let mut data = model_to_data(&m.params);
        data.tensors.get_mut("tok_emb").unwrap().shape = vec![3, 8];
        assert!(data_to_params(&data).is_err());
    }

    #[test]
    fn missing_tensor_rejected() {
        let m = model();
        let mut data = model_to_data(&m.params);
        data.tensors.remove("mention_scorer");
        assert!(data_to_params(&data).is_err());
    }
}
