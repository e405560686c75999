//! From-scratch Transformer encoder with relation-conditioned attention.
//!
//! The forward pass keeps every intermediate needed for an exact reverse-mode
//! backward pass in double precision; `backward::backprop` mirrors it.

mod backward;
mod relation;

pub use backward::backprop;
pub use relation::{build_relation_tensors, relation_attention, RelationTensors, RELATION_TYPES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CorefGraph, GraphKind};
use crate::mat::{add_into, Mat};
use crate::rng::Rng;
use crate::Scalar;

const LN_EPS: Scalar = 1e-12;
const INIT_STD: Scalar = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub max_positions: usize,
}

impl EncoderConfig {
    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || self.d_ff == 0 || self.vocab == 0 {
            return Err(Error::data("encoder dimensions must be at least 1"));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::data(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_positions == 0 {
            return Err(Error::data("max_positions must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_q: Mat,
    pub b_q: Vec<Scalar>,
    pub w_k: Mat,
    pub b_k: Vec<Scalar>,
    pub w_v: Mat,
    pub b_v: Vec<Scalar>,
    pub w_o: Mat,
    pub b_o: Vec<Scalar>,
    /// Relation embedding table, one row per code; row 0 (no link) starts at
    /// zero so an empty graph is a clean vanilla-attention baseline.
    pub rel_emb: Mat,
    pub rel_w_key: Mat,
    pub rel_w_value: Mat,
    pub ln1_gain: Vec<Scalar>,
    pub ln1_bias: Vec<Scalar>,
    pub ln2_gain: Vec<Scalar>,
    pub ln2_bias: Vec<Scalar>,
    pub ff_w1: Mat,
    pub ff_b1: Vec<Scalar>,
    pub ff_w2: Mat,
    pub ff_b2: Vec<Scalar>,
}

/// All learnable tensors, including the two scoring heads consumed by the
/// objective layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub tok_emb: Mat,
    pub pos_emb: Mat,
    pub layers: Vec<LayerParams>,
    /// Mention scorer over the concatenated pair [h_end, h_start].
    pub mention_scorer: Vec<Scalar>,
    /// Antecedent scorer over the concatenated pair [h_mention, h_antecedent].
    pub coref_scorer: Vec<Scalar>,
}

impl EncoderParams {
    /// Fixed-seed scaled-normal initialization.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let d = config.d_model;
        let dh = config.d_head();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut rel_emb = Mat::randn(RELATION_TYPES, dh, INIT_STD, &mut rng);
            for v in rel_emb.row_mut(0) {
                *v = 0.0;
            }
            layers.push(LayerParams {
                w_q: Mat::randn(d, d, INIT_STD, &mut rng),
                b_q: vec![0.0; d],
                w_k: Mat::randn(d, d, INIT_STD, &mut rng),
                b_k: vec![0.0; d],
                w_v: Mat::randn(d, d, INIT_STD, &mut rng),
                b_v: vec![0.0; d],
                w_o: Mat::randn(d, d, INIT_STD, &mut rng),
                b_o: vec![0.0; d],
                rel_emb,
                rel_w_key: Mat::randn(dh, dh, INIT_STD, &mut rng),
                rel_w_value: Mat::randn(dh, dh, INIT_STD, &mut rng),
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
                ff_w1: Mat::randn(d, config.d_ff, INIT_STD, &mut rng),
                ff_b1: vec![0.0; config.d_ff],
                ff_w2: Mat::randn(config.d_ff, d, INIT_STD, &mut rng),
                ff_b2: vec![0.0; d],
            });
        }
        Ok(EncoderParams {
            config,
            tok_emb: Mat::randn(config.vocab, d, INIT_STD, &mut rng),
            pos_emb: Mat::randn(config.max_positions, d, INIT_STD, &mut rng),
            layers,
            mention_scorer: (0..2 * d).map(|_| rng.normal() * INIT_STD).collect(),
            coref_scorer: (0..2 * d).map(|_| rng.normal() * INIT_STD).collect(),
        })
    }

    /// Zero tensors with the same shapes; the gradient container.
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let dh = config.d_head();
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                w_q: Mat::zeros(d, d),
                b_q: vec![0.0; d],
                w_k: Mat::zeros(d, d),
                b_k: vec![0.0; d],
                w_v: Mat::zeros(d, d),
                b_v: vec![0.0; d],
                w_o: Mat::zeros(d, d),
                b_o: vec![0.0; d],
                rel_emb: Mat::zeros(RELATION_TYPES, dh),
                rel_w_key: Mat::zeros(dh, dh),
                rel_w_value: Mat::zeros(dh, dh),
                ln1_gain: vec![0.0; d],
                ln1_bias: vec![0.0; d],
                ln2_gain: vec![0.0; d],
                ln2_bias: vec![0.0; d],
                ff_w1: Mat::zeros(d, config.d_ff),
                ff_b1: vec![0.0; config.d_ff],
                ff_w2: Mat::zeros(config.d_ff, d),
                ff_b2: vec![0.0; d],
            })
            .collect();
        Ok(EncoderParams {
            config,
            tok_emb: Mat::zeros(config.vocab, d),
            pos_emb: Mat::zeros(config.max_positions, d),
            layers,
            mention_scorer: vec![0.0; 2 * d],
            coref_scorer: vec![0.0; 2 * d],
        })
    }

    /// Named views of every tensor, in a stable order shared by the mutable
    /// variant, the optimizer and the checkpoint format.
    pub fn tensors(&self) -> Vec<(String, &[Scalar])> {
        let mut out: Vec<(String, &[Scalar])> = vec![
            ("tok_emb".into(), self.tok_emb.data()),
            ("pos_emb".into(), self.pos_emb.data()),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_q"), layer.w_q.data()));
            out.push((format!("layer{l}.b_q"), &layer.b_q));
            out.push((format!("layer{l}.w_k"), layer.w_k.data()));
            out.push((format!("layer{l}.b_k"), &layer.b_k));
            out.push((format!("layer{l}.w_v"), layer.w_v.data()));
            out.push((format!("layer{l}.b_v"), &layer.b_v));
            out.push((format!("layer{l}.w_o"), layer.w_o.data()));
            out.push((format!("layer{l}.b_o"), &layer.b_o));
            out.push((format!("layer{l}.rel_emb"), layer.rel_emb.data()));
            out.push((format!("layer{l}.rel_w_key"), layer.rel_w_key.data()));
            out.push((format!("layer{l}.rel_w_value"), layer.rel_w_value.data()));
            out.push((format!("layer{l}.ln1_gain"), &layer.ln1_gain));
            out.push((format!("layer{l}.ln1_bias"), &layer.ln1_bias));
            out.push((format!("layer{l}.ln2_gain"), &layer.ln2_gain));
            out.push((format!("layer{l}.ln2_bias"), &layer.ln2_bias));
            out.push((format!("layer{l}.ff_w1"), layer.ff_w1.data()));
            out.push((format!("layer{l}.ff_b1"), &layer.ff_b1));
            out.push((format!("layer{l}.ff_w2"), layer.ff_w2.data()));
            out.push((format!("layer{l}.ff_b2"), &layer.ff_b2));
        }
        out.push(("mention_scorer".into(), &self.mention_scorer));
        out.push(("coref_scorer".into(), &self.coref_scorer));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [Scalar])> {
        let mut out: Vec<(String, &mut [Scalar])> = vec![
            ("tok_emb".into(), self.tok_emb.data_mut()),
            ("pos_emb".into(), self.pos_emb.data_mut()),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w_q"), layer.w_q.data_mut()));
            out.push((format!("layer{l}.b_q"), &mut layer.b_q));
            out.push((format!("layer{l}.w_k"), layer.w_k.data_mut()));
            out.push((format!("layer{l}.b_k"), &mut layer.b_k));
            out.push((format!("layer{l}.w_v"), layer.w_v.data_mut()));
            out.push((format!("layer{l}.b_v"), &mut layer.b_v));
            out.push((format!("layer{l}.w_o"), layer.w_o.data_mut()));
            out.push((format!("layer{l}.b_o"), &mut layer.b_o));
            out.push((format!("layer{l}.rel_emb"), layer.rel_emb.data_mut()));
            out.push((format!("layer{l}.rel_w_key"), layer.rel_w_key.data_mut()));
            out.push((format!("layer{l}.rel_w_value"), layer.rel_w_value.data_mut()));
            out.push((format!("layer{l}.ln1_gain"), &mut layer.ln1_gain));
            out.push((format!("layer{l}.ln1_bias"), &mut layer.ln1_bias));
            out.push((format!("layer{l}.ln2_gain"), &mut layer.ln2_gain));
            out.push((format!("layer{l}.ln2_bias"), &mut layer.ln2_bias));
            out.push((format!("layer{l}.ff_w1"), layer.ff_w1.data_mut()));
            out.push((format!("layer{l}.ff_b1"), &mut layer.ff_b1));
            out.push((format!("layer{l}.ff_w2"), layer.ff_w2.data_mut()));
            out.push((format!("layer{l}.ff_b2"), &mut layer.ff_b2));
        }
        out.push(("mention_scorer".into(), &mut self.mention_scorer));
        out.push(("coref_scorer".into(), &mut self.coref_scorer));
        out
    }
}

#[derive(Debug, Clone)]
pub struct LnCache {
    pub input: Mat,
    pub normalized: Mat,
    pub inv_std: Vec<Scalar>,
    pub out: Mat,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Attention weights per head.
    pub alpha: Vec<Mat>,
    pub head_concat: Mat,
    pub ln1: LnCache,
    pub ff_pre: Mat,
    pub ff_act: Mat,
    pub ln2: LnCache,
    pub rel: RelationTensors,
}

/// Hidden states plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub hidden: Mat,
    pub tokens: Vec<usize>,
    pub positions: Vec<usize>,
    /// Input to every layer; entry 0 is the summed embedding matrix.
    pub layer_inputs: Vec<Mat>,
    pub layers: Vec<LayerCache>,
}

/// Full forward pass.
///
/// The input vector of token t is the sum of its token embedding, the
/// embedding of `positions[t]` and, when given, row t of `extra` (the
/// contextual vector carried into a reduced document).
pub fn encode(
    params: &EncoderParams,
    tokens: &[usize],
    positions: &[usize],
    extra: Option<&Mat>,
    graph: &CorefGraph,
) -> Result<EncoderOutput> {
    let cfg = &params.config;
    let n = tokens.len();
    if n == 0 {
        return Err(Error::data("cannot encode an empty token sequence"));
    }
    if n > cfg.max_positions {
        return Err(Error::data(format!(
            "sequence length {n} exceeds max_positions {}; window or reduce first",
            cfg.max_positions
        )));
    }
    if positions.len() != n {
        return Err(Error::data("positions length mismatch"));
    }
    if graph.len() != n {
        return Err(Error::data("graph size does not match the token count"));
    }
    if graph.kind() != GraphKind::Input {
        return Err(Error::data("encode expects an input-kind graph"));
    }
    if let Some(e) = extra {
        if e.shape() != (n, cfg.d_model) {
            return Err(Error::data("extra input shape mismatch"));
        }
        if !e.is_finite() {
            return Err(Error::numeric("non-finite extra input"));
        }
    }
    for (&t, &p) in tokens.iter().zip(positions.iter()) {
        if t >= cfg.vocab {
            return Err(Error::data(format!("token id {t} outside vocab")));
        }
        if p >= cfg.max_positions {
            return Err(Error::data(format!(
                "position {p} outside max_positions {}",
                cfg.max_positions
            )));
        }
    }

    let mut x = Mat::zeros(n, cfg.d_model);
    for i in 0..n {
        let row = x.row_mut(i);
        add_into(row, params.tok_emb.row(tokens[i]));
        add_into(row, params.pos_emb.row(positions[i]));
        if let Some(e) = extra {
            add_into(row, e.row(i));
        }
    }

    let mut layer_inputs = Vec::with_capacity(cfg.layers + 1);
    let mut layers = Vec::with_capacity(cfg.layers);
    for layer in &params.layers {
        layer_inputs.push(x.clone());
        let (out, cache) = layer_forward(cfg, layer, &x, graph)?;
        layers.push(cache);
        x = out;
    }
    layer_inputs.push(x.clone());
    if !x.is_finite() {
        return Err(Error::numeric("non-finite hidden states"));
    }
    let hidden = layer_inputs.pop().unwrap();
    Ok(EncoderOutput {
        hidden,
        tokens: tokens.to_vec(),
        positions: positions.to_vec(),
        layer_inputs,
        layers,
    })
}

fn layer_forward(
    cfg: &EncoderConfig,
    layer: &LayerParams,
    x: &Mat,
    graph: &CorefGraph,
) -> Result<(Mat, LayerCache)> {
    let n = x.rows();
    let d = cfg.d_model;
    let dh = cfg.d_head();

    let q = linear(x, &layer.w_q, &layer.b_q);
    let k = linear(x, &layer.w_k, &layer.b_k);
    let v = linear(x, &layer.w_v, &layer.b_v);
    let rel = RelationTensors::build(graph, &layer.rel_emb, &layer.rel_w_key, &layer.rel_w_value);

    let mut head_concat = Mat::zeros(n, d);
    let mut alpha = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let q_h = slice_head(&q, h, dh);
        let k_h = slice_head(&k, h, dh);
        let v_h = slice_head(&v, h, dh);
        let (out_h, alpha_h) = relation_attention(&q_h, &k_h, &v_h, &rel)?;
        write_head(&mut head_concat, &out_h, h, dh);
        alpha.push(alpha_h);
    }

    let attn_out = linear(&head_concat, &layer.w_o, &layer.b_o);
    let mut res1 = x.clone();
    res1.add_assign(&attn_out);
    let ln1 = layer_norm(&res1, &layer.ln1_gain, &layer.ln1_bias);

    let ff_pre = linear(&ln1.out, &layer.ff_w1, &layer.ff_b1);
    let ff_act = Mat::from_fn(n, cfg.d_ff, |i, j| gelu(ff_pre.get(i, j)));
    let ff_out = linear(&ff_act, &layer.ff_w2, &layer.ff_b2);
    let mut res2 = ln1.out.clone();
    res2.add_assign(&ff_out);
    let ln2 = layer_norm(&res2, &layer.ln2_gain, &layer.ln2_bias);

    let out = ln2.out.clone();
    Ok((
        out,
        LayerCache {
            q,
            k,
            v,
            alpha,
            head_concat,
            ln1,
            ff_pre,
            ff_act,
            ln2,
            rel,
        },
    ))
}

pub(crate) fn linear(x: &Mat, w: &Mat, b: &[Scalar]) -> Mat {
    let mut out = x.matmul(w);
    for i in 0..out.rows() {
        add_into(out.row_mut(i), b);
    }
    out
}

pub(crate) fn slice_head(packed: &Mat, head: usize, dh: usize) -> Mat {
    let n = packed.rows();
    Mat::from_fn(n, dh, |i, j| packed.get(i, head * dh + j))
}

pub(crate) fn write_head(packed: &mut Mat, head_out: &Mat, head: usize, dh: usize) {
    for i in 0..head_out.rows() {
        for j in 0..dh {
            packed.set(i, head * dh + j, head_out.get(i, j));
        }
    }
}

pub(crate) fn layer_norm(x: &Mat, gain: &[Scalar], bias: &[Scalar]) -> LnCache {
    let (n, d) = x.shape();
    let mut normalized = Mat::zeros(n, d);
    let mut out = Mat::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<Scalar>() / d as Scalar;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Scalar>() / d as Scalar;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(istd);
        for j in 0..d {
            let nrm = (row[j] - mean) * istd;
            normalized.set(i, j, nrm);
            out.set(i, j, nrm * gain[j] + bias[j]);
        }
    }
    LnCache {
        input: x.clone(),
        normalized,
        inv_std,
        out,
    }
}

const GELU_COEF: Scalar = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: Scalar = 0.044_715;

pub(crate) fn gelu(x: Scalar) -> Scalar {
    0.5 * x * (1.0 + (GELU_COEF * (x + GELU_CUBIC * x * x * x)).tanh())
}

pub(crate) fn gelu_derivative(x: Scalar) -> Scalar {
    let u = GELU_COEF * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationCode;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            layers: 2,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            vocab: 10,
            max_positions: 16,
        }
    }

    fn encode_simple(
        params: &EncoderParams,
        tokens: &[usize],
        graph: &CorefGraph,
    ) -> EncoderOutput {
        let positions: Vec<usize> = (0..tokens.len()).collect();
        encode(params, tokens, &positions, None, graph).unwrap()
    }

    #[test]
    fn zero_layers_returns_summed_embeddings() {
        let config = EncoderConfig {
            layers: 0,
            ..tiny_config()
        };
        let params = EncoderParams::init(config, 1).unwrap();
        let tokens = [1usize, 2, 3];
        let graph = CorefGraph::new(3, GraphKind::Input);
        let out = encode_simple(&params, &tokens, &graph);
        for (i, &t) in tokens.iter().enumerate() {
            for j in 0..config.d_model {
                let expected = params.tok_emb.get(t, j) + params.pos_emb.get(i, j);
                assert_eq!(out.hidden.get(i, j), expected);
            }
        }
    }

    #[test]
    fn extra_input_participates_in_the_sum() {
        let config = EncoderConfig {
            layers: 0,
            ..tiny_config()
        };
        let params = EncoderParams::init(config, 1).unwrap();
        let graph = CorefGraph::new(2, GraphKind::Input);
        let extra = Mat::from_fn(2, config.d_model, |i, j| (i + j) as Scalar * 0.1);
        let out = encode(&params, &[0, 1], &[0, 1], Some(&extra), &graph).unwrap();
        for i in 0..2 {
            for j in 0..config.d_model {
                let expected =
                    params.tok_emb.get(i, j) + params.pos_emb.get(i, j) + extra.get(i, j);
                assert_eq!(out.hidden.get(i, j), expected);
            }
        }
    }

    #[test]
    fn deterministic_forward() {
        let params = EncoderParams::init(tiny_config(), 3).unwrap();
        let mut graph = CorefGraph::new(4, GraphKind::Input);
        graph.set(2, 1, RelationCode::Mention).unwrap();
        let a = encode_simple(&params, &[1, 2, 3, 4], &graph);
        let b = encode_simple(&params, &[1, 2, 3, 4], &graph);
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn relation_conditioning_changes_hidden_states() {
        let params = EncoderParams::init(tiny_config(), 5).unwrap();
        let empty = CorefGraph::new(3, GraphKind::Input);
        let mut linked = CorefGraph::new(3, GraphKind::Input);
        linked.set(2, 0, RelationCode::Coref).unwrap();
        let a = encode_simple(&params, &[1, 2, 3], &empty);
        let b = encode_simple(&params, &[1, 2, 3], &linked);
        assert_ne!(a.hidden, b.hidden);
    }

    #[test]
    fn length_and_id_checks() {
        let params = EncoderParams::init(tiny_config(), 1).unwrap();
        let graph = CorefGraph::new(20, GraphKind::Input);
        let tokens = vec![0usize; 20];
        let positions: Vec<usize> = (0..20).collect();
        assert!(encode(&params, &tokens, &positions, None, &graph).is_err());

        let graph = CorefGraph::new(2, GraphKind::Input);
        assert!(encode(&params, &[0, 99], &[0, 1], None, &graph).is_err());
    }

    #[test]
    fn attention_rows_sum_to_one_in_full_stack() {
        let params = EncoderParams::init(tiny_config(), 9).unwrap();
        let mut graph = CorefGraph::new(5, GraphKind::Input);
        graph.set(3, 1, RelationCode::Coref).unwrap();
        let out = encode_simple(&params, &[1, 2, 3, 4, 5], &graph);
        for layer in &out.layers {
            for alpha in &layer.alpha {
                for i in 0..alpha.rows() {
                    let sum: Scalar = alpha.row(i).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shapes_stable_across_lengths() {
        let params = EncoderParams::init(tiny_config(), 2).unwrap();
        for n in [1usize, 2, 7, 16] {
            let graph = CorefGraph::new(n, GraphKind::Input);
            let tokens = vec![1usize; n];
            let positions: Vec<usize> = (0..n).collect();
            let out = encode(&params, &tokens, &positions, None, &graph).unwrap();
            assert_eq!(out.hidden.shape(), (n, 8));
        }
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.2, 1.5, 4.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_derivative(x) - fd).abs() < 1e-8, "x = {x}");
        }
    }
}
