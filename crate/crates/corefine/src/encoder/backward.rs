//! Exact reverse-mode gradients for the encoder.
//!
//! Mirrors the forward pass in `mod.rs` step by step; every formula here is
//! checked against central finite differences in the test suite.

use super::{
    gelu_derivative, slice_head, EncoderOutput, EncoderParams, LayerCache, LayerParams, LnCache,
    RELATION_TYPES,
};
use crate::error::{Error, Result};
use crate::mat::{add_into, axpy, dot, Mat};
use crate::Scalar;

/// Accumulates parameter gradients for a forward pass into `grads`, given the
/// gradient of the loss with respect to the final hidden states.
pub fn backprop(
    d_hidden: &Mat,
    out: &EncoderOutput,
    params: &EncoderParams,
    grads: &mut EncoderParams,
) -> Result<()> {
    let cfg = &params.config;
    if grads.config != *cfg {
        return Err(Error::data("gradient container does not match the config"));
    }
    if out.layers.len() != params.layers.len() || out.layer_inputs.len() != params.layers.len() {
        return Err(Error::data("forward cache does not match the parameters"));
    }
    if d_hidden.shape() != out.hidden.shape() {
        return Err(Error::data("output gradient shape mismatch"));
    }

    let mut dx = d_hidden.clone();
    for l in (0..params.layers.len()).rev() {
        dx = layer_backward(
            cfg.heads,
            cfg.d_head(),
            &params.layers[l],
            &out.layers[l],
            &out.layer_inputs[l],
            &dx,
            &mut grads.layers[l],
        );
    }

    for (i, (&t, &p)) in out.tokens.iter().zip(out.positions.iter()).enumerate() {
        add_into(grads.tok_emb.row_mut(t), dx.row(i));
        add_into(grads.pos_emb.row_mut(p), dx.row(i));
    }
    Ok(())
}

fn layer_backward(
    heads: usize,
    dh: usize,
    layer: &LayerParams,
    cache: &LayerCache,
    x: &Mat,
    d_out: &Mat,
    g: &mut LayerParams,
) -> Mat {
    // out = LN2(ln1.out + ff_out)
    let d_res2 = ln_backward(&cache.ln2, d_out, &layer.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

    // ff_out = gelu(ln1.out · W1 + b1) · W2 + b2
    let d_ff_out = &d_res2;
    g.ff_w2.add_assign(&cache.ff_act.transpose_matmul(d_ff_out));
    add_col_sums(&mut g.ff_b2, d_ff_out);
    let d_act = d_ff_out.matmul_transpose(&layer.ff_w2);
    let mut d_pre = d_act;
    for i in 0..d_pre.rows() {
        let pre_row = cache.ff_pre.row(i);
        for (dv, &pre) in d_pre.row_mut(i).iter_mut().zip(pre_row.iter()) {
            *dv *= gelu_derivative(pre);
        }
    }
    g.ff_w1.add_assign(&cache.ln1.out.transpose_matmul(&d_pre));
    add_col_sums(&mut g.ff_b1, &d_pre);

    let mut d_ln1_out = d_res2.clone();
    d_ln1_out.add_assign(&d_pre.matmul_transpose(&layer.ff_w1));

    // ln1.out = LN1(x + attn_out)
    let d_res1 = ln_backward(
        &cache.ln1,
        &d_ln1_out,
        &layer.ln1_gain,
        &mut g.ln1_gain,
        &mut g.ln1_bias,
    );

    // attn_out = head_concat · W_o + b_o
    let d_attn_out = &d_res1;
    g.w_o.add_assign(&cache.head_concat.transpose_matmul(d_attn_out));
    add_col_sums(&mut g.b_o, d_attn_out);
    let d_concat = d_attn_out.matmul_transpose(&layer.w_o);

    let n = x.rows();
    let scale = 1.0 / (dh as Scalar).sqrt();
    let mut d_q = Mat::zeros(n, heads * dh);
    let mut d_k = Mat::zeros(n, heads * dh);
    let mut d_v = Mat::zeros(n, heads * dh);
    let mut d_key_rows = vec![vec![0.0; dh]; RELATION_TYPES];
    let mut d_value_rows = vec![vec![0.0; dh]; RELATION_TYPES];

    for h in 0..heads {
        let q_h = slice_head(&cache.q, h, dh);
        let k_h = slice_head(&cache.k, h, dh);
        let v_h = slice_head(&cache.v, h, dh);
        let d_out_h = slice_head(&d_concat, h, dh);
        let alpha = &cache.alpha[h];
        let rel = &cache.rel;

        // output_i = sum_j alpha_ij (v_j + value(i, j))
        let mut d_alpha = Mat::zeros(n, n);
        for i in 0..n {
            let d_out_i = d_out_h.row(i);
            for j in 0..n {
                let a = alpha.get(i, j);
                axpy(&mut d_v.row_mut(j)[h * dh..(h + 1) * dh], a, d_out_i);
                axpy(&mut d_value_rows[rel.code(i, j) as usize], a, d_out_i);
                let mut s = dot(d_out_i, v_h.row(j));
                s += dot(d_out_i, rel.value(i, j));
                d_alpha.set(i, j, s);
            }
        }

        // softmax rows
        for i in 0..n {
            let alpha_row = alpha.row(i);
            let d_alpha_row = d_alpha.row_mut(i);
            let correction = dot(alpha_row, d_alpha_row);
            for (dv, &a) in d_alpha_row.iter_mut().zip(alpha_row.iter()) {
                *dv = a * (*dv - correction);
            }
        }

        // score_ij = (q_i · (k_j + key(i, j))) * scale
        for i in 0..n {
            let q_i = q_h.row(i);
            for j in 0..n {
                let c = d_alpha.get(i, j) * scale;
                if c == 0.0 {
                    continue;
                }
                {
                    let d_q_i = &mut d_q.row_mut(i)[h * dh..(h + 1) * dh];
                    axpy(d_q_i, c, k_h.row(j));
                    axpy(d_q_i, c, rel.key(i, j));
                }
                axpy(&mut d_k.row_mut(j)[h * dh..(h + 1) * dh], c, q_i);
                axpy(&mut d_key_rows[rel.code(i, j) as usize], c, q_i);
            }
        }
    }

    // projections: q = x · W_q + b_q, etc.
    let mut d_x = d_res1.clone();
    g.w_q.add_assign(&x.transpose_matmul(&d_q));
    add_col_sums(&mut g.b_q, &d_q);
    d_x.add_assign(&d_q.matmul_transpose(&layer.w_q));
    g.w_k.add_assign(&x.transpose_matmul(&d_k));
    add_col_sums(&mut g.b_k, &d_k);
    d_x.add_assign(&d_k.matmul_transpose(&layer.w_k));
    g.w_v.add_assign(&x.transpose_matmul(&d_v));
    add_col_sums(&mut g.b_v, &d_v);
    d_x.add_assign(&d_v.matmul_transpose(&layer.w_v));

    // key_row[c] = E[c] · W_key, value_row[c] = E[c] · W_value
    for c in 0..RELATION_TYPES {
        let e_row = layer.rel_emb.row(c);
        for a in 0..dh {
            let mut de = 0.0;
            for b in 0..dh {
                de += d_key_rows[c][b] * layer.rel_w_key.get(a, b)
                    + d_value_rows[c][b] * layer.rel_w_value.get(a, b);
                g.rel_w_key.add_at(a, b, e_row[a] * d_key_rows[c][b]);
                g.rel_w_value.add_at(a, b, e_row[a] * d_value_rows[c][b]);
            }
            g.rel_emb.add_at(c, a, de);
        }
    }

    d_x
}

/// Backward through `y = gain ⊙ normalized + bias`; returns the gradient with
/// respect to the pre-normalization input.
fn ln_backward(
    cache: &LnCache,
    d_out: &Mat,
    gain: &[Scalar],
    d_gain: &mut [Scalar],
    d_bias: &mut [Scalar],
) -> Mat {
    let (n, d) = d_out.shape();
    let mut d_input = Mat::zeros(n, d);
    for i in 0..n {
        let nrm = cache.normalized.row(i);
        let dy = d_out.row(i);
        let mut dxhat = vec![0.0; d];
        for j in 0..d {
            dxhat[j] = dy[j] * gain[j];
            d_gain[j] += dy[j] * nrm[j];
            d_bias[j] += dy[j];
        }
        let m1: Scalar = dxhat.iter().sum::<Scalar>() / d as Scalar;
        let m2: Scalar = dxhat
            .iter()
            .zip(nrm.iter())
            .map(|(a, b)| a * b)
            .sum::<Scalar>()
            / d as Scalar;
        let istd = cache.inv_std[i];
        let row = d_input.row_mut(i);
        for j in 0..d {
            row[j] = istd * (dxhat[j] - m1 - nrm[j] * m2);
        }
    }
    d_input
}

fn add_col_sums(target: &mut [Scalar], m: &Mat) {
    for i in 0..m.rows() {
        add_into(target, m.row(i));
    }
}
