//! Per-pair relation embeddings inside self-attention.
//!
//! The relation between tokens i and j is a code in {0, 1, 2}; its embedding
//! row is specialized into a key vector and a value vector which are added to
//! the attention key and value for that pair. Because there are only three
//! codes, the full N x N x d tensors collapse to three specialized rows plus
//! a code lookup; `key(i, j)` and `value(i, j)` return exactly the row the
//! dense tensor would hold.

use crate::graph::CorefGraph;
use crate::mat::{dot, softmax_in_place, Mat};
use crate::error::{Error, Result};
use crate::Scalar;

pub const RELATION_TYPES: usize = 3;

/// Pairwise relation key/value vectors for one layer.
#[derive(Debug, Clone)]
pub struct RelationTensors {
    n: usize,
    d_head: usize,
    /// Symmetric code lookup, row-major N x N. The stored graph is lower
    /// triangular; pairs above the diagonal mirror the stored cell so both
    /// attention directions see the link.
    codes: Vec<u8>,
    key_rows: [Vec<Scalar>; RELATION_TYPES],
    value_rows: [Vec<Scalar>; RELATION_TYPES],
}

impl RelationTensors {
    /// Specializes the embedding table: key row c = E[c] · W_key, value row
    /// c = E[c] · W_value. Pairs above the diagonal mirror the stored cell.
    pub fn build(g: &CorefGraph, rel_emb: &Mat, w_key: &Mat, w_value: &Mat) -> Self {
        Self::build_with_mirror(g, rel_emb, w_key, w_value, true)
    }

    /// Like `build`, with the upper-triangle lookup selectable: mirrored
    /// (the default, both attention directions see a link) or directional
    /// (queries from earlier tokens read code 0).
    pub fn build_with_mirror(
        g: &CorefGraph,
        rel_emb: &Mat,
        w_key: &Mat,
        w_value: &Mat,
        mirror: bool,
    ) -> Self {
        let d_head = w_key.rows();
        debug_assert_eq!(rel_emb.shape(), (RELATION_TYPES, d_head));
        debug_assert_eq!(w_key.shape(), (d_head, d_head));
        debug_assert_eq!(w_value.shape(), (d_head, d_head));
        let specialize = |w: &Mat, c: usize| -> Vec<Scalar> {
            let e = rel_emb.row(c);
            (0..d_head)
                .map(|b| (0..d_head).map(|a| e[a] * w.get(a, b)).sum())
                .collect()
        };
        let n = g.len();
        let mut codes = vec![0u8; n * n];
        for (i, j, c) in g.cells() {
            codes[i * n + j] = c;
            if mirror {
                codes[j * n + i] = c;
            }
        }
        RelationTensors {
            n,
            d_head,
            codes,
            key_rows: [
                specialize(w_key, 0),
                specialize(w_key, 1),
                specialize(w_key, 2),
            ],
            value_rows: [
                specialize(w_value, 0),
                specialize(w_value, 1),
                specialize(w_value, 2),
            ],
        }
    }

    /// All-zero relation vectors; attention degenerates to the vanilla form.
    pub fn zeros(n: usize, d_head: usize) -> Self {
        RelationTensors {
            n,
            d_head,
            codes: vec![0; n * n],
            key_rows: [vec![0.0; d_head], vec![0.0; d_head], vec![0.0; d_head]],
            value_rows: [vec![0.0; d_head], vec![0.0; d_head], vec![0.0; d_head]],
        }
    }

    /// Builds directly from explicit per-code rows; used by tests that pin
    /// hand-computed values.
    pub fn from_rows(
        g: &CorefGraph,
        key_rows: [Vec<Scalar>; RELATION_TYPES],
        value_rows: [Vec<Scalar>; RELATION_TYPES],
    ) -> Self {
        let n = g.len();
        let d_head = key_rows[0].len();
        let mut codes = vec![0u8; n * n];
        for (i, j, c) in g.cells() {
            codes[i * n + j] = c;
            codes[j * n + i] = c;
        }
        RelationTensors {
            n,
            d_head,
            codes,
            key_rows,
            value_rows,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn d_head(&self) -> usize {
        self.d_head
    }

    #[inline]
    pub fn code(&self, i: usize, j: usize) -> u8 {
        self.codes[i * self.n + j]
    }

    /// The key vector added to K_j when queried from position i.
    #[inline]
    pub fn key(&self, i: usize, j: usize) -> &[Scalar] {
        &self.key_rows[self.code(i, j) as usize]
    }

    /// The value vector added to V_j when attended from position i.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> &[Scalar] {
        &self.value_rows[self.code(i, j) as usize]
    }
}

/// Builds the pairwise relation tensors for one layer from the input graph.
pub fn build_relation_tensors(
    g: &CorefGraph,
    rel_emb: &Mat,
    w_key: &Mat,
    w_value: &Mat,
) -> RelationTensors {
    RelationTensors::build(g, rel_emb, w_key, w_value)
}

/// Scaled dot-product attention with per-pair relation vectors added to keys
/// and values. `q`, `k`, `v` are single-head N x d matrices. Returns the
/// head output and the attention weights.
pub fn relation_attention(q: &Mat, k: &Mat, v: &Mat, rel: &RelationTensors) -> Result<(Mat, Mat)> {
    let n = q.rows();
    let d = q.cols();
    if k.shape() != (n, d) || v.shape() != (n, d) {
        return Err(Error::data("attention inputs must share the same shape"));
    }
    if rel.len() != n || rel.d_head() != d {
        return Err(Error::data("relation tensors do not match attention shape"));
    }
    if !(q.is_finite() && k.is_finite() && v.is_finite()) {
        return Err(Error::numeric("non-finite attention inputs"));
    }
    let scale = 1.0 / (d as Scalar).sqrt();
    let mut alpha = Mat::zeros(n, n);
    let mut out = Mat::zeros(n, d);
    for i in 0..n {
        let q_i = q.row(i);
        let row = alpha.row_mut(i);
        for j in 0..n {
            row[j] = (dot(q_i, k.row(j)) + dot(q_i, rel.key(i, j))) * scale;
        }
        softmax_in_place(row);
        let out_row = out.row_mut(i);
        for j in 0..n {
            let a = row[j];
            let v_j = v.row(j);
            let r_j = rel.value(i, j);
            for (x, (b, r)) in out_row.iter_mut().zip(v_j.iter().zip(r_j.iter())) {
                *x += a * (*b + *r);
            }
        }
    }
    Ok((out, alpha))
}
