//! Gradient-descent variants.
//!
//! Plain momentum is the default; an adaptive-moment optimizer is available
//! behind a flag. State is kept as flat vectors aligned with the stable
//! tensor order of `EncoderParams::tensors`, so it can be checkpointed and
//! restored for bit-exact training resumption.

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Momentum { momentum: Scalar },
    Adam { beta1: Scalar, beta2: Scalar, eps: Scalar },
}

impl OptimizerKind {
    pub fn momentum() -> Self {
        OptimizerKind::Momentum { momentum: 0.9 }
    }

    /// Adam with a short second-moment horizon (beta2 = 0.98); the long
    /// default horizon adapts too slowly for runs of a few thousand steps.
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: Scalar,
    first_moment: Vec<Vec<Scalar>>,
    second_moment: Vec<Vec<Scalar>>,
    steps: usize,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: Scalar, params: &EncoderParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        let first_moment = shapes.iter().map(|&n| vec![0.0; n]).collect();
        let second_moment = match kind {
            OptimizerKind::Momentum { .. } => Vec::new(),
            OptimizerKind::Adam { .. } => shapes.iter().map(|&n| vec![0.0; n]).collect(),
        };
        Optimizer {
            kind,
            learning_rate,
            first_moment,
            second_moment,
            steps: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// One update; `grads` must come from the same parameter shapes.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) {
        self.steps += 1;
        let grad_tensors: Vec<&[Scalar]> = grads.tensors().into_iter().map(|(_, t)| t).collect();
        let mut param_tensors = params.tensors_mut();
        match self.kind {
            OptimizerKind::Momentum { momentum } => {
                for (idx, (_, p)) in param_tensors.iter_mut().enumerate() {
                    let v = &mut self.first_moment[idx];
                    let g = grad_tensors[idx];
                    for k in 0..p.len() {
                        v[k] = momentum * v[k] + g[k];
                        p[k] -= self.learning_rate * v[k];
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as Scalar;
                let bias1 = 1.0 - beta1.powf(t);
                let bias2 = 1.0 - beta2.powf(t);
                for (idx, (_, p)) in param_tensors.iter_mut().enumerate() {
                    let m = &mut self.first_moment[idx];
                    let v = &mut self.second_moment[idx];
                    let g = grad_tensors[idx];
                    for k in 0..p.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        let m_hat = m[k] / bias1;
                        let v_hat = v[k] / bias2;
                        p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn tiny_params() -> EncoderParams {
        EncoderParams::init(
            EncoderConfig {
                layers: 1,
                heads: 1,
                d_model: 4,
                d_ff: 8,
                vocab: 5,
                max_positions: 6,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut grads = EncoderParams::zeros(params.config).unwrap();
        for (_, t) in grads.tensors_mut() {
            for v in t {
                *v = 1.0;
            }
        }
        for kind in [OptimizerKind::momentum(), OptimizerKind::adam()] {
            let mut opt = Optimizer::new(kind, 0.0, &params);
            opt.step(&mut params, &grads);
            assert_eq!(params, before);
        }
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut params = tiny_params();
        let w0 = params.tok_emb.get(0, 0);
        let mut grads = EncoderParams::zeros(params.config).unwrap();
        grads.tok_emb.set(0, 0, 1.0);
        let mut opt = Optimizer::new(OptimizerKind::Momentum { momentum: 0.5 }, 0.1, &params);
        opt.step(&mut params, &grads);
        assert!((params.tok_emb.get(0, 0) - (w0 - 0.1)).abs() < 1e-12);
        opt.step(&mut params, &grads);
        // velocity = 0.5 * 1 + 1 = 1.5
        assert!((params.tok_emb.get(0, 0) - (w0 - 0.1 - 0.15)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_size_is_learning_rate() {
        let mut params = tiny_params();
        let w0 = params.tok_emb.get(0, 0);
        let mut grads = EncoderParams::zeros(params.config).unwrap();
        grads.tok_emb.set(0, 0, 0.37);
        let mut opt = Optimizer::new(OptimizerKind::adam(), 0.01, &params);
        opt.step(&mut params, &grads);
        // bias-corrected first step is lr * g / (|g| + eps) ≈ lr
        assert!((params.tok_emb.get(0, 0) - (w0 - 0.01)).abs() < 1e-6);
    }
}
