//! Small decoder-only causal transformer with hand-written gradients.
//!
//! Pre-layer-norm blocks (attention then a 4x GELU MLP), learned positional
//! embeddings and an untied output projection. Everything is `f64`.

mod checkpoint;
mod optim;
mod pass;
mod params;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use optim::{AdamW, AdamWConfig};
pub use params::{LayerParams, ModelConfig, Params};

use crate::tensor::{log_softmax, Matrix};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty sequence")]
    Empty,
    #[error("token id {id} is outside the vocabulary of {vocab}")]
    BadToken { id: u32, vocab: usize },
    #[error("target mask has length {found}, expected {expected}")]
    MaskLength { found: usize, expected: usize },
    #[error("no supervised target positions")]
    NoTargets,
    #[error("position 0 cannot be a target")]
    FirstPositionTarget,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean next-token NLL over the supervised positions of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total_loss: f64,
    pub token_count: usize,
    /// NLL of each supervised position, in sequence order.
    pub per_position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    pub config: ModelConfig,
    pub params: Params,
    /// Hash of the vocabulary the model was built for.
    pub vocab_hash: String,
}

impl TransformerModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, vocab_hash: impl Into<String>, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            params: Params::init(&config, rng),
            config,
            vocab_hash: vocab_hash.into(),
        })
    }

    /// A model whose every parameter is zero: uniform next-token distributions.
    pub fn zeroed(config: ModelConfig, vocab_hash: impl Into<String>) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            params: Params::zeros(&config),
            config,
            vocab_hash: vocab_hash.into(),
        })
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::Empty);
        }
        if ids.len() > self.config.max_seq_len {
            return Err(ModelError::TooLong {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::BadToken {
                id,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Logits for every position; row `i` scores the token after `ids[..=i]`.
    pub fn forward(&self, ids: &[u32]) -> Result<Matrix, ModelError> {
        self.check_ids(ids)?;
        Ok(pass::forward::<ChaCha8Rng>(&self.config, &self.params, ids, None).logits)
    }

    /// Logits of the next token after the whole of `ids`.
    pub fn next_logits(&self, ids: &[u32]) -> Result<Vec<f64>, ModelError> {
        self.check_ids(ids)?;
        Ok(pass::last_logits(&self.config, &self.params, ids))
    }

    fn mask_weights(&self, ids: &[u32], target_mask: &[bool]) -> Result<Vec<f64>, ModelError> {
        if target_mask.len() != ids.len() {
            return Err(ModelError::MaskLength {
                found: target_mask.len(),
                expected: ids.len(),
            });
        }
        if target_mask.first() == Some(&true) {
            return Err(ModelError::FirstPositionTarget);
        }
        let n = target_mask.iter().filter(|&&m| m).count();
        if n == 0 {
            return Err(ModelError::NoTargets);
        }
        Ok(target_mask
            .iter()
            .map(|&m| if m { 1.0 / n as f64 } else { 0.0 })
            .collect())
    }

    /// `target_mask[i]` marks `ids[i]` as a supervised prediction from
    /// position `i - 1`.
    pub fn loss(&self, ids: &[u32], target_mask: &[bool]) -> Result<LossReport, ModelError> {
        let weights = self.mask_weights(ids, target_mask)?;
        let logits = self.forward(ids)?;
        Ok(report(&logits, ids, &weights))
    }

    /// Loss report plus exact gradients of its `total_loss`.
    pub fn backward(&self, ids: &[u32], target_mask: &[bool]) -> Result<(LossReport, Params), ModelError> {
        self.backward_with_rng::<ChaCha8Rng>(ids, target_mask, None)
    }

    /// As [`backward`](Self::backward); `rng` drives dropout when the config enables it.
    pub fn backward_with_rng<R: Rng + ?Sized>(
        &self,
        ids: &[u32],
        target_mask: &[bool],
        rng: Option<&mut R>,
    ) -> Result<(LossReport, Params), ModelError> {
        let weights = self.mask_weights(ids, target_mask)?;
        self.check_ids(ids)?;
        let cache = pass::forward(&self.config, &self.params, ids, rng);
        let rep = report(&cache.logits, ids, &weights);
        let grads = pass::backward(&self.config, &self.params, &cache, &weighted_dlogits(&cache.logits, ids, &weights));
        Ok((rep, grads))
    }

    /// Value and gradient of `sum_i weights[i] * NLL_i` for arbitrary
    /// nonnegative per-position weights (`weights[0]` must be zero).
    pub fn weighted_backward(&self, ids: &[u32], weights: &[f64]) -> Result<(f64, Params), ModelError> {
        self.check_ids(ids)?;
        if weights.len() != ids.len() {
            return Err(ModelError::MaskLength {
                found: weights.len(),
                expected: ids.len(),
            });
        }
        if weights[0] != 0.0 {
            return Err(ModelError::FirstPositionTarget);
        }
        let cache = pass::forward::<ChaCha8Rng>(&self.config, &self.params, ids, None);
        let value: f64 = (1..ids.len())
            .filter(|&i| weights[i] != 0.0)
            .map(|i| weights[i] * -log_softmax(cache.logits.row(i - 1))[ids[i] as usize])
            .sum();
        let grads = pass::backward(&self.config, &self.params, &cache, &weighted_dlogits(&cache.logits, ids, weights));
        Ok((value, grads))
    }
}

fn report(logits: &Matrix, ids: &[u32], weights: &[f64]) -> LossReport {
    let per_position: Vec<f64> = (1..ids.len())
        .filter(|&i| weights[i] != 0.0)
        .map(|i| -log_softmax(logits.row(i - 1))[ids[i] as usize])
        .collect();
    let token_count = per_position.len();
    let total_loss = per_position.iter().sum::<f64>() / token_count as f64;
    LossReport {
        total_loss,
        token_count,
        per_position,
    }
}

fn weighted_dlogits(logits: &Matrix, ids: &[u32], weights: &[f64]) -> Matrix {
    let mut d = Matrix::zeros(logits.rows, logits.cols);
    for i in 1..ids.len() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let p = crate::tensor::softmax(logits.row(i - 1));
        let row = d.row_mut(i - 1);
        for (g, pk) in row.iter_mut().zip(&p) {
            *g = w * pk;
        }
        row[ids[i] as usize] -= w;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny(seed: u64) -> TransformerModel {
        let cfg = ModelConfig {
            vocab_size: 16,
            max_seq_len: 8,
            embed_dim: 8,
            n_heads: 2,
            n_layers: 1,
            dropout_rate: 0.0,
        };
        TransformerModel::new(cfg, "test", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let cfg = ModelConfig::desk(50);
        let m = TransformerModel::zeroed(cfg, "x").unwrap();
        let ids = [1, 2, 3, 4];
        let logits = m.forward(&ids).unwrap();
        assert!(logits.data.iter().all(|&x| x == 0.0));
        let rep = m.loss(&ids, &[false, true, true, true]).unwrap();
        for nll in rep.per_position {
            assert!((nll - (50f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_normalize() {
        let m = tiny(3);
        let logits = m.forward(&[1, 5, 7, 2, 9]).unwrap();
        for r in 0..logits.rows {
            let s: f64 = crate::tensor::softmax(logits.row(r)).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hand_set_two_token_logits() {
        // softmax([ln 3, ln 1]) = (3/4, 1/4): NLL of token 0 is ln(4/3)
        let cfg = ModelConfig {
            vocab_size: 2,
            max_seq_len: 2,
            embed_dim: 2,
            n_heads: 1,
            n_layers: 1,
            dropout_rate: 0.0,
        };
        let mut m = TransformerModel::zeroed(cfg, "x").unwrap();
        // final layer norm output is exactly lnf_b when gains are zero
        m.params.lnf_b = vec![1.0, 0.0];
        m.params.w_out = Matrix::from_vec(2, 2, vec![3f64.ln(), 0.0, 0.0, 0.0]);
        let rep = m.loss(&[1, 0], &[false, true]).unwrap();
        assert!((rep.total_loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn causal_rows_bit_identical() {
        for layers in [1, 2] {
            let mut cfg = ModelConfig::desk(30);
            cfg.n_layers = layers;
            let m = TransformerModel::new(cfg, "x", &mut ChaCha8Rng::seed_from_u64(layers as u64)).unwrap();
            let ids: Vec<u32> = vec![3, 14, 15, 9, 2, 6, 5, 3, 5];
            let base = m.forward(&ids).unwrap();
            for j in 0..ids.len() {
                let mut alt = ids.clone();
                alt[j] = (alt[j] + 7) % 30;
                let other = m.forward(&alt).unwrap();
                for r in 0..j {
                    assert_eq!(base.row(r), other.row(r), "layers={layers} j={j} row={r}");
                }
            }
        }
    }

    #[test]
    fn next_logits_matches_last_row() {
        let m = tiny(9);
        let ids = [1, 2, 3, 4, 5];
        let all = m.forward(&ids).unwrap();
        let last = m.next_logits(&ids).unwrap();
        for (a, b) in all.row(4).iter().zip(&last) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argument_errors() {
        let m = tiny(1);
        assert!(matches!(m.forward(&[0; 9]), Err(ModelError::TooLong { .. })));
        assert!(matches!(m.forward(&[16]), Err(ModelError::BadToken { .. })));
        assert!(matches!(m.loss(&[1, 2], &[false, false]), Err(ModelError::NoTargets)));
    }

    #[test]
    fn absent_tokens_get_zero_embedding_gradient() {
        let m = tiny(4);
        let ids = [1, 2, 3, 2];
        let (_, g) = m.backward(&ids, &[false, true, true, true]).unwrap();
        for tok in [0usize, 4, 5, 15] {
            assert!(g.wte.row(tok).iter().all(|&x| x == 0.0));
        }
        // positions beyond the sequence get no gradient either
        assert!(g.wpe.row(6).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn doubled_weights_double_gradients() {
        let m = tiny(5);
        let ids = [1, 7, 3, 2, 11];
        let w1 = [0.0, 0.25, 0.25, 0.25, 0.25];
        let w2: Vec<f64> = w1.iter().map(|w| 2.0 * w).collect();
        let (v1, g1) = m.weighted_backward(&ids, &w1).unwrap();
        let (v2, g2) = m.weighted_backward(&ids, &w2).unwrap();
        assert!((v2 - 2.0 * v1).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
        // the mask-based loss is the equal-weight special case
        let (rep, g) = m.backward(&ids, &[false, true, true, true, true]).unwrap();
        assert!((rep.total_loss - v1).abs() < 1e-12);
        assert!((g.l2_norm() - g1.l2_norm()).abs() < 1e-12);
    }
}
