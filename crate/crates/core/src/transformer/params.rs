use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: 64-dim embeddings, 4 heads, 2 layers, 64 positions.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            max_seq_len: 64,
            embed_dim: 64,
            n_heads: 4,
            n_layers: 2,
            dropout_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size == 0 || self.embed_dim == 0 || self.n_heads == 0 || self.n_layers == 0 {
            return bad("dimensions must be positive");
        }
        if !self.embed_dim.is_multiple_of(self.n_heads) {
            return bad("embed_dim must be divisible by n_heads");
        }
        if self.max_seq_len < 2 {
            return bad("max_seq_len must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Vec<f64>,
    pub ln1_b: Vec<f64>,
    pub w_qkv: Matrix,
    pub b_qkv: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
    pub ln2_g: Vec<f64>,
    pub ln2_b: Vec<f64>,
    pub w_fc: Matrix,
    pub b_fc: Vec<f64>,
    pub w_proj: Matrix,
    pub b_proj: Vec<f64>,
}

/// Every trainable tensor. Gradients and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub wte: Matrix,
    pub wpe: Matrix,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Vec<f64>,
    pub lnf_b: Vec<f64>,
    pub w_out: Matrix,
}

impl Params {
    pub fn zeros(c: &ModelConfig) -> Self {
        let d = c.embed_dim;
        let layer = LayerParams {
            ln1_g: vec![0.0; d],
            ln1_b: vec![0.0; d],
            w_qkv: Matrix::zeros(d, 3 * d),
            b_qkv: vec![0.0; 3 * d],
            w_o: Matrix::zeros(d, d),
            b_o: vec![0.0; d],
            ln2_g: vec![0.0; d],
            ln2_b: vec![0.0; d],
            w_fc: Matrix::zeros(d, 4 * d),
            b_fc: vec![0.0; 4 * d],
            w_proj: Matrix::zeros(4 * d, d),
            b_proj: vec![0.0; d],
        };
        Self {
            wte: Matrix::zeros(c.vocab_size, d),
            wpe: Matrix::zeros(c.max_seq_len, d),
            layers: vec![layer; c.n_layers],
            lnf_g: vec![0.0; d],
            lnf_b: vec![0.0; d],
            w_out: Matrix::zeros(d, c.vocab_size),
        }
    }

    /// Normal(0, 0.02) weights, zero biases and shifts, unit layer-norm scales.
    pub fn init<R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(c);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let mut fill = |m: &mut Matrix| m.data.iter_mut().for_each(|x| *x = normal.sample(rng));
        fill(&mut p.wte);
        fill(&mut p.wpe);
        for l in &mut p.layers {
            fill(&mut l.w_qkv);
            fill(&mut l.w_o);
            fill(&mut l.w_fc);
            fill(&mut l.w_proj);
            l.ln1_g.fill(1.0);
            l.ln2_g.fill(1.0);
        }
        fill(&mut p.w_out);
        p.lnf_g.fill(1.0);
        p
    }

    /// Named flat views in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("wte".into(), &self.wte.data),
            ("wpe".into(), &self.wpe.data),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend([
                (format!("h{i}.ln1_g"), l.ln1_g.as_slice()),
                (format!("h{i}.ln1_b"), &l.ln1_b),
                (format!("h{i}.w_qkv"), &l.w_qkv.data),
                (format!("h{i}.b_qkv"), &l.b_qkv),
                (format!("h{i}.w_o"), &l.w_o.data),
                (format!("h{i}.b_o"), &l.b_o),
                (format!("h{i}.ln2_g"), &l.ln2_g),
                (format!("h{i}.ln2_b"), &l.ln2_b),
                (format!("h{i}.w_fc"), &l.w_fc.data),
                (format!("h{i}.b_fc"), &l.b_fc),
                (format!("h{i}.w_proj"), &l.w_proj.data),
                (format!("h{i}.b_proj"), &l.b_proj),
            ]);
        }
        out.extend([
            ("lnf_g".into(), self.lnf_g.as_slice()),
            ("lnf_b".into(), &self.lnf_b),
            ("w_out".into(), &self.w_out.data),
        ]);
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.wte.data, &mut self.wpe.data];
        for l in self.layers.iter_mut() {
            let LayerParams {
                ln1_g,
                ln1_b,
                w_qkv,
                b_qkv,
                w_o,
                b_o,
                ln2_g,
                ln2_b,
                w_fc,
                b_fc,
                w_proj,
                b_proj,
            } = l;
            out.extend([
                ln1_g.as_mut_slice(),
                ln1_b,
                &mut w_qkv.data,
                b_qkv,
                &mut w_o.data,
                b_o,
                ln2_g,
                ln2_b,
                &mut w_fc.data,
                b_fc,
                &mut w_proj.data,
                b_proj,
            ]);
        }
        out.extend([
            self.lnf_g.as_mut_slice(),
            &mut self.lnf_b,
            &mut self.w_out.data,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}
