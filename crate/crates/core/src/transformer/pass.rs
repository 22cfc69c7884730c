//! Forward and backward passes over a single token sequence.

use rand::Rng;

use super::params::{LayerParams, ModelConfig, Params};
use crate::tensor::{add_col_sums, add_matmul_at, add_row_bias, matmul, matmul_bt, softmax, Matrix};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

pub(super) struct LnCache {
    out: Matrix,
    xhat: Matrix,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Matrix, g: &[f64], b: &[f64]) -> LnCache {
    let d = x.cols;
    let mut out = Matrix::zeros(x.rows, d);
    let mut xhat = Matrix::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(rs);
        let xr = xhat.row_mut(r);
        for (h, v) in xr.iter_mut().zip(row) {
            *h = (v - mean) * rs;
        }
        let xr = xhat.row(r).to_vec();
        for ((o, h), (gi, bi)) in out.row_mut(r).iter_mut().zip(&xr).zip(g.iter().zip(b)) {
            *o = h * gi + bi;
        }
    }
    LnCache { out, xhat, rstd }
}

/// Returns dx; accumulates dg and db.
fn layer_norm_backward(dout: &Matrix, c: &LnCache, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Matrix {
    let d = dout.cols;
    let mut dx = Matrix::zeros(dout.rows, d);
    for r in 0..dout.rows {
        let dy = dout.row(r);
        let xh = c.xhat.row(r);
        let mut dxhat = vec![0.0; d];
        for i in 0..d {
            dg[i] += dy[i] * xh[i];
            db[i] += dy[i];
            dxhat[i] = dy[i] * g[i];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let rs = c.rstd[r];
        for (i, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = rs * (dxhat[i] - mean_d - xh[i] * mean_dx);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

pub(super) struct LayerCache {
    ln1: LnCache,
    qkv: Matrix,
    probs: Vec<f64>,
    atty: Matrix,
    ln2: LnCache,
    fc: Matrix,
    act: Matrix,
    drop_attn: Option<Vec<f64>>,
    drop_mlp: Option<Vec<f64>>,
}

pub(super) struct Cache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pub logits: Matrix,
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(m: &mut Matrix, mask: &Option<Vec<f64>>) {
    if let Some(mask) = mask {
        m.data.iter_mut().zip(mask).for_each(|(x, k)| *x *= k);
    }
}

fn attention(cfg: &ModelConfig, qkv: &Matrix) -> (Matrix, Vec<f64>) {
    let t = qkv.rows;
    let d = cfg.embed_dim;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut probs = vec![0.0; cfg.n_heads * t * t];
    let mut y = Matrix::zeros(t, d);
    for h in 0..cfg.n_heads {
        let (qo, ko, vo) = (h * hd, d + h * hd, 2 * d + h * hd);
        for i in 0..t {
            let q = &qkv.row(i)[qo..qo + hd];
            let scores: Vec<f64> = (0..=i)
                .map(|j| {
                    let k = &qkv.row(j)[ko..ko + hd];
                    q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect();
            let p = softmax(&scores);
            let base = (h * t + i) * t;
            probs[base..base + i + 1].copy_from_slice(&p);
            let out = &mut y.row_mut(i)[qo..qo + hd];
            for (j, pj) in p.iter().enumerate() {
                let v = &qkv.row(j)[vo..vo + hd];
                out.iter_mut().zip(v).for_each(|(o, vv)| *o += pj * vv);
            }
        }
    }
    (y, probs)
}

fn attention_backward(cfg: &ModelConfig, qkv: &Matrix, probs: &[f64], dy: &Matrix) -> Matrix {
    let t = qkv.rows;
    let d = cfg.embed_dim;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dqkv = Matrix::zeros(t, 3 * d);
    for h in 0..cfg.n_heads {
        let (qo, ko, vo) = (h * hd, d + h * hd, 2 * d + h * hd);
        for i in 0..t {
            let base = (h * t + i) * t;
            let p = &probs[base..base + i + 1];
            let dyi = dy.row(i)[qo..qo + hd].to_vec();
            let dp: Vec<f64> = (0..=i)
                .map(|j| {
                    let v = &qkv.row(j)[vo..vo + hd];
                    dyi.iter().zip(v).map(|(a, b)| a * b).sum()
                })
                .collect();
            let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            let qi = &qkv.row(i)[qo..qo + hd];
            for j in 0..=i {
                let ds = p[j] * (dp[j] - dot) * scale;
                let kj = &qkv.row(j)[ko..ko + hd];
                dqkv.row_mut(i)[qo..qo + hd]
                    .iter_mut()
                    .zip(kj)
                    .for_each(|(g, k)| *g += ds * k);
                let row = dqkv.row_mut(j);
                row[ko..ko + hd].iter_mut().zip(qi).for_each(|(g, q)| *g += ds * q);
                row[vo..vo + hd].iter_mut().zip(&dyi).for_each(|(g, y)| *g += p[j] * y);
            }
        }
    }
    dqkv
}

/// Hidden states after the final layer norm.
pub(super) fn forward_hidden<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    p: &Params,
    ids: &[u32],
    mut dropout_rng: Option<&mut R>,
) -> (Vec<LayerCache>, LnCache) {
    let t = ids.len();
    let d = cfg.embed_dim;
    let mut x = Matrix::zeros(t, d);
    for (pos, &id) in ids.iter().enumerate() {
        let (e, w) = (p.wte.row(id as usize), p.wpe.row(pos));
        for ((o, a), b) in x.row_mut(pos).iter_mut().zip(e).zip(w) {
            *o = a + b;
        }
    }
    let rate = cfg.dropout_rate;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in &p.layers {
        let ln1 = layer_norm(&x, &l.ln1_g, &l.ln1_b);
        let mut qkv = matmul(&ln1.out, &l.w_qkv);
        add_row_bias(&mut qkv, &l.b_qkv);
        let (atty, probs) = attention(cfg, &qkv);
        let mut a = matmul(&atty, &l.w_o);
        add_row_bias(&mut a, &l.b_o);
        let drop_attn = match dropout_rng.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(dropout_mask(a.data.len(), rate, rng)),
            _ => None,
        };
        apply_mask(&mut a, &drop_attn);
        x.data.iter_mut().zip(&a.data).for_each(|(xi, ai)| *xi += ai);

        let ln2 = layer_norm(&x, &l.ln2_g, &l.ln2_b);
        let mut fc = matmul(&ln2.out, &l.w_fc);
        add_row_bias(&mut fc, &l.b_fc);
        let act = Matrix::from_vec(fc.rows, fc.cols, fc.data.iter().map(|&v| gelu(v)).collect());
        let mut m = matmul(&act, &l.w_proj);
        add_row_bias(&mut m, &l.b_proj);
        let drop_mlp = match dropout_rng.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(dropout_mask(m.data.len(), rate, rng)),
            _ => None,
        };
        apply_mask(&mut m, &drop_mlp);
        x.data.iter_mut().zip(&m.data).for_each(|(xi, mi)| *xi += mi);

        layers.push(LayerCache {
            ln1,
            qkv,
            probs,
            atty,
            ln2,
            fc,
            act,
            drop_attn,
            drop_mlp,
        });
    }
    let lnf = layer_norm(&x, &p.lnf_g, &p.lnf_b);
    (layers, lnf)
}

pub(super) fn forward<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    p: &Params,
    ids: &[u32],
    dropout_rng: Option<&mut R>,
) -> Cache {
    let (layers, lnf) = forward_hidden(cfg, p, ids, dropout_rng);
    let logits = matmul(&lnf.out, &p.w_out);
    Cache {
        ids: ids.to_vec(),
        layers,
        lnf,
        logits,
    }
}

/// Logits of the last position only.
pub(super) fn last_logits(cfg: &ModelConfig, p: &Params, ids: &[u32]) -> Vec<f64> {
    let (_, lnf) = forward_hidden::<rand_chacha::ChaCha8Rng>(cfg, p, ids, None);
    let last = Matrix::from_vec(1, cfg.embed_dim, lnf.out.row(ids.len() - 1).to_vec());
    matmul(&last, &p.w_out).data
}

/// Gradients of `sum_i dlogits[i] . logits[i]` w.r.t. all parameters.
pub(super) fn backward(cfg: &ModelConfig, p: &Params, cache: &Cache, dlogits: &Matrix) -> Params {
    let mut g = Params::zeros(cfg);
    add_matmul_at(&mut g.w_out, &cache.lnf.out, dlogits);
    let dlnf = matmul_bt(dlogits, &p.w_out);
    let mut dx = layer_norm_backward(&dlnf, &cache.lnf, &p.lnf_g, &mut g.lnf_g, &mut g.lnf_b);

    for (li, (l, c)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
        let gl: &mut LayerParams = &mut g.layers[li];
        // MLP branch
        let mut dm = dx.clone();
        apply_mask(&mut dm, &c.drop_mlp);
        add_matmul_at(&mut gl.w_proj, &c.act, &dm);
        add_col_sums(&mut gl.b_proj, &dm);
        let dact = matmul_bt(&dm, &l.w_proj);
        let dfc = Matrix::from_vec(
            dact.rows,
            dact.cols,
            dact.data
                .iter()
                .zip(&c.fc.data)
                .map(|(da, f)| da * gelu_grad(*f))
                .collect(),
        );
        add_matmul_at(&mut gl.w_fc, &c.ln2.out, &dfc);
        add_col_sums(&mut gl.b_fc, &dfc);
        let dln2 = matmul_bt(&dfc, &l.w_fc);
        let dx2 = layer_norm_backward(&dln2, &c.ln2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);
        dx.data.iter_mut().zip(&dx2.data).for_each(|(a, b)| *a += b);

        // attention branch
        let mut da = dx.clone();
        apply_mask(&mut da, &c.drop_attn);
        add_matmul_at(&mut gl.w_o, &c.atty, &da);
        add_col_sums(&mut gl.b_o, &da);
        let datty = matmul_bt(&da, &l.w_o);
        let dqkv = attention_backward(cfg, &c.qkv, &c.probs, &datty);
        add_matmul_at(&mut gl.w_qkv, &c.ln1.out, &dqkv);
        add_col_sums(&mut gl.b_qkv, &dqkv);
        let dln1 = matmul_bt(&dqkv, &l.w_qkv);
        let dx1 = layer_norm_backward(&dln1, &c.ln1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
        dx.data.iter_mut().zip(&dx1.data).for_each(|(a, b)| *a += b);
    }

    for (pos, &id) in cache.ids.iter().enumerate() {
        let src = dx.row(pos).to_vec();
        g.wte.row_mut(id as usize).iter_mut().zip(&src).for_each(|(a, b)| *a += b);
        g.wpe.row_mut(pos).iter_mut().zip(&src).for_each(|(a, b)| *a += b);
    }
    g
}
