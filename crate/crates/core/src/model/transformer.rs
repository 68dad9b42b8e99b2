//! Decoder-only causal transformer over token ids.
//!
//! Parameters live in one flat `Vec<f64>`. The layout, in order:
//!
//! ```text
//! tok_emb   V × d
//! per layer:
//!   ln1_g d, ln1_b d
//!   w_qkv d × 3d, b_qkv 3d
//!   w_o   d × d,  b_o d
//!   ln2_g d, ln2_b d
//!   w_fc  d × 4d, b_fc 4d
//!   w_proj 4d × d, b_proj d
//! lnf_g d, lnf_b d
//! w_out d × V, b_out V
//! ```
//!
//! Matrices are row-major with the input dimension first, so `y = x · W + b`.
//! Positions use a fixed sinusoidal table and carry no parameters. Blocks are
//! pre-norm: `x += attn(ln1(x))`, `x += mlp(ln2(x))`, then a final norm and
//! the output head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_at, matmul_bt};
use crate::tokenizer::TokenId;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_fc: usize,
    b_fc: usize,
    w_proj: usize,
    b_proj: usize,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    tok_emb: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let v = cfg.vocab_size;
        let mut at = 0;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let tok_emb = take(v * d);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerOffsets {
                ln1_g: take(d),
                ln1_b: take(d),
                w_qkv: take(d * 3 * d),
                b_qkv: take(3 * d),
                w_o: take(d * d),
                b_o: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w_fc: take(d * 4 * d),
                b_fc: take(4 * d),
                w_proj: take(4 * d * d),
                b_proj: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let w_out = take(d * v);
        let b_out = take(v);
        Self {
            tok_emb,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: at,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Range of the embedding row for `token`.
    pub fn embedding_row(&self, token: TokenId, embed_dim: usize) -> std::ops::Range<usize> {
        let start = self.tok_emb + token as usize * embed_dim;
        start..start + embed_dim
    }

    /// Range of the output-head bias.
    pub fn output_bias(&self, vocab_size: usize) -> std::ops::Range<usize> {
        self.b_out..self.b_out + vocab_size
    }
}

/// Parameter count as a pure function of the configuration.
pub fn param_count(cfg: &ModelConfig) -> usize {
    ParamLayout::new(cfg).total()
}

fn sinusoid_table(len: usize, d: usize) -> Vec<f64> {
    let mut table = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            table[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    table
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// In-place softmax of one row; returns the log of the normalizer.
fn softmax_in_place(row: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Layer norm over rows of width `d`; fills `out`, `xhat` and `rstd`.
fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], d: usize, out: &mut [f64], xhat: &mut [f64], rstd: &mut [f64]) {
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (row[i] - mean) * rs;
            xhat[r * d + i] = h;
            out[r * d + i] = h * gamma[i] + beta[i];
        }
    }
}

/// Backward of [`layer_norm`]; accumulates into `dx`, `dgamma`, `dbeta`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(dy: &[f64], xhat: &[f64], rstd: &[f64], gamma: &[f64], d: usize, dx: &mut [f64], dgamma: &mut [f64], dbeta: &mut [f64]) {
    let mut dxhat = vec![0.0; d];
    for r in 0..rstd.len() {
        let dy_r = &dy[r * d..(r + 1) * d];
        let xh_r = &xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for i in 0..d {
            dgamma[i] += dy_r[i] * xh_r[i];
            dbeta[i] += dy_r[i];
            dxhat[i] = dy_r[i] * gamma[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh_r[i];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for i in 0..d {
            dx[r * d + i] += rstd[r] * (dxhat[i] - mean_dxhat - xh_r[i] * mean_dxhat_xhat);
        }
    }
}

fn add_bias(rows: &mut [f64], bias: &[f64]) {
    for row in rows.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn sum_rows_into(rows: &[f64], width: usize, out: &mut [f64]) {
    for row in rows.chunks_exact(width) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[derive(Default)]
struct LayerCache {
    x_in: Vec<f64>,
    ln1_out: Vec<f64>,
    ln1_xhat: Vec<f64>,
    ln1_rstd: Vec<f64>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    att_out: Vec<f64>,
    x_mid: Vec<f64>,
    ln2_out: Vec<f64>,
    ln2_xhat: Vec<f64>,
    ln2_rstd: Vec<f64>,
    fc_pre: Vec<f64>,
    fc_act: Vec<f64>,
}

struct ForwardCache {
    ids: Vec<TokenId>,
    layers: Vec<LayerCache>,
    lnf_out: Vec<f64>,
    lnf_xhat: Vec<f64>,
    lnf_rstd: Vec<f64>,
    logits: Vec<f64>,
}

/// Key/value rows accumulated during incremental decoding.
#[derive(Debug, Clone)]
pub struct DecodeState {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl DecodeState {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// The trainable categorical model `p(z_{t+1} | z_{1..t})`.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<f64>,
    positions: Vec<f64>,
}

impl PartialEq for SequenceModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl SequenceModel {
    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, token
    /// embeddings uniform in `±1` (one-hot fan-in), biases zero, norm gains one.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.embed_dim;
        let v = config.vocab_size;
        let mut fill = |params: &mut [f64], start: usize, len: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = rng.random_range(-bound..bound);
            }
        };
        fill(&mut params, layout.tok_emb, v * d, 1);
        for l in &layout.layers {
            fill(&mut params, l.w_qkv, d * 3 * d, d);
            fill(&mut params, l.w_o, d * d, d);
            fill(&mut params, l.w_fc, d * 4 * d, d);
            fill(&mut params, l.w_proj, 4 * d * d, 4 * d);
        }
        fill(&mut params, layout.w_out, d * v, d);
        for l in &layout.layers {
            params[l.ln1_g..l.ln1_g + d].fill(1.0);
            params[l.ln2_g..l.ln2_g + d].fill(1.0);
        }
        params[layout.lnf_g..layout.lnf_g + d].fill(1.0);
        let positions = sinusoid_table(config.context_length, d);
        Ok(Self {
            config,
            layout,
            params,
            positions,
        })
    }

    /// Rebuilds a model from a parameter vector with the documented layout.
    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        let positions = sinusoid_table(config.context_length, config.embed_dim);
        Ok(Self {
            config,
            layout,
            params,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        if ids.len() > self.config.context_length {
            return Err(Error::ContextOverflow {
                len: ids.len(),
                max: self.config.context_length,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::BadToken(bad));
        }
        Ok(())
    }

    fn run(&self, ids: &[TokenId], keep: bool) -> ForwardCache {
        let cfg = &self.config;
        let (t, d, v) = (ids.len(), cfg.embed_dim, cfg.vocab_size);
        let nh = cfg.num_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        let lay = &self.layout;

        let mut x = vec![0.0; t * d];
        for (i, &id) in ids.iter().enumerate() {
            let emb = &p[lay.embedding_row(id, d)];
            let pos = &self.positions[i * d..(i + 1) * d];
            for j in 0..d {
                x[i * d + j] = emb[j] + pos[j];
            }
        }

        let mut layers = Vec::with_capacity(lay.layers.len());
        for l in &lay.layers {
            let mut c = LayerCache {
                ln1_out: vec![0.0; t * d],
                ln1_xhat: vec![0.0; t * d],
                ln1_rstd: vec![0.0; t],
                ..Default::default()
            };
            layer_norm(&x, &p[l.ln1_g..l.ln1_g + d], &p[l.ln1_b..l.ln1_b + d], d, &mut c.ln1_out, &mut c.ln1_xhat, &mut c.ln1_rstd);

            let mut qkv = vec![0.0; t * 3 * d];
            matmul(t, d, 3 * d, &c.ln1_out, &p[l.w_qkv..], &mut qkv, false);
            add_bias(&mut qkv, &p[l.b_qkv..l.b_qkv + 3 * d]);

            let mut att_out = vec![0.0; t * d];
            for h in 0..nh {
                let split = |part: usize| -> Vec<f64> {
                    let mut m = vec![0.0; t * dh];
                    for i in 0..t {
                        let src = i * 3 * d + part * d + h * dh;
                        m[i * dh..(i + 1) * dh].copy_from_slice(&qkv[src..src + dh]);
                    }
                    m
                };
                let (qh, kh, vh) = (split(0), split(1), split(2));
                let mut scores = vec![0.0; t * t];
                matmul_bt(t, dh, t, &qh, &kh, &mut scores, false);
                for i in 0..t {
                    let row = &mut scores[i * t..(i + 1) * t];
                    for s in row[..=i].iter_mut() {
                        *s *= scale;
                    }
                    softmax_in_place(&mut row[..=i]);
                    row[i + 1..].fill(0.0);
                }
                let mut oh = vec![0.0; t * dh];
                matmul(t, t, dh, &scores, &vh, &mut oh, false);
                for i in 0..t {
                    att_out[i * d + h * dh..i * d + (h + 1) * dh].copy_from_slice(&oh[i * dh..(i + 1) * dh]);
                }
                if keep {
                    c.q.push(qh);
                    c.k.push(kh);
                    c.v.push(vh);
                    c.probs.push(scores);
                }
            }

            let mut x_mid = x.clone();
            matmul(t, d, d, &att_out, &p[l.w_o..], &mut x_mid, true);
            add_bias(&mut x_mid, &p[l.b_o..l.b_o + d]);

            c.ln2_out = vec![0.0; t * d];
            c.ln2_xhat = vec![0.0; t * d];
            c.ln2_rstd = vec![0.0; t];
            layer_norm(&x_mid, &p[l.ln2_g..l.ln2_g + d], &p[l.ln2_b..l.ln2_b + d], d, &mut c.ln2_out, &mut c.ln2_xhat, &mut c.ln2_rstd);

            let mut fc_pre = vec![0.0; t * 4 * d];
            matmul(t, d, 4 * d, &c.ln2_out, &p[l.w_fc..], &mut fc_pre, false);
            add_bias(&mut fc_pre, &p[l.b_fc..l.b_fc + 4 * d]);
            let fc_act: Vec<f64> = fc_pre.iter().map(|&z| gelu(z)).collect();

            let mut x_out = x_mid.clone();
            matmul(t, 4 * d, d, &fc_act, &p[l.w_proj..], &mut x_out, true);
            add_bias(&mut x_out, &p[l.b_proj..l.b_proj + d]);

            if keep {
                c.x_in = x;
                c.att_out = att_out;
                c.x_mid = x_mid;
                c.fc_pre = fc_pre;
                c.fc_act = fc_act;
                layers.push(c);
            }
            x = x_out;
        }

        let mut lnf_out = vec![0.0; t * d];
        let mut lnf_xhat = vec![0.0; t * d];
        let mut lnf_rstd = vec![0.0; t];
        layer_norm(&x, &p[lay.lnf_g..lay.lnf_g + d], &p[lay.lnf_b..lay.lnf_b + d], d, &mut lnf_out, &mut lnf_xhat, &mut lnf_rstd);
        let mut logits = vec![0.0; t * v];
        matmul(t, d, v, &lnf_out, &p[lay.w_out..], &mut logits, false);
        add_bias(&mut logits, &p[lay.b_out..lay.b_out + v]);

        ForwardCache {
            ids: ids.to_vec(),
            layers,
            lnf_out,
            lnf_xhat,
            lnf_rstd,
            logits,
        }
    }

    /// Raw logits, `ids.len() × vocab_size`, row-major.
    pub fn logits(&self, ids: &[TokenId]) -> Result<Vec<f64>> {
        self.check_ids(ids)?;
        Ok(self.run(ids, false).logits)
    }

    /// Per-position next-token distributions. Row `t` depends only on `ids[..=t]`.
    pub fn forward(&self, ids: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        let logits = self.logits(ids)?;
        Ok(logits
            .chunks_exact(self.config.vocab_size)
            .map(|row| {
                let mut row = row.to_vec();
                softmax_in_place(&mut row);
                row
            })
            .collect())
    }

    /// Cross-entropy averaged over `positions`, with labels `labels[i]` for
    /// input position `positions[i]`.
    pub(crate) fn positional_loss(&self, ids: &[TokenId], positions: &[usize], labels: &[TokenId]) -> Result<f64> {
        let logits = self.logits(ids)?;
        let v = self.config.vocab_size;
        let mut total = 0.0;
        for (&pos, &label) in positions.iter().zip(labels) {
            let mut row = logits[pos * v..(pos + 1) * v].to_vec();
            let log_z = {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = row.iter_mut().map(|z| (*z - max).exp()).sum();
                max + s.ln()
            };
            total += log_z - logits[pos * v + label as usize];
        }
        Ok(total / positions.len() as f64)
    }

    /// Loss as in [`Self::positional_loss`], accumulating `weight · ∂loss/∂θ`
    /// into `grad`.
    pub(crate) fn positional_loss_grad(&self, ids: &[TokenId], positions: &[usize], labels: &[TokenId], weight: f64, grad: &mut [f64]) -> Result<f64> {
        self.check_ids(ids)?;
        debug_assert_eq!(grad.len(), self.params.len());
        let cache = self.run(ids, true);
        let v = self.config.vocab_size;
        let t = ids.len();
        let n = positions.len() as f64;
        let mut dlogits = vec![0.0; t * v];
        let mut total = 0.0;
        for (&pos, &label) in positions.iter().zip(labels) {
            let mut row = cache.logits[pos * v..(pos + 1) * v].to_vec();
            let log_z = softmax_in_place(&mut row);
            total += log_z - cache.logits[pos * v + label as usize];
            row[label as usize] -= 1.0;
            for (dst, g) in dlogits[pos * v..(pos + 1) * v].iter_mut().zip(&row) {
                *dst += g * weight / n;
            }
        }
        self.backward(&cache, &dlogits, grad);
        Ok(total / n)
    }

    fn backward(&self, cache: &ForwardCache, dlogits: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let (t, d, v) = (cache.ids.len(), cfg.embed_dim, cfg.vocab_size);
        let nh = cfg.num_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        let lay = &self.layout;

        matmul_at(d, t, v, &cache.lnf_out, dlogits, &mut grad[lay.w_out..lay.w_out + d * v], true);
        sum_rows_into(dlogits, v, &mut grad[lay.b_out..lay.b_out + v]);
        let mut dlnf = vec![0.0; t * d];
        matmul_bt(t, v, d, dlogits, &p[lay.w_out..], &mut dlnf, false);

        let mut dx = vec![0.0; t * d];
        {
            let (head, tail) = grad.split_at_mut(lay.lnf_b);
            layer_norm_backward(&dlnf, &cache.lnf_xhat, &cache.lnf_rstd, &p[lay.lnf_g..lay.lnf_g + d], d, &mut dx, &mut head[lay.lnf_g..lay.lnf_g + d], &mut tail[..d]);
        }

        for (l, c) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP branch: x_out = x_mid + gelu(ln2(x_mid) · W_fc + b_fc) · W_proj + b_proj
            matmul_at(4 * d, t, d, &c.fc_act, &dx, &mut grad[l.w_proj..l.w_proj + 4 * d * d], true);
            sum_rows_into(&dx, d, &mut grad[l.b_proj..l.b_proj + d]);
            let mut dfc = vec![0.0; t * 4 * d];
            matmul_bt(t, d, 4 * d, &dx, &p[l.w_proj..], &mut dfc, false);
            for (g, &z) in dfc.iter_mut().zip(&c.fc_pre) {
                *g *= gelu_grad(z);
            }
            matmul_at(d, t, 4 * d, &c.ln2_out, &dfc, &mut grad[l.w_fc..l.w_fc + d * 4 * d], true);
            sum_rows_into(&dfc, 4 * d, &mut grad[l.b_fc..l.b_fc + 4 * d]);
            let mut dln2 = vec![0.0; t * d];
            matmul_bt(t, 4 * d, d, &dfc, &p[l.w_fc..], &mut dln2, false);
            let mut dx_mid = dx;
            {
                let (head, tail) = grad.split_at_mut(l.ln2_b);
                layer_norm_backward(&dln2, &c.ln2_xhat, &c.ln2_rstd, &p[l.ln2_g..l.ln2_g + d], d, &mut dx_mid, &mut head[l.ln2_g..l.ln2_g + d], &mut tail[..d]);
            }

            // Attention branch: x_mid = x_in + att_out · W_o + b_o
            matmul_at(d, t, d, &c.att_out, &dx_mid, &mut grad[l.w_o..l.w_o + d * d], true);
            sum_rows_into(&dx_mid, d, &mut grad[l.b_o..l.b_o + d]);
            let mut datt = vec![0.0; t * d];
            matmul_bt(t, d, d, &dx_mid, &p[l.w_o..], &mut datt, false);

            let mut dqkv = vec![0.0; t * 3 * d];
            let mut doh = vec![0.0; t * dh];
            for h in 0..nh {
                for i in 0..t {
                    doh[i * dh..(i + 1) * dh].copy_from_slice(&datt[i * d + h * dh..i * d + (h + 1) * dh]);
                }
                let probs = &c.probs[h];
                let mut dprobs = vec![0.0; t * t];
                matmul_bt(t, dh, t, &doh, &c.v[h], &mut dprobs, false);
                let mut dv = vec![0.0; t * dh];
                matmul_at(t, t, dh, probs, &doh, &mut dv, false);
                // softmax backward, restricted to the causal triangle, with the score scale folded in
                let mut dscores = vec![0.0; t * t];
                for i in 0..t {
                    let pr = &probs[i * t..i * t + i + 1];
                    let dp = &dprobs[i * t..i * t + i + 1];
                    let dot: f64 = pr.iter().zip(dp).map(|(a, b)| a * b).sum();
                    for j in 0..=i {
                        dscores[i * t + j] = pr[j] * (dp[j] - dot) * scale;
                    }
                }
                let mut dq = vec![0.0; t * dh];
                matmul(t, t, dh, &dscores, &c.k[h], &mut dq, false);
                let mut dk = vec![0.0; t * dh];
                matmul_at(t, t, dh, &dscores, &c.q[h], &mut dk, false);
                for i in 0..t {
                    let row = &mut dqkv[i * 3 * d..(i + 1) * 3 * d];
                    row[h * dh..(h + 1) * dh].copy_from_slice(&dq[i * dh..(i + 1) * dh]);
                    row[d + h * dh..d + (h + 1) * dh].copy_from_slice(&dk[i * dh..(i + 1) * dh]);
                    row[2 * d + h * dh..2 * d + (h + 1) * dh].copy_from_slice(&dv[i * dh..(i + 1) * dh]);
                }
            }
            matmul_at(d, t, 3 * d, &c.ln1_out, &dqkv, &mut grad[l.w_qkv..l.w_qkv + d * 3 * d], true);
            sum_rows_into(&dqkv, 3 * d, &mut grad[l.b_qkv..l.b_qkv + 3 * d]);
            let mut dln1 = vec![0.0; t * d];
            matmul_bt(t, 3 * d, d, &dqkv, &p[l.w_qkv..], &mut dln1, false);
            let mut dx_in = dx_mid;
            {
                let (head, tail) = grad.split_at_mut(l.ln1_b);
                layer_norm_backward(&dln1, &c.ln1_xhat, &c.ln1_rstd, &p[l.ln1_g..l.ln1_g + d], d, &mut dx_in, &mut head[l.ln1_g..l.ln1_g + d], &mut tail[..d]);
            }
            dx = dx_in;
        }

        for (i, &id) in cache.ids.iter().enumerate() {
            let row = lay.embedding_row(id, d);
            for (g, dv) in grad[row].iter_mut().zip(&dx[i * d..(i + 1) * d]) {
                *g += dv;
            }
        }
    }

    pub fn new_decode_state(&self) -> DecodeState {
        let n = self.layout.layers.len();
        let cap = self.config.context_length * self.config.embed_dim;
        DecodeState {
            keys: vec![Vec::with_capacity(cap); n],
            values: vec![Vec::with_capacity(cap); n],
            len: 0,
        }
    }

    /// Feeds one token at position `state.len()` and returns the logits for
    /// the next position. Equivalent to the last row of [`Self::logits`] on
    /// the full prefix.
    pub fn decode_step(&self, state: &mut DecodeState, token: TokenId) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let pos = state.len;
        if pos >= cfg.context_length {
            return Err(Error::ContextOverflow {
                len: pos + 1,
                max: cfg.context_length,
            });
        }
        if token as usize >= cfg.vocab_size {
            return Err(Error::BadToken(token));
        }
        let (d, v) = (cfg.embed_dim, cfg.vocab_size);
        let nh = cfg.num_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        let lay = &self.layout;

        let emb = &p[lay.embedding_row(token, d)];
        let mut x: Vec<f64> = emb.iter().zip(&self.positions[pos * d..(pos + 1) * d]).map(|(a, b)| a + b).collect();
        let mut normed = vec![0.0; d];
        let mut xhat = vec![0.0; d];
        let mut rstd = [0.0];
        let mut scores = vec![0.0; pos + 1];

        for (li, l) in lay.layers.iter().enumerate() {
            layer_norm(&x, &p[l.ln1_g..l.ln1_g + d], &p[l.ln1_b..l.ln1_b + d], d, &mut normed, &mut xhat, &mut rstd);
            let mut qkv = vec![0.0; 3 * d];
            matmul(1, d, 3 * d, &normed, &p[l.w_qkv..], &mut qkv, false);
            add_bias(&mut qkv, &p[l.b_qkv..l.b_qkv + 3 * d]);
            state.keys[li].extend_from_slice(&qkv[d..2 * d]);
            state.values[li].extend_from_slice(&qkv[2 * d..]);
            let keys = &state.keys[li];
            let values = &state.values[li];

            let mut att = vec![0.0; d];
            for h in 0..nh {
                let q = &qkv[h * dh..(h + 1) * dh];
                for (j, s) in scores.iter_mut().enumerate() {
                    let k = &keys[j * d + h * dh..j * d + (h + 1) * dh];
                    *s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(&mut scores);
                let out = &mut att[h * dh..(h + 1) * dh];
                for (j, &w) in scores.iter().enumerate() {
                    let val = &values[j * d + h * dh..j * d + (h + 1) * dh];
                    for (o, vv) in out.iter_mut().zip(val) {
                        *o += w * vv;
                    }
                }
            }
            matmul(1, d, d, &att, &p[l.w_o..], &mut x, true);
            add_bias(&mut x, &p[l.b_o..l.b_o + d]);

            layer_norm(&x, &p[l.ln2_g..l.ln2_g + d], &p[l.ln2_b..l.ln2_b + d], d, &mut normed, &mut xhat, &mut rstd);
            let mut fc = vec![0.0; 4 * d];
            matmul(1, d, 4 * d, &normed, &p[l.w_fc..], &mut fc, false);
            add_bias(&mut fc, &p[l.b_fc..l.b_fc + 4 * d]);
            for z in fc.iter_mut() {
                *z = gelu(*z);
            }
            matmul(1, 4 * d, d, &fc, &p[l.w_proj..], &mut x, true);
            add_bias(&mut x, &p[l.b_proj..l.b_proj + d]);
        }

        layer_norm(&x, &p[lay.lnf_g..lay.lnf_g + d], &p[lay.lnf_b..lay.lnf_b + d], d, &mut normed, &mut xhat, &mut rstd);
        let mut logits = vec![0.0; v];
        matmul(1, d, v, &normed, &p[lay.w_out..], &mut logits, false);
        add_bias(&mut logits, &p[lay.b_out..lay.b_out + v]);
        state.len += 1;
        Ok(logits)
    }
}

/// Normalized probabilities from a logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut row = logits.to_vec();
    softmax_in_place(&mut row);
    row
}
