use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::Activation;
use crate::tensor::{add_bias, bias_grad, gemm, Group, Init, ParamStore, TensorId};
use crate::tokenizer::{TokenId, TokenSequence};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward width as a multiple of the model dim.
    pub ff_mult: usize,
    pub max_len: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 2, ff_mult: 4, max_len: 1024, activation: Activation::Ramp }
    }
}

#[derive(Debug, Clone)]
struct LayerIds {
    ln1_g: TensorId,
    ln1_b: TensorId,
    wqkv: TensorId,
    bqkv: TensorId,
    wo: TensorId,
    bo: TensorId,
    ln2_g: TensorId,
    ln2_b: TensorId,
    w1: TensorId,
    b1: TensorId,
    w2: TensorId,
    b2: TensorId,
}

/// Decoder-only transformer whose tensors live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Transformer {
    pub cfg: ModelConfig,
    pub dim: usize,
    pub vocab: usize,
    pub latent_dim: usize,
    tok_emb: TensorId,
    pos_emb: TensorId,
    layers: Vec<LayerIds>,
    lnf_g: TensorId,
    lnf_b: TensorId,
    lm_w: TensorId,
    lm_b: TensorId,
    nsp_w: TensorId,
    nsp_b: TensorId,
}

/// Output of a full-sequence pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub len: usize,
    /// `L x vocab`.
    pub logits: Vec<f64>,
    /// Final normalised hidden states, `L x dim`.
    pub hidden: Vec<f64>,
    /// Residual stream before the final norm, `L x dim`.
    pub residual: Vec<f64>,
    /// NSP prediction for each future slot position `p`, read from
    /// `hidden[p - 1]`.
    pub predicted_latents: BTreeMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: NormCache,
    h1: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<Vec<f64>>,
    attn: Vec<f64>,
    ln2: NormCache,
    h2: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<TokenId>,
    override_pos: Vec<bool>,
    layers: Vec<LayerCache>,
    lnf: NormCache,
    latent_pos: Vec<usize>,
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], d: usize) -> (Vec<f64>, NormCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (row[i] - mean) * rs;
            xhat[r * d + i] = h;
            y[r * d + i] = h * g[i] + b[i];
        }
    }
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(dy: &[f64], c: &NormCache, g: &[f64], dg: &mut [f64], db: &mut [f64], dx: &mut [f64], d: usize) {
    let rows = dy.len() / d;
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &c.xhat[r * d..(r + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for i in 0..d {
            dx[r * d + i] += c.rstd[r] * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Copies columns `[c0, c0 + w)` of a row-major `rows x stride` buffer.
fn take_cols(src: &[f64], rows: usize, stride: usize, c0: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * w);
    for r in 0..rows {
        out.extend_from_slice(&src[r * stride + c0..r * stride + c0 + w]);
    }
    out
}

fn put_cols(dst: &mut [f64], src: &[f64], rows: usize, stride: usize, c0: usize, w: usize) {
    for r in 0..rows {
        dst[r * stride + c0..r * stride + c0 + w].copy_from_slice(&src[r * w..(r + 1) * w]);
    }
}

/// Per-layer key/value cache for incremental decoding.
#[derive(Debug, Clone)]
pub struct KvCache {
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub len: usize,
}

impl Transformer {
    pub fn register<R: Rng>(
        cfg: ModelConfig,
        dim: usize,
        vocab: usize,
        latent_dim: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(cfg, dim, vocab, latent_dim, |name, shape, group, init| Ok(store.add(name, shape, group, init, rng)))
    }

    pub fn bind(cfg: ModelConfig, dim: usize, vocab: usize, latent_dim: usize, store: &ParamStore) -> Result<Self> {
        Self::build(cfg, dim, vocab, latent_dim, |name, shape, _, _| {
            let id = store.id(name).ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))?;
            if store.spec(id).shape != shape {
                return Err(Error::ShapeMismatch(format!("{name} has shape {:?}, expected {shape:?}", store.spec(id).shape)));
            }
            Ok(id)
        })
    }

    fn build(
        cfg: ModelConfig,
        d: usize,
        vocab: usize,
        latent_dim: usize,
        mut add: impl FnMut(&str, &[usize], Group, Init) -> Result<TensorId>,
    ) -> Result<Self> {
        if cfg.heads == 0 || !d.is_multiple_of(cfg.heads) {
            return Err(Error::Config(format!("model dim {d} not divisible by {} heads", cfg.heads)));
        }
        if cfg.layers == 0 || cfg.ff_mult == 0 || cfg.max_len == 0 || vocab == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        let f = cfg.ff_mult * d;
        let w = |fan_in: usize| Init::Normal(1.0 / (fan_in as f64).sqrt());
        let out_scale = |fan_in: usize| Init::Normal(1.0 / (fan_in as f64).sqrt() / ((2 * cfg.layers) as f64).sqrt());
        let bb = Group::Backbone;
        let tok_emb = add("tok_emb", &[vocab, d], bb, Init::Normal(0.5))?;
        let pos_emb = add("pos_emb", &[cfg.max_len, d], bb, Init::Normal(0.1))?;
        let mut layers = Vec::new();
        for l in 0..cfg.layers {
            let n = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerIds {
                ln1_g: add(&n("ln1_g"), &[d], bb, Init::Ones)?,
                ln1_b: add(&n("ln1_b"), &[d], bb, Init::Zeros)?,
                wqkv: add(&n("wqkv"), &[d, 3 * d], bb, w(d))?,
                bqkv: add(&n("bqkv"), &[3 * d], bb, Init::Zeros)?,
                wo: add(&n("wo"), &[d, d], bb, out_scale(d))?,
                bo: add(&n("bo"), &[d], bb, Init::Zeros)?,
                ln2_g: add(&n("ln2_g"), &[d], bb, Init::Ones)?,
                ln2_b: add(&n("ln2_b"), &[d], bb, Init::Zeros)?,
                w1: add(&n("w1"), &[d, f], bb, w(d))?,
                b1: add(&n("b1"), &[f], bb, Init::Zeros)?,
                w2: add(&n("w2"), &[f, d], bb, out_scale(f))?,
                b2: add(&n("b2"), &[d], bb, Init::Zeros)?,
            });
        }
        Ok(Self {
            lnf_g: add("lnf_g", &[d], bb, Init::Ones)?,
            lnf_b: add("lnf_b", &[d], bb, Init::Zeros)?,
            lm_w: add("lm_w", &[d, vocab], Group::LmHead, w(d))?,
            lm_b: add("lm_b", &[vocab], Group::LmHead, Init::Zeros)?,
            nsp_w: add("nsp_w", &[d, latent_dim], Group::NspHead, w(d))?,
            nsp_b: add("nsp_b", &[latent_dim], Group::NspHead, Init::Zeros)?,
            cfg,
            dim: d,
            vocab,
            latent_dim,
            tok_emb,
            pos_emb,
            layers,
        })
    }

    /// Output projections of every residual branch, for residual-path probes.
    pub fn branch_output_tensors(&self) -> Vec<TensorId> {
        self.layers.iter().flat_map(|l| [l.wo, l.bo, l.w2, l.b2]).collect()
    }

    fn embed(&self, store: &ParamStore, seq: &TokenSequence) -> Result<(Vec<f64>, Vec<bool>)> {
        let (l, d) = (seq.len(), self.dim);
        if l > self.cfg.max_len {
            return Err(Error::SequenceTooLong { len: l, max: self.cfg.max_len });
        }
        let tok = store.get(self.tok_emb);
        let pos = store.get(self.pos_emb);
        let mut x = vec![0.0; l * d];
        let mut over = vec![false; l];
        for p in 0..l {
            let dst = &mut x[p * d..(p + 1) * d];
            let needs = seq.context_pos == Some(p) || seq.is_image_position(p);
            match seq.overrides.get(&p) {
                Some(v) => {
                    if v.len() != d {
                        return Err(Error::ShapeMismatch(format!("override at {p} has dim {}", v.len())));
                    }
                    dst.copy_from_slice(v);
                    over[p] = true;
                }
                None if needs => return Err(Error::MissingOverride(p)),
                None => {
                    let id = seq.ids[p] as usize;
                    if id >= self.vocab {
                        return Err(Error::ShapeMismatch(format!("token id {id} outside vocabulary")));
                    }
                    dst.copy_from_slice(&tok[id * d..(id + 1) * d]);
                }
            }
            for (a, b) in dst.iter_mut().zip(&pos[p * d..(p + 1) * d]) {
                *a += b;
            }
        }
        Ok((x, over))
    }

    /// Full causal pass with teacher-forced overrides.
    pub fn forward(&self, store: &ParamStore, seq: &TokenSequence) -> Result<(ForwardOutput, ForwardCache)> {
        let (l, d) = (seq.len(), self.dim);
        let heads = self.cfg.heads;
        let dh = d / heads;
        let f = self.cfg.ff_mult * d;
        let scale = 1.0 / (dh as f64).sqrt();
        let (mut x, override_pos) = self.embed(store, seq)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for ly in &self.layers {
            let (h1, ln1) = layer_norm(&x, store.get(ly.ln1_g), store.get(ly.ln1_b), d);
            let mut qkv = vec![0.0; l * 3 * d];
            gemm(l, d, 3 * d, 1.0, &h1, false, store.get(ly.wqkv), false, 0.0, &mut qkv);
            add_bias(&mut qkv, store.get(ly.bqkv));
            let mut attn = vec![0.0; l * d];
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let q = take_cols(&qkv, l, 3 * d, h * dh, dh);
                let k = take_cols(&qkv, l, 3 * d, d + h * dh, dh);
                let v = take_cols(&qkv, l, 3 * d, 2 * d + h * dh, dh);
                let mut s = vec![0.0; l * l];
                gemm(l, dh, l, scale, &q, false, &k, true, 0.0, &mut s);
                for i in 0..l {
                    let row = &mut s[i * l..(i + 1) * l];
                    softmax_in_place(&mut row[..=i]);
                    row[i + 1..].iter_mut().for_each(|v| *v = 0.0);
                }
                let mut o = vec![0.0; l * dh];
                gemm(l, l, dh, 1.0, &s, false, &v, false, 0.0, &mut o);
                put_cols(&mut attn, &o, l, d, h * dh, dh);
                probs.push(s);
            }
            let mut proj = vec![0.0; l * d];
            gemm(l, d, d, 1.0, &attn, false, store.get(ly.wo), false, 0.0, &mut proj);
            add_bias(&mut proj, store.get(ly.bo));
            for (a, b) in x.iter_mut().zip(&proj) {
                *a += b;
            }
            let (h2, ln2) = layer_norm(&x, store.get(ly.ln2_g), store.get(ly.ln2_b), d);
            let mut pre = vec![0.0; l * f];
            gemm(l, d, f, 1.0, &h2, false, store.get(ly.w1), false, 0.0, &mut pre);
            add_bias(&mut pre, store.get(ly.b1));
            let act: Vec<f64> = pre.iter().map(|&v| self.cfg.activation.apply(v)).collect();
            let mut mlp = vec![0.0; l * d];
            gemm(l, f, d, 1.0, &act, false, store.get(ly.w2), false, 0.0, &mut mlp);
            add_bias(&mut mlp, store.get(ly.b2));
            for (a, b) in x.iter_mut().zip(&mlp) {
                *a += b;
            }
            caches.push(LayerCache { ln1, h1, qkv, probs, attn, ln2, h2, pre, act });
        }
        let (hidden, lnf) = layer_norm(&x, store.get(self.lnf_g), store.get(self.lnf_b), d);
        let mut logits = vec![0.0; l * self.vocab];
        gemm(l, d, self.vocab, 1.0, &hidden, false, store.get(self.lm_w), false, 0.0, &mut logits);
        add_bias(&mut logits, store.get(self.lm_b));
        let latent_pos: Vec<usize> = seq.future_positions().into_iter().filter(|&p| p > 0).collect();
        let mut predicted_latents = BTreeMap::new();
        if !latent_pos.is_empty() {
            let src: Vec<f64> = latent_pos.iter().flat_map(|&p| hidden[(p - 1) * d..p * d].iter().copied()).collect();
            let n = latent_pos.len();
            let mut out = vec![0.0; n * self.latent_dim];
            gemm(n, d, self.latent_dim, 1.0, &src, false, store.get(self.nsp_w), false, 0.0, &mut out);
            add_bias(&mut out, store.get(self.nsp_b));
            for (i, &p) in latent_pos.iter().enumerate() {
                predicted_latents.insert(p, out[i * self.latent_dim..(i + 1) * self.latent_dim].to_vec());
            }
        }
        let out = ForwardOutput { len: l, logits, hidden, residual: x, predicted_latents };
        let cache = ForwardCache { ids: seq.ids.clone(), override_pos, layers: caches, lnf, latent_pos };
        Ok((out, cache))
    }

    /// Reverse pass. `d_logits` is `L x vocab`; `d_latents` holds the
    /// gradient for each predicted latent. Returns the gradient with respect
    /// to every overridden input embedding.
    pub fn backward(
        &self,
        store: &ParamStore,
        out: &ForwardOutput,
        cache: &ForwardCache,
        d_logits: &[f64],
        d_latents: &BTreeMap<usize, Vec<f64>>,
        grads: &mut ParamStore,
    ) -> BTreeMap<usize, Vec<f64>> {
        let (l, d) = (out.len, self.dim);
        let heads = self.cfg.heads;
        let dh = d / heads;
        let f = self.cfg.ff_mult * d;
        let scale = 1.0 / (dh as f64).sqrt();
        let v = self.vocab;

        gemm(d, l, v, 1.0, &out.hidden, true, d_logits, false, 1.0, grads.get_mut(self.lm_w));
        bias_grad(d_logits, grads.get_mut(self.lm_b));
        let mut d_hidden = vec![0.0; l * d];
        gemm(l, v, d, 1.0, d_logits, false, store.get(self.lm_w), true, 0.0, &mut d_hidden);

        if !d_latents.is_empty() {
            let ld = self.latent_dim;
            let pos: Vec<usize> = cache.latent_pos.iter().copied().filter(|p| d_latents.contains_key(p)).collect();
            let n = pos.len();
            let src: Vec<f64> = pos.iter().flat_map(|&p| out.hidden[(p - 1) * d..p * d].iter().copied()).collect();
            let dl: Vec<f64> = pos.iter().flat_map(|p| d_latents[p].iter().copied()).collect();
            gemm(d, n, ld, 1.0, &src, true, &dl, false, 1.0, grads.get_mut(self.nsp_w));
            bias_grad(&dl, grads.get_mut(self.nsp_b));
            let mut ds = vec![0.0; n * d];
            gemm(n, ld, d, 1.0, &dl, false, store.get(self.nsp_w), true, 0.0, &mut ds);
            for (i, &p) in pos.iter().enumerate() {
                for (a, b) in d_hidden[(p - 1) * d..p * d].iter_mut().zip(&ds[i * d..(i + 1) * d]) {
                    *a += b;
                }
            }
        }

        let mut dx = vec![0.0; l * d];
        {
            let g = store.get(self.lnf_g).to_vec();
            let (gg, gb) = two_mut(grads, self.lnf_g, self.lnf_b);
            layer_norm_backward(&d_hidden, &cache.lnf, &g, gg, gb, &mut dx, d);
        }

        for (ly, c) in self.layers.iter().zip(&cache.layers).rev() {
            // feed-forward branch
            gemm(f, l, d, 1.0, &c.act, true, &dx, false, 1.0, grads.get_mut(ly.w2));
            bias_grad(&dx, grads.get_mut(ly.b2));
            let mut d_pre = vec![0.0; l * f];
            gemm(l, d, f, 1.0, &dx, false, store.get(ly.w2), true, 0.0, &mut d_pre);
            for (g, &p) in d_pre.iter_mut().zip(&c.pre) {
                *g *= self.cfg.activation.grad(p);
            }
            gemm(d, l, f, 1.0, &c.h2, true, &d_pre, false, 1.0, grads.get_mut(ly.w1));
            bias_grad(&d_pre, grads.get_mut(ly.b1));
            let mut d_h2 = vec![0.0; l * d];
            gemm(l, f, d, 1.0, &d_pre, false, store.get(ly.w1), true, 0.0, &mut d_h2);
            {
                let g = store.get(ly.ln2_g).to_vec();
                let (gg, gb) = two_mut(grads, ly.ln2_g, ly.ln2_b);
                layer_norm_backward(&d_h2, &c.ln2, &g, gg, gb, &mut dx, d);
            }

            // attention branch
            gemm(d, l, d, 1.0, &c.attn, true, &dx, false, 1.0, grads.get_mut(ly.wo));
            bias_grad(&dx, grads.get_mut(ly.bo));
            let mut d_attn = vec![0.0; l * d];
            gemm(l, d, d, 1.0, &dx, false, store.get(ly.wo), true, 0.0, &mut d_attn);
            let mut d_qkv = vec![0.0; l * 3 * d];
            for h in 0..heads {
                let q = take_cols(&c.qkv, l, 3 * d, h * dh, dh);
                let k = take_cols(&c.qkv, l, 3 * d, d + h * dh, dh);
                let vv = take_cols(&c.qkv, l, 3 * d, 2 * d + h * dh, dh);
                let d_o = take_cols(&d_attn, l, d, h * dh, dh);
                let p = &c.probs[h];
                let mut d_p = vec![0.0; l * l];
                gemm(l, dh, l, 1.0, &d_o, false, &vv, true, 0.0, &mut d_p);
                let mut d_v = vec![0.0; l * dh];
                gemm(l, l, dh, 1.0, p, true, &d_o, false, 0.0, &mut d_v);
                for i in 0..l {
                    let pr = &p[i * l..(i + 1) * l];
                    let dr = &mut d_p[i * l..(i + 1) * l];
                    let dot: f64 = pr[..=i].iter().zip(&dr[..=i]).map(|(a, b)| a * b).sum();
                    for j in 0..=i {
                        dr[j] = pr[j] * (dr[j] - dot);
                    }
                    dr[i + 1..].iter_mut().for_each(|v| *v = 0.0);
                }
                let mut d_q = vec![0.0; l * dh];
                gemm(l, l, dh, scale, &d_p, false, &k, false, 0.0, &mut d_q);
                let mut d_k = vec![0.0; l * dh];
                gemm(l, l, dh, scale, &d_p, true, &q, false, 0.0, &mut d_k);
                put_cols(&mut d_qkv, &d_q, l, 3 * d, h * dh, dh);
                put_cols(&mut d_qkv, &d_k, l, 3 * d, d + h * dh, dh);
                put_cols(&mut d_qkv, &d_v, l, 3 * d, 2 * d + h * dh, dh);
            }
            gemm(d, l, 3 * d, 1.0, &c.h1, true, &d_qkv, false, 1.0, grads.get_mut(ly.wqkv));
            bias_grad(&d_qkv, grads.get_mut(ly.bqkv));
            let mut d_h1 = vec![0.0; l * d];
            gemm(l, 3 * d, d, 1.0, &d_qkv, false, store.get(ly.wqkv), true, 0.0, &mut d_h1);
            {
                let g = store.get(ly.ln1_g).to_vec();
                let (gg, gb) = two_mut(grads, ly.ln1_g, ly.ln1_b);
                layer_norm_backward(&d_h1, &c.ln1, &g, gg, gb, &mut dx, d);
            }
        }

        let mut d_over = BTreeMap::new();
        {
            let gpos = grads.get_mut(self.pos_emb);
            for (a, b) in gpos[..l * d].iter_mut().zip(&dx) {
                *a += b;
            }
        }
        let gtok = grads.get_mut(self.tok_emb);
        for p in 0..l {
            let row = &dx[p * d..(p + 1) * d];
            if cache.override_pos[p] {
                d_over.insert(p, row.to_vec());
            } else {
                let id = cache.ids[p] as usize;
                for (a, b) in gtok[id * d..(id + 1) * d].iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        d_over
    }

    pub fn new_cache(&self) -> KvCache {
        let n = self.cfg.max_len * self.dim;
        KvCache { k: vec![vec![0.0; n]; self.layers.len()], v: vec![vec![0.0; n]; self.layers.len()], len: 0 }
    }

    pub fn token_embedding<'a>(&self, store: &'a ParamStore, id: TokenId) -> &'a [f64] {
        let d = self.dim;
        &store.get(self.tok_emb)[id as usize * d..(id as usize + 1) * d]
    }

    /// Appends one position to the cache and returns its final hidden state.
    pub fn step(&self, store: &ParamStore, cache: &mut KvCache, input: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let p = cache.len;
        if p >= self.cfg.max_len {
            return Err(Error::SequenceTooLong { len: p + 1, max: self.cfg.max_len });
        }
        let heads = self.cfg.heads;
        let dh = d / heads;
        let f = self.cfg.ff_mult * d;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x: Vec<f64> = input.iter().zip(&store.get(self.pos_emb)[p * d..(p + 1) * d]).map(|(a, b)| a + b).collect();
        for (li, ly) in self.layers.iter().enumerate() {
            let (h1, _) = layer_norm(&x, store.get(ly.ln1_g), store.get(ly.ln1_b), d);
            let mut qkv = store.get(ly.bqkv).to_vec();
            gemm(1, d, 3 * d, 1.0, &h1, false, store.get(ly.wqkv), false, 1.0, &mut qkv);
            cache.k[li][p * d..(p + 1) * d].copy_from_slice(&qkv[d..2 * d]);
            cache.v[li][p * d..(p + 1) * d].copy_from_slice(&qkv[2 * d..3 * d]);
            let mut attn = vec![0.0; d];
            let mut s = vec![0.0; p + 1];
            for h in 0..heads {
                let q = &qkv[h * dh..(h + 1) * dh];
                for (j, sj) in s.iter_mut().enumerate() {
                    let k = &cache.k[li][j * d + h * dh..j * d + (h + 1) * dh];
                    *sj = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(&mut s);
                let o = &mut attn[h * dh..(h + 1) * dh];
                for (j, &w) in s.iter().enumerate() {
                    let vv = &cache.v[li][j * d + h * dh..j * d + (h + 1) * dh];
                    for (a, b) in o.iter_mut().zip(vv) {
                        *a += w * b;
                    }
                }
            }
            let mut proj = store.get(ly.bo).to_vec();
            gemm(1, d, d, 1.0, &attn, false, store.get(ly.wo), false, 1.0, &mut proj);
            for (a, b) in x.iter_mut().zip(&proj) {
                *a += b;
            }
            let (h2, _) = layer_norm(&x, store.get(ly.ln2_g), store.get(ly.ln2_b), d);
            let mut pre = store.get(ly.b1).to_vec();
            gemm(1, d, f, 1.0, &h2, false, store.get(ly.w1), false, 1.0, &mut pre);
            let act: Vec<f64> = pre.iter().map(|&v| self.cfg.activation.apply(v)).collect();
            let mut mlp = store.get(ly.b2).to_vec();
            gemm(1, f, d, 1.0, &act, false, store.get(ly.w2), false, 1.0, &mut mlp);
            for (a, b) in x.iter_mut().zip(&mlp) {
                *a += b;
            }
        }
        cache.len += 1;
        Ok(layer_norm(&x, store.get(self.lnf_g), store.get(self.lnf_b), d).0)
    }

    pub fn logits(&self, store: &ParamStore, hidden: &[f64]) -> Vec<f64> {
        let mut out = store.get(self.lm_b).to_vec();
        gemm(1, self.dim, self.vocab, 1.0, hidden, false, store.get(self.lm_w), false, 1.0, &mut out);
        out
    }

    pub fn latent(&self, store: &ParamStore, hidden: &[f64]) -> Vec<f64> {
        let mut out = store.get(self.nsp_b).to_vec();
        gemm(1, self.dim, self.latent_dim, 1.0, hidden, false, store.get(self.nsp_w), false, 1.0, &mut out);
        out
    }
}

fn two_mut(store: &mut ParamStore, a: TensorId, b: TensorId) -> (&mut [f64], &mut [f64]) {
    let sa = store.spec(a).clone();
    let sb = store.spec(b).clone();
    assert!(sa.offset + sa.len <= sb.offset, "tensors must be registered in order");
    let (lo, hi) = store.data.split_at_mut(sb.offset);
    (&mut lo[sa.offset..sa.offset + sa.len], &mut hi[..sb.len])
}
