//! A post-LayerNorm transformer encoder with a one-logit-per-token
//! discriminative head, `z_t = w . h_t + b`.
//!
//! All parameters live in one flat vector so the optimizer and checkpoint
//! code can treat them uniformly. The backward pass is written out by hand.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use semscore::train::{config_hash, Checkpoint};
use semscore::{Error, Result, Scalar, Scorer, TrainableScorer, WordTokenizer};

use crate::linalg::{add_assign, add_bias, col_sum_acc, matmul, matmul_at_acc, matmul_bt};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embedding_dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 256,
            max_positions: 128,
            dropout: 0.1,
            init_std: 0.02,
            init_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size == 0 || self.embedding_dim == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return bad("vocab_size, embedding_dim, heads and ffn_dim must be positive");
        }
        if !self.embedding_dim.is_multiple_of(self.heads) {
            return bad("embedding_dim must be divisible by heads");
        }
        if self.max_positions == 0 {
            return bad("max_positions must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    fn get<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.offset..self.offset + self.len]
    }

    fn get_mut<'a, T>(&self, p: &'a mut [T]) -> &'a mut [T] {
        &mut p[self.offset..self.offset + self.len]
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub wq: Slot,
    pub bq: Slot,
    pub wk: Slot,
    pub bk: Slot,
    pub wv: Slot,
    pub bv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub ln1_g: Slot,
    pub ln1_b: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
    pub ln2_g: Slot,
    pub ln2_b: Slot,
}

/// Where every tensor sits in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub token_embedding: Slot,
    pub position_embedding: Slot,
    pub embed_ln_g: Slot,
    pub embed_ln_b: Slot,
    pub layers: Vec<LayerSlots>,
    pub head_w: Slot,
    pub head_b: Slot,
    pub total: usize,
}

impl Layout {
    fn new(c: &EncoderConfig) -> Self {
        let mut offset = 0;
        let mut slot = |len: usize| {
            let s = Slot { offset, len };
            offset += len;
            s
        };
        let d = c.embedding_dim;
        let f = c.ffn_dim;
        let token_embedding = slot(c.vocab_size * d);
        let position_embedding = slot(c.max_positions * d);
        let embed_ln_g = slot(d);
        let embed_ln_b = slot(d);
        let layers = (0..c.layers)
            .map(|_| LayerSlots {
                wq: slot(d * d),
                bq: slot(d),
                wk: slot(d * d),
                bk: slot(d),
                wv: slot(d * d),
                bv: slot(d),
                wo: slot(d * d),
                bo: slot(d),
                ln1_g: slot(d),
                ln1_b: slot(d),
                w1: slot(d * f),
                b1: slot(f),
                w2: slot(f * d),
                b2: slot(d),
                ln2_g: slot(d),
                ln2_b: slot(d),
            })
            .collect();
        let head_w = slot(d);
        let head_b = slot(1);
        Self {
            token_embedding,
            position_embedding,
            embed_ln_g,
            embed_ln_b,
            layers,
            head_w,
            head_b,
            total: offset,
        }
    }

    /// Slots holding LayerNorm gains, initialized to one.
    fn gains(&self) -> Vec<Slot> {
        let mut v = vec![self.embed_ln_g];
        for l in &self.layers {
            v.push(l.ln1_g);
            v.push(l.ln2_g);
        }
        v
    }

    /// Bias and LayerNorm shift slots, initialized to zero.
    fn zeros(&self) -> Vec<Slot> {
        let mut v = vec![self.embed_ln_b, self.head_b];
        for l in &self.layers {
            v.extend([l.bq, l.bk, l.bv, l.bo, l.ln1_b, l.b1, l.b2, l.ln2_b]);
        }
        v
    }
}

#[derive(Debug, Clone)]
struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

#[derive(Debug, Clone)]
struct LayerTape<T> {
    x: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
    mask_attn: Option<Vec<T>>,
    ln1: LnCache<T>,
    y1: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
    mask_ffn: Option<Vec<T>>,
    ln2: LnCache<T>,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    ids: Vec<u32>,
    ln0: LnCache<T>,
    mask0: Option<Vec<T>>,
    layers: Vec<LayerTape<T>>,
    hidden: Vec<T>,
}

impl<T> Tape<T> {
    /// Final hidden states, `len x embedding_dim`.
    pub fn hidden(&self) -> &[T] {
        &self.hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiscriminator<T> {
    config: EncoderConfig,
    layout: Layout,
    params: Vec<T>,
}

fn layer_norm<T: Scalar>(x: &[T], gain: &[T], shift: &[T]) -> (Vec<T>, LnCache<T>) {
    let d = gain.len();
    let n = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    let inv_d = T::one() / T::of_usize(d);
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + T::of(LN_EPS)).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = gain[j] * h + shift[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Scalar>(dy: &[T], cache: &LnCache<T>, gain: &[T], dgain: &mut [T], dshift: &mut [T]) -> Vec<T> {
    let d = gain.len();
    let n = dy.len() / d;
    let inv_d = T::one() / T::of_usize(d);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for i in 0..n {
        let row = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dgain[j] += row[j] * xh[j];
            dshift[j] += row[j];
            dxhat[j] = row[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let r = cache.rstd[i];
        for j in 0..d {
            dx[i * d + j] = r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu<T: Scalar>(u: T) -> T {
    let half = T::of(0.5);
    let inner = T::of(GELU_C) * (u + T::of(0.044715) * u * u * u);
    half * u * (T::one() + inner.tanh())
}

fn gelu_grad<T: Scalar>(u: T) -> T {
    let half = T::of(0.5);
    let c = T::of(GELU_C);
    let a = T::of(0.044715);
    let t = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * u * u)
}

fn dropout_mask<T: Scalar>(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - p));
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect(),
    )
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

impl<T: Scalar> ToyDiscriminator<T> {
    /// Random initialization: normal(0, init_std) weights, unit LayerNorm
    /// gains, zero biases.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut params: Vec<T> = (0..layout.total).map(|_| T::of(normal.sample(&mut rng))).collect();
        for s in layout.gains() {
            s.get_mut(&mut params).iter_mut().for_each(|p| *p = T::one());
        }
        for s in layout.zeros() {
            s.get_mut(&mut params).iter_mut().for_each(|p| *p = T::zero());
        }
        Ok(Self { config, layout, params })
    }

    pub fn from_parameters(config: EncoderConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "{} parameters for a model of {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_parameters(&self) -> usize {
        self.layout.total
    }

    fn check_input(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Scorer("empty prompt".into()));
        }
        if ids.len() > self.config.max_positions {
            return Err(Error::Scorer(format!(
                "prompt of {} tokens exceeds max_positions {}",
                ids.len(),
                self.config.max_positions
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::Scorer(format!(
                "token id {bad} out of range for vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Logits and activations; dropout only when `rng` is given.
    pub fn forward(&self, ids: &[u32], mut rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<T>, Tape<T>)> {
        self.check_input(ids)?;
        let p = &self.params;
        let lay = &self.layout;
        let d = self.config.embedding_dim;
        let f = self.config.ffn_dim;
        let heads = self.config.heads;
        let dh = d / heads;
        let n = ids.len();
        let drop = self.config.dropout;
        let scale = T::one() / T::of_usize(dh).sqrt();

        let tok = lay.token_embedding.get(p);
        let pos = lay.position_embedding.get(p);
        let mut e = vec![T::zero(); n * d];
        for (t, &id) in ids.iter().enumerate() {
            let id = id as usize;
            for j in 0..d {
                e[t * d + j] = tok[id * d + j] + pos[t * d + j];
            }
        }
        let (mut x, ln0) = layer_norm(&e, lay.embed_ln_g.get(p), lay.embed_ln_b.get(p));
        let mask0 = dropout_mask(n * d, drop, rng.as_deref_mut());
        apply_mask(&mut x, &mask0);

        let mut layers = Vec::with_capacity(lay.layers.len());
        for s in &lay.layers {
            let mut q = matmul(&x, s.wq.get(p), n, d, d);
            add_bias(&mut q, s.bq.get(p));
            let mut k = matmul(&x, s.wk.get(p), n, d, d);
            add_bias(&mut k, s.bk.get(p));
            let mut v = matmul(&x, s.wv.get(p), n, d, d);
            add_bias(&mut v, s.bv.get(p));

            let mut probs = vec![T::zero(); heads * n * n];
            let mut ctx = vec![T::zero(); n * d];
            for h in 0..heads {
                let c0 = h * dh;
                let ph = &mut probs[h * n * n..(h + 1) * n * n];
                for i in 0..n {
                    let qi = &q[i * d + c0..i * d + c0 + dh];
                    let row = &mut ph[i * n..(i + 1) * n];
                    let mut hi = T::neg_infinity();
                    for j in 0..n {
                        let kj = &k[j * d + c0..j * d + c0 + dh];
                        let sdot = qi.iter().zip(kj).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale;
                        row[j] = sdot;
                        hi = hi.max(sdot);
                    }
                    let mut sum = T::zero();
                    for r in row.iter_mut() {
                        *r = (*r - hi).exp();
                        sum += *r;
                    }
                    for r in row.iter_mut() {
                        *r /= sum;
                    }
                    let ci = &mut ctx[i * d + c0..i * d + c0 + dh];
                    for j in 0..n {
                        let pij = row[j];
                        let vj = &v[j * d + c0..j * d + c0 + dh];
                        for (c, &vv) in ci.iter_mut().zip(vj) {
                            *c += pij * vv;
                        }
                    }
                }
            }
            let mut a = matmul(&ctx, s.wo.get(p), n, d, d);
            add_bias(&mut a, s.bo.get(p));
            let mask_attn = dropout_mask(n * d, drop, rng.as_deref_mut());
            apply_mask(&mut a, &mask_attn);
            add_assign(&mut a, &x);
            let (y1, ln1) = layer_norm(&a, s.ln1_g.get(p), s.ln1_b.get(p));

            let mut u = matmul(&y1, s.w1.get(p), n, d, f);
            add_bias(&mut u, s.b1.get(p));
            let g: Vec<T> = u.iter().map(|&v| gelu(v)).collect();
            let mut o = matmul(&g, s.w2.get(p), n, f, d);
            add_bias(&mut o, s.b2.get(p));
            let mask_ffn = dropout_mask(n * d, drop, rng.as_deref_mut());
            apply_mask(&mut o, &mask_ffn);
            add_assign(&mut o, &y1);
            let (y2, ln2) = layer_norm(&o, s.ln2_g.get(p), s.ln2_b.get(p));

            layers.push(LayerTape {
                x: std::mem::replace(&mut x, y2),
                q,
                k,
                v,
                probs,
                ctx,
                mask_attn,
                ln1,
                y1,
                u,
                g,
                mask_ffn,
                ln2,
            });
        }

        let w = lay.head_w.get(p);
        let b = lay.head_b.get(p)[0];
        let logits = x
            .chunks(d)
            .map(|h| h.iter().zip(w).fold(b, |a, (&x, &y)| a + x * y))
            .collect();
        Ok((
            logits,
            Tape {
                ids: ids.to_vec(),
                ln0,
                mask0,
                layers,
                hidden: x,
            },
        ))
    }

    /// Accumulates parameter gradients for the given logit gradients.
    pub fn backward_into(&self, tape: &Tape<T>, dlogits: &[T], grads: &mut [T]) -> Result<()> {
        let n = tape.ids.len();
        if dlogits.len() != n || grads.len() != self.layout.total {
            return Err(Error::Shape("gradient buffer does not match tape".into()));
        }
        let p = &self.params;
        let lay = &self.layout;
        let d = self.config.embedding_dim;
        let f = self.config.ffn_dim;
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = T::one() / T::of_usize(dh).sqrt();

        let w = lay.head_w.get(p);
        let mut dx = vec![T::zero(); n * d];
        {
            let gw = lay.head_w.get_mut(grads);
            for t in 0..n {
                let dz = dlogits[t];
                let h = &tape.hidden[t * d..(t + 1) * d];
                for j in 0..d {
                    gw[j] += dz * h[j];
                    dx[t * d + j] = dz * w[j];
                }
            }
        }
        lay.head_b.get_mut(grads)[0] += dlogits.iter().copied().sum::<T>();

        for (s, lt) in lay.layers.iter().zip(&tape.layers).rev() {
            // second sublayer: y2 = LN2(y1 + drop(ffn(y1)))
            let (dg2, db2) = split_pair(grads, s.ln2_g, s.ln2_b);
            let dr2 = layer_norm_backward(&dx, &lt.ln2, s.ln2_g.get(p), dg2, db2);
            let mut dffn = dr2.clone();
            apply_mask(&mut dffn, &lt.mask_ffn);
            matmul_at_acc(&lt.g, &dffn, n, f, d, s.w2.get_mut(grads));
            col_sum_acc(&dffn, s.b2.get_mut(grads));
            let mut du = matmul_bt(&dffn, s.w2.get(p), n, d, f);
            for (g, &u) in du.iter_mut().zip(&lt.u) {
                *g *= gelu_grad(u);
            }
            matmul_at_acc(&lt.y1, &du, n, d, f, s.w1.get_mut(grads));
            col_sum_acc(&du, s.b1.get_mut(grads));
            let mut dy1 = matmul_bt(&du, s.w1.get(p), n, f, d);
            add_assign(&mut dy1, &dr2);

            // first sublayer: y1 = LN1(x + drop(attn(x)))
            let (dg1, db1) = split_pair(grads, s.ln1_g, s.ln1_b);
            let dr1 = layer_norm_backward(&dy1, &lt.ln1, s.ln1_g.get(p), dg1, db1);
            let mut da = dr1.clone();
            apply_mask(&mut da, &lt.mask_attn);
            matmul_at_acc(&lt.ctx, &da, n, d, d, s.wo.get_mut(grads));
            col_sum_acc(&da, s.bo.get_mut(grads));
            let dctx = matmul_bt(&da, s.wo.get(p), n, d, d);

            let mut dq = vec![T::zero(); n * d];
            let mut dk = vec![T::zero(); n * d];
            let mut dv = vec![T::zero(); n * d];
            let mut dp = vec![T::zero(); n];
            for h in 0..heads {
                let c0 = h * dh;
                let ph = &lt.probs[h * n * n..(h + 1) * n * n];
                for i in 0..n {
                    let dci = &dctx[i * d + c0..i * d + c0 + dh];
                    let row = &ph[i * n..(i + 1) * n];
                    let mut dot = T::zero();
                    for j in 0..n {
                        let vj = &lt.v[j * d + c0..j * d + c0 + dh];
                        dp[j] = dci.iter().zip(vj).fold(T::zero(), |a, (&x, &y)| a + x * y);
                        dot += dp[j] * row[j];
                        let dvj = &mut dv[j * d + c0..j * d + c0 + dh];
                        for (g, &c) in dvj.iter_mut().zip(dci) {
                            *g += row[j] * c;
                        }
                    }
                    for j in 0..n {
                        let ds = row[j] * (dp[j] - dot) * scale;
                        if ds.is_zero() {
                            continue;
                        }
                        for c in 0..dh {
                            dq[i * d + c0 + c] += ds * lt.k[j * d + c0 + c];
                            dk[j * d + c0 + c] += ds * lt.q[i * d + c0 + c];
                        }
                    }
                }
            }
            let mut dxl = dr1;
            for (wslot, bslot, g) in [(s.wq, s.bq, &dq), (s.wk, s.bk, &dk), (s.wv, s.bv, &dv)] {
                matmul_at_acc(&lt.x, g, n, d, d, wslot.get_mut(grads));
                col_sum_acc(g, bslot.get_mut(grads));
                add_assign(&mut dxl, &matmul_bt(g, wslot.get(p), n, d, d));
            }
            dx = dxl;
        }

        apply_mask(&mut dx, &tape.mask0);
        let (dg0, db0) = split_pair(grads, lay.embed_ln_g, lay.embed_ln_b);
        let de = layer_norm_backward(&dx, &tape.ln0, lay.embed_ln_g.get(p), dg0, db0);
        {
            let gt = lay.token_embedding.get_mut(grads);
            for (t, &id) in tape.ids.iter().enumerate() {
                let id = id as usize;
                for j in 0..d {
                    gt[id * d + j] += de[t * d + j];
                }
            }
        }
        let gp = lay.position_embedding.get_mut(grads);
        for (g, &v) in gp.iter_mut().zip(&de) {
            *g += v;
        }
        Ok(())
    }

    /// Writes `model.bin`, `model.json` and `vocab.txt` into `dir`.
    pub fn save_dir(&self, dir: &Path, tokenizer: &WordTokenizer, seed: u64) -> Result<()> {
        fs::create_dir_all(dir)?;
        let ck = Checkpoint {
            params: self.params.clone(),
            step: 0,
            dev_metric: 0.0,
            lambda: vec![],
        };
        ck.save(
            &dir.join("model.bin"),
            seed,
            &config_hash(&self.config),
            serde_json::to_value(&self.config)?,
        )?;
        tokenizer.save(&dir.join("vocab.txt"))
    }

    pub fn load_dir(dir: &Path) -> Result<(Self, WordTokenizer)> {
        let (ck, meta) = Checkpoint::<T>::load(&dir.join("model.bin"))?;
        let config: EncoderConfig = serde_json::from_value(meta.model)?;
        let model = Self::from_parameters(config, ck.params)?;
        let tokenizer = WordTokenizer::load(&dir.join("vocab.txt"))?;
        if semscore::Tokenizer::vocab_size(&tokenizer) != model.config.vocab_size {
            return Err(Error::Format("vocabulary size does not match the model".into()));
        }
        Ok((model, tokenizer))
    }
}

fn split_pair<T>(grads: &mut [T], a: Slot, b: Slot) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(a.offset + a.len, b.offset);
    let (lo, hi) = grads[a.offset..b.offset + b.len].split_at_mut(a.len);
    (lo, hi)
}

impl<T: Scalar> Scorer<T> for ToyDiscriminator<T> {
    fn score(&self, prompts: &[&[u32]]) -> Result<Vec<Vec<T>>> {
        prompts.iter().map(|ids| self.forward(ids, None).map(|(z, _)| z)).collect()
    }
}

impl<T: Scalar> TrainableScorer<T> for ToyDiscriminator<T> {
    type Tape = Tape<T>;

    fn parameters(&self) -> &[T] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn forward_train(&self, ids: &[u32], dropout: Option<&mut ChaCha8Rng>) -> Result<(Vec<T>, Tape<T>)> {
        self.forward(ids, dropout)
    }

    fn backward(&self, tape: &Tape<T>, dlogits: &[T], grads: &mut [T]) -> Result<()> {
        self.backward_into(tape, dlogits, grads)
    }
}
