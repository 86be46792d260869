//! Concatenated semi-structured embeddings feeding a post-norm transformer
//! encoder, plus a masked-token head tied to the token table.

use ndarray::{s, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::input::{InputSequence, MlmTarget, Segment, SubSegment};
use super::nn::{
    gelu, gelu_grad, impl_params, init_matrix, join, softmax_rows, LayerNorm, LayerNormCache, Linear, Mat, Params,
    Vector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_token: usize,
    pub d_segment: usize,
    pub d_sub_segment: usize,
    pub d_feature: usize,
    pub d_position: usize,
    pub max_len: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            d_token: 32,
            d_segment: 8,
            d_sub_segment: 8,
            d_feature: 8,
            d_position: 16,
            max_len: 256,
            layers: 2,
            heads: 4,
            ffn: 144,
        }
    }
}

impl EncoderConfig {
    /// Encoder width: the five embedding blocks side by side.
    pub fn width(&self) -> usize {
        self.d_token + self.d_segment + self.d_sub_segment + self.d_feature + self.d_position
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size == 0 || self.max_len == 0 || self.layers == 0 || self.heads == 0 || self.ffn == 0 {
            return Err("encoder sizes must be positive".into());
        }
        if !self.width().is_multiple_of(self.heads) {
            return Err(format!("width {} is not divisible by {} heads", self.width(), self.heads));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTables {
    pub token: Mat,
    pub segment: Mat,
    pub sub_segment: Mat,
    pub feature: Vector,
    pub position: Mat,
}

impl_params!(EmbeddingTables { token, segment, sub_segment, feature, position });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl_params!(Attention { query, key, value, output });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub attention: Attention,
    pub attention_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNorm,
}

impl_params!(EncoderLayer { attention, attention_norm, ffn_in, ffn_out, ffn_norm });

/// Transform applied to a token state before the tied output projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmHead {
    pub transform: Linear,
    pub output_bias: Vector,
}

impl_params!(MlmHead { transform, output_bias });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub embeddings: EmbeddingTables,
    pub input_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
    pub mlm: MlmHead,
}

impl Params for EncoderParams {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.embeddings.collect(&join(prefix, "embeddings"), out);
        self.input_norm.collect(&join(prefix, "input_norm"), out);
        self.layers.collect(&join(prefix, "layers"), out);
        self.mlm.collect(&join(prefix, "mlm"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.embeddings.collect_mut(&join(prefix, "embeddings"), out);
        self.input_norm.collect_mut(&join(prefix, "input_norm"), out);
        self.layers.collect_mut(&join(prefix, "layers"), out);
        self.mlm.collect_mut(&join(prefix, "mlm"), out);
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("token id {id} at position {position} is outside the {size}-entry vocabulary")]
    TokenOutOfRange { position: usize, id: u32, size: usize },
    #[error("sequence of length {len} exceeds the {max_len}-position table")]
    TooLong { len: usize, max_len: usize },
    #[error("empty input sequence")]
    Empty,
    #[error("non-finite feature at position {0}")]
    NonFiniteFeature(usize),
    #[error("non-finite activations after {0}")]
    NonFinite(String),
}

/// Final `[CLS]` vector and every token state.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub cls: Vector,
    pub states: Mat,
}

struct AttentionCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    ctx: Mat,
}

struct LayerCache {
    attention: AttentionCache,
    attention_norm: LayerNormCache,
    u: Mat,
    pre_act: Mat,
    act: Mat,
    ffn_norm: LayerNormCache,
}

/// Everything the backward pass needs from one forward pass.
pub struct EncoderCache {
    seq: InputSequence,
    input_norm: LayerNormCache,
    layers: Vec<LayerCache>,
}

impl Attention {
    fn new<R: Rng>(d: usize, rng: &mut R) -> Self {
        Attention {
            query: Linear::new(d, d, rng),
            key: Linear::new(d, d, rng),
            value: Linear::new(d, d, rng),
            output: Linear::new(d, d, rng),
        }
    }

    fn forward(&self, x: &Mat, heads: usize) -> (Mat, AttentionCache) {
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let d = x.ncols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Mat::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut scores);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let out = self.output.forward(&ctx);
        (out, AttentionCache { x: x.clone(), q, k, v, probs, ctx })
    }

    fn backward(&self, c: &AttentionCache, dy: &Mat, heads: usize, g: &mut Attention) -> Mat {
        let dctx = self.output.backward(&c.ctx, dy, &mut g.output);
        let d = dy.ncols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Mat::zeros(dy.raw_dim());
        let mut dk = Mat::zeros(dy.raw_dim());
        let mut dv = Mat::zeros(dy.raw_dim());
        for (h, a) in c.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dctx_h = dctx.slice(cols);
            let da = dctx_h.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
            let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = (a * &(da - &row_dot)) * scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let mut dx = self.query.backward(&c.x, &dq, &mut g.query);
        dx += &self.key.backward(&c.x, &dk, &mut g.key);
        dx += &self.value.backward(&c.x, &dv, &mut g.value);
        dx
    }
}

impl EncoderLayer {
    fn new<R: Rng>(d: usize, ffn: usize, rng: &mut R) -> Self {
        EncoderLayer {
            attention: Attention::new(d, rng),
            attention_norm: LayerNorm::new(d),
            ffn_in: Linear::new(d, ffn, rng),
            ffn_out: Linear::new(ffn, d, rng),
            ffn_norm: LayerNorm::new(d),
        }
    }

    fn forward(&self, x: &Mat, heads: usize) -> (Mat, LayerCache) {
        let (a, attention) = self.attention.forward(x, heads);
        let (u, attention_norm) = self.attention_norm.forward(&(x + &a));
        let pre_act = self.ffn_in.forward(&u);
        let act = pre_act.mapv(gelu);
        let f = self.ffn_out.forward(&act);
        let (y, ffn_norm) = self.ffn_norm.forward(&(&u + &f));
        (y, LayerCache { attention, attention_norm, u, pre_act, act, ffn_norm })
    }

    fn backward(&self, c: &LayerCache, dy: &Mat, heads: usize, g: &mut EncoderLayer) -> Mat {
        let dr2 = self.ffn_norm.backward(&c.ffn_norm, dy, &mut g.ffn_norm);
        let dact = self.ffn_out.backward(&c.act, &dr2, &mut g.ffn_out);
        let dpre = dact * &c.pre_act.mapv(gelu_grad);
        let du = self.ffn_in.backward(&c.u, &dpre, &mut g.ffn_in) + &dr2;
        let dr1 = self.attention_norm.backward(&c.attention_norm, &du, &mut g.attention_norm);
        self.attention.backward(&c.attention, &dr1, heads, &mut g.attention) + &dr1
    }
}

/// Forward state of the masked-token head for a set of positions.
pub struct MlmCache {
    positions: Vec<usize>,
    inputs: Mat,
    pre_act: Mat,
    hidden: Mat,
    probs: Mat,
    targets: Vec<u32>,
}

impl EncoderParams {
    pub fn new<R: Rng>(config: EncoderConfig, rng: &mut R) -> Self {
        let d = config.width();
        let embeddings = EmbeddingTables {
            token: init_matrix(config.vocab_size, config.d_token, 0.1, rng),
            segment: init_matrix(Segment::COUNT, config.d_segment, 0.1, rng),
            sub_segment: init_matrix(SubSegment::COUNT, config.d_sub_segment, 0.1, rng),
            feature: init_matrix(1, config.d_feature, 0.1, rng).row(0).to_owned(),
            position: init_matrix(config.max_len, config.d_position, 0.1, rng),
        };
        let layers = (0..config.layers).map(|_| EncoderLayer::new(d, config.ffn, rng)).collect();
        let mlm = MlmHead { transform: Linear::new(d, config.d_token, rng), output_bias: Vector::zeros(config.vocab_size) };
        EncoderParams { config, embeddings, input_norm: LayerNorm::new(d), layers, mlm }
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn width(&self) -> usize {
        self.config.width()
    }

    /// Row `i` is `[E_T[tok] | E_S[seg] | E_S'[sub] | F * e_f | E_P[i]]`.
    pub fn embed(&self, seq: &InputSequence) -> Result<Mat, EncodeError> {
        let c = &self.config;
        if seq.is_empty() {
            return Err(EncodeError::Empty);
        }
        if seq.len() > c.max_len {
            return Err(EncodeError::TooLong { len: seq.len(), max_len: c.max_len });
        }
        let e = &self.embeddings;
        let mut out = Mat::zeros((seq.len(), c.width()));
        for (i, slot) in seq.slots.iter().enumerate() {
            if slot.token as usize >= c.vocab_size {
                return Err(EncodeError::TokenOutOfRange { position: i, id: slot.token, size: c.vocab_size });
            }
            if !slot.feature.is_finite() {
                return Err(EncodeError::NonFiniteFeature(i));
            }
            let mut row = out.row_mut(i);
            let mut at = 0;
            let mut put = |src: ndarray::ArrayView1<f64>| {
                row.slice_mut(s![at..at + src.len()]).assign(&src);
                at += src.len();
            };
            put(e.token.row(slot.token as usize));
            put(e.segment.row(slot.segment as usize));
            put(e.sub_segment.row(slot.sub as usize));
            put((&e.feature * slot.feature).view());
            put(e.position.row(i));
        }
        Ok(out)
    }

    fn embed_backward(&self, seq: &InputSequence, d_emb: &Mat, g: &mut EncoderParams) {
        let c = &self.config;
        let g = &mut g.embeddings;
        for (i, slot) in seq.slots.iter().enumerate() {
            let row = d_emb.row(i);
            let mut at = 0;
            let mut take = |n: usize| {
                let v = row.slice(s![at..at + n]);
                at += n;
                v
            };
            let dt = take(c.d_token);
            let ds = take(c.d_segment);
            let dss = take(c.d_sub_segment);
            let df = take(c.d_feature);
            let dp = take(c.d_position);
            let mut r = g.token.row_mut(slot.token as usize);
            r += &dt;
            let mut r = g.segment.row_mut(slot.segment as usize);
            r += &ds;
            let mut r = g.sub_segment.row_mut(slot.sub as usize);
            r += &dss;
            g.feature.scaled_add(slot.feature, &df);
            let mut r = g.position.row_mut(i);
            r += &dp;
        }
    }

    /// Forward pass keeping what the backward pass needs.
    pub fn forward(&self, seq: &InputSequence) -> Result<(Encoding, EncoderCache), EncodeError> {
        let emb = self.embed(seq)?;
        let (mut x, input_norm) = self.input_norm.forward(&emb);
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(&x, self.config.heads);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(EncodeError::NonFinite(format!("encoder layer {i}")));
            }
            layers.push(cache);
            x = y;
        }
        let cls = x.row(0).to_owned();
        Ok((Encoding { cls, states: x }, EncoderCache { seq: seq.clone(), input_norm, layers }))
    }

    pub fn encode(&self, seq: &InputSequence) -> Result<Encoding, EncodeError> {
        self.forward(seq).map(|(e, _)| e)
    }

    /// Accumulates parameter gradients for `d_states` (gradient of the loss
    /// with respect to every output token state).
    pub fn backward(&self, cache: &EncoderCache, d_states: Mat, g: &mut EncoderParams) {
        let mut d = d_states;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(&cache.layers[i], &d, self.config.heads, &mut g.layers[i]);
        }
        let d_emb = self.input_norm.backward(&cache.input_norm, &d, &mut g.input_norm);
        self.embed_backward(&cache.seq, &d_emb, g);
    }

    /// Summed cross-entropy of the masked-token predictions at `targets`.
    pub fn mlm_loss(&self, states: &Mat, targets: &[MlmTarget]) -> (f64, MlmCache) {
        let positions: Vec<usize> = targets.iter().map(|t| t.position).collect();
        let inputs = states.select(Axis(0), &positions);
        let pre_act = self.mlm.transform.forward(&inputs);
        let hidden = pre_act.mapv(gelu);
        let mut probs = hidden.dot(&self.embeddings.token.t()) + &self.mlm.output_bias;
        softmax_rows(&mut probs);
        let loss = targets.iter().enumerate().map(|(r, t)| -probs[[r, t.token as usize]].max(1e-300).ln()).sum();
        let targets = targets.iter().map(|t| t.token).collect();
        (loss, MlmCache { positions, inputs, pre_act, hidden, probs, targets })
    }

    /// Backward of `scale * mlm_loss`; adds into `d_states`.
    pub fn mlm_backward(&self, c: &MlmCache, scale: f64, d_states: &mut Mat, g: &mut EncoderParams) {
        let mut dlogits = c.probs.clone();
        for (r, &t) in c.targets.iter().enumerate() {
            dlogits[[r, t as usize]] -= 1.0;
        }
        dlogits *= scale;
        g.mlm.output_bias += &dlogits.sum_axis(Axis(0));
        g.embeddings.token += &dlogits.t().dot(&c.hidden);
        let dhidden = dlogits.dot(&self.embeddings.token);
        let dpre = dhidden * &c.pre_act.mapv(gelu_grad);
        let dinputs = self.mlm.transform.backward(&c.inputs, &dpre, &mut g.mlm.transform);
        for (r, &p) in c.positions.iter().enumerate() {
            let mut row = d_states.row_mut(p);
            row += &dinputs.row(r);
        }
    }

    /// Most likely token id at each target position (for diagnostics).
    pub fn mlm_predictions(&self, c: &MlmCache) -> Vec<u32> {
        c.probs
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                    .0 as u32
            })
            .collect()
    }
}
