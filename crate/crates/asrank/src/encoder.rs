//! Sentence encoder: vocabulary, tokenization, and a small transformer
//! that maps a padded token sequence to one embedding by mean pooling the
//! hidden states of real positions.
//!
//! Padding is handled with masks rather than sentinel arithmetic: PAD
//! columns are excluded from every attention softmax and PAD rows from the
//! pooled mean, so the embedding of a sentence is exactly invariant to
//! whatever sits in the PAD region.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::QuestionGroup;
use crate::error::{Error, Result};
use crate::numerics::{cast, Array, Array32, Graph, Scalar, Var};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Variance floor inside every layer normalization.
pub const LN_EPS: f64 = 1e-5;

/// Token-to-id mapping with reserved PAD (0) and UNK (1) slots. Ids are
/// dense and ordered by descending frequency, ties broken by the token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

impl Vocab {
    /// Rebuilds a vocabulary from its serialized token list (checkpoint
    /// load). The first two entries must be the PAD and UNK sentinels.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Vocab> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Data(
                "vocabulary must start with the <pad> and <unk> sentinels".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab {
            tokens,
            index,
            min_freq,
        })
    }

    /// Id for a token, falling back to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }
}

/// Lowercased alphanumeric runs; punctuation and whitespace separate and
/// are dropped.
pub fn split_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Builds the vocabulary over every question and candidate in `groups`,
/// keeping tokens seen at least `min_freq` times.
pub fn build_vocab(groups: &[QuestionGroup], min_freq: usize) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for g in groups {
        for t in split_tokens(&g.question) {
            *counts.entry(t).or_insert(0) += 1;
        }
        for c in &g.candidates {
            for t in split_tokens(&c.text) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::Data("empty corpus: no tokens to build a vocabulary from".into()));
    }
    let mut entries: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(entries.into_iter().map(|(t, _)| t));
    Vocab::from_tokens(tokens, min_freq)
}

/// Fixed-length model input: `ids`, a 0/1 `mask` that is a prefix of ones,
/// and an all-zero `segment` row, each exactly `max_len` long.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub mask: Vec<u8>,
    pub segment: Vec<usize>,
}

impl TokenSequence {
    /// Number of real (unpadded) positions; always at least one.
    pub fn n_real(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub(crate) fn mask_bools(&self) -> Vec<bool> {
        self.mask.iter().map(|&m| m == 1).collect()
    }
}

/// Tokenizes, truncates to `max_len`, and right-pads. Empty or all-UNK
/// text still produces one real position: a single UNK token.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> Result<TokenSequence> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut ids: Vec<usize> = split_tokens(text).iter().map(|t| vocab.id(t)).collect();
    if ids.is_empty() {
        ids.push(UNK_ID);
    }
    ids.truncate(max_len);
    let real = ids.len();
    let mut mask = vec![1u8; real];
    ids.resize(max_len, PAD_ID);
    mask.resize(max_len, 0);
    Ok(TokenSequence {
        ids,
        mask,
        segment: vec![0; max_len],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Vocabulary size; 0 means "derive from the corpus at training time".
    pub vocab_size: usize,
    /// Model width d; must be divisible by `heads`.
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    /// Dropout rate applied after each sublayer during training only.
    pub dropout: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            hidden: 64,
            heads: 4,
            layers: 2,
            ff_dim: 256,
            max_len: 128,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.ff_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.vocab_size == 1 {
            return Err(Error::Config("vocab_size 1 cannot hold the PAD and UNK sentinels".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub wq: Array32,
    pub bq: Array32,
    pub wk: Array32,
    pub bk: Array32,
    pub wv: Array32,
    pub bv: Array32,
    pub wo: Array32,
    pub bo: Array32,
    pub ln1_gain: Array32,
    pub ln1_bias: Array32,
    pub w1: Array32,
    pub b1: Array32,
    pub w2: Array32,
    pub b2: Array32,
    pub ln2_gain: Array32,
    pub ln2_bias: Array32,
}

/// All trainable encoder tensors. `visit`/`visit_mut` enumerate them in a
/// fixed canonical order; everything that must stay aligned across runs
/// (Adam state, checkpoint records, graph leaves) iterates through them.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub token: Array32,
    pub position: Array32,
    pub segment: Array32,
    pub layers: Vec<LayerParams>,
}

/// Per-layer tensor names in canonical visit order.
pub(crate) const LAYER_FIELDS: [&str; 16] = [
    "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo", "attn.bo",
    "ln1.gain", "ln1.bias", "ff.w1", "ff.b1", "ff.w2", "ff.b2", "ln2.gain", "ln2.bias",
];

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Dense array with entries drawn from Normal(0, std).
pub(crate) fn normal_init(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Array32 {
    let len = shape.iter().product();
    let data = (0..len).map(|_| (standard_normal(rng) * std) as f32).collect();
    Array32::from_vec(shape.to_vec(), data).expect("shape/data agree")
}

const INIT_STD: f64 = 0.02;

impl EncoderParams {
    /// Fresh parameters: Normal(0, 0.02) weights and embeddings, zero
    /// biases, unit layer-norm gains.
    pub fn init(config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<EncoderParams> {
        config.validate()?;
        if config.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be set before initializing parameters".into()));
        }
        let d = config.hidden;
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: normal_init(rng, &[d, d], INIT_STD),
                bq: Array32::zeros(&[1, d]),
                wk: normal_init(rng, &[d, d], INIT_STD),
                bk: Array32::zeros(&[1, d]),
                wv: normal_init(rng, &[d, d], INIT_STD),
                bv: Array32::zeros(&[1, d]),
                wo: normal_init(rng, &[d, d], INIT_STD),
                bo: Array32::zeros(&[1, d]),
                ln1_gain: ones(&[1, d]),
                ln1_bias: Array32::zeros(&[1, d]),
                w1: normal_init(rng, &[d, config.ff_dim], INIT_STD),
                b1: Array32::zeros(&[1, config.ff_dim]),
                w2: normal_init(rng, &[config.ff_dim, d], INIT_STD),
                b2: Array32::zeros(&[1, d]),
                ln2_gain: ones(&[1, d]),
                ln2_bias: Array32::zeros(&[1, d]),
            })
            .collect();
        Ok(EncoderParams {
            token: normal_init(rng, &[config.vocab_size, d], INIT_STD),
            position: normal_init(rng, &[config.max_len, d], INIT_STD),
            segment: normal_init(rng, &[2, d], INIT_STD),
            layers,
        })
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Array32)) {
        f("embed.token".into(), &self.token);
        f("embed.position".into(), &self.position);
        f("embed.segment".into(), &self.segment);
        for (i, l) in self.layers.iter().enumerate() {
            let fields: [&Array32; 16] = [
                &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                &l.ln1_gain, &l.ln1_bias, &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_gain, &l.ln2_bias,
            ];
            for (name, arr) in LAYER_FIELDS.iter().zip(fields) {
                f(format!("layer{i}.{name}"), arr);
            }
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut Array32)) {
        f("embed.token".into(), &mut self.token);
        f("embed.position".into(), &mut self.position);
        f("embed.segment".into(), &mut self.segment);
        for (i, l) in self.layers.iter_mut().enumerate() {
            let fields: [&mut Array32; 16] = [
                &mut l.wq, &mut l.bq, &mut l.wk, &mut l.bk, &mut l.wv, &mut l.bv, &mut l.wo, &mut l.bo,
                &mut l.ln1_gain, &mut l.ln1_bias, &mut l.w1, &mut l.b1, &mut l.w2, &mut l.b2,
                &mut l.ln2_gain, &mut l.ln2_bias,
            ];
            for (name, arr) in LAYER_FIELDS.iter().zip(fields) {
                f(format!("layer{i}.{name}"), arr);
            }
        }
    }

    /// Tensors in visit order as (name, array) pairs.
    pub fn named(&self) -> Vec<(String, &Array32)> {
        let mut out = Vec::new();
        self.visit(&mut |name, arr| out.push((name, arr)));
        out
    }

    /// All-zero tensors with the shapes the config dictates; checkpoint
    /// loading fills these in by name.
    pub(crate) fn zeros(config: &EncoderConfig) -> Result<EncoderParams> {
        config.validate()?;
        if config.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be set before shaping parameters".into()));
        }
        let d = config.hidden;
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: Array32::zeros(&[d, d]),
                bq: Array32::zeros(&[1, d]),
                wk: Array32::zeros(&[d, d]),
                bk: Array32::zeros(&[1, d]),
                wv: Array32::zeros(&[d, d]),
                bv: Array32::zeros(&[1, d]),
                wo: Array32::zeros(&[d, d]),
                bo: Array32::zeros(&[1, d]),
                ln1_gain: Array32::zeros(&[1, d]),
                ln1_bias: Array32::zeros(&[1, d]),
                w1: Array32::zeros(&[d, config.ff_dim]),
                b1: Array32::zeros(&[1, config.ff_dim]),
                w2: Array32::zeros(&[config.ff_dim, d]),
                b2: Array32::zeros(&[1, d]),
                ln2_gain: Array32::zeros(&[1, d]),
                ln2_bias: Array32::zeros(&[1, d]),
            })
            .collect();
        Ok(EncoderParams {
            token: Array32::zeros(&[config.vocab_size, d]),
            position: Array32::zeros(&[config.max_len, d]),
            segment: Array32::zeros(&[2, d]),
            layers,
        })
    }
}

fn ones(shape: &[usize]) -> Array32 {
    let len = shape.iter().product();
    Array32::from_vec(shape.to_vec(), vec![1.0; len]).expect("shape/data agree")
}

/// A trained (or freshly initialized) encoder: everything needed to map
/// text to an embedding.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub vocab: Vocab,
    pub config: EncoderConfig,
    pub params: EncoderParams,
}

impl Encoder {
    /// Builds the vocabulary from `groups` and initializes parameters from
    /// the seed-derived RNG.
    pub fn init(groups: &[QuestionGroup], mut config: EncoderConfig, min_freq: usize, rng: &mut ChaCha8Rng) -> Result<Encoder> {
        let vocab = build_vocab(groups, min_freq)?;
        config.vocab_size = vocab.len();
        let params = EncoderParams::init(&config, rng)?;
        Ok(Encoder { vocab, config, params })
    }
}

/// Graph leaves for the encoder parameters, in canonical visit order.
pub(crate) struct EncoderVars {
    flat: Vec<Var>,
    layers: usize,
}

pub(crate) struct LayerVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

impl EncoderVars {
    pub fn token(&self) -> Var {
        self.flat[0]
    }

    pub fn position(&self) -> Var {
        self.flat[1]
    }

    pub fn segment(&self) -> Var {
        self.flat[2]
    }

    pub fn layer(&self, l: usize) -> LayerVars {
        let b = 3 + l * 16;
        let f = &self.flat;
        LayerVars {
            wq: f[b],
            bq: f[b + 1],
            wk: f[b + 2],
            bk: f[b + 3],
            wv: f[b + 4],
            bv: f[b + 5],
            wo: f[b + 6],
            bo: f[b + 7],
            ln1_gain: f[b + 8],
            ln1_bias: f[b + 9],
            w1: f[b + 10],
            b1: f[b + 11],
            w2: f[b + 12],
            b2: f[b + 13],
            ln2_gain: f[b + 14],
            ln2_bias: f[b + 15],
        }
    }

    pub fn flat(&self) -> &[Var] {
        &self.flat
    }

    pub fn n_layers(&self) -> usize {
        self.layers
    }
}

/// The encoder's tensors converted to another precision, in visit order.
/// The 64-bit gradient check runs the identical forward code on these.
pub(crate) fn params_to_arrays<F: Scalar>(params: &EncoderParams) -> Vec<Array<F>> {
    let mut out = Vec::new();
    params.visit(&mut |_, arr| out.push(arr.convert::<F>()));
    out
}

/// Inserts parameter tensors (already in visit order) as graph leaves.
pub(crate) fn insert_param_arrays<F: Scalar>(
    g: &mut Graph<F>,
    arrays: &[Array<F>],
    n_layers: usize,
) -> Result<EncoderVars> {
    if arrays.len() != 3 + 16 * n_layers {
        return Err(Error::Shape(format!(
            "{} parameter tensors for a {n_layers}-layer encoder",
            arrays.len()
        )));
    }
    let mut flat = Vec::with_capacity(arrays.len());
    for a in arrays {
        flat.push(g.leaf(a.clone())?);
    }
    Ok(EncoderVars { flat, layers: n_layers })
}

/// Inserts every parameter tensor as a graph leaf, in visit order.
pub(crate) fn insert_params(g: &mut Graph<f32>, params: &EncoderParams) -> Result<EncoderVars> {
    let arrays = params_to_arrays::<f32>(params);
    insert_param_arrays(g, &arrays, params.layers.len())
}

/// Training-time behavior of the forward pass.
pub(crate) enum Mode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng, dropout: f32 },
}

fn apply_dropout<F: Scalar>(g: &mut Graph<F>, x: Var, mode: &mut Mode) -> Result<Var> {
    let Mode::Train { rng, dropout } = mode else {
        return Ok(x);
    };
    let p = f64::from(*dropout);
    if p == 0.0 {
        return Ok(x);
    }
    let keep_scale = 1.0 / (1.0 - p);
    let shape = g.value(x).shape().to_vec();
    let len: usize = shape.iter().product();
    let mask_data: Vec<F> = (0..len)
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { cast(keep_scale) })
        .collect();
    let mask = Array::from_vec(shape, mask_data)?;
    g.mul_const(x, mask)
}

pub(crate) struct EncodeOut {
    /// Hidden states for every position, `(max_len, d)`.
    pub hidden: Var,
    /// Mean over real positions, `(1, d)`.
    pub pooled: Var,
}

/// The full forward pass on a graph: embeddings, `layers` transformer
/// blocks (post-norm, GELU feed-forward, padding masked out of attention),
/// then masked mean pooling. `attn_sink` collects each block's attention
/// probability matrices when tests want to inspect them.
pub(crate) fn forward_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    vars: &EncoderVars,
    config: &EncoderConfig,
    seq: &TokenSequence,
    mode: &mut Mode,
    mut attn_sink: Option<&mut Vec<Var>>,
) -> Result<EncodeOut> {
    if seq.ids.len() != config.max_len {
        return Err(Error::Shape(format!(
            "sequence length {} but encoder max_len {}",
            seq.ids.len(),
            config.max_len
        )));
    }
    let mask = seq.mask_bools();
    if !mask.iter().any(|&b| b) {
        return Err(Error::Data("token sequence with no real positions".into()));
    }

    let tok = g.gather(vars.token(), &seq.ids)?;
    let pos_ids: Vec<usize> = (0..config.max_len).collect();
    let pos = g.gather(vars.position(), &pos_ids)?;
    let seg = g.gather(vars.segment(), &seq.segment)?;
    let sum = g.add(tok, pos)?;
    let mut x = g.add(sum, seg)?;

    let dh = config.head_dim();
    let scale: F = cast(1.0 / (dh as f64).sqrt());
    for l in 0..vars.n_layers() {
        let lv = vars.layer(l);
        let q = {
            let qm = g.matmul(x, lv.wq)?;
            g.add_row(qm, lv.bq)?
        };
        let k = {
            let km = g.matmul(x, lv.wk)?;
            g.add_row(km, lv.bk)?
        };
        let v = {
            let vm = g.matmul(x, lv.wv)?;
            g.add_row(vm, lv.bv)?
        };
        let mut heads = Vec::with_capacity(config.heads);
        for h in 0..config.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scaled = g.scale(scores, scale)?;
            let probs = g.masked_softmax_rows(scaled, &mask)?;
            if let Some(sink) = attn_sink.as_deref_mut() {
                sink.push(probs);
            }
            heads.push(g.matmul(probs, vh)?);
        }
        let ctx = g.concat_cols(&heads)?;
        let proj = g.matmul(ctx, lv.wo)?;
        let attn = g.add_row(proj, lv.bo)?;
        let attn = apply_dropout(g, attn, mode)?;
        let res1 = g.add(x, attn)?;
        x = g.layer_norm(res1, lv.ln1_gain, lv.ln1_bias, cast(LN_EPS))?;

        let h1 = g.matmul(x, lv.w1)?;
        let h1 = g.add_row(h1, lv.b1)?;
        let h1 = g.gelu(h1)?;
        let ff = g.matmul(h1, lv.w2)?;
        let ff = g.add_row(ff, lv.b2)?;
        let ff = apply_dropout(g, ff, mode)?;
        let res2 = g.add(x, ff)?;
        x = g.layer_norm(res2, lv.ln2_gain, lv.ln2_bias, cast(LN_EPS))?;
    }

    let pooled = g.masked_mean_rows(x, &mask)?;
    Ok(EncodeOut { hidden: x, pooled })
}

/// Sum of token, position, and segment embeddings per position.
pub fn embed_inputs(seq: &TokenSequence, params: &EncoderParams) -> Result<Array32> {
    let mut g = Graph::new();
    let vars = insert_params(&mut g, params)?;
    let tok = g.gather(vars.token(), &seq.ids)?;
    let pos_ids: Vec<usize> = (0..seq.ids.len()).collect();
    let pos = g.gather(vars.position(), &pos_ids)?;
    let seg = g.gather(vars.segment(), &seq.segment)?;
    let sum = g.add(tok, pos)?;
    let out = g.add(sum, seg)?;
    Ok(g.value(out).clone())
}

/// Hidden states after all transformer blocks, without dropout. With zero
/// layers this is exactly the embedding sum.
pub fn encoder_forward(config: &EncoderConfig, params: &EncoderParams, seq: &TokenSequence) -> Result<Array32> {
    let mut g = Graph::new();
    let vars = insert_params(&mut g, params)?;
    let out = forward_on_graph(&mut g, &vars, config, seq, &mut Mode::Eval, None)?;
    Ok(g.value(out.hidden).clone())
}

/// Mean of the rows where `mask` is 1.
pub fn mean_pool(hidden: &Array32, mask: &[u8]) -> Result<Vec<f32>> {
    let (m, n) = hidden.dims2()?;
    if mask.len() != m {
        return Err(Error::Shape(format!("mask length {} over {m} rows", mask.len())));
    }
    let count = mask.iter().filter(|&&b| b == 1).count();
    if count == 0 {
        return Err(Error::Data("mean pooling over an all-zero mask".into()));
    }
    let mut out = vec![0.0f32; n];
    for (i, &mi) in mask.iter().enumerate().take(m) {
        if mi == 1 {
            for (j, &v) in hidden.row(i).iter().enumerate() {
                out[j] += v;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= count as f32;
    }
    Ok(out)
}

/// Text to embedding: tokenize, run the encoder without dropout, mean-pool.
pub fn encode(encoder: &Encoder, text: &str) -> Result<Vec<f32>> {
    let seq = tokenize(text, &encoder.vocab, encoder.config.max_len)?;
    let mut g = Graph::new();
    let vars = insert_params(&mut g, &encoder.params)?;
    let out = forward_on_graph(&mut g, &vars, &encoder.config, &seq, &mut Mode::Eval, None)?;
    Ok(g.value(out.pooled).data().to_vec())
}
