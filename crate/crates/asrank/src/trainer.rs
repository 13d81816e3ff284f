//! Training loop and persistence: Adam with linear warmup and global
//! gradient clipping, one dev evaluation per epoch, early stopping on dev
//! MAP, and a binary checkpoint format that round-trips bit-exactly.
//!
//! Determinism contract: given the same splits, configs, and seed, every
//! run draws the same initialization, the same epoch shuffles, and the
//! same dropout masks from one seeded stream, so parameters and the saved
//! checkpoint are byte-identical across runs.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_pairs, make_triplets, QuestionGroup};
use crate::encoder::{
    forward_on_graph, insert_params, tokenize, Encoder, EncoderConfig, EncoderParams, Mode,
    TokenSequence, Vocab,
};
use crate::error::{Error, Result};
use crate::numerics::{Array32, Graph, Var};
use crate::objectives::{
    classify_triplet, insert_head, siamese_batch_loss_on_graph, sq_l2,
    triplet_batch_loss_on_graph, MiningStrategy, SiameseHead,
};
use crate::ranking::{evaluate, RankMode};

/// Which objective trains the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    Triplet,
    Siamese,
}

impl Head {
    /// The ranking mode the trainer monitors on the dev split: the
    /// quantity each objective actually optimizes.
    pub fn dev_rank_mode(self) -> RankMode {
        match self {
            Head::Triplet => RankMode::Distance,
            Head::Siamese => RankMode::Score,
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Triplet => "triplet",
            Head::Siamese => "siamese",
        })
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Head> {
        match s {
            "triplet" => Ok(Head::Triplet),
            "siamese" => Ok(Head::Siamese),
            other => Err(Error::Config(format!(
                "unknown head {other:?} (expected triplet or siamese)"
            ))),
        }
    }
}

/// Optimization recipe. The defaults suit small from-scratch models; a
/// peak learning rate of 2e-5 is the usual choice when fine-tuning large
/// pretrained encoders instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of total training steps spent ramping the learning rate
    /// linearly from zero to `peak_lr`.
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub margin: f64,
    /// Average the triplet hinge over the batch instead of summing it.
    pub triplet_mean: bool,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub head: Head,
    pub mining: MiningStrategy,
    /// Decay the learning rate linearly to zero after warmup instead of
    /// holding it at the peak.
    pub lr_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            peak_lr: 1e-3,
            warmup_fraction: 0.10,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            margin: 5.0,
            triplet_mean: false,
            patience: 20,
            max_epochs: 200,
            seed: 42,
            head: Head::Triplet,
            mining: MiningStrategy::All,
            lr_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::Config(format!("peak_lr must be positive, got {}", self.peak_lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {beta}")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be positive, got {}", self.adam_eps)));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1 epoch".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Learning rate at a step: linear from 0 to `peak_lr` over the first
/// ceil(warmup_fraction · total_steps) steps, then constant at the peak.
pub fn lr_at(step: usize, total_steps: usize, peak_lr: f64, warmup_fraction: f64) -> Result<f64> {
    lr_scheduled(step, total_steps, peak_lr, warmup_fraction, false)
}

/// `lr_at` with an optional linear decay from the peak to zero at
/// `total_steps`.
pub fn lr_scheduled(
    step: usize,
    total_steps: usize,
    peak_lr: f64,
    warmup_fraction: f64,
    decay: bool,
) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if step > total_steps {
        return Err(Error::Config(format!("step {step} beyond total_steps {total_steps}")));
    }
    if !(peak_lr.is_finite() && peak_lr > 0.0) {
        return Err(Error::Config(format!("peak_lr must be positive, got {peak_lr}")));
    }
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(Error::Config(format!(
            "warmup_fraction must be in [0, 1), got {warmup_fraction}"
        )));
    }
    let warmup_steps = (warmup_fraction * total_steps as f64).ceil() as usize;
    if step < warmup_steps {
        return Ok(peak_lr * step as f64 / warmup_steps as f64);
    }
    if !decay || total_steps == warmup_steps {
        return Ok(peak_lr);
    }
    let remaining = (total_steps - step) as f64 / (total_steps - warmup_steps) as f64;
    Ok(peak_lr * remaining)
}

/// Scales all gradients by clip_norm/norm when their global L2 norm
/// exceeds `clip_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Array32], clip_norm: f64) -> Result<f64> {
    if !(clip_norm.is_finite() && clip_norm > 0.0) {
        return Err(Error::Config(format!("clip_norm must be positive, got {clip_norm}")));
    }
    let mut sq = 0.0f64;
    for g in grads.iter() {
        if !g.all_finite() {
            return Err(Error::NonFinite("gradient entering the clipper".into()));
        }
        sq += g.sq_norm_f64();
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("global gradient norm {norm}")));
    }
    if norm > clip_norm {
        let scale = (clip_norm / norm) as f32;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    Ok(norm)
}

fn global_norm(arrays: &[Array32]) -> f64 {
    arrays.iter().map(Array32::sq_norm_f64).sum::<f64>().sqrt()
}

/// First and second moment accumulators, one pair per parameter tensor,
/// in the same canonical order as the parameters themselves.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Array32>,
    v: Vec<Array32>,
    t: u64,
}

impl AdamState {
    pub fn for_params(params: &[&Array32]) -> AdamState {
        let zeros: Vec<Array32> = params.iter().map(|p| Array32::zeros(p.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction, applied in place. Moment math
/// runs in f64 per entry and is stored back as f32, so the update is
/// deterministic and independent of tensor iteration batching.
pub fn adam_step(
    params: &mut [&mut Array32],
    grads: &[Array32],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} params, {} grads, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Config(format!("learning rate {lr}")));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        if params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape() {
            return Err(Error::Shape(format!("adam tensor {i}: param/grad/state shapes differ")));
        }
        let g_data = grads[i].data();
        let m_data = state.m[i].data_mut();
        let v_data = state.v[i].data_mut();
        let w_data = params[i].data_mut();
        for j in 0..g_data.len() {
            let g = f64::from(g_data[j]);
            let m = beta1 * f64::from(m_data[j]) + (1.0 - beta1) * g;
            let v = beta2 * f64::from(v_data[j]) + (1.0 - beta2) * g * g;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let w = f64::from(w_data[j]) - lr * m_hat / (v_hat.sqrt() + eps);
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("parameter update in tensor {i} entry {j}")));
            }
            m_data[j] = m as f32;
            v_data[j] = v as f32;
            w_data[j] = w as f32;
        }
    }
    Ok(())
}

/// Tracks the best dev metric and how long ago it was seen. Improvement
/// is strict; ties count toward the patience budget.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    epochs_since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochVerdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<EarlyStopping> {
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1 epoch".into()));
        }
        Ok(EarlyStopping {
            patience,
            best: None,
            epochs_since_best: 0,
        })
    }

    pub fn observe(&mut self, value: f64) -> Result<EpochVerdict> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("dev metric {value}")));
        }
        let improved = match self.best {
            None => true,
            Some(best) => value > best,
        };
        if improved {
            self.best = Some(value);
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
        Ok(EpochVerdict {
            improved,
            stop: self.epochs_since_best >= self.patience,
        })
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

/// One optimizer step as the loop saw it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    /// Global 0-based step index; also the schedule position used.
    pub step: usize,
    pub lr: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Global gradient norm after clipping.
    pub clipped_norm: f64,
    /// Instances that survived mining into this batch.
    pub batch_examples: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean per-batch loss over the epoch.
    pub train_loss: f64,
    pub dev_map: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct History {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// A trained model with everything needed to evaluate or resume it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub encoder: Encoder,
    pub head: Option<SiameseHead>,
    pub train: TrainConfig,
    pub min_freq: usize,
    pub best_dev_map: f64,
    /// 1-based epoch whose parameters these are.
    pub epoch: usize,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: History,
}

enum Instances {
    /// (anchor, positive, negative) as interned text ids.
    Triplets(Vec<[usize; 3]>),
    /// (question, candidate, is_positive) as interned text ids.
    Pairs(Vec<(usize, usize, bool)>),
}

impl Instances {
    fn len(&self) -> usize {
        match self {
            Instances::Triplets(v) => v.len(),
            Instances::Pairs(v) => v.len(),
        }
    }
}

struct TextPool {
    texts: Vec<String>,
    index: HashMap<String, usize>,
}

impl TextPool {
    fn new() -> TextPool {
        TextPool {
            texts: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.texts.len();
        self.texts.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }
}

/// Runs the full recipe and returns the best-dev-MAP checkpoint together
/// with the step/epoch history. `log` is called once per finished epoch.
pub fn train(
    train_groups: &[QuestionGroup],
    dev_groups: &[QuestionGroup],
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
    min_freq: usize,
    log: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    encoder_config.validate()?;
    if train_groups.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if dev_groups.is_empty() {
        return Err(Error::Data("dev split is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = Encoder::init(train_groups, encoder_config.clone(), min_freq, &mut rng)?;
    let mut head = match config.head {
        Head::Siamese => Some(SiameseHead::init(encoder.config.hidden, &mut rng)?),
        Head::Triplet => None,
    };

    let mut pool = TextPool::new();
    let instances = match config.head {
        Head::Triplet => {
            let triplets = make_triplets(train_groups);
            if triplets.is_empty() {
                return Err(Error::Data(
                    "no triplets: the training split has no question with both a correct and an incorrect candidate".into(),
                ));
            }
            Instances::Triplets(
                triplets
                    .iter()
                    .map(|t| {
                        [
                            pool.intern(&t.anchor),
                            pool.intern(&t.positive),
                            pool.intern(&t.negative),
                        ]
                    })
                    .collect(),
            )
        }
        Head::Siamese => {
            let pairs = make_pairs(train_groups);
            if pairs.is_empty() {
                return Err(Error::Data("no labeled pairs in the training split".into()));
            }
            Instances::Pairs(
                pairs
                    .iter()
                    .map(|p| (pool.intern(&p.question), pool.intern(&p.candidate), p.label == 1))
                    .collect(),
            )
        }
    };
    let seqs: Vec<TokenSequence> = pool
        .texts
        .iter()
        .map(|t| tokenize(t, &encoder.vocab, encoder.config.max_len))
        .collect::<Result<_>>()?;

    let n = instances.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.max_epochs;
    let dev_mode = config.head.dev_rank_mode();

    let n_params = {
        let mut c = 0;
        encoder.params.visit(&mut |_, _| c += 1);
        if let Some(h) = &head {
            h.visit(&mut |_, _| c += 1);
        }
        c
    };
    let mut adam = {
        let mut refs: Vec<&Array32> = Vec::with_capacity(n_params);
        encoder.params.visit(&mut |_, a| refs.push(a));
        if let Some(h) = &head {
            h.visit(&mut |_, a| refs.push(a));
        }
        AdamState::for_params(&refs)
    };

    let mut history = History::default();
    let mut stopper = EarlyStopping::new(config.patience)?;
    let mut best: Option<(EncoderParams, Option<SiameseHead>, f64, usize)> = None;
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;

        for chunk in order.chunks(config.batch_size) {
            // Each distinct text in the batch is encoded once; instances
            // that share a question also share its embedding and dropout.
            let mut batch_text_ids: Vec<usize> = Vec::new();
            let mut seen: HashMap<usize, ()> = HashMap::new();
            let push_text = |tid: usize, ids: &mut Vec<usize>, seen: &mut HashMap<usize, ()>| {
                if seen.insert(tid, ()).is_none() {
                    ids.push(tid);
                }
            };

            enum BatchItems {
                Trip(Vec<[usize; 3]>),
                Pair(Vec<(usize, usize, bool)>),
            }
            let items = match &instances {
                Instances::Triplets(all) => {
                    let mut batch: Vec<[usize; 3]> = chunk.iter().map(|&i| all[i]).collect();
                    if config.mining != MiningStrategy::All {
                        batch = mine_batch(&batch, &encoder, &seqs, config)?;
                        if batch.is_empty() {
                            continue;
                        }
                    }
                    for t in &batch {
                        for &tid in t {
                            push_text(tid, &mut batch_text_ids, &mut seen);
                        }
                    }
                    BatchItems::Trip(batch)
                }
                Instances::Pairs(all) => {
                    let batch: Vec<(usize, usize, bool)> = chunk.iter().map(|&i| all[i]).collect();
                    for &(q, c, _) in &batch {
                        push_text(q, &mut batch_text_ids, &mut seen);
                        push_text(c, &mut batch_text_ids, &mut seen);
                    }
                    BatchItems::Pair(batch)
                }
            };

            let mut g: Graph<f32> = Graph::new();
            let enc_vars = insert_params(&mut g, &encoder.params)?;
            let head_vars = match &head {
                Some(h) => Some(insert_head(&mut g, h)?),
                None => None,
            };
            let mut embeddings: HashMap<usize, Var> = HashMap::new();
            {
                let mut mode = Mode::Train {
                    rng: &mut rng,
                    dropout: encoder.config.dropout,
                };
                for &tid in &batch_text_ids {
                    let out =
                        forward_on_graph(&mut g, &enc_vars, &encoder.config, &seqs[tid], &mut mode, None)?;
                    embeddings.insert(tid, out.pooled);
                }
            }

            let (loss, batch_examples) = match &items {
                BatchItems::Trip(batch) => {
                    let vars: Vec<(Var, Var, Var)> = batch
                        .iter()
                        .map(|t| (embeddings[&t[0]], embeddings[&t[1]], embeddings[&t[2]]))
                        .collect();
                    (
                        triplet_batch_loss_on_graph(&mut g, &vars, config.margin, config.triplet_mean)?,
                        batch.len(),
                    )
                }
                BatchItems::Pair(batch) => {
                    let hv = head_vars.expect("siamese head present for pair training");
                    let vars: Vec<(Var, Var, bool)> = batch
                        .iter()
                        .map(|&(q, c, y)| (embeddings[&q], embeddings[&c], y))
                        .collect();
                    (siamese_batch_loss_on_graph(&mut g, hv, &vars)?, batch.len())
                }
            };
            let batch_loss = f64::from(g.value(loss).item()?);

            let mut grads = g
                .backward(loss)
                .map_err(|e| e.with_context(&format!("epoch {epoch}, step {step}")))?;
            let mut flat_grads: Vec<Array32> = Vec::with_capacity(n_params);
            for &v in enc_vars.flat() {
                let shape = g.value(v).shape().to_vec();
                flat_grads.push(grads.take_or_zeros(v, &shape));
            }
            if let Some(hv) = head_vars {
                for v in [hv.weight, hv.bias] {
                    let shape = g.value(v).shape().to_vec();
                    flat_grads.push(grads.take_or_zeros(v, &shape));
                }
            }

            let grad_norm = clip_global_norm(&mut flat_grads, config.clip_norm)?;
            let clipped_norm = global_norm(&flat_grads);
            let lr = lr_scheduled(
                step,
                total_steps,
                config.peak_lr,
                config.warmup_fraction,
                config.lr_decay,
            )?;

            let mut param_refs: Vec<&mut Array32> = Vec::with_capacity(n_params);
            encoder.params.visit_mut(&mut |_, a| param_refs.push(a));
            if let Some(h) = head.as_mut() {
                h.visit_mut(&mut |_, a| param_refs.push(a));
            }
            adam_step(
                &mut param_refs,
                &flat_grads,
                &mut adam,
                lr,
                config.beta1,
                config.beta2,
                config.adam_eps,
            )
            .map_err(|e| e.with_context(&format!("epoch {epoch}, step {step}")))?;

            history.steps.push(StepRecord {
                step,
                lr,
                grad_norm,
                clipped_norm,
                batch_examples,
                loss: batch_loss,
            });
            step += 1;
            loss_sum += batch_loss;
            batches += 1;
        }

        let train_loss = if batches > 0 { loss_sum / batches as f64 } else { 0.0 };
        let report = evaluate(dev_groups, &encoder, head.as_ref(), dev_mode, 1)?;
        let verdict = stopper.observe(report.map)?;
        if verdict.improved {
            best = Some((encoder.params.clone(), head.clone(), report.map, epoch));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_map: report.map,
            improved: verdict.improved,
        };
        log(&record);
        history.epochs.push(record);
        if verdict.stop {
            break;
        }
    }

    let (best_params, best_head, best_dev_map, best_epoch) =
        best.expect("at least one epoch ran and the first always improves");
    encoder.params = best_params;

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            encoder,
            head: best_head,
            train: config.clone(),
            min_freq,
            best_dev_map,
            epoch: best_epoch,
        },
        history,
    })
}

/// Classifies each triplet under the current parameters (no dropout) and
/// keeps the ones the strategy selects, preserving order.
fn mine_batch(
    batch: &[[usize; 3]],
    encoder: &Encoder,
    seqs: &[TokenSequence],
    config: &TrainConfig,
) -> Result<Vec<[usize; 3]>> {
    let mut unique: Vec<usize> = Vec::new();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for t in batch {
        for &tid in t {
            seen.entry(tid).or_insert_with(|| {
                unique.push(tid);
                unique.len() - 1
            });
        }
    }
    let mut g: Graph<f32> = Graph::new();
    let enc_vars = insert_params(&mut g, &encoder.params)?;
    let mut embedded: Vec<Vec<f32>> = Vec::with_capacity(unique.len());
    for &tid in &unique {
        let out = forward_on_graph(&mut g, &enc_vars, &encoder.config, &seqs[tid], &mut Mode::Eval, None)?;
        embedded.push(g.value(out.pooled).data().to_vec());
    }
    let mut kept = Vec::new();
    for t in batch {
        let a = &embedded[seen[&t[0]]];
        let p = &embedded[seen[&t[1]]];
        let n = &embedded[seen[&t[2]]];
        let class = classify_triplet(sq_l2(a, p)?, sq_l2(a, n)?, config.margin)?;
        if config.mining.keeps(class) {
            kept.push(*t);
        }
    }
    Ok(kept)
}

const CKPT_MAGIC: &[u8; 4] = b"ASBT";
const CKPT_VERSION: u32 = 1;

/// Everything in the checkpoint except the tensor data, stored as one
/// JSON block right after the header.
#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    encoder: EncoderConfig,
    train: TrainConfig,
    min_freq: usize,
    best_dev_map: f64,
    epoch: usize,
    has_head: bool,
    vocab: Vec<String>,
}

/// Writes magic, version, the JSON metadata block, then one length-framed
/// record per tensor in canonical order.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    if ckpt.encoder.config.vocab_size != ckpt.encoder.vocab.len() {
        return Err(Error::Checkpoint(format!(
            "config says vocab_size {} but the vocabulary holds {} tokens",
            ckpt.encoder.config.vocab_size,
            ckpt.encoder.vocab.len()
        )));
    }
    let meta = CheckpointMeta {
        encoder: ckpt.encoder.config.clone(),
        train: ckpt.train.clone(),
        min_freq: ckpt.min_freq,
        best_dev_map: ckpt.best_dev_map,
        epoch: ckpt.epoch,
        has_head: ckpt.head.is_some(),
        vocab: ckpt.encoder.vocab.tokens().to_vec(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(json.len()).map_err(|_| Error::Checkpoint("metadata too large".into()))?.to_le_bytes())?;
    w.write_all(&json)?;

    let mut tensors: Vec<(String, &Array32)> = ckpt.encoder.params.named();
    if let Some(h) = &ckpt.head {
        tensors.extend(h.named());
    }
    for (name, arr) in tensors {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len())
            .map_err(|_| Error::Checkpoint(format!("tensor name {name:?} too long")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name_bytes)?;
        let rank = u8::try_from(arr.shape().len())
            .map_err(|_| Error::Checkpoint(format!("tensor {name:?} rank too large")))?;
        w.write_all(&[rank])?;
        for &d in arr.shape() {
            let dim = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("tensor {name:?} dim too large")))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        for &v in arr.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_ck(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Checkpoint("truncated checkpoint".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32_ck(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_ck(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a record's name length, or None at a clean end of file.
fn try_read_name_len(r: &mut impl Read) -> Result<Option<u16>> {
    let mut b = [0u8; 2];
    let n = r.read(&mut b[..1])?;
    if n == 0 {
        return Ok(None);
    }
    read_exact_ck(r, &mut b[1..])?;
    Ok(Some(u16::from_le_bytes(b)))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_ck(&mut r, &mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}; not a checkpoint file")));
    }
    let version = read_u32_ck(&mut r)?;
    if version != CKPT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads {CKPT_VERSION})"
        )));
    }
    let json_len = read_u32_ck(&mut r)? as usize;
    if json_len > (1 << 28) {
        return Err(Error::Checkpoint(format!("metadata block of {json_len} bytes is implausible")));
    }
    let mut json = vec![0u8; json_len];
    read_exact_ck(&mut r, &mut json)?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    meta.encoder.validate()?;
    let vocab = Vocab::from_tokens(meta.vocab, meta.min_freq)?;
    if meta.encoder.vocab_size != vocab.len() {
        return Err(Error::Checkpoint(format!(
            "config says vocab_size {} but the stored vocabulary holds {} tokens",
            meta.encoder.vocab_size,
            vocab.len()
        )));
    }

    let mut records: HashMap<String, Array32> = HashMap::new();
    while let Some(name_len) = try_read_name_len(&mut r)? {
        let mut name_bytes = vec![0u8; name_len as usize];
        read_exact_ck(&mut r, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let mut rank_b = [0u8; 1];
        read_exact_ck(&mut r, &mut rank_b)?;
        let rank = rank_b[0] as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Checkpoint(format!("tensor {name:?} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut len: u64 = 1;
        for _ in 0..rank {
            let d = read_u32_ck(&mut r)? as u64;
            len = len.saturating_mul(d);
            shape.push(d as usize);
        }
        if len == 0 || len > (1 << 30) {
            return Err(Error::Checkpoint(format!("tensor {name:?} has {len} entries")));
        }
        let mut bytes = vec![0u8; len as usize * 4];
        read_exact_ck(&mut r, &mut bytes)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let arr = Array32::from_vec(shape, data)?;
        if !arr.all_finite() {
            return Err(Error::Checkpoint(format!("tensor {name:?} contains non-finite values")));
        }
        if records.insert(name.clone(), arr).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name:?}")));
        }
    }

    let mut params = EncoderParams::zeros(&meta.encoder)?;
    let mut fill_error: Option<Error> = None;
    params.visit_mut(&mut |name, slot| {
        if fill_error.is_some() {
            return;
        }
        match records.remove(&name) {
            Some(arr) if arr.shape() == slot.shape() => *slot = arr,
            Some(arr) => {
                fill_error = Some(Error::Checkpoint(format!(
                    "tensor {name:?} has shape {:?} but the config requires {:?}",
                    arr.shape(),
                    slot.shape()
                )))
            }
            None => fill_error = Some(Error::Checkpoint(format!("missing tensor {name:?}"))),
        }
    });
    let mut head = if meta.has_head {
        Some(SiameseHead::zeros(meta.encoder.hidden))
    } else {
        None
    };
    if let Some(h) = head.as_mut() {
        h.visit_mut(&mut |name, slot| {
            if fill_error.is_some() {
                return;
            }
            match records.remove(&name) {
                Some(arr) if arr.shape() == slot.shape() => *slot = arr,
                Some(arr) => {
                    fill_error = Some(Error::Checkpoint(format!(
                        "tensor {name:?} has shape {:?} but the config requires {:?}",
                        arr.shape(),
                        slot.shape()
                    )))
                }
                None => fill_error = Some(Error::Checkpoint(format!("missing tensor {name:?}"))),
            }
        });
    }
    if let Some(e) = fill_error {
        return Err(e);
    }
    if let Some(name) = records.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {name:?} in checkpoint")));
    }

    Ok(Checkpoint {
        encoder: Encoder {
            vocab,
            config: meta.encoder,
            params,
        },
        head,
        train: meta.train,
        min_freq: meta.min_freq,
        best_dev_map: meta.best_dev_map,
        epoch: meta.epoch,
    })
}
