//! Relation classifier: a pluggable text encoder, optional side-information
//! fusion, and a sigmoid multi-label head trained with binary cross-entropy.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::SPECIAL_TOKENS;
use crate::math;
use crate::nn::{self, Adam, Matrix, NodeId, ParamGroup, ParamId, ParamStore, Tape};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("side input of width {got} where {expected} was configured")]
    SideWidth { expected: usize, got: usize },
    #[error("variant requires side input but none was given")]
    MissingSide,
    #[error("side input given to a variant without fusion")]
    UnexpectedSide,
    #[error("sequence of {len} tokens exceeds encoder maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty input sequence")]
    Empty,
    #[error("label vector of width {got} where the head has {expected}")]
    LabelWidth { expected: usize, got: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Token vocabulary; `[PAD]`, `[UNK]` and the marker tokens come first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        for t in [PAD, UNK].iter().chain(SPECIAL_TOKENS.iter()) {
            v.push(t.to_string());
        }
        for t in tokens {
            v.push(t);
        }
        v
    }

    /// Vocabulary of every token seen at least `min_count` times, in first
    /// occurrence order.
    pub fn build<'a, I: IntoIterator<Item = &'a [String]>>(sequences: I, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for seq in sequences {
            for t in seq {
                let c = counts.entry(t.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(t.as_str());
                }
                *c += 1;
            }
        }
        Vocab::from_tokens(
            order
                .into_iter()
                .filter(|t| counts[t] >= min_count)
                .map(str::to_string),
        )
    }

    fn push(&mut self, t: String) {
        if !self.index.contains_key(&t) {
            self.index.insert(t.clone(), self.tokens.len() as u32);
            self.tokens.push(t);
        }
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Aggregation-token representation of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEncoding {
    pub vector: Vec<f64>,
}

/// A transformer-style encoder whose first position aggregates the input.
pub trait TextEncoder {
    fn width(&self) -> usize;
    fn max_len(&self) -> usize;
    fn token_ids(&self, tokens: &[String]) -> Vec<u32>;
    /// Final-layer representations of every position, `n × width`.
    fn forward_sequence(&self, tape: &mut Tape, store: &ParamStore, ids: &[u32]) -> Result<NodeId, ModelError>;

    /// `1 × width` node at the aggregation position.
    fn forward(&self, tape: &mut Tape, store: &ParamStore, ids: &[u32]) -> Result<NodeId, ModelError> {
        let seq = self.forward_sequence(tape, store, ids)?;
        Ok(tape.row(seq, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub width: usize,
    pub layers: usize,
    pub ffn: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            width: 64,
            layers: 2,
            ffn: 128,
            max_len: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LayerParams {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1: (ParamId, ParamId),
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2: (ParamId, ParamId),
}

/// Single-head post-norm transformer encoder with learned positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyEncoder {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    tok: ParamId,
    pos: ParamId,
    ln0: (ParamId, ParamId),
    layers: Vec<LayerParams>,
}

fn layer_norm_params(store: &mut ParamStore, name: &str, w: usize) -> (ParamId, ParamId) {
    (
        store.add(&format!("{name}.gain"), ParamGroup::Main, Matrix::filled(1, w, 1.0)),
        store.add(&format!("{name}.bias"), ParamGroup::Main, Matrix::zeros(1, w)),
    )
}

impl TinyEncoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, vocab: Vocab, store: &mut ParamStore, rng: &mut R) -> Self {
        let h = config.width;
        let small = |rows, cols, rng: &mut R| {
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-0.1..0.1)).collect())
        };
        let tok = store.add("enc.tok", ParamGroup::Main, small(vocab.len(), h, rng));
        let pos = store.add("enc.pos", ParamGroup::Main, small(config.max_len, h, rng));
        let ln0 = layer_norm_params(store, "enc.ln0", h);
        let layers = (0..config.layers)
            .map(|l| {
                let p = |s: &str| format!("enc.{l}.{s}");
                LayerParams {
                    wq: store.add(&p("wq"), ParamGroup::Main, Matrix::glorot(h, h, rng)),
                    wk: store.add(&p("wk"), ParamGroup::Main, Matrix::glorot(h, h, rng)),
                    wv: store.add(&p("wv"), ParamGroup::Main, Matrix::glorot(h, h, rng)),
                    wo: store.add(&p("wo"), ParamGroup::Main, Matrix::glorot(h, h, rng)),
                    bo: store.add(&p("bo"), ParamGroup::Main, Matrix::zeros(1, h)),
                    ln1: layer_norm_params(store, &p("ln1"), h),
                    w1: store.add(&p("w1"), ParamGroup::Main, Matrix::glorot(h, config.ffn, rng)),
                    b1: store.add(&p("b1"), ParamGroup::Main, Matrix::zeros(1, config.ffn)),
                    w2: store.add(&p("w2"), ParamGroup::Main, Matrix::glorot(config.ffn, h, rng)),
                    b2: store.add(&p("b2"), ParamGroup::Main, Matrix::zeros(1, h)),
                    ln2: layer_norm_params(store, &p("ln2"), h),
                }
            })
            .collect();
        TinyEncoder {
            config,
            vocab,
            tok,
            pos,
            ln0,
            layers,
        }
    }
}

impl TextEncoder for TinyEncoder {
    fn width(&self) -> usize {
        self.config.width
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn token_ids(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.vocab.id(t)).collect()
    }

    fn forward_sequence(&self, tape: &mut Tape, store: &ParamStore, ids: &[u32]) -> Result<NodeId, ModelError> {
        if ids.is_empty() {
            return Err(ModelError::Empty);
        }
        if ids.len() > self.config.max_len {
            return Err(ModelError::TooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        let positions: Vec<u32> = (0..ids.len() as u32).collect();
        let t = tape.gather(store, self.tok, ids);
        let p = tape.gather(store, self.pos, &positions);
        let x = tape.add(t, p);
        let ln = |tape: &mut Tape, x, (g, b): (ParamId, ParamId)| {
            let g = tape.param(store, g);
            let b = tape.param(store, b);
            tape.layer_norm(x, g, b)
        };
        let mut x = ln(tape, x, self.ln0);
        let scale = 1.0 / math::sqrt(self.config.width as f64);
        for l in &self.layers {
            let wq = tape.param(store, l.wq);
            let wk = tape.param(store, l.wk);
            let wv = tape.param(store, l.wv);
            let q = tape.matmul(x, wq);
            let k = tape.matmul(x, wk);
            let v = tape.matmul(x, wv);
            let s = tape.matmul_bt(q, k);
            let s = tape.scale(s, scale);
            let a = tape.softmax_rows(s);
            let c = tape.matmul(a, v);
            let wo = tape.param(store, l.wo);
            let bo = tape.param(store, l.bo);
            let o = tape.matmul(c, wo);
            let o = tape.add_row(o, bo);
            let r = tape.add(x, o);
            x = ln(tape, r, l.ln1);
            let w1 = tape.param(store, l.w1);
            let b1 = tape.param(store, l.b1);
            let f = tape.matmul(x, w1);
            let f = tape.add_row(f, b1);
            let f = tape.relu(f);
            let w2 = tape.param(store, l.w2);
            let b2 = tape.param(store, l.b2);
            let f = tape.matmul(f, w2);
            let f = tape.add_row(f, b2);
            let r = tape.add(x, f);
            x = ln(tape, r, l.ln2);
        }
        Ok(x)
    }
}

/// Evaluation-mode encoding of token ids.
///
/// Panics if the encoder rejects the sequence; callers check length first.
pub fn encode_ids<E: TextEncoder + ?Sized>(encoder: &E, store: &ParamStore, ids: &[u32]) -> SentenceEncoding {
    let mut tape = Tape::new();
    let node = encoder.forward(&mut tape, store, ids).expect("valid encoder input");
    SentenceEncoding {
        vector: tape.value(node).data.clone(),
    }
}

/// Evaluation-mode encoding of a rendered token sequence.
pub fn encode_text<E: TextEncoder + ?Sized>(
    encoder: &E,
    store: &ParamStore,
    tokens: &[String],
) -> Result<SentenceEncoding, ModelError> {
    let ids = encoder.token_ids(tokens);
    let mut tape = Tape::new();
    let node = encoder.forward(&mut tape, store, &ids)?;
    Ok(SentenceEncoding {
        vector: tape.value(node).data.clone(),
    })
}

/// Encodings of several sequences, in input order.
pub fn encode_batch<E: TextEncoder + ?Sized>(
    encoder: &E,
    store: &ParamStore,
    batch: &[Vec<String>],
) -> Result<Vec<SentenceEncoding>, ModelError> {
    batch.iter().map(|t| encode_text(encoder, store, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Text,
    Embedding,
    Structure,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Text, Variant::Embedding, Variant::Structure];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Text => "text",
            Variant::Embedding => "embedding",
            Variant::Structure => "structure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

/// How side information joins the sentence encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Fusion {
    None,
    /// Side vector of width `input` through a two-layer perceptron.
    Mlp { input: usize },
    /// Side vector of width `width` concatenated as is.
    Direct { width: usize },
}

pub const FUSION_HIDDEN: usize = 100;
pub const FUSION_OUTPUT: usize = 100;
pub const FUSION_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionHead {
    pub fusion: Fusion,
    pub encoder_width: usize,
    pub labels: usize,
    mlp: Option<[ParamId; 4]>,
    w: ParamId,
    b: ParamId,
}

impl FusionHead {
    pub fn new<R: Rng + ?Sized>(
        fusion: Fusion,
        encoder_width: usize,
        labels: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let mlp = match fusion {
            Fusion::Mlp { input } => Some([
                store.add("fusion.w1", ParamGroup::Side, Matrix::glorot(input, FUSION_HIDDEN, rng)),
                store.add("fusion.b1", ParamGroup::Side, Matrix::zeros(1, FUSION_HIDDEN)),
                store.add("fusion.w2", ParamGroup::Side, Matrix::glorot(FUSION_HIDDEN, FUSION_OUTPUT, rng)),
                store.add("fusion.b2", ParamGroup::Side, Matrix::zeros(1, FUSION_OUTPUT)),
            ]),
            _ => None,
        };
        let input = encoder_width
            + match fusion {
                Fusion::None => 0,
                Fusion::Mlp { .. } => FUSION_OUTPUT,
                Fusion::Direct { width } => width,
            };
        let w = store.add("head.w", ParamGroup::Main, Matrix::glorot(input, labels, rng));
        let b = store.add("head.b", ParamGroup::Main, Matrix::zeros(1, labels));
        FusionHead {
            fusion,
            encoder_width,
            labels,
            mlp,
            w,
            b,
        }
    }

    /// Width of the classifier-head input.
    pub fn input_width(&self) -> usize {
        self.encoder_width
            + match self.fusion {
                Fusion::None => 0,
                Fusion::Mlp { .. } => FUSION_OUTPUT,
                Fusion::Direct { width } => width,
            }
    }

    pub fn side_width(&self) -> Option<usize> {
        match self.fusion {
            Fusion::None => None,
            Fusion::Mlp { input } => Some(input),
            Fusion::Direct { width } => Some(width),
        }
    }

    /// Logit node. Side input enters the tape as a constant, so side tables
    /// never receive gradients. Dropout is active only when `train_rng` is
    /// given.
    pub fn logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc: NodeId,
        side: Option<&[f64]>,
        train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId, ModelError> {
        let z = match (self.side_width(), side) {
            (None, None) => enc,
            (None, Some(_)) => return Err(ModelError::UnexpectedSide),
            (Some(_), None) => return Err(ModelError::MissingSide),
            (Some(w), Some(s)) if s.len() != w => {
                return Err(ModelError::SideWidth {
                    expected: w,
                    got: s.len(),
                })
            }
            (Some(_), Some(s)) => {
                let x = tape.input(Matrix::row_vector(s));
                let fused = match self.mlp {
                    Some([w1, b1, w2, b2]) => {
                        let w1 = tape.param(store, w1);
                        let b1 = tape.param(store, b1);
                        let h = tape.matmul(x, w1);
                        let h = tape.add_row(h, b1);
                        let mut h = tape.relu(h);
                        if let Some(rng) = train_rng {
                            h = tape.dropout(h, FUSION_DROPOUT, rng);
                        }
                        let w2 = tape.param(store, w2);
                        let b2 = tape.param(store, b2);
                        let o = tape.matmul(h, w2);
                        let o = tape.add_row(o, b2);
                        tape.relu(o)
                    }
                    None => x,
                };
                tape.concat_cols(enc, fused)
            }
        };
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let l = tape.matmul(z, w);
        Ok(tape.add_row(l, b))
    }
}

/// Label probabilities for a precomputed sentence encoding.
pub fn fuse_and_classify(
    head: &FusionHead,
    store: &ParamStore,
    enc: &SentenceEncoding,
    side: Option<&[f64]>,
) -> Result<Vec<f64>, ModelError> {
    if enc.vector.len() != head.encoder_width {
        return Err(ModelError::Config(format!(
            "encoding width {} but head expects {}",
            enc.vector.len(),
            head.encoder_width
        )));
    }
    let mut tape = Tape::new();
    let e = tape.input(Matrix::row_vector(&enc.vector));
    let l = head.logits(&mut tape, store, e, side, None)?;
    Ok(tape.value(l).data.iter().map(|z| math::sigmoid(*z)).collect())
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1−1e-7]`.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> f64 {
    nn::bce(probs, labels)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("total_steps must be positive")]
    ZeroSteps,
    #[error("step {step} is beyond total_steps {total}")]
    StepOutOfRange { step: usize, total: usize },
}

/// Linear warmup over the first tenth of the steps, then linear decay to
/// zero.
pub fn lr_schedule(step: usize, total_steps: usize, target_lr: f64) -> Result<f64, ScheduleError> {
    if total_steps == 0 {
        return Err(ScheduleError::ZeroSteps);
    }
    if step > total_steps {
        return Err(ScheduleError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    let t = total_steps as f64;
    let s = step as f64;
    let warm = 0.1 * t;
    Ok(if s <= warm {
        target_lr * s / warm
    } else {
        target_lr * (t - s) / (t - warm)
    })
}

pub const LR_GRID: [f64; 3] = [5e-6, 3e-5, 5e-5];
pub const BATCH_GRID: [usize; 3] = [8, 16, 32];
pub const MAX_LENGTH_GRID: [usize; 3] = [256, 384, 512];
pub const CONTEXT_GRID: [usize; 2] = [0, 1];
pub const PROMPT_GRID: [bool; 2] = [false, true];
pub const SIDE_LR_GRID: [f64; 3] = [0.001, 0.0001, 0.0005];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_length: usize,
    pub context_sentences: usize,
    pub prompt: bool,
    pub variant: Variant,
    pub side_lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-5,
            batch: 16,
            max_length: 512,
            context_sentences: 0,
            prompt: false,
            variant: Variant::Baseline,
            side_lr: 0.001,
            max_epochs: 20,
            patience: 3,
            threshold: 0.5,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl TrainConfig {
    /// Check values against the declared grids; `allow_override` admits
    /// off-grid values but never structurally invalid ones.
    pub fn validate(&self, allow_override: bool) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.side_lr > 0.0 && self.side_lr.is_finite()) {
            return bad("learning rates must be positive".into());
        }
        if self.batch == 0 || self.max_length == 0 || self.max_epochs == 0 {
            return bad("batch, max_length and max_epochs must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if allow_override {
            return Ok(());
        }
        if !LR_GRID.contains(&self.lr) {
            return bad(format!("lr {} not in grid", self.lr));
        }
        if !BATCH_GRID.contains(&self.batch) {
            return bad(format!("batch {} not in grid", self.batch));
        }
        if !MAX_LENGTH_GRID.contains(&self.max_length) {
            return bad(format!("max_length {} not in grid", self.max_length));
        }
        if !CONTEXT_GRID.contains(&self.context_sentences) {
            return bad(format!("context_sentences {} not in grid", self.context_sentences));
        }
        if !SIDE_LR_GRID.contains(&self.side_lr) {
            return bad(format!("side_lr {} not in grid", self.side_lr));
        }
        Ok(())
    }
}

/// One training or evaluation unit: encoder ids, optional frozen side
/// vector and a binary label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub ids: Vec<u32>,
    pub side: Option<Vec<f64>>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationClassifier<E> {
    pub encoder: E,
    pub head: FusionHead,
    pub store: ParamStore,
}

impl RelationClassifier<TinyEncoder> {
    /// Randomly initialized tiny encoder plus head.
    pub fn tiny(config: EncoderConfig, vocab: Vocab, fusion: Fusion, labels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = TinyEncoder::new(config, vocab, &mut store, &mut rng);
        let head = FusionHead::new(fusion, encoder.width(), labels, &mut store, &mut rng);
        RelationClassifier { encoder, head, store }
    }
}

impl<E: TextEncoder> RelationClassifier<E> {
    fn logits(&self, tape: &mut Tape, ex: &Example, rng: Option<&mut ChaCha8Rng>) -> Result<NodeId, ModelError> {
        let enc = self.encoder.forward(tape, &self.store, &ex.ids)?;
        self.head.logits(tape, &self.store, enc, ex.side.as_deref(), rng)
    }

    pub fn probabilities(&self, ex: &Example) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let l = self.logits(&mut tape, ex, None)?;
        Ok(tape.value(l).data.iter().map(|z| math::sigmoid(*z)).collect())
    }

    /// Loss of one example and its gradient accumulated into the store.
    pub fn accumulate(&mut self, ex: &Example, rng: Option<&mut ChaCha8Rng>) -> Result<f64, ModelError> {
        if ex.labels.len() != self.head.labels {
            return Err(ModelError::LabelWidth {
                expected: self.head.labels,
                got: ex.labels.len(),
            });
        }
        let mut tape = Tape::new();
        let l = self.logits(&mut tape, ex, rng)?;
        let loss = tape.bce_with_logits(l, &ex.labels);
        tape.backward(loss, &mut self.store);
        Ok(tape.value(loss).data[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probs: Vec<f64>,
}

/// Label `i` is emitted iff `p_i ≥ threshold`.
pub fn threshold_labels(probs: &[f64], threshold: f64) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p >= threshold)
        .map(|(i, _)| i)
        .collect()
}

pub fn predict<E: TextEncoder>(
    model: &RelationClassifier<E>,
    examples: &[Example],
    threshold: f64,
) -> Result<Vec<Prediction>, ModelError> {
    examples
        .iter()
        .map(|ex| {
            let probs = model.probabilities(ex)?;
            Ok(Prediction {
                labels: threshold_labels(&probs, threshold),
                probs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub steps: usize,
}

fn gold_sets(examples: &[Example]) -> Vec<BTreeSet<usize>> {
    examples
        .iter()
        .map(|e| e.labels.iter().enumerate().filter(|(_, y)| **y > 0.5).map(|(i, _)| i).collect())
        .collect()
}

/// Validation loss and micro-F1 at `threshold`.
pub fn evaluate<E: TextEncoder>(
    model: &RelationClassifier<E>,
    examples: &[Example],
    threshold: f64,
) -> Result<(f64, f64), ModelError> {
    let mut loss = 0.0;
    let mut pred = Vec::with_capacity(examples.len());
    for ex in examples {
        let p = model.probabilities(ex)?;
        loss += bce_loss(&p, &ex.labels);
        pred.push(threshold_labels(&p, threshold).into_iter().collect::<BTreeSet<_>>());
    }
    let n = examples.len().max(1) as f64;
    let prf = crate::eval::micro_prf_indexed(&pred, &gold_sets(examples));
    Ok((loss / n, prf.f1))
}

/// Fine-tune with Adam under the warmup/decay schedule, early-stopping on
/// validation micro-F1 and restoring the best epoch's parameters.
///
/// The side-group learning rate follows the same schedule shape.
pub fn train_model<E: TextEncoder>(
    model: &mut RelationClassifier<E>,
    train: &[Example],
    val: &[Example],
    config: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    if train.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let per_epoch = train.len().div_ceil(config.batch);
    let total = per_epoch * config.max_epochs;
    let mut adam = Adam::new(&model.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.store.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut step = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch) {
            model.store.zero_grad();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += model.accumulate(&train[i], Some(&mut rng))?;
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;
            model.store.scale_grads(1.0 / batch.len() as f64);
            step += 1;
            let factor = lr_schedule(step, total, 1.0)?;
            adam.step(&mut model.store, config.lr * factor, config.side_lr * factor);
        }
        let (val_loss, val_f1) = if val.is_empty() {
            (0.0, 0.0)
        } else {
            evaluate(model, val, config.threshold)?
        };
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_micro_f1: val_f1,
        };
        log::debug!("epoch {epoch}: loss {:.4} val f1 {:.4}", m.train_loss, m.val_micro_f1);
        epochs.push(m);
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_epoch = epoch;
            best = model.store.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.store.load_values(&best);
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_f1: best_f1,
        steps: step,
    })
}
