//! LSTM encoder-decoder with attention, trained by explicit backpropagation
//! through time.
//!
//! The decoder state after the top layer, `s_t`, attends over the top-layer
//! encoder states `h_i`:
//!
//! ```text
//! u_i = v . tanh(W1 h_i + W2 s_t)     a = softmax(u)     attn = sum_i a_i h_i
//! h~  = P [s_t; attn]                  p(w | ...) = softmax(V h~)_w
//! ```
//!
//! Everything is `f64`; the models are small and the finite-difference
//! checks want the precision.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{write_atomic, DepSentence};
use crate::error::{Error, Result};
use crate::extraction::{extract_arguments_with, ExtractionConfig};
use crate::generation::{CandidateSource, HypothesisCandidate};
use crate::optim::Adam;
use crate::text::seq_tokens;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

const CHECKPOINT_FORMAT: &str = "joci-seq2seq";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2SeqConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub vocab_min_count: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub sampled_softmax_k: Option<usize>,
    pub batch_size: usize,
    /// Global gradient norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub init_scale: f64,
    pub max_decode_len: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            num_layers: 1,
            hidden_size: 64,
            vocab_min_count: 2,
            learning_rate: 0.005,
            epochs: 10,
            seed: 0,
            sampled_softmax_k: None,
            batch_size: 16,
            clip_norm: Some(5.0),
            init_scale: 0.08,
            max_decode_len: 20,
        }
    }
}

impl Seq2SeqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::invalid("seq2seq hidden_size and num_layers must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("seq2seq batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("seq2seq learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Word ids. The four reserved symbols come first, then words by descending
/// frequency with ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        if words.len() < RESERVED.len() || words[..RESERVED.len()] != RESERVED {
            return Err(Error::Format("vocabulary must start with the reserved symbols".into()));
        }
        let ids: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if ids.len() != words.len() {
            return Err(Error::Format("vocabulary has duplicate words".into()));
        }
        Ok(Vocab { words, ids })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    pub fn build<'a, I, S>(sentences: I, min_count: usize) -> Result<Vocab>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut total = 0usize;
        for sent in sentences {
            for w in sent {
                *counts.entry(w.as_ref()).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && !RESERVED.contains(w))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let words: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(w, _)| w.to_string()))
            .collect();
        Vocab::try_from(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.word(i).to_string()).collect()
    }
}

/// Builds a vocabulary over both sides of the training pairs.
pub fn build_vocab(pairs: &[(Vec<String>, Vec<String>)], min_count: usize) -> Result<Vocab> {
    Vocab::build(pairs.iter().flat_map(|(c, h)| [c.as_slice(), h.as_slice()]), min_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    fn uniform(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.gen_range(-scale..=scale)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn cols(&self) -> usize {
        self.shape[1]
    }

    fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// `out = W x`
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let c = self.cols();
        debug_assert_eq!(x.len(), c);
        self.data.chunks_exact(c).map(|row| dot(row, x)).collect()
    }

    /// `dx += W^T dy`
    fn matvec_t_acc(&self, dy: &[f64], dx: &mut [f64]) {
        let c = self.cols();
        for (row, &d) in self.data.chunks_exact(c).zip(dy) {
            if d != 0.0 {
                axpy(d, row, dx);
            }
        }
    }

    /// `W += dy x^T`
    fn outer_acc(&mut self, dy: &[f64], x: &[f64]) {
        let c = self.cols();
        for (row, &d) in self.data.chunks_exact_mut(c).zip(dy) {
            if d != 0.0 {
                axpy(d, x, row);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// One LSTM layer; gates are stacked input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    /// `[4H, in + H]`
    pub w: Tensor,
    /// `[4H]`
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqParams {
    pub hidden_size: usize,
    pub vocab_size: usize,
    pub enc_embed: Tensor,
    pub dec_embed: Tensor,
    pub encoder: Vec<LstmLayer>,
    pub decoder: Vec<LstmLayer>,
    pub attn_w1: Tensor,
    pub attn_w2: Tensor,
    pub attn_v: Tensor,
    /// Linear map from `[s_t; attn_t]` back to the hidden size. A tanh here
    /// saturates while fitting the word marginals (there is no output bias).
    pub proj: Tensor,
    /// Output word matrix, one row per word.
    pub output: Tensor,
}

impl Seq2SeqParams {
    pub fn zeros(vocab_size: usize, hidden: usize, layers: usize) -> Self {
        let lstm = || LstmLayer { w: Tensor::zeros(&[4 * hidden, 2 * hidden]), b: Tensor::zeros(&[4 * hidden]) };
        Seq2SeqParams {
            hidden_size: hidden,
            vocab_size,
            enc_embed: Tensor::zeros(&[vocab_size, hidden]),
            dec_embed: Tensor::zeros(&[vocab_size, hidden]),
            encoder: (0..layers).map(|_| lstm()).collect(),
            decoder: (0..layers).map(|_| lstm()).collect(),
            attn_w1: Tensor::zeros(&[hidden, hidden]),
            attn_w2: Tensor::zeros(&[hidden, hidden]),
            attn_v: Tensor::zeros(&[hidden]),
            proj: Tensor::zeros(&[hidden, 2 * hidden]),
            output: Tensor::zeros(&[vocab_size, hidden]),
        }
    }

    /// Uniform init in `[-scale, scale]`, forget-gate biases at 1.
    pub fn init(vocab_size: usize, hidden: usize, layers: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(vocab_size, hidden, layers);
        for (name, t) in p.tensors_mut() {
            if !name.ends_with(".b") {
                *t = Tensor::uniform(&t.shape.clone(), scale, rng);
            }
        }
        for layer in p.encoder.iter_mut().chain(p.decoder.iter_mut()) {
            layer.b.data[hidden..2 * hidden].fill(1.0);
        }
        p
    }

    pub fn num_layers(&self) -> usize {
        self.encoder.len()
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("enc_embed".to_string(), &self.enc_embed), ("dec_embed".to_string(), &self.dec_embed)];
        for (side, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, layer) in layers.iter().enumerate() {
                out.push((format!("{side}.{l}.w"), &layer.w));
                out.push((format!("{side}.{l}.b"), &layer.b));
            }
        }
        out.extend([
            ("attn_w1".to_string(), &self.attn_w1),
            ("attn_w2".to_string(), &self.attn_w2),
            ("attn_v".to_string(), &self.attn_v),
            ("proj".to_string(), &self.proj),
            ("output".to_string(), &self.output),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("enc_embed".to_string(), &mut self.enc_embed), ("dec_embed".to_string(), &mut self.dec_embed)];
        for (side, layers) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (l, layer) in layers.iter_mut().enumerate() {
                out.push((format!("{side}.{l}.w"), &mut layer.w));
                out.push((format!("{side}.{l}.b"), &mut layer.b));
            }
        }
        out.extend([
            ("attn_w1".to_string(), &mut self.attn_w1),
            ("attn_w2".to_string(), &mut self.attn_w2),
            ("attn_v".to_string(), &mut self.attn_v),
            ("proj".to_string(), &mut self.proj),
            ("output".to_string(), &mut self.output),
        ]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size, self.hidden_size, self.num_layers())
    }

    fn check_shapes(&self) -> Result<()> {
        let expected = self.zeros_like();
        if self.decoder.len() != self.encoder.len() || self.encoder.is_empty() {
            return Err(Error::Format("encoder and decoder must have the same nonzero depth".into()));
        }
        for ((name, got), (_, want)) in self.tensors().into_iter().zip(expected.tensors()) {
            if got.shape != want.shape || got.data.len() != want.data.len() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape, want.shape
                )));
            }
        }
        Ok(())
    }

    fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn sq_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, t)| t.data.iter()).map(|x| x * x).sum()
    }
}

#[derive(Clone)]
struct CellCache {
    /// `[input; h_prev]`
    x: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn lstm_step(p: &LstmLayer, input: &[f64], h: &mut Vec<f64>, c: &mut Vec<f64>) -> CellCache {
    let hs = h.len();
    let mut x = Vec::with_capacity(input.len() + hs);
    x.extend_from_slice(input);
    x.extend_from_slice(h);
    let mut z = p.w.matvec(&x);
    axpy(1.0, &p.b.data, &mut z);
    let i: Vec<f64> = z[..hs].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hs..2 * hs].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[2 * hs..3 * hs].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[3 * hs..].iter().map(|&v| v.tanh()).collect();
    let c_prev = std::mem::take(c);
    *c = (0..hs).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    *h = (0..hs).map(|k| o[k] * tanh_c[k]).collect();
    CellCache { x, c_prev, i, f, o, g, tanh_c }
}

/// Backward through one cell. Takes gradients w.r.t. the cell's outputs
/// `h` and `c`; returns gradients w.r.t. input, `h_prev`, `c_prev`.
fn lstm_back(p: &LstmLayer, cache: &CellCache, dh: &[f64], dc_in: &[f64], grad: &mut LstmLayer) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = dh.len();
    let mut dz = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for k in 0..hs {
        let (i, f, o, g, tc) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dc * g * i * (1.0 - i);
        dz[hs + k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dz[2 * hs + k] = dh[k] * tc * o * (1.0 - o);
        dz[3 * hs + k] = dc * i * (1.0 - g * g);
        dc_prev[k] = dc * f;
    }
    grad.w.outer_acc(&dz, &cache.x);
    axpy(1.0, &dz, &mut grad.b.data);
    let mut dx = vec![0.0; cache.x.len()];
    p.w.matvec_t_acc(&dz, &mut dx);
    let dh_prev = dx.split_off(cache.x.len() - hs);
    (dx, dh_prev, dc_prev)
}

#[derive(Clone)]
struct StackState {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl StackState {
    fn zeros(layers: usize, hidden: usize) -> Self {
        StackState { h: vec![vec![0.0; hidden]; layers], c: vec![vec![0.0; hidden]; layers] }
    }
}

fn run_stack(layers: &[LstmLayer], input: &[f64], state: &mut StackState) -> Vec<CellCache> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut x = input.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        caches.push(lstm_step(layer, &x, &mut state.h[l], &mut state.c[l]));
        x = state.h[l].clone();
    }
    caches
}

/// Backward through a layer stack at one time step. `dh_top` is the
/// gradient arriving at the top layer's output; `dh_next`/`dc_next` carry
/// the recurrent gradients and are updated in place. Returns the gradient
/// w.r.t. the stack input.
fn back_stack(
    layers: &[LstmLayer],
    caches: &[CellCache],
    dh_top: Vec<f64>,
    dh_next: &mut [Vec<f64>],
    dc_next: &mut [Vec<f64>],
    grads: &mut [LstmLayer],
) -> Vec<f64> {
    let mut d_above = dh_top;
    for l in (0..layers.len()).rev() {
        axpy(1.0, &dh_next[l], &mut d_above);
        let (dx, dhp, dcp) = lstm_back(&layers[l], &caches[l], &d_above, &dc_next[l], &mut grads[l]);
        dh_next[l] = dhp;
        dc_next[l] = dcp;
        d_above = dx;
    }
    d_above
}

struct Encoded {
    states: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
    final_state: StackState,
    caches: Vec<Vec<CellCache>>,
}

struct Step {
    caches: Vec<CellCache>,
    s: Vec<f64>,
    tau: Vec<Vec<f64>>,
    a: Vec<f64>,
    concat: Vec<f64>,
    ht: Vec<f64>,
}

impl Seq2SeqParams {
    fn encode(&self, ctx: &[usize]) -> Encoded {
        let hs = self.hidden_size;
        let mut state = StackState::zeros(self.num_layers(), hs);
        let mut states = Vec::with_capacity(ctx.len());
        let mut caches = Vec::with_capacity(ctx.len());
        for &w in ctx {
            caches.push(run_stack(&self.encoder, self.enc_embed.row(w), &mut state));
            states.push(state.h[self.num_layers() - 1].clone());
        }
        let keys = states.iter().map(|h| self.attn_w1.matvec(h)).collect();
        Encoded { states, keys, final_state: state, caches }
    }

    fn decode_step(&self, enc: &Encoded, input: usize, state: &mut StackState) -> Step {
        let hs = self.hidden_size;
        let caches = run_stack(&self.decoder, self.dec_embed.row(input), state);
        let s = state.h[self.num_layers() - 1].clone();
        let mut attn = vec![0.0; hs];
        let mut tau = Vec::with_capacity(enc.keys.len());
        let mut a = Vec::new();
        if !enc.keys.is_empty() {
            let q = self.attn_w2.matvec(&s);
            let mut u = Vec::with_capacity(enc.keys.len());
            for k in &enc.keys {
                let t: Vec<f64> = k.iter().zip(&q).map(|(x, y)| (x + y).tanh()).collect();
                u.push(dot(&self.attn_v.data, &t));
                tau.push(t);
            }
            a = softmax(&u);
            for (ai, h) in a.iter().zip(&enc.states) {
                axpy(*ai, h, &mut attn);
            }
        }
        let mut concat = s.clone();
        concat.extend_from_slice(&attn);
        let ht: Vec<f64> = self.proj.matvec(&concat);
        Step { caches, s, tau, a, concat, ht }
    }

    fn logits(&self, ht: &[f64]) -> Vec<f64> {
        self.output.matvec(ht)
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.vocab_size) {
            Some(i) => Err(Error::invalid(format!("token id {i} outside vocabulary of size {}", self.vocab_size))),
            None => Ok(()),
        }
    }

    /// Full-softmax log-probabilities at every decoder step, plus the
    /// attention weights. `target` is scored with EOS appended.
    pub fn trace(&self, ctx: &[usize], target: &[usize]) -> Result<Trace> {
        if target.is_empty() {
            return Err(Error::invalid("cannot score an empty hypothesis"));
        }
        self.check_ids(ctx)?;
        self.check_ids(target)?;
        let enc = self.encode(ctx);
        let mut state = enc.final_state.clone();
        let mut out = Trace { log_probs: Vec::new(), attention: Vec::new(), targets: Vec::new() };
        let mut input = BOS;
        for &y in target.iter().chain(std::iter::once(&EOS)) {
            let step = self.decode_step(&enc, input, &mut state);
            out.log_probs.push(log_softmax(&self.logits(&step.ht)));
            out.attention.push(step.a);
            out.targets.push(y);
            input = y;
        }
        Ok(out)
    }

    /// `log P(target | ctx)` under the full softmax, EOS included.
    pub fn score(&self, ctx: &[usize], target: &[usize]) -> Result<f64> {
        let t = self.trace(ctx, target)?;
        Ok(t.log_probs.iter().zip(&t.targets).map(|(lp, &y)| lp[y]).sum())
    }

    /// Greedy decoding; ties go to the lowest id. EOS is not included in the
    /// output.
    pub fn greedy_decode(&self, prompt: &[usize], max_len: usize) -> Vec<usize> {
        let enc = self.encode(prompt);
        let mut state = enc.final_state.clone();
        let mut input = BOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            let step = self.decode_step(&enc, input, &mut state);
            let logits = self.logits(&step.ht);
            let best = logits
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc })
                .0;
            if best == EOS {
                break;
            }
            out.push(best);
            input = best;
        }
        out
    }

    /// Negative log-likelihood of `target` (EOS appended) and its gradient,
    /// accumulated into `grads`. With a sampler the loss is computed over
    /// the target plus `k` uniformly sampled other words at each step.
    pub fn loss_and_grad(
        &self,
        ctx: &[usize],
        target: &[usize],
        mut sampler: Option<(&mut ChaCha8Rng, usize)>,
        grads: &mut Seq2SeqParams,
    ) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::invalid("cannot train on an empty hypothesis"));
        }
        self.check_ids(ctx)?;
        self.check_ids(target)?;
        let hs = self.hidden_size;
        let layers = self.num_layers();
        let enc = self.encode(ctx);
        let mut state = enc.final_state.clone();

        let targets: Vec<usize> = target.iter().copied().chain(std::iter::once(EOS)).collect();
        let inputs: Vec<usize> = std::iter::once(BOS).chain(target.iter().copied()).collect();
        let mut steps = Vec::with_capacity(targets.len());
        let mut dists = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        for (&x, &y) in inputs.iter().zip(&targets) {
            let step = self.decode_step(&enc, x, &mut state);
            let candidates: Vec<usize> = match sampler.as_mut() {
                Some((rng, k)) if *k + 1 < self.vocab_size => {
                    let mut c = vec![y];
                    for s in rand::seq::index::sample(&mut **rng, self.vocab_size - 1, *k) {
                        c.push(if s >= y { s + 1 } else { s });
                    }
                    c
                }
                _ => (0..self.vocab_size).collect(),
            };
            let logits: Vec<f64> = candidates.iter().map(|&w| dot(self.output.row(w), &step.ht)).collect();
            let lp = log_softmax(&logits);
            let pos = candidates.iter().position(|&w| w == y).expect("target among candidates");
            loss -= lp[pos];
            let mut dl: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            dl[pos] -= 1.0;
            dists.push((candidates, dl));
            steps.push(step);
        }

        let mut d_enc = vec![vec![0.0; hs]; ctx.len()];
        let mut dh_next = vec![vec![0.0; hs]; layers];
        let mut dc_next = vec![vec![0.0; hs]; layers];
        for t in (0..steps.len()).rev() {
            let step = &steps[t];
            let (cands, dl) = &dists[t];
            let mut dht = vec![0.0; hs];
            for (&w, &d) in cands.iter().zip(dl) {
                axpy(d, &step.ht, grads.output.row_mut(w));
                axpy(d, self.output.row(w), &mut dht);
            }
            let dpre = dht;
            grads.proj.outer_acc(&dpre, &step.concat);
            let mut dconcat = vec![0.0; 2 * hs];
            self.proj.matvec_t_acc(&dpre, &mut dconcat);
            let dattn = dconcat.split_off(hs);
            let mut ds = dconcat;

            if !ctx.is_empty() {
                let da: Vec<f64> = enc.states.iter().map(|h| dot(&dattn, h)).collect();
                let mean = dot(&step.a, &da);
                let mut dq = vec![0.0; hs];
                for i in 0..ctx.len() {
                    axpy(step.a[i], &dattn, &mut d_enc[i]);
                    let du = step.a[i] * (da[i] - mean);
                    if du == 0.0 {
                        continue;
                    }
                    let tau = &step.tau[i];
                    axpy(du, tau, &mut grads.attn_v.data);
                    let dk: Vec<f64> = (0..hs).map(|j| du * self.attn_v.data[j] * (1.0 - tau[j] * tau[j])).collect();
                    grads.attn_w1.outer_acc(&dk, &enc.states[i]);
                    self.attn_w1.matvec_t_acc(&dk, &mut d_enc[i]);
                    axpy(1.0, &dk, &mut dq);
                }
                grads.attn_w2.outer_acc(&dq, &step.s);
                self.attn_w2.matvec_t_acc(&dq, &mut ds);
            }

            let dx = back_stack(&self.decoder, &step.caches, ds, &mut dh_next, &mut dc_next, &mut grads.decoder);
            axpy(1.0, &dx, grads.dec_embed.row_mut(inputs[t]));
        }

        // The decoder's initial state is the encoder's final state.
        for t in (0..ctx.len()).rev() {
            let dh_top = std::mem::take(&mut d_enc[t]);
            let dx = back_stack(&self.encoder, &enc.caches[t], dh_top, &mut dh_next, &mut dc_next, &mut grads.encoder);
            axpy(1.0, &dx, grads.enc_embed.row_mut(ctx[t]));
        }
        Ok(loss)
    }
}

/// Per-step view of a scored pair.
#[derive(Debug, Clone)]
pub struct Trace {
    pub log_probs: Vec<Vec<f64>>,
    pub attention: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

/// Parameters together with the vocabulary and config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqModel {
    pub config: Seq2SeqConfig,
    pub vocab: Vocab,
    pub params: Seq2SeqParams,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: Seq2SeqModel,
}

impl Seq2SeqModel {
    pub fn new(config: Seq2SeqConfig, vocab: Vocab, params: Seq2SeqParams) -> Result<Self> {
        if params.vocab_size != vocab.len() {
            return Err(Error::invalid(format!(
                "parameters cover {} words but the vocabulary has {}",
                params.vocab_size,
                vocab.len()
            )));
        }
        params.check_shapes()?;
        Ok(Seq2SeqModel { config, vocab, params })
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        self.vocab.encode(&seq_tokens(text))
    }

    pub fn score_text(&self, context: &str, hypothesis: &str) -> Result<f64> {
        self.params.score(&self.encode_text(context), &self.encode_text(hypothesis))
    }

    pub fn decode_text(&self, prompt: &str) -> String {
        let out = self.params.greedy_decode(&self.encode_text(prompt), self.config.max_decode_len);
        self.vocab.decode(&out).join(" ")
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.params.all_finite() {
            return Err(Error::Numeric("refusing to save non-finite parameters".into()));
        }
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model: self.clone() };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                ck.format, ck.version
            )));
        }
        let m = ck.model;
        Seq2SeqModel::new(m.config, m.vocab, m.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Per-epoch progress reported during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean per-token loss over the epoch.
    pub loss: f64,
}

/// Tokenizes raw text pairs.
pub fn tokenize_pairs(pairs: &[(String, String)]) -> Vec<(Vec<String>, Vec<String>)> {
    pairs.iter().map(|(c, h)| (seq_tokens(c), seq_tokens(h))).collect()
}

pub fn train(pairs: &[(Vec<String>, Vec<String>)], config: &Seq2SeqConfig) -> Result<Seq2SeqModel> {
    train_with(pairs, config, |_, _| true)
}

/// Trains from scratch. `on_epoch` sees each epoch's report and the current
/// model; returning `false` stops training early.
pub fn train_with<F>(pairs: &[(Vec<String>, Vec<String>)], config: &Seq2SeqConfig, mut on_epoch: F) -> Result<Seq2SeqModel>
where
    F: FnMut(EpochReport, &Seq2SeqModel) -> bool,
{
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let vocab = build_vocab(pairs, config.vocab_min_count)?;
    let data: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .filter(|(_, h)| !h.is_empty())
        .map(|(c, h)| (vocab.encode(c), vocab.encode(h)))
        .collect();
    if data.is_empty() {
        return Err(Error::invalid("every training hypothesis is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = Seq2SeqParams::init(vocab.len(), config.hidden_size, config.num_layers, config.init_scale, &mut rng);
    let mut model = Seq2SeqModel { config: config.clone(), vocab, params };
    let mut adam = Adam::new(model.params.num_params(), config.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = model.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (c, h) = &data[i];
                let sampler = config.sampled_softmax_k.map(|k| (&mut rng, k));
                batch_loss += model.params.loss_and_grad(c, h, sampler, &mut grads)?;
                tokens += h.len() + 1;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {batch_loss} at epoch {epoch}, batch {b}; try a lower learning rate"
                )));
            }
            total += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            if let Some(clip) = config.clip_norm {
                let n = grads.sq_norm().sqrt();
                if n > clip {
                    grads.scale(clip / n);
                }
            }
            let grad_slices: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, t)| t.data.as_slice()).collect();
            adam.step(
                model.params.tensors_mut().into_iter().map(|(_, t)| t.data.as_mut_slice()),
                grad_slices,
            );
        }
        let report = EpochReport { epoch, loss: total / tokens as f64 };
        log::debug!("seq2seq epoch {epoch}: loss {:.5}", report.loss);
        if !on_epoch(report, &model) {
            break;
        }
    }
    Ok(model)
}

/// One hypothesis per extracted argument, decoded from the argument word
/// alone.
pub fn generate_word_prompt(model: &Seq2SeqModel, context: &DepSentence, extraction: &ExtractionConfig) -> Vec<HypothesisCandidate> {
    extract_arguments_with(context, extraction)
        .into_iter()
        .map(|arg| {
            let lemma = arg.head_lemma.to_lowercase();
            HypothesisCandidate {
                context_id: context.source_id.clone(),
                surface: model.decode_text(&lemma),
                argument_lemma: lemma,
                source_sense: None,
                pattern: None,
                source: CandidateSource::S2sWord,
            }
        })
        .collect()
}

/// A single hypothesis decoded from the whole context sentence.
pub fn generate_sentence_prompt(model: &Seq2SeqModel, context: &DepSentence) -> HypothesisCandidate {
    HypothesisCandidate {
        context_id: context.source_id.clone(),
        argument_lemma: String::new(),
        source_sense: None,
        pattern: None,
        surface: model.decode_text(&context.surface()),
        source: CandidateSource::S2sSentence,
    }
}

/// The five scoring models, each trained on a different slice of an
/// inference corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ent,
    Neu,
    Con,
    NeuCon,
    EmptyPremise,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Ent, Variant::Neu, Variant::Con, Variant::NeuCon, Variant::EmptyPremise];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ent => "ent",
            Variant::Neu => "neu",
            Variant::Con => "con",
            Variant::NeuCon => "neu+con",
            Variant::EmptyPremise => "empty-premise",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.as_str().replace('+', "_"))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Lookup { kind: "seq2seq variant", name: s.to_string() })
    }
}

#[derive(Debug, Clone, Default)]
pub struct VariantModels {
    pub models: [Option<Seq2SeqModel>; 5],
}

impl VariantModels {
    pub fn get(&self, v: Variant) -> Option<&Seq2SeqModel> {
        self.models[v as usize].as_ref()
    }

    pub fn set(&mut self, v: Variant, model: Seq2SeqModel) {
        self.models[v as usize] = Some(model);
    }

    pub fn is_complete(&self) -> bool {
        self.models.iter().all(Option::is_some)
    }

    /// Loads whichever of the five checkpoints exist in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut out = VariantModels::default();
        for v in Variant::ALL {
            let path = dir.as_ref().join(v.file_name());
            if path.exists() {
                out.set(v, Seq2SeqModel::load(&path)?);
            } else {
                log::warn!("no {v} model at {}", path.display());
            }
        }
        Ok(out)
    }
}

/// Scores `hypothesis` under each variant; the empty-premise model sees an
/// empty context. Missing models give `None`.
pub fn score_variants(context: &str, hypothesis: &str, models: &VariantModels) -> Result<[Option<f64>; 5]> {
    let mut out = [None; 5];
    for v in Variant::ALL {
        if let Some(m) = models.get(v) {
            let c = if v == Variant::EmptyPremise { "" } else { context };
            out[v as usize] = Some(m.score_text(c, hypothesis)?);
        }
    }
    Ok(out)
}

/// Parallel scoring of many pairs with one model.
pub fn score_pairs(model: &Seq2SeqModel, pairs: &[(String, String)]) -> Result<Vec<f64>> {
    pairs.par_iter().map(|(c, h)| model.score_text(c, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn vocab_threshold_and_order() {
        let sents = [toks("cat cat dog"), toks("bird bird cat")];
        let v = Vocab::build(sents.iter().map(Vec::as_slice), 2).unwrap();
        assert_eq!(v.decode(&[4, 5]), vec!["cat", "bird"]);
        assert!(!v.contains("dog"));
        assert_eq!(v.id("dog"), UNK);
        let all = Vocab::build(sents.iter().map(Vec::as_slice), 1).unwrap();
        assert!(["cat", "dog", "bird"].iter().all(|w| all.contains(w)));
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(Vocab::build(empty.iter().map(Vec::as_slice), 1).is_err());
    }

    #[test]
    fn vocab_serde_round_trip() {
        let sents = [toks("a b b")];
        let v = Vocab::build(sents.iter().map(Vec::as_slice), 1).unwrap();
        let back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(v, back);
        assert!(serde_json::from_str::<Vocab>(r#"["x"]"#).is_err());
    }

    #[test]
    fn zero_parameters_are_uniform() {
        let p = Seq2SeqParams::zeros(7, 4, 2);
        let s = p.score(&[4, 5], &[4, 6, 5]).unwrap();
        let expected = 4.0 * (1.0f64 / 7.0).ln();
        assert!((s - expected).abs() <= 1e-12 * expected.abs(), "{s} vs {expected}");
        assert_eq!(p.greedy_decode(&[4], 6), vec![PAD; 6]);
    }

    #[test]
    fn empty_hypothesis_is_error() {
        let p = Seq2SeqParams::zeros(5, 3, 1);
        assert!(p.score(&[4], &[]).is_err());
        assert!(p.score(&[9], &[4]).is_err());
    }

    #[test]
    fn distributions_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Seq2SeqParams::init(12, 6, 2, 0.5, &mut rng);
        let t = p.trace(&[4, 5, 6], &[7, 8]).unwrap();
        for (lp, a) in t.log_probs.iter().zip(&t.attention) {
            let s: f64 = lp.iter().map(|x| x.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(a.iter().all(|&x| x >= 0.0));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(p.score(&[4, 5], &[6]).unwrap(), p.score(&[4, 5], &[6]).unwrap());
    }

    #[test]
    fn empty_context_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Seq2SeqParams::init(9, 4, 1, 0.3, &mut rng);
        let s = p.score(&[], &[4, 5]).unwrap();
        assert!(s.is_finite() && s < 0.0);
        let mut g = p.zeros_like();
        p.loss_and_grad(&[], &[4, 5], None, &mut g).unwrap();
        assert!(g.enc_embed.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn loss_matches_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Seq2SeqParams::init(10, 5, 2, 0.3, &mut rng);
        let mut g = p.zeros_like();
        let loss = p.loss_and_grad(&[4, 7], &[5, 6, 8], None, &mut g).unwrap();
        assert!((loss + p.score(&[4, 7], &[5, 6, 8]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let pairs = vec![(toks("a b"), toks("b a")), (toks("b a"), toks("a b"))];
        let cfg = Seq2SeqConfig { hidden_size: 4, epochs: 2, vocab_min_count: 1, ..Default::default() };
        let m = train(&pairs, &cfg).unwrap();
        let back = Seq2SeqModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let mut bad: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        bad["params"]["proj"]["shape"] = serde_json::json!([1, 1]);
        assert!(Seq2SeqModel::from_json(&bad.to_string()).is_err());
        bad["version"] = serde_json::json!(99);
        assert!(Seq2SeqModel::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(Variant::NeuCon.file_name(), "neu_con.json");
    }
}
