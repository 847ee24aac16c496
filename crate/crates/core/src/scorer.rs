//! Span scoring.
//!
//! Each token gets a contextual vector from a small trainable encoder. A span
//! `(i, j)` is represented by `[h_i; h_j]` and scored for every category by
//! a one-hidden-layer network; exact lexicon matches add `lambda` to the
//! score of the matched constant. Probabilities are a softmax over the
//! categories of each span independently.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ScoreError};
use crate::tree::{Category, Span, SpanTree, Utterance};
use crate::types::{ConstId, ConstantKind, DomainSchema};

/// Width of the classifier's hidden layer.
pub const HIDDEN: usize = 250;

/// Score used for masked-out categories. Finite, so sums never produce NaN.
pub const NEG_INF: f64 = -1.0e30;

/// Token vocabulary. Index 0 is the unknown-token row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub const UNK: &str = "<unk>";

impl Vocab {
    pub fn new<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut uniq: BTreeSet<&str> = tokens.into_iter().collect();
        uniq.remove(UNK);
        let tokens: Vec<String> = std::iter::once(UNK).chain(uniq).map(String::from).collect();
        Vocab::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn rebuild_index(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexSource {
    AutoEntity,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub phrase: String,
    pub constant: String,
    pub source: LexSource,
}

/// Phrase-to-constant table behind the exact-match feature. Phrases are
/// compared token by token, case-insensitively.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<Vec<String>, BTreeMap<ConstId, LexSource>>,
    max_len: usize,
}

impl Lexicon {
    /// Maps every entity's phrase to the entity.
    pub fn auto_entities(schema: &DomainSchema) -> Lexicon {
        let mut lex = Lexicon::default();
        for id in schema.constant_ids() {
            let c = schema.constant(id);
            if c.kind == ConstantKind::Entity {
                if let Some(phrase) = &c.phrase {
                    lex.add(phrase, id, LexSource::AutoEntity);
                }
            }
        }
        lex
    }

    pub fn insert(&mut self, phrase: &str, constant: ConstId) {
        self.add(phrase, constant, LexSource::Manual);
    }

    fn add(&mut self, phrase: &str, constant: ConstId, source: LexSource) {
        let key = normalize(&Utterance::new(phrase).tokens);
        if key.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(key.len());
        let slot = self.entries.entry(key).or_default();
        // an automatic entry wins over a manual duplicate
        let current = slot.entry(constant).or_insert(source);
        if source == LexSource::AutoEntity {
            *current = source;
        }
    }

    pub fn merge(&mut self, other: &Lexicon) {
        for (phrase, consts) in &other.entries {
            for (&c, &src) in consts {
                self.add(&phrase.join(" "), c, src);
            }
        }
    }

    /// Constants whose phrase is exactly `tokens`, ignoring case.
    pub fn lookup(&self, tokens: &[String]) -> impl Iterator<Item = ConstId> + '_ {
        self.entries.get(&normalize(tokens)).into_iter().flat_map(|m| m.keys().copied())
    }

    /// δ(x_{i:j}, c).
    pub fn matches(&self, tokens: &[String], constant: ConstId) -> bool {
        self.entries
            .get(&normalize(tokens))
            .is_some_and(|m| m.contains_key(&constant))
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn without_manual(&self) -> Lexicon {
        let mut out = Lexicon::default();
        for (phrase, consts) in &self.entries {
            for (&c, &src) in consts {
                if src == LexSource::AutoEntity {
                    out.add(&phrase.join(" "), c, src);
                }
            }
        }
        out
    }

    /// Every entry, for checkpoints.
    pub fn entries(&self, schema: &DomainSchema) -> Vec<LexEntry> {
        let mut out = Vec::new();
        for (phrase, consts) in &self.entries {
            for (&c, &source) in consts {
                out.push(LexEntry {
                    phrase: phrase.join(" "),
                    constant: schema.constant(c).name.clone(),
                    source,
                });
            }
        }
        out
    }

    pub fn from_entries(entries: &[LexEntry], schema: &DomainSchema) -> Result<Lexicon, Error> {
        let mut lex = Lexicon::default();
        for e in entries {
            let c = schema
                .lookup(&e.constant)
                .ok_or_else(|| Error::Data(format!("lexicon: unknown constant `{}`", e.constant)))?;
            lex.add(&e.phrase, c, e.source);
        }
        Ok(lex)
    }

    /// Manual entries as `phrase<TAB>constant` lines.
    pub fn to_tsv(&self, schema: &DomainSchema) -> String {
        let mut out = String::new();
        for (phrase, consts) in &self.entries {
            for (&c, &src) in consts {
                if src == LexSource::Manual {
                    out.push_str(&format!("{}\t{}\n", phrase.join(" "), schema.constant(c).name));
                }
            }
        }
        out
    }

    pub fn from_tsv(text: &str, schema: &DomainSchema) -> Result<Lexicon, Error> {
        let mut lex = Lexicon::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, name) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("lexicon line {}: missing tab", lineno + 1)))?;
            let c = schema
                .lookup(name.trim())
                .ok_or_else(|| Error::Data(format!("lexicon line {}: unknown constant `{name}`", lineno + 1)))?;
            lex.insert(phrase, c);
        }
        Ok(lex)
    }
}

fn normalize(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

/// Dimensions of the reference encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    /// Embedding and output width (`h_dim`); layers are residual.
    pub dim: usize,
    pub layers: usize,
    /// Each layer mixes offsets `-window..=window`.
    pub window: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        EncoderDims { dim: 64, layers: 2, window: 3 }
    }
}

/// Token embeddings followed by residual window-mixing layers:
/// `x' = x + tanh(b + sum_o W_o x[i + o])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub vocab: Vocab,
    pub dims: EncoderDims,
    pub weights: Vec<f64>,
}

impl EncoderParams {
    pub fn init(vocab: Vocab, dims: EncoderDims, rng: &mut StdRng) -> EncoderParams {
        let d = dims.dim;
        let mut weights = Vec::with_capacity(Self::size(vocab.len(), dims));
        let emb = Normal::new(0.0, 1.0).unwrap();
        weights.extend((0..vocab.len() * d).map(|_| emb.sample(rng)));
        let taps = 2 * dims.window + 1;
        let mix = Normal::new(0.0, (1.0 / (taps * d) as f64).sqrt()).unwrap();
        for _ in 0..dims.layers {
            weights.extend((0..taps * d * d).map(|_| mix.sample(rng)));
            weights.extend(std::iter::repeat(0.0).take(d));
        }
        EncoderParams { vocab, dims, weights }
    }

    pub fn size(vocab: usize, dims: EncoderDims) -> usize {
        let d = dims.dim;
        vocab * d + dims.layers * ((2 * dims.window + 1) * d * d + d)
    }

    fn layer_offset(&self, layer: usize) -> usize {
        let d = self.dims.dim;
        self.vocab.len() * d + layer * ((2 * self.dims.window + 1) * d * d + d)
    }

    /// Contextual vectors `h_1..h_n`, one row of `dim` per token.
    pub fn encode(&self, utt: &Utterance) -> Vec<Vec<f64>> {
        self.forward(utt).states.pop().unwrap_or_default()
    }

    fn forward(&self, utt: &Utterance) -> EncoderCache {
        let d = self.dims.dim;
        let n = utt.len();
        let ids: Vec<usize> = utt.tokens.iter().map(|t| self.vocab.id(t)).collect();
        let x0: Vec<Vec<f64>> = ids.iter().map(|&id| self.weights[id * d..(id + 1) * d].to_vec()).collect();
        let mut states = vec![x0];
        let mut acts = Vec::new();
        let w = self.dims.window as isize;
        for layer in 0..self.dims.layers {
            let base = self.layer_offset(layer);
            let bias = &self.weights[base + (2 * self.dims.window + 1) * d * d..][..d];
            let x = states.last().unwrap();
            let mut act = vec![vec![0.0; d]; n];
            let mut next = x.clone();
            for i in 0..n {
                let pre = &mut act[i];
                pre.copy_from_slice(bias);
                for o in -w..=w {
                    let src = i as isize + o;
                    if src < 0 || src >= n as isize {
                        continue;
                    }
                    let tap = (o + w) as usize;
                    let m = &self.weights[base + tap * d * d..][..d * d];
                    matvec_add(m, &x[src as usize], pre);
                }
                for k in 0..d {
                    pre[k] = pre[k].tanh();
                    next[i][k] += pre[k];
                }
            }
            acts.push(act);
            states.push(next);
        }
        EncoderCache { ids, states, acts }
    }

    /// Accumulates parameter gradients given `d_out` = dL/dh.
    fn backward(&self, cache: &EncoderCache, mut d_out: Vec<Vec<f64>>, grad: &mut [f64]) {
        let d = self.dims.dim;
        let n = cache.ids.len();
        let w = self.dims.window as isize;
        let taps = 2 * self.dims.window + 1;
        for layer in (0..self.dims.layers).rev() {
            let base = self.layer_offset(layer);
            let x = &cache.states[layer];
            let act = &cache.acts[layer];
            // residual path passes d_out through unchanged
            let mut d_in = d_out.clone();
            for i in 0..n {
                let dpre: Vec<f64> = (0..d).map(|k| d_out[i][k] * (1.0 - act[i][k] * act[i][k])).collect();
                let gb = &mut grad[base + taps * d * d..][..d];
                for k in 0..d {
                    gb[k] += dpre[k];
                }
                for o in -w..=w {
                    let src = i as isize + o;
                    if src < 0 || src >= n as isize {
                        continue;
                    }
                    let src = src as usize;
                    let tap = (o + w) as usize;
                    let off = base + tap * d * d;
                    outer_add(&dpre, &x[src], &mut grad[off..off + d * d]);
                    matvec_t_add(&self.weights[off..off + d * d], &dpre, &mut d_in[src]);
                }
            }
            d_out = d_in;
        }
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = &mut grad[id * d..(id + 1) * d];
            for k in 0..d {
                row[k] += d_out[i][k];
            }
        }
    }
}

struct EncoderCache {
    ids: Vec<usize>,
    /// `states[0]` are embeddings, `states[L]` the output.
    states: Vec<Vec<Vec<f64>>>,
    acts: Vec<Vec<Vec<f64>>>,
}

/// `W1` (`HIDDEN x 2h`) and `W2` (`|C| x HIDDEN`), plus the lexicon weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub input_dim: usize,
    pub categories: usize,
    pub lambda: f64,
    pub weights: Vec<f64>,
}

impl ClassifierParams {
    pub fn init(input_dim: usize, categories: usize, lambda: f64, rng: &mut StdRng) -> ClassifierParams {
        let w1 = Normal::new(0.0, (1.0 / (2 * input_dim) as f64).sqrt()).unwrap();
        let w2 = Normal::new(0.0, (1.0 / HIDDEN as f64).sqrt()).unwrap();
        let mut weights: Vec<f64> = (0..HIDDEN * 2 * input_dim).map(|_| w1.sample(rng)).collect();
        weights.extend((0..categories * HIDDEN).map(|_| w2.sample(rng)));
        ClassifierParams { input_dim, categories, lambda, weights }
    }

    fn w1(&self) -> &[f64] {
        &self.weights[..HIDDEN * 2 * self.input_dim]
    }

    fn w2(&self) -> &[f64] {
        &self.weights[HIDDEN * 2 * self.input_dim..]
    }
}

/// Encoder plus classifier: everything trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanModel {
    pub encoder: EncoderParams,
    pub classifier: ClassifierParams,
}

/// Gradients shaped like [`SpanModel`]'s weight vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub encoder: Vec<f64>,
    pub classifier: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(model: &SpanModel) -> Grads {
        Grads {
            encoder: vec![0.0; model.encoder.weights.len()],
            classifier: vec![0.0; model.classifier.weights.len()],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.iter_mut().chain(self.classifier.iter_mut()).for_each(|g| *g *= factor);
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.encoder.iter_mut().zip(&other.encoder) {
            *a += b;
        }
        for (a, b) in self.classifier.iter_mut().zip(&other.classifier) {
            *a += b;
        }
    }
}

/// Everything needed to backpropagate through one utterance.
pub struct Forward {
    pub table: ScoreTable,
    enc: EncoderCache,
    /// Hidden activations per span, in [`Span::all`] order.
    hidden: Vec<Vec<f64>>,
}

impl SpanModel {
    pub fn init(vocab: Vocab, dims: EncoderDims, categories: usize, lambda: f64, seed: u64) -> SpanModel {
        let mut rng = StdRng::seed_from_u64(seed);
        let encoder = EncoderParams::init(vocab, dims, &mut rng);
        let classifier = ClassifierParams::init(dims.dim, categories, lambda, &mut rng);
        SpanModel { encoder, classifier }
    }

    pub fn num_params(&self) -> usize {
        self.encoder.weights.len() + self.classifier.weights.len()
    }

    /// Scores every span of `utt`.
    pub fn score_spans(&self, utt: &Utterance, lex: &Lexicon) -> Result<ScoreTable, ScoreError> {
        Ok(self.forward(utt, lex)?.table)
    }

    pub fn forward(&self, utt: &Utterance, lex: &Lexicon) -> Result<Forward, ScoreError> {
        let h = self.encoder.dims.dim;
        if h != self.classifier.input_dim {
            return Err(ScoreError::DimensionMismatch {
                expected: self.classifier.input_dim,
                found: h,
            });
        }
        let enc = self.encoder.forward(utt);
        let states = enc.states.last().unwrap();
        let n = utt.len();
        let cats = self.classifier.categories;
        let w1 = self.classifier.w1();
        let w2 = self.classifier.w2();
        // W1 [h_i; h_j] = A h_i + B h_j, with A and B the column halves of W1
        let mut left = vec![vec![0.0; HIDDEN]; n];
        let mut right = vec![vec![0.0; HIDDEN]; n];
        for i in 0..n {
            for r in 0..HIDDEN {
                let row = &w1[r * 2 * h..(r + 1) * 2 * h];
                left[i][r] = dot(&row[..h], &states[i]);
                right[i][r] = dot(&row[h..], &states[i]);
            }
        }
        let mut table = ScoreTable::zeros(n, cats);
        let mut hidden = Vec::with_capacity(Span::count(n));
        for span in Span::all(n) {
            let z: Vec<f64> = left[span.start - 1]
                .iter()
                .zip(&right[span.end - 1])
                .map(|(a, b)| (a + b).max(0.0))
                .collect();
            let raw = table.raw_mut(span);
            for (c, out) in raw.iter_mut().enumerate() {
                *out = dot(&w2[c * HIDDEN..(c + 1) * HIDDEN], &z);
            }
            if self.classifier.lambda != 0.0 && span.len() <= lex.max_phrase_len() {
                for c in lex.lookup(utt.span_tokens(span)) {
                    raw[Category::Constant(c).index()] += self.classifier.lambda;
                }
            }
            hidden.push(z);
        }
        table.refresh_shifted();
        Ok(Forward { table, enc, hidden })
    }

    /// Gradient of `sum_span weight * CE(span)` given per-span score
    /// gradients `d_scores` (same layout as the raw table).
    pub fn backward(&self, fwd: &Forward, d_scores: &[f64], grads: &mut Grads) {
        let h = self.encoder.dims.dim;
        let n = fwd.table.n;
        let cats = self.classifier.categories;
        let w1_len = HIDDEN * 2 * h;
        let (w1, w2) = self.classifier.weights.split_at(w1_len);
        let (g1, g2) = grads.classifier.split_at_mut(w1_len);
        let mut d_left = vec![vec![0.0; HIDDEN]; n];
        let mut d_right = vec![vec![0.0; HIDDEN]; n];
        for (k, span) in Span::all(n).enumerate() {
            let ds = &d_scores[fwd.table.offset(span)..][..cats];
            let z = &fwd.hidden[k];
            let mut dz = vec![0.0; HIDDEN];
            for c in 0..cats {
                if ds[c] == 0.0 {
                    continue;
                }
                let row = &w2[c * HIDDEN..(c + 1) * HIDDEN];
                let grow = &mut g2[c * HIDDEN..(c + 1) * HIDDEN];
                for r in 0..HIDDEN {
                    grow[r] += ds[c] * z[r];
                    dz[r] += ds[c] * row[r];
                }
            }
            for r in 0..HIDDEN {
                if z[r] > 0.0 {
                    d_left[span.start - 1][r] += dz[r];
                    d_right[span.end - 1][r] += dz[r];
                }
            }
        }
        let states = fwd.enc.states.last().unwrap();
        let mut d_h = vec![vec![0.0; h]; n];
        for i in 0..n {
            for r in 0..HIDDEN {
                let (dl, dr) = (d_left[i][r], d_right[i][r]);
                if dl == 0.0 && dr == 0.0 {
                    continue;
                }
                let row = &w1[r * 2 * h..(r + 1) * 2 * h];
                let grow = &mut g1[r * 2 * h..(r + 1) * 2 * h];
                for k in 0..h {
                    grow[k] += dl * states[i][k];
                    grow[h + k] += dr * states[i][k];
                    d_h[i][k] += dl * row[k] + dr * row[h + k];
                }
            }
        }
        self.encoder.backward(&fwd.enc, d_h, &mut grads.encoder);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += M x` for a square row-major `M`.
fn matvec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&m[r * d..(r + 1) * d], x);
    }
}

/// `out += M^T y`.
fn matvec_t_add(m: &[f64], y: &[f64], out: &mut [f64]) {
    let d = out.len();
    for (r, &yr) in y.iter().enumerate() {
        let row = &m[r * d..(r + 1) * d];
        for k in 0..d {
            out[k] += yr * row[k];
        }
    }
}

/// `g += a b^T`.
fn outer_add(a: &[f64], b: &[f64], g: &mut [f64]) {
    let d = b.len();
    for (r, &ar) in a.iter().enumerate() {
        let row = &mut g[r * d..(r + 1) * d];
        for k in 0..d {
            row[k] += ar * b[k];
        }
    }
}

/// Raw scores `s(x_{i:j}, c)` and shifted scores
/// `s'(x_{i:j}, c) = s(x_{i:j}, c) - s(x_{i:j}, NoSem)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    n: usize,
    categories: usize,
    raw: Vec<f64>,
    shifted: Vec<f64>,
}

impl ScoreTable {
    pub fn zeros(n: usize, categories: usize) -> ScoreTable {
        let len = n * n * categories;
        ScoreTable {
            n,
            categories,
            raw: vec![0.0; len],
            shifted: vec![0.0; len],
        }
    }

    /// Builds a table from raw scores given per span in [`Span::all`] order.
    pub fn from_raw(n: usize, categories: usize, mut raw_of: impl FnMut(Span, usize) -> f64) -> ScoreTable {
        let mut t = ScoreTable::zeros(n, categories);
        for span in Span::all(n) {
            for c in 0..categories {
                t.raw_mut(span)[c] = raw_of(span, c);
            }
        }
        t.refresh_shifted();
        t
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn offset(&self, span: Span) -> usize {
        ((span.start - 1) * self.n + (span.end - 1)) * self.categories
    }

    pub fn raw(&self, span: Span) -> &[f64] {
        &self.raw[self.offset(span)..][..self.categories]
    }

    pub fn raw_mut(&mut self, span: Span) -> &mut [f64] {
        let off = self.offset(span);
        &mut self.raw[off..off + self.categories]
    }

    pub fn shifted(&self, span: Span) -> &[f64] {
        &self.shifted[self.offset(span)..][..self.categories]
    }

    pub fn shifted_score(&self, span: Span, c: Category) -> f64 {
        self.shifted(span)[c.index()]
    }

    /// Recomputes shifted scores after raw scores changed.
    pub fn refresh_shifted(&mut self) {
        for span in Span::all(self.n) {
            let off = self.offset(span);
            let base = self.raw[off];
            for c in 0..self.categories {
                self.shifted[off + c] = self.raw[off + c] - base;
            }
            self.shifted[off] = 0.0;
        }
    }

    /// Copy where every constant outside `keep` has shifted score
    /// [`NEG_INF`] on every span.
    pub fn mask_constants(&self, keep: &BTreeSet<ConstId>) -> ScoreTable {
        let mut out = self.clone();
        for span in Span::all(self.n) {
            let off = out.offset(span);
            for c in 2..self.categories {
                if !keep.contains(&ConstId((c - 2) as u32)) {
                    out.shifted[off + c] = NEG_INF;
                }
            }
        }
        out
    }

    /// Softmax over the raw scores of `span`.
    pub fn distribution(&self, span: Span) -> Vec<f64> {
        softmax(self.raw(span))
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `p(T[i, j] = c)`.
pub fn span_probability(table: &ScoreTable, span: Span, c: Category) -> f64 {
    table.distribution(span)[c.index()]
}

/// Negative log-likelihood of a tree under the span-independent model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeLoss {
    /// `-sum over all spans (i <= j) of log p(T[i, j])`.
    pub total: f64,
    pub spans: usize,
}

impl TreeLoss {
    pub fn per_span(&self) -> f64 {
        self.total / self.spans as f64
    }
}

/// Cross-entropy of `gold` summed over every span, non-constituents counted
/// as NoSem.
pub fn tree_loss(table: &ScoreTable, gold: &SpanTree) -> TreeLoss {
    tree_loss_with_grad(table, gold).0
}

/// [`tree_loss`] together with dLoss/dRaw in the table's layout.
pub fn tree_loss_with_grad(table: &ScoreTable, gold: &SpanTree) -> (TreeLoss, Vec<f64>) {
    let mut grad = vec![0.0; table.raw.len()];
    let mut total = 0.0;
    let labels = gold.span_labels();
    for (span, label) in &labels {
        let raw = table.raw(*span);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = raw.iter().map(|s| (s - max).exp()).sum();
        let log_z = max + z.ln();
        total += log_z - raw[*label];
        let off = table.offset(*span);
        for c in 0..table.categories {
            grad[off + c] = (raw[c] - log_z).exp();
        }
        grad[off + label] -= 1.0;
    }
    (TreeLoss { total, spans: labels.len() }, grad)
}

/// `params -= lr * grads`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Adam moments for one model.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, model: &mut SpanModel, grads: &Grads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let params = model
            .encoder
            .weights
            .iter_mut()
            .chain(model.classifier.weights.iter_mut());
        let gs = grads.encoder.iter().chain(&grads.classifier);
        for (((p, g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Category;

    fn toy_model(seed: u64) -> (SpanModel, Utterance) {
        let utt = Utterance::new("walk left after jump around right twice");
        let vocab = Vocab::new(utt.tokens.iter().map(String::as_str));
        let dims = EncoderDims { dim: 8, layers: 2, window: 3 };
        (SpanModel::init(vocab, dims, 6, 0.0, seed), utt)
    }

    #[test]
    fn encoder_shapes() {
        let (model, utt) = toy_model(1);
        assert!(model.encoder.encode(&Utterance::new("")).is_empty());
        let h = model.encoder.encode(&utt);
        assert_eq!(h.len(), utt.len());
        assert!(h.iter().all(|row| row.len() == 8 && row.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn encoder_is_context_sensitive() {
        let (model, utt) = toy_model(2);
        let mut swapped = utt.clone();
        swapped.tokens.swap(0, 4);
        let a = model.encoder.encode(&utt);
        let b = model.encoder.encode(&swapped);
        // positions 0 and 4 hold swapped words, so compare against the same word
        assert_ne!(a[0], b[4]);
        assert_ne!(a[4], b[0]);
    }

    #[test]
    fn unknown_tokens_use_the_unk_row() {
        let (model, _) = toy_model(3);
        let a = model.encoder.encode(&Utterance::new("zzz"));
        let b = model.encoder.encode(&Utterance::new("qqq"));
        assert_eq!(a, b);
    }

    #[test]
    fn shifted_nosem_is_zero_and_dimension_is_checked() {
        let (mut model, utt) = toy_model(4);
        let table = model.score_spans(&utt, &Lexicon::default()).unwrap();
        for span in Span::all(utt.len()) {
            assert_eq!(table.shifted_score(span, Category::NoSem), 0.0);
        }
        model.classifier.input_dim = 9;
        assert!(matches!(
            model.score_spans(&utt, &Lexicon::default()),
            Err(ScoreError::DimensionMismatch { expected: 9, found: 8 })
        ));
    }

    #[test]
    fn softmax_examples() {
        let uniform = ScoreTable::from_raw(1, 4, |_, _| 0.3);
        let s = Span::new(1, 1);
        for c in 0..4 {
            assert!((span_probability(&uniform, s, Category::from_index(c)) - 0.25).abs() < 1e-15);
        }
        let peaked = ScoreTable::from_raw(1, 4, |_, c| if c == 2 { 50.0 } else { 0.0 });
        assert!(span_probability(&peaked, s, Category::from_index(2)) > 0.999);
    }

    #[test]
    fn uniform_loss_is_analytic() {
        let n = 4;
        let table = ScoreTable::from_raw(n, 5, |_, _| 1.0);
        let tree = SpanTree::leaf(Span::new(1, n), Category::from_index(3)).into_root();
        let loss = tree_loss(&table, &tree);
        assert_eq!(loss.spans, 10);
        assert!((loss.total - 10.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lexicon_tsv_round_trip() {
        let schema = DomainSchema::scan();
        let mut lex = Lexicon::auto_entities(&schema);
        lex.insert("left", schema.lookup("l").unwrap());
        let tsv = lex.to_tsv(&schema);
        assert_eq!(tsv, "left\tl\n");
        let back = Lexicon::from_tsv(&tsv, &schema).unwrap();
        assert!(back.matches(&["left".to_string()], schema.lookup("l").unwrap()));
        assert!(Lexicon::from_tsv("left l", &schema).is_err());
    }

    #[test]
    fn sgd_noops() {
        let mut p = vec![1.0, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1);
        sgd_step(&mut p, &[3.0, 4.0], 0.0);
        assert_eq!(p, vec![1.0, -2.0]);
    }
}
