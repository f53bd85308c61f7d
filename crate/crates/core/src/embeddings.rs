//! Phrase sequences and skip-gram phrase embeddings.
//!
//! Each structured field value is one atomic token. A resume with `n`
//! experiences renders as `n * 7 + 3` tokens: seven per experience
//! (department, industry, position, salary band, size band, type, tenure in
//! quarters), then age, major and gender.
//!
//! Training is skip-gram with negative sampling and a linearly decayed
//! learning rate. With `threads == 1` training is deterministic; more threads
//! update the shared weights without locking and results vary run to run.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Resume, WorkExperience};
use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 10;
/// Phrase slots per experience.
pub const SLOTS_PER_EXPERIENCE: usize = 7;
pub const PERSONAL_SLOTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseSequence {
    pub tokens: Vec<String>,
}

pub fn salary_token(band: u8) -> String {
    format!("salary_{band}")
}

pub fn size_token(band: u32) -> String {
    format!("size_{band}")
}

pub fn quarter_token(quarters: u32) -> String {
    format!("quarter_{quarters}")
}

pub fn age_token(age: u32) -> String {
    format!("age_{age}")
}

pub fn experience_tokens(e: &WorkExperience) -> [String; SLOTS_PER_EXPERIENCE] {
    [
        e.department.clone(),
        e.industry.clone(),
        e.position_name.clone(),
        salary_token(e.salary),
        size_token(e.size),
        e.experience_type.clone(),
        quarter_token(e.quarter_count),
    ]
}

pub fn personal_tokens(r: &Resume) -> [String; PERSONAL_SLOTS] {
    [age_token(r.age), r.major.clone(), r.gender.clone()]
}

fn sequence_of(resume: &Resume, experiences: &[WorkExperience]) -> PhraseSequence {
    let mut tokens = Vec::with_capacity(experiences.len() * SLOTS_PER_EXPERIENCE + PERSONAL_SLOTS);
    for e in experiences {
        tokens.extend(experience_tokens(e));
    }
    tokens.extend(personal_tokens(resume));
    PhraseSequence { tokens }
}

/// Full-history sequence, used for unsupervised training.
pub fn build_phrase_sequence(resume: &Resume) -> PhraseSequence {
    sequence_of(resume, &resume.experiences)
}

/// Sequence with the current (target) experience removed.
pub fn build_history_sequence(resume: &Resume) -> PhraseSequence {
    sequence_of(resume, resume.history())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub learning_rate: f64,
    pub seed: u64,
    /// 1 = deterministic. Larger values train lock-free and are not reproducible.
    pub threads: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: EMBEDDING_DIM,
            window: 5,
            negatives: 5,
            epochs: 15,
            min_count: 2,
            learning_rate: 0.025,
            seed: 1,
            threads: 1,
        }
    }
}

#[derive(Debug)]
pub struct EmbeddingTable {
    pub config: SkipGramConfig,
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    /// Row-major, `tokens.len() * dim`.
    vectors: Vec<f64>,
    oov_lookups: AtomicU64,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            tokens: self.tokens.clone(),
            counts: self.counts.clone(),
            index: self.index.clone(),
            vectors: self.vectors.clone(),
            oov_lookups: AtomicU64::new(self.oov_lookups.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.tokens == other.tokens
            && self.counts == other.counts
            && self.vectors == other.vectors
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss `-log sigmoid(±input·output)` for one (input, output) pair with
/// `label` 1 (observed context) or 0 (negative sample). Gradients are added
/// into the two buffers; the loss is returned.
pub fn sgns_pair_gradient(
    input: &[f64],
    output: &[f64],
    label: f64,
    grad_input: &mut [f64],
    grad_output: &mut [f64],
) -> f64 {
    let score: f64 = input.iter().zip(output).map(|(a, b)| a * b).sum();
    let p = sigmoid(score);
    let coeff = p - label;
    for d in 0..input.len() {
        grad_input[d] += coeff * output[d];
        grad_output[d] += coeff * input[d];
    }
    // -log(sigmoid(s)) for positives, -log(sigmoid(-s)) for negatives
    let signed = if label > 0.5 { score } else { -score };
    if signed > 0.0 {
        (-signed).exp().ln_1p()
    } else {
        -signed + signed.exp().ln_1p()
    }
}

/// f64 weights behind relaxed atomics so several threads may update them
/// without locks. Single-threaded use is ordinary sequential code.
struct SharedWeights {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl SharedWeights {
    fn from_values(values: &[f64], dim: usize) -> Self {
        Self {
            data: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            dim,
        }
    }

    fn read(&self, row: usize, out: &mut [f64]) {
        let base = row * self.dim;
        for (d, o) in out.iter_mut().enumerate() {
            *o = f64::from_bits(self.data[base + d].load(Ordering::Relaxed));
        }
    }

    fn add(&self, row: usize, delta: &[f64], scale: f64) {
        let base = row * self.dim;
        for (d, x) in delta.iter().enumerate() {
            let cell = &self.data[base + d];
            let v = f64::from_bits(cell.load(Ordering::Relaxed)) + scale * x;
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_values(self) -> Vec<f64> {
        self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
    }
}

/// Cumulative unigram^0.75 distribution for negative sampling.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

struct TrainContext<'a> {
    cfg: &'a SkipGramConfig,
    input: &'a SharedWeights,
    output: &'a SharedWeights,
    noise: &'a NoiseTable,
    processed: &'a AtomicU64,
    total_work: u64,
}

impl TrainContext<'_> {
    fn run(&self, sentences: &[Vec<usize>], rng: &mut ChaCha8Rng) {
        let dim = self.cfg.dim;
        let mut in_vec = vec![0.0; dim];
        let mut out_vec = vec![0.0; dim];
        let mut grad_in = vec![0.0; dim];
        let mut grad_out = vec![0.0; dim];
        for sentence in sentences {
            for (pos, &word) in sentence.iter().enumerate() {
                let done = self.processed.fetch_add(1, Ordering::Relaxed);
                let lr = self.cfg.learning_rate * (1.0 - done as f64 / (self.total_work as f64 + 1.0)).max(1e-4);
                let shrink = rng.random_range(0..self.cfg.window.max(1));
                let reach = self.cfg.window - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    self.input.read(context, &mut in_vec);
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    for n in 0..=self.cfg.negatives {
                        let (target, label) = if n == 0 {
                            (word, 1.0)
                        } else {
                            let t = self.noise.sample(rng);
                            if t == word {
                                continue;
                            }
                            (t, 0.0)
                        };
                        self.output.read(target, &mut out_vec);
                        grad_out.iter_mut().for_each(|g| *g = 0.0);
                        sgns_pair_gradient(&in_vec, &out_vec, label, &mut grad_in, &mut grad_out);
                        self.output.add(target, &grad_out, -lr);
                    }
                    self.input.add(context, &grad_in, -lr);
                }
            }
        }
    }
}

pub fn train_skipgram(sequences: &[PhraseSequence], cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    if cfg.dim == 0 {
        return Err(Error::config("embedding dimension must be at least 1"));
    }
    if sequences.is_empty() {
        return Err(Error::Training("empty sequence corpus".into()));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in sequences {
        for t in &s.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= cfg.min_count).collect();
    if vocab.is_empty() {
        return Err(Error::Training(format!(
            "vocabulary empty after min_count = {} pruning",
            cfg.min_count
        )));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens: Vec<String> = vocab.iter().map(|(t, _)| t.to_string()).collect();
    let counts: Vec<u64> = vocab.iter().map(|&(_, c)| c).collect();
    let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = 0.5 / cfg.dim as f64;
    let init: Vec<f64> = (0..tokens.len() * cfg.dim)
        .map(|_| rng.random_range(-span..span))
        .collect();

    let sentences: Vec<Vec<usize>> = sequences
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .filter_map(|t| index.get(t).copied())
                .collect::<Vec<_>>()
        })
        .filter(|s: &Vec<usize>| s.len() > 1)
        .collect();
    let words: u64 = sentences.iter().map(|s| s.len() as u64).sum();

    let input = SharedWeights::from_values(&init, cfg.dim);
    let output = SharedWeights::from_values(&vec![0.0; init.len()], cfg.dim);
    let noise = NoiseTable::new(&counts);
    let processed = AtomicU64::new(0);
    let ctx = TrainContext {
        cfg,
        input: &input,
        output: &output,
        noise: &noise,
        processed: &processed,
        total_work: words * cfg.epochs as u64,
    };
    let threads = cfg.threads.max(1);
    for epoch in 0..cfg.epochs {
        if threads == 1 {
            ctx.run(&sentences, &mut rng);
        } else {
            let chunk = sentences.len().div_ceil(threads).max(1);
            std::thread::scope(|scope| {
                for (t, part) in sentences.chunks(chunk).enumerate() {
                    let ctx = &ctx;
                    let seed = cfg.seed ^ ((epoch as u64) << 32 | t as u64);
                    scope.spawn(move || ctx.run(part, &mut ChaCha8Rng::seed_from_u64(seed)));
                }
            });
        }
    }
    let vectors = input.into_values();
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite embedding after training".into()));
    }
    Ok(EmbeddingTable {
        config: *cfg,
        tokens,
        counts,
        index,
        vectors,
        oov_lookups: AtomicU64::new(0),
    })
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.config.dim
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

    pub fn count(&self, token: &str) -> Option<u64> {
        self.index.get(token).map(|&i| self.counts[i])
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        &self.vectors[row * self.dim()..(row + 1) * self.dim()]
    }

    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vector(i))
    }

    /// Stored vector, or zeros for an unknown token (counted in `oov_lookups`).
    pub fn embed(&self, token: &str) -> Vec<f64> {
        match self.lookup(token) {
            Some(v) => v.to_vec(),
            None => {
                self.oov_lookups.fetch_add(1, Ordering::Relaxed);
                vec![0.0; self.dim()]
            }
        }
    }

    /// Mean of the constituent word vectors (unknown words contribute zeros).
    pub fn embed_phrase<S: AsRef<str>>(&self, words: &[S]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        if words.is_empty() {
            return acc;
        }
        for w in words {
            for (a, x) in acc.iter_mut().zip(self.embed(w.as_ref())) {
                *a += x;
            }
        }
        acc.iter_mut().for_each(|a| *a /= words.len() as f64);
        acc
    }

    pub fn oov_lookups(&self) -> u64 {
        self.oov_lookups.load(Ordering::Relaxed)
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let va = self
            .lookup(a)
            .ok_or_else(|| Error::Lookup(format!("unknown token {a:?}")))?;
        let vb = self
            .lookup(b)
            .ok_or_else(|| Error::Lookup(format!("unknown token {b:?}")))?;
        Ok(cosine(va, vb))
    }

    /// Top `k` tokens by cosine similarity, excluding the query; ties keep vocabulary order.
    pub fn most_similar(&self, token: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::argument("k must be at least 1"));
        }
        let &qi = self
            .index
            .get(token)
            .ok_or_else(|| Error::Lookup(format!("unknown token {token:?}")))?;
        let query = self.vector(qi);
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| i != qi)
            .map(|i| (i, cosine(query, self.vector(i))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.tokens[i].clone(), s))
            .collect())
    }

    /// Text format: one header line of `key=value` pairs, then
    /// `token<TAB>count<TAB>v1 v2 ... vd` per vocabulary entry.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "dim={} vocab={} window={} negatives={} epochs={} min_count={} learning_rate={} seed={} threads={}\n",
            c.dim,
            self.len(),
            c.window,
            c.negatives,
            c.epochs,
            c.min_count,
            c.learning_rate,
            c.seed,
            c.threads
        );
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = write!(out, "{t}\t{}\t", self.counts[i]);
            let v: Vec<String> = self.vector(i).iter().map(|x| x.to_string()).collect();
            out.push_str(&v.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<EmbeddingTable> {
        let bad = |msg: String| Error::Artifact {
            stage: "embed".into(),
            message: msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty embedding file".into()))?;
        let fields: HashMap<&str, &str> = header.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        let get = |k: &str| -> Result<&str> { fields.get(k).copied().ok_or_else(|| bad(format!("header lacks {k}"))) };
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("bad {k}"))) };
        let config = SkipGramConfig {
            dim: num("dim")? as usize,
            window: num("window")? as usize,
            negatives: num("negatives")? as usize,
            epochs: num("epochs")? as usize,
            min_count: num("min_count")?,
            learning_rate: get("learning_rate")?
                .parse()
                .map_err(|_| bad("bad learning_rate".into()))?,
            seed: num("seed")?,
            threads: num("threads")? as usize,
        };
        let vocab = num("vocab")? as usize;
        let mut tokens = Vec::with_capacity(vocab);
        let mut counts = Vec::with_capacity(vocab);
        let mut vectors = Vec::with_capacity(vocab * config.dim);
        for (n, line) in lines.enumerate() {
            let mut parts = line.split('\t');
            let (Some(tok), Some(cnt), Some(vals)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("record {n}: expected 3 tab-separated fields")));
            };
            tokens.push(tok.to_string());
            counts.push(cnt.parse().map_err(|_| bad(format!("record {n}: bad count")))?);
            let before = vectors.len();
            for v in vals.split(' ') {
                vectors.push(
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("record {n}: bad value {v:?}")))?,
                );
            }
            if vectors.len() - before != config.dim {
                return Err(bad(format!("record {n}: expected {} values", config.dim)));
            }
        }
        if tokens.len() != vocab {
            return Err(bad(format!("header says {vocab} tokens, found {}", tokens.len())));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(EmbeddingTable {
            config,
            tokens,
            counts,
            index,
            vectors,
            oov_lookups: AtomicU64::new(0),
        })
    }
}
