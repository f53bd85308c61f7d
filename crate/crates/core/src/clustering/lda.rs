//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Documents are token lists (resume phrase sequences). New documents are
//! folded in against the frozen topic-word counts with a seeded sampler.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    /// Symmetric document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Gibbs sweeps used when inferring a new document's topic mixture.
    pub fold_in_iterations: usize,
}

impl LdaConfig {
    pub fn new(topics: usize, seed: u64) -> Self {
        Self {
            topics,
            alpha: None,
            beta: 0.01,
            iterations: 500,
            seed,
            fold_in_iterations: 50,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub fold_in_iterations: usize,
    pub vocab: Vec<String>,
    /// `topics * vocab.len()`, row-major by topic.
    pub topic_word: Vec<u32>,
    pub topic_totals: Vec<u64>,
    /// Per training document, per topic assignment counts.
    pub doc_topic: Vec<Vec<u32>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn sample_discrete(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn lda_fit(docs: &[Vec<String>], cfg: &LdaConfig) -> Result<LdaModel> {
    if cfg.topics < 2 {
        return Err(Error::config("LDA needs at least 2 topics"));
    }
    if docs.is_empty() {
        return Err(Error::Training("empty document corpus".into()));
    }
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::Training("every document is empty".into()));
    }
    let vocab: Vec<String> = docs
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let n_words = vocab.len();
    let k_topics = cfg.topics;
    let alpha = cfg.alpha();
    let beta = cfg.beta;
    let v_beta = n_words as f64 * beta;

    let words: Vec<Vec<usize>> = docs.iter().map(|d| d.iter().map(|w| index[w]).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut topic_word = vec![0u32; k_topics * n_words];
    let mut topic_totals = vec![0u64; k_topics];
    let mut doc_topic = vec![vec![0u32; k_topics]; docs.len()];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in words.iter().enumerate() {
        let zd: Vec<usize> = doc
            .iter()
            .map(|&w| {
                let k = rng.random_range(0..k_topics);
                topic_word[k * n_words + w] += 1;
                topic_totals[k] += 1;
                doc_topic[d][k] += 1;
                k
            })
            .collect();
        z.push(zd);
    }

    let mut weights = vec![0.0; k_topics];
    for _ in 0..cfg.iterations {
        for (d, doc) in words.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                topic_word[old * n_words + w] -= 1;
                topic_totals[old] -= 1;
                doc_topic[d][old] -= 1;
                for k in 0..k_topics {
                    weights[k] = (doc_topic[d][k] as f64 + alpha) * (topic_word[k * n_words + w] as f64 + beta)
                        / (topic_totals[k] as f64 + v_beta);
                }
                let new = sample_discrete(&weights, &mut rng);
                topic_word[new * n_words + w] += 1;
                topic_totals[new] += 1;
                doc_topic[d][new] += 1;
                z[d][i] = new;
            }
        }
    }

    Ok(LdaModel {
        topics: k_topics,
        alpha,
        beta,
        seed: cfg.seed,
        fold_in_iterations: cfg.fold_in_iterations,
        vocab,
        topic_word,
        topic_totals,
        doc_topic,
        index,
    })
}

impl LdaModel {
    /// Builds a model from explicit topic-word counts (row-major by topic).
    pub fn from_counts(
        vocab: Vec<String>,
        topic_word: Vec<u32>,
        alpha: f64,
        beta: f64,
        seed: u64,
        fold_in_iterations: usize,
    ) -> Result<LdaModel> {
        if vocab.is_empty() || topic_word.len() % vocab.len() != 0 {
            return Err(Error::Shape {
                expected: vocab.len(),
                found: topic_word.len(),
            });
        }
        let topics = topic_word.len() / vocab.len();
        let topic_totals = topic_word
            .chunks(vocab.len())
            .map(|row| row.iter().map(|&c| c as u64).sum())
            .collect();
        let mut model = LdaModel {
            topics,
            alpha,
            beta,
            seed,
            fold_in_iterations,
            vocab,
            topic_word,
            topic_totals,
            doc_topic: Vec::new(),
            index: HashMap::new(),
        };
        model.rebuild_index();
        Ok(model)
    }

    /// Restores the token lookup after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    fn count(&self, topic: usize, word: usize) -> u32 {
        self.topic_word[topic * self.vocab.len() + word]
    }

    pub fn topic_word_distribution(&self, topic: usize) -> Vec<f64> {
        let denom = self.topic_totals[topic] as f64 + self.vocab.len() as f64 * self.beta;
        (0..self.vocab.len())
            .map(|w| (self.count(topic, w) as f64 + self.beta) / denom)
            .collect()
    }

    /// Posterior mean mixture of a training document.
    pub fn doc_topic_distribution(&self, doc: usize) -> Vec<f64> {
        theta(
            &self.doc_topic[doc].iter().map(|&c| c as f64).collect::<Vec<_>>(),
            self.alpha,
        )
    }

    /// Topic mixture of a new document by Gibbs fold-in; `None` when no token is in vocabulary.
    pub fn infer<S: AsRef<str>>(&self, doc: &[S]) -> Option<Vec<f64>> {
        let words: Vec<usize> = doc.iter().filter_map(|w| self.index.get(w.as_ref()).copied()).collect();
        if words.is_empty() {
            return None;
        }
        let k_topics = self.topics;
        let v_beta = self.vocab.len() as f64 * self.beta;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut counts = vec![0u32; k_topics];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let k = rng.random_range(0..k_topics);
                counts[k] += 1;
                k
            })
            .collect();
        let sweeps = self.fold_in_iterations;
        let burn_in = sweeps / 2;
        let mut accumulated = vec![0.0; k_topics];
        let mut kept = 0usize;
        let mut weights = vec![0.0; k_topics];
        for sweep in 0..sweeps {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                for k in 0..k_topics {
                    weights[k] = (counts[k] as f64 + self.alpha) * (self.count(k, w) as f64 + self.beta)
                        / (self.topic_totals[k] as f64 + v_beta);
                }
                z[i] = sample_discrete(&weights, &mut rng);
                counts[z[i]] += 1;
            }
            if sweep >= burn_in {
                for k in 0..k_topics {
                    accumulated[k] += counts[k] as f64;
                }
                kept += 1;
            }
        }
        if kept == 0 {
            accumulated = counts.iter().map(|&c| c as f64).collect();
        } else {
            accumulated.iter_mut().for_each(|a| *a /= kept as f64);
        }
        Some(theta(&accumulated, self.alpha))
    }

    /// Most probable topic of a new document; lowest id on ties, `None` for
    /// documents with no known tokens.
    pub fn dominant_topic<S: AsRef<str>>(&self, doc: &[S]) -> Option<usize> {
        self.infer(doc).map(|theta| argmax(&theta))
    }
}

fn theta(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + counts.len() as f64 * alpha;
    counts.iter().map(|c| (c + alpha) / total).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs_from(spec: &[&[&str]]) -> Vec<Vec<String>> {
        spec.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn two_disjoint_vocabularies_separate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = ["a1", "a2", "a3", "a4", "a5"];
        let b = ["b1", "b2", "b3", "b4", "b5"];
        let docs: Vec<Vec<String>> = (0..60)
            .map(|i| {
                let src = if i % 2 == 0 { &a } else { &b };
                (0..12).map(|_| src[rng.random_range(0..5)].to_string()).collect()
            })
            .collect();
        let cfg = LdaConfig {
            alpha: Some(0.1),
            iterations: 200,
            ..LdaConfig::new(2, 1)
        };
        let m = lda_fit(&docs, &cfg).unwrap();
        let mass = |words: &[&str], topic: usize| -> f64 {
            let ids: Vec<usize> = words
                .iter()
                .map(|w| m.vocab.iter().position(|v| v == w).unwrap())
                .collect();
            let in_topic: u32 = ids.iter().map(|&w| m.count(topic, w)).sum();
            let total: u32 = ids.iter().map(|&w| (0..2).map(|k| m.count(k, w)).sum::<u32>()).sum();
            in_topic as f64 / total as f64
        };
        let ta = if mass(&a, 0) >= 0.9 { 0 } else { 1 };
        assert!(mass(&a, ta) >= 0.9);
        assert!(mass(&b, 1 - ta) >= 0.9);
    }

    #[test]
    fn zero_iterations_keeps_random_init() {
        let docs = docs_from(&[&["x", "y", "x"], &["z"]]);
        let cfg = LdaConfig {
            iterations: 0,
            ..LdaConfig::new(3, 42)
        };
        let m = lda_fit(&docs, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut expected = vec![0u32; 3 * 3];
        for doc in &docs {
            for w in doc {
                let k = rng.random_range(0..3);
                expected[k * 3 + m.vocab.iter().position(|v| v == w).unwrap()] += 1;
            }
        }
        assert_eq!(m.topic_word, expected);
    }

    #[test]
    fn single_token_posterior_is_smoothed_count() {
        let docs = docs_from(&[&["w"]]);
        let cfg = LdaConfig {
            alpha: Some(0.5),
            iterations: 10,
            ..LdaConfig::new(2, 3)
        };
        let m = lda_fit(&docs, &cfg).unwrap();
        let z = if m.doc_topic[0][0] == 1 { 0 } else { 1 };
        let theta = m.doc_topic_distribution(0);
        assert!((theta[z] - 1.5 / 2.0).abs() < 1e-12);
        assert!((theta[1 - z] - 0.5 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            lda_fit(&docs_from(&[&[], &[]]), &LdaConfig::new(2, 0)),
            Err(Error::Training(_))
        ));
        assert!(matches!(
            lda_fit(&docs_from(&[&["a"]]), &LdaConfig::new(1, 0)),
            Err(Error::Config(_))
        ));
    }

    fn planted() -> LdaModel {
        // topic t owns words 3t..3t+3
        let vocab: Vec<String> = (0..9).map(|i| format!("w{i}")).collect();
        let mut counts = vec![0u32; 3 * 9];
        for t in 0..3 {
            for w in 3 * t..3 * t + 3 {
                counts[t * 9 + w] = 100;
            }
        }
        LdaModel::from_counts(vocab, counts, 0.1, 0.01, 7, 50).unwrap()
    }

    #[test]
    fn planted_topics_are_recovered() {
        let m = planted();
        for t in 0..3 {
            let doc: Vec<String> = (0..6).map(|i| format!("w{}", 3 * t + i % 3)).collect();
            assert_eq!(m.dominant_topic(&doc), Some(t));
        }
    }

    #[test]
    fn unknown_document_has_no_topic() {
        assert_eq!(planted().dominant_topic(&["nope", "never"]), None);
        assert_eq!(planted().dominant_topic::<&str>(&[]), None);
    }

    #[test]
    fn inferred_distribution_is_valid_and_argmax_agrees() {
        let m = planted();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let doc: Vec<String> = (0..rng.random_range(1..10))
                .map(|_| format!("w{}", rng.random_range(0..9)))
                .collect();
            let theta = m.infer(&doc).unwrap();
            assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(theta.iter().all(|&p| p >= 0.0));
            let oracle = (0..3)
                .max_by(|&a, &b| theta[a].total_cmp(&theta[b]).then(b.cmp(&a)))
                .unwrap();
            assert_eq!(m.dominant_topic(&doc), Some(oracle));
        }
        for t in 0..3 {
            assert!((m.topic_word_distribution(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_and_serializable() {
        let docs = docs_from(&[&["a", "b", "c"], &["c", "d"], &["a", "d", "d"]]);
        let cfg = LdaConfig {
            iterations: 20,
            ..LdaConfig::new(2, 5)
        };
        let m1 = lda_fit(&docs, &cfg).unwrap();
        assert_eq!(m1, lda_fit(&docs, &cfg).unwrap());
        let mut back: LdaModel = serde_json::from_str(&serde_json::to_string(&m1).unwrap()).unwrap();
        back.rebuild_index();
        assert_eq!(back.infer(&["a", "d"]), m1.infer(&["a", "d"]));
        for d in 0..3 {
            assert!((m1.doc_topic_distribution(d).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
