use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, SentimentError};
use crate::corpus::Polarity;

const CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BowConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Stop once the largest gradient component falls below this.
    pub tolerance: f64,
    /// n-grams seen in fewer documents are dropped from the vocabulary.
    pub min_doc_count: usize,
    pub seed: u64,
}

impl Default for BowConfig {
    fn default() -> Self {
        BowConfig {
            max_epochs: 300,
            learning_rate: 2.0,
            l2: 1e-3,
            tolerance: 1e-6,
            min_doc_count: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub final_loss: f64,
}

/// Multinomial logistic regression over unigram + bigram counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowModel {
    vocabulary: BTreeMap<String, usize>,
    weights: Vec<[f64; CLASSES]>,
    bias: [f64; CLASSES],
    pub training_meta: TrainingMeta,
}

/// Unigrams followed by space-joined bigrams.
pub fn ngrams(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();
    out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

fn featurize(vocab: &BTreeMap<String, usize>, text: &str) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for g in ngrams(&tokenize(text)) {
        if let Some(&i) = vocab.get(&g) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    counts.into_iter().map(|(i, c)| (i, c / norm)).collect()
}

fn softmax(z: [f64; CLASSES]) -> [f64; CLASSES] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

impl BowModel {
    fn scores(&self, x: &[(usize, f64)]) -> [f64; CLASSES] {
        let mut z = self.bias;
        for &(i, v) in x {
            for (zc, w) in z.iter_mut().zip(self.weights[i]) {
                *zc += w * v;
            }
        }
        z
    }

    pub fn predict_proba(&self, text: &str) -> [f64; CLASSES] {
        softmax(self.scores(&featurize(&self.vocabulary, text)))
    }

    pub fn predict(&self, text: &str) -> Polarity {
        let p = self.predict_proba(text);
        let mut best = 0;
        for c in 1..CLASSES {
            if p[c] > p[best] {
                best = c;
            }
        }
        Polarity::from_index(best).expect("class index in range")
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[[f64; CLASSES]] {
        &self.weights
    }

    pub fn bias(&self) -> [f64; CLASSES] {
        self.bias
    }
}

/// Full-batch gradient descent on the L2-regularized softmax cross-entropy.
/// Documents are L2-normalized count vectors. The solver is deterministic; the seed
/// is only recorded with the model.
pub fn train_bow_classifier(
    corpus: &[(String, Polarity)],
    config: &BowConfig,
) -> Result<BowModel, SentimentError> {
    let mut present = [false; CLASSES];
    for (_, y) in corpus {
        present[y.index()] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(SentimentError::DegenerateLabels);
    }

    let mut doc_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (text, _) in corpus {
        let mut grams = ngrams(&tokenize(text));
        grams.sort();
        grams.dedup();
        for g in grams {
            *doc_counts.entry(g).or_default() += 1;
        }
    }
    let vocabulary: BTreeMap<String, usize> = doc_counts
        .into_iter()
        .filter(|(_, c)| *c >= config.min_doc_count)
        .enumerate()
        .map(|(i, (g, _))| (g, i))
        .collect();
    if vocabulary.is_empty() {
        return Err(SentimentError::EmptyVocabulary);
    }

    let docs: Vec<Vec<(usize, f64)>> = corpus
        .iter()
        .map(|(t, _)| featurize(&vocabulary, t))
        .collect();
    let n = corpus.len() as f64;
    let mut model = BowModel {
        weights: vec![[0.0; CLASSES]; vocabulary.len()],
        vocabulary,
        bias: [0.0; CLASSES],
        training_meta: TrainingMeta {
            epochs: 0,
            seed: config.seed,
            final_loss: f64::NAN,
        },
    };

    let mut grad_w = vec![[0.0; CLASSES]; model.weights.len()];
    for epoch in 0..config.max_epochs {
        grad_w.iter_mut().for_each(|g| *g = [0.0; CLASSES]);
        let mut grad_b = [0.0; CLASSES];
        let mut loss = 0.0;
        for (x, (_, y)) in docs.iter().zip(corpus) {
            let p = softmax(model.scores(x));
            loss -= p[y.index()].max(1e-300).ln();
            for c in 0..CLASSES {
                let r = p[c] - if c == y.index() { 1.0 } else { 0.0 };
                grad_b[c] += r / n;
                for &(i, v) in x {
                    grad_w[i][c] += r * v / n;
                }
            }
        }
        loss /= n;
        let mut max_g = grad_b.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (g, w) in grad_w.iter_mut().zip(&model.weights) {
            for c in 0..CLASSES {
                g[c] += config.l2 * w[c];
                loss += 0.5 * config.l2 * w[c] * w[c];
                max_g = max_g.max(g[c].abs());
            }
        }
        model.training_meta.epochs = epoch + 1;
        model.training_meta.final_loss = loss;
        if !loss.is_finite() {
            return Err(SentimentError::Diverged);
        }
        if max_g < config.tolerance {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            for c in 0..CLASSES {
                w[c] -= config.learning_rate * g[c];
            }
        }
        for (b, g) in model.bias.iter_mut().zip(&grad_b) {
            *b -= config.learning_rate * g;
        }
    }
    Ok(model)
}
