//! Announcement polarity labeling.
//!
//! Keyword dictionaries drive a rule-based labeler. A bag-of-n-grams logistic
//! regression is trained on the rule labels and its disagreements with them are
//! surfaced together with candidate keywords, which a reviewer merges into the next
//! dictionary version.

mod bow;
mod dictionaries;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Polarity;

pub use bow::{ngrams, train_bow_classifier, BowConfig, BowModel, TrainingMeta};
pub use dictionaries::{label_rule_based, tokenize, KeywordDictionaries, RuleLabeler};

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("announcement text is empty")]
    EmptyText,
    #[error("invalid keyword phrase '{0}'")]
    InvalidPhrase(String),
    #[error("phrase '{0}' is in both dictionaries")]
    OverlappingPhrase(String),
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("classifier training diverged")]
    Diverged,
    #[error("label sets cover different ids (first difference: '{0}')")]
    IdMismatch(String),
    #[error("no divergent examples supplied")]
    EmptyInput,
    #[error("dictionary format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Agreement summary between two labelings of the same announcements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub n_divergences: usize,
    pub n_coinciding_positive: usize,
    pub n_coinciding_negative: usize,
    pub n_coinciding_neutral: usize,
    pub divergent_ids: Vec<String>,
}

pub fn divergence_report(
    labels_a: &BTreeMap<String, Polarity>,
    labels_b: &BTreeMap<String, Polarity>,
) -> Result<DivergenceReport, SentimentError> {
    let ka: BTreeSet<&String> = labels_a.keys().collect();
    let kb: BTreeSet<&String> = labels_b.keys().collect();
    if let Some(id) = ka.symmetric_difference(&kb).next() {
        return Err(SentimentError::IdMismatch((*id).clone()));
    }
    let mut r = DivergenceReport {
        n_divergences: 0,
        n_coinciding_positive: 0,
        n_coinciding_negative: 0,
        n_coinciding_neutral: 0,
        divergent_ids: Vec::new(),
    };
    for (id, a) in labels_a {
        let b = labels_b[id];
        match (*a == b, a) {
            (false, _) => {
                r.n_divergences += 1;
                r.divergent_ids.push(id.clone());
            }
            (true, Polarity::Positive) => r.n_coinciding_positive += 1,
            (true, Polarity::Negative) => r.n_coinciding_negative += 1,
            (true, Polarity::Neutral) => r.n_coinciding_neutral += 1,
        }
    }
    Ok(r)
}

/// An announcement the rule labeler and the learned classifier disagree on.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergentItem {
    pub text: String,
    pub rule_label: Polarity,
    pub model_label: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSuggestion {
    pub phrase: String,
    pub polarity: Polarity,
    /// Smoothed document-frequency log-odds of the phrase in texts the model put in
    /// `polarity` versus the other divergent texts.
    pub score: f64,
    pub doc_count: usize,
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "is",
    "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "with",
];

fn is_stopword_phrase(p: &str) -> bool {
    p.split(' ')
        .all(|t| STOPWORDS.contains(&t) || t.chars().all(|c| c.is_ascii_digit()))
}

fn log_odds(df: usize, n: usize) -> f64 {
    ((df as f64 + 0.5) / ((n - df) as f64 + 0.5)).ln()
}

/// Ranks unigrams and bigrams of divergent texts by class-conditional log-odds for
/// the classes a keyword can vote for (positive, negative). Phrases already in the
/// dictionaries and stopword-only phrases are excluded.
pub fn suggest_keywords(
    divergent: &[DivergentItem],
    dicts: &KeywordDictionaries,
    k: usize,
) -> Result<Vec<KeywordSuggestion>, SentimentError> {
    if divergent.is_empty() {
        return Err(SentimentError::EmptyInput);
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let docs: Vec<BTreeSet<String>> = divergent
        .iter()
        .map(|d| ngrams(&tokenize(&d.text)).into_iter().collect())
        .collect();
    let mut best: BTreeMap<String, KeywordSuggestion> = BTreeMap::new();
    for class in [Polarity::Negative, Polarity::Positive] {
        let in_class: Vec<bool> = divergent.iter().map(|d| d.model_label == class).collect();
        let n_c = in_class.iter().filter(|b| **b).count();
        if n_c == 0 {
            continue;
        }
        let n_r = divergent.len() - n_c;
        let mut df: BTreeMap<&String, (usize, usize)> = BTreeMap::new();
        for (doc, inc) in docs.iter().zip(&in_class) {
            for g in doc {
                let e = df.entry(g).or_default();
                if *inc {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        for (phrase, (dc, dr)) in df {
            if dc == 0 || dicts.contains(phrase) || is_stopword_phrase(phrase) {
                continue;
            }
            let score = log_odds(dc, n_c) - log_odds(dr, n_r);
            let better = best.get(phrase).is_none_or(|prev| score > prev.score);
            if better {
                best.insert(
                    phrase.clone(),
                    KeywordSuggestion {
                        phrase: phrase.clone(),
                        polarity: class,
                        score,
                        doc_count: dc,
                    },
                );
            }
        }
    }
    let mut out: Vec<KeywordSuggestion> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.doc_count.cmp(&a.doc_count))
            .then(a.phrase.cmp(&b.phrase))
    });
    out.truncate(k);
    Ok(out)
}

/// Outcome of one labeling pass plus classifier cross-check.
#[derive(Debug, Clone)]
pub struct BootstrapRound {
    pub rule_labels: BTreeMap<String, Polarity>,
    pub model_labels: BTreeMap<String, Polarity>,
    pub model: BowModel,
    pub report: DivergenceReport,
    pub suggestions: Vec<KeywordSuggestion>,
}

/// Labels `docs` (id, text) with `dicts`, trains the classifier on those labels,
/// compares, and proposes up to `k` keywords from the divergent texts.
pub fn bootstrap_round(
    docs: &[(String, String)],
    dicts: &KeywordDictionaries,
    config: &BowConfig,
    k: usize,
) -> Result<BootstrapRound, SentimentError> {
    let labeler = RuleLabeler::new(dicts);
    let rule: Vec<Polarity> = docs
        .par_iter()
        .map(|(_, t)| labeler.label(t))
        .collect::<Result<_, _>>()?;
    let corpus: Vec<(String, Polarity)> = docs
        .iter()
        .zip(&rule)
        .map(|((_, t), y)| (t.clone(), *y))
        .collect();
    let model = train_bow_classifier(&corpus, config)?;
    let predicted: Vec<Polarity> = docs.par_iter().map(|(_, t)| model.predict(t)).collect();

    let rule_labels: BTreeMap<String, Polarity> = docs
        .iter()
        .zip(&rule)
        .map(|((id, _), y)| (id.clone(), *y))
        .collect();
    let model_labels: BTreeMap<String, Polarity> = docs
        .iter()
        .zip(&predicted)
        .map(|((id, _), y)| (id.clone(), *y))
        .collect();
    let report = divergence_report(&rule_labels, &model_labels)?;
    let divergent: Vec<DivergentItem> = docs
        .iter()
        .zip(rule.iter().zip(&predicted))
        .filter(|(_, (r, m))| r != m)
        .map(|((_, t), (r, m))| DivergentItem {
            text: t.clone(),
            rule_label: *r,
            model_label: *m,
        })
        .collect();
    let suggestions = if divergent.is_empty() {
        Vec::new()
    } else {
        suggest_keywords(&divergent, dicts, k)?
    };
    Ok(BootstrapRound {
        rule_labels,
        model_labels,
        model,
        report,
        suggestions,
    })
}
