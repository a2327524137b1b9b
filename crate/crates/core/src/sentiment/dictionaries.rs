use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SentimentError;
use crate::corpus::Polarity;

const INITIAL: &str = include_str!("../../data/initial_dictionaries.json");
const UPDATED: &str = include_str!("../../data/updated_dictionaries.json");

/// Lowercases, replaces every non-alphanumeric character with a separator and
/// splits into tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn normalize_phrase(p: &str) -> String {
    tokenize(p).join(" ")
}

/// Positive and negative keyword phrases used by the rule-based labeler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDictionaries", into = "RawDictionaries")]
pub struct KeywordDictionaries {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RawDictionaries {
    version: u32,
    positive: Vec<String>,
    negative: Vec<String>,
}

impl TryFrom<RawDictionaries> for KeywordDictionaries {
    type Error = SentimentError;
    fn try_from(raw: RawDictionaries) -> Result<Self, Self::Error> {
        KeywordDictionaries::new(raw.positive, raw.negative, raw.version)
    }
}

impl From<KeywordDictionaries> for RawDictionaries {
    fn from(d: KeywordDictionaries) -> Self {
        RawDictionaries {
            version: d.version,
            positive: d.positive.into_iter().collect(),
            negative: d.negative.into_iter().collect(),
        }
    }
}

impl KeywordDictionaries {
    pub fn new<I, J, S, T>(positive: I, negative: J, version: u32) -> Result<Self, SentimentError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let collect = |it: Vec<String>| -> Result<BTreeSet<String>, SentimentError> {
            it.into_iter()
                .map(|p| {
                    let n = normalize_phrase(&p);
                    if n.is_empty() {
                        Err(SentimentError::InvalidPhrase(p))
                    } else {
                        Ok(n)
                    }
                })
                .collect()
        };
        let positive = collect(
            positive
                .into_iter()
                .map(|s| s.as_ref().to_string())
                .collect(),
        )?;
        let negative = collect(
            negative
                .into_iter()
                .map(|s| s.as_ref().to_string())
                .collect(),
        )?;
        if let Some(p) = positive.intersection(&negative).next() {
            return Err(SentimentError::OverlappingPhrase(p.clone()));
        }
        Ok(KeywordDictionaries {
            positive,
            negative,
            version,
        })
    }

    /// Seed dictionaries: the keywords the first labeling pass starts from.
    pub fn initial() -> Self {
        serde_json::from_str(INITIAL).expect("bundled initial dictionaries are valid")
    }

    /// Seed dictionaries extended with the keywords surfaced by one bootstrap round.
    pub fn updated() -> Self {
        serde_json::from_str(UPDATED).expect("bundled updated dictionaries are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SentimentError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SentimentError::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SentimentError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SentimentError::Format(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn positive(&self) -> &BTreeSet<String> {
        &self.positive
    }
    pub fn negative(&self) -> &BTreeSet<String> {
        &self.negative
    }
    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn contains(&self, phrase: &str) -> bool {
        let p = normalize_phrase(phrase);
        self.positive.contains(&p) || self.negative.contains(&p)
    }

    /// Returns a copy with `positive`/`negative` phrases merged in and the version bumped.
    pub fn merged<S: AsRef<str>>(
        &self,
        positive: &[S],
        negative: &[S],
    ) -> Result<Self, SentimentError> {
        let pos: Vec<String> = self
            .positive
            .iter()
            .cloned()
            .chain(positive.iter().map(|s| s.as_ref().to_string()))
            .collect();
        let neg: Vec<String> = self
            .negative
            .iter()
            .cloned()
            .chain(negative.iter().map(|s| s.as_ref().to_string()))
            .collect();
        KeywordDictionaries::new(pos, neg, self.version + 1)
    }
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Precompiled matcher over a pair of dictionaries.
#[derive(Debug, Clone)]
pub struct RuleLabeler {
    positive: Vec<Vec<String>>,
    negative: Vec<Vec<String>>,
}

impl RuleLabeler {
    pub fn new(dicts: &KeywordDictionaries) -> Self {
        let split = |s: &BTreeSet<String>| {
            s.iter()
                .map(|p| p.split(' ').map(str::to_string).collect())
                .collect()
        };
        RuleLabeler {
            positive: split(&dicts.positive),
            negative: split(&dicts.negative),
        }
    }

    pub fn label_tokens(&self, tokens: &[String]) -> Polarity {
        if self.negative.iter().any(|p| contains_phrase(tokens, p)) {
            Polarity::Negative
        } else if self.positive.iter().any(|p| contains_phrase(tokens, p)) {
            Polarity::Positive
        } else {
            Polarity::Neutral
        }
    }

    pub fn label(&self, text: &str) -> Result<Polarity, SentimentError> {
        if text.trim().is_empty() {
            return Err(SentimentError::EmptyText);
        }
        Ok(self.label_tokens(&tokenize(text)))
    }
}

/// Whole-word, case-insensitive keyword labeling; negative matches take precedence.
pub fn label_rule_based(
    text: &str,
    dicts: &KeywordDictionaries,
) -> Result<Polarity, SentimentError> {
    RuleLabeler::new(dicts).label(text)
}
