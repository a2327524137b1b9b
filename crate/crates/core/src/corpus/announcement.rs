use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Announcement sentiment class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Polarity> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(format!("unknown polarity '{other}'")),
        }
    }
}

/// Clinical trial phase named in an announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    I,
    II,
    III,
    IV,
    Unknown,
}

impl Phase {
    /// Ordinal used as a numeric feature; `None` for `Unknown`.
    pub fn ordinal(self) -> Option<u8> {
        match self {
            Phase::I => Some(1),
            Phase::II => Some(2),
            Phase::III => Some(3),
            Phase::IV => Some(4),
            Phase::Unknown => None,
        }
    }
}

/// A 3-character ICD-10 category code such as `C50`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Icd10(String);

impl Icd10 {
    pub fn new(code: &str) -> Result<Self, String> {
        let code = code.trim().to_ascii_uppercase();
        let b = code.as_bytes();
        if b.len() == 3
            && b[0].is_ascii_uppercase()
            && b[1].is_ascii_digit()
            && b[2].is_ascii_digit()
        {
            Ok(Icd10(code))
        } else {
            Err(format!(
                "invalid ICD-10 category '{code}' (expected letter + 2 digits)"
            ))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Chapter letter, used for one-hot encoding.
    pub fn chapter(&self) -> char {
        self.0.as_bytes()[0] as char
    }
}

impl TryFrom<String> for Icd10 {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Icd10::new(&value)
    }
}

impl From<Icd10> for String {
    fn from(value: Icd10) -> Self {
        value.0
    }
}

impl fmt::Display for Icd10 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One trial-result release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Announcement {
    pub id: String,
    pub ticker: String,
    pub date: NaiveDate,
    pub text: String,
    #[serde(default)]
    pub icd10: Vec<Icd10>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
}

/// Parses announcements from JSONL. Blank lines are skipped; line numbers are 1-based.
pub fn parse_announcements<R: BufRead>(reader: R) -> Result<Vec<Announcement>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ann: Announcement = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(ann.id.clone()) {
            return Err(CorpusError::DuplicateId(ann.id));
        }
        out.push(ann);
    }
    Ok(out)
}

pub fn load_announcements(path: impl AsRef<Path>) -> Result<Vec<Announcement>, CorpusError> {
    let file = File::open(path.as_ref())?;
    parse_announcements(BufReader::new(file))
}

pub fn write_announcements(
    path: impl AsRef<Path>,
    anns: &[Announcement],
) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for a in anns {
        serde_json::to_writer(&mut w, a).map_err(|e| CorpusError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
