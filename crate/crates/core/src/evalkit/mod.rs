//! Evaluation protocol: repeated stratified holdout and one-vs-rest ROC AUC, plus a
//! seeded synthetic market for end-to-end checks.

mod compare;
mod synth;

use std::collections::BTreeMap;
use std::fmt::Debug;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impact::{midranks, PriceClass, N_CLASSES};

pub use compare::{
    evaluate_repeats, summarize, AucSummary, CompareConfig, ModelKind, RepeatScores,
};
pub use synth::{
    synth_generate, synth_graph_task, EffectSpec, EventTruth, GraphTask, GraphTaskConfig,
    SynthConfig, SynthDataset, SynthError, SynthTruth, TRUTH_FILE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("class {class} has {count} members, need at least 3")]
    ClassTooSmall { class: String, count: usize },
    #[error("{0} rows of scores for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("invalid split parameters: {0}")]
    InvalidPlan(String),
    #[error("model training failed: {0}")]
    Model(String),
}

pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.67;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn train_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        self.train.iter().for_each(|&i| m[i] = true);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    pub repeats: Vec<Split>,
}

pub fn stratified_splits<L: Ord + Clone + Debug>(
    labels: &[L],
    seed: u64,
) -> Result<SplitPlan, EvalError> {
    stratified_splits_with(labels, seed, DEFAULT_REPEATS, DEFAULT_TRAIN_FRACTION)
}

/// Each repeat draws `round(n_c * (1 - train_fraction))` test members from every class.
pub fn stratified_splits_with<L: Ord + Clone + Debug>(
    labels: &[L],
    seed: u64,
    n_repeats: usize,
    train_fraction: f64,
) -> Result<SplitPlan, EvalError> {
    if n_repeats == 0 || !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidPlan(format!(
            "repeats={n_repeats}, train_fraction={train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < 3) {
        return Err(EvalError::ClassTooSmall {
            class: format!("{class:?}"),
            count: members.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let repeats = (0..n_repeats)
        .map(|_| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for members in by_class.values() {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                let n_test = ((m.len() as f64 * (1.0 - train_fraction)).round() as usize)
                    .clamp(1, m.len() - 1);
                test.extend_from_slice(&m[..n_test]);
                train.extend_from_slice(&m[n_test..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect();
    Ok(SplitPlan {
        seed,
        train_fraction,
        repeats,
    })
}

/// Binary ROC AUC via the rank statistic; ties count one half.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let r: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| r)
        .sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((r - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    /// `None` for classes that are absent from the labels (or cover every row).
    pub per_class: [Option<f64>; N_CLASSES],
    pub support: [usize; N_CLASSES],
    /// Support-weighted mean over the evaluated classes.
    pub weighted: Option<f64>,
}

impl AucReport {
    pub fn excluded(&self) -> Vec<PriceClass> {
        PriceClass::ALL
            .iter()
            .copied()
            .filter(|c| self.per_class[c.index()].is_none())
            .collect()
    }
}

pub fn roc_auc_ovr(
    probs: ArrayView2<'_, f64>,
    labels: &[PriceClass],
) -> Result<AucReport, EvalError> {
    if probs.nrows() != labels.len() || probs.ncols() != N_CLASSES {
        return Err(EvalError::LengthMismatch(probs.nrows(), labels.len()));
    }
    let mut per_class = [None; N_CLASSES];
    let mut support = [0; N_CLASSES];
    let (mut num, mut den) = (0.0, 0.0);
    for c in PriceClass::ALL {
        let k = c.index();
        let positive: Vec<bool> = labels.iter().map(|l| *l == c).collect();
        support[k] = positive.iter().filter(|p| **p).count();
        let scores: Vec<f64> = probs.column(k).to_vec();
        per_class[k] = binary_auc(&scores, &positive);
        if let Some(a) = per_class[k] {
            num += a * support[k] as f64;
            den += support[k] as f64;
        }
    }
    Ok(AucReport {
        per_class,
        support,
        weighted: (den > 0.0).then(|| num / den),
    })
}
