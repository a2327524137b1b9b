use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoostError, FeatureMatrix, GbdtModel, ProbaModel};
use crate::evalkit::roc_auc_ovr;
use crate::impact::PriceClass;

pub const DEFAULT_MAX_SHAPLEY_FEATURES: usize = 12;

/// A model with a single real output.
pub trait ScalarModel: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarModel for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Probability of one class under a boosted model.
pub struct ClassProbability<'a> {
    pub model: &'a GbdtModel,
    pub class: PriceClass,
}

impl ScalarModel for ClassProbability<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        self.model.predict_proba_row(x)[self.class.index()]
    }
}

/// Exact Shapley values of `model` at `x`. The value of a coalition is the mean model
/// output over `background` rows with the coalition's features taken from `x`.
pub fn shapley_brute(
    model: &dyn ScalarModel,
    x: &[f64],
    background: &[Vec<f64>],
    max_features: usize,
) -> Result<Vec<f64>, BoostError> {
    let d = x.len();
    if d > max_features {
        return Err(BoostError::TooManyFeatures {
            got: d,
            max: max_features,
        });
    }
    if background.is_empty() {
        return Err(BoostError::InvalidConfig(
            "background sample is empty".into(),
        ));
    }
    if let Some(b) = background.iter().find(|b| b.len() != d) {
        return Err(BoostError::LengthMismatch {
            what: "background row",
            expected: d,
            got: b.len(),
        });
    }
    let values: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![0.0; d];
            let sum: f64 = background
                .iter()
                .map(|b| {
                    for j in 0..d {
                        z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                    }
                    model.eval(&z)
                })
                .sum();
            sum / background.len() as f64
        })
        .collect();
    let fact: Vec<f64> = (0..=d)
        .scan(1.0, |f, i| {
            if i > 0 {
                *f *= i as f64;
            }
            Some(*f)
        })
        .collect();
    let weight = |s: usize| fact[s] * fact[d - s - 1] / fact[d];
    Ok((0..d)
        .map(|j| {
            (0..1usize << d)
                .filter(|m| m >> j & 1 == 0)
                .map(|m| weight(m.count_ones() as usize) * (values[m | 1 << j] - values[m]))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    /// Mean drop of the weighted one-vs-rest AUC.
    pub importance: f64,
    pub std: f64,
}

fn weighted_auc(
    model: &dyn ProbaModel,
    x: &FeatureMatrix,
    y: &[PriceClass],
) -> Result<f64, BoostError> {
    let p = model.predict_proba(x)?;
    roc_auc_ovr(p.view(), y)
        .map_err(|e| BoostError::InvalidConfig(e.to_string()))?
        .weighted
        .ok_or_else(|| BoostError::InvalidConfig("labels contain a single class".into()))
}

/// Importance of each feature as the mean AUC drop over `n_repeats` shuffles of its column.
pub fn permutation_importance(
    model: &dyn ProbaModel,
    x: &FeatureMatrix,
    y: &[PriceClass],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<Importance>, BoostError> {
    let groups: Vec<Vec<usize>> = (0..x.n_cols()).map(|j| vec![j]).collect();
    permutation_importance_grouped(model, x, y, &groups, n_repeats, seed)
}

/// Shuffles each group's columns jointly (one row permutation per group and repeat).
pub fn permutation_importance_grouped(
    model: &dyn ProbaModel,
    x: &FeatureMatrix,
    y: &[PriceClass],
    groups: &[Vec<usize>],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<Importance>, BoostError> {
    if model.schema() != x.schema() {
        return Err(BoostError::SchemaMismatch);
    }
    if n_repeats == 0 {
        return Err(BoostError::InvalidConfig(
            "n_repeats must be positive".into(),
        ));
    }
    if let Some(&j) = groups.iter().flatten().find(|&&j| j >= x.n_cols()) {
        return Err(BoostError::LengthMismatch {
            what: "column index",
            expected: x.n_cols(),
            got: j,
        });
    }
    let base = weighted_auc(model, x, y)?;
    let mut out: Vec<Importance> = groups
        .par_iter()
        .enumerate()
        .map(|(gi, cols)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(gi as u64);
            let mut perm: Vec<usize> = (0..x.n_rows()).collect();
            let drops = (0..n_repeats)
                .map(|_| {
                    perm.shuffle(&mut rng);
                    let mut shuffled = x.clone();
                    for &j in cols {
                        for (i, &src) in perm.iter().enumerate() {
                            shuffled.set_raw(i, j, x.raw(src, j));
                        }
                    }
                    Ok(base - weighted_auc(model, &shuffled, y)?)
                })
                .collect::<Result<Vec<f64>, BoostError>>()?;
            let n = drops.len() as f64;
            let mean = drops.iter().sum::<f64>() / n;
            let std = if drops.len() > 1 {
                (drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let feature = cols
                .iter()
                .map(|&j| x.schema()[j].as_str())
                .collect::<Vec<_>>()
                .join("+");
            Ok(Importance {
                feature,
                importance: mean,
                std,
            })
        })
        .collect::<Result<_, BoostError>>()?;
    out.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(out)
}
