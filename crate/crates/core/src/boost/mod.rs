//! Gradient-boosted trees, a random-forest baseline, the GCN + GBDT ensemble and
//! feature attribution.

mod ensemble;
mod explain;
mod forest;
mod gbdt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::impact::{PriceClass, N_CLASSES};

pub use ensemble::{gcn_columns, train_ensemble, EnsembleConfig, EnsembleModel};
pub use explain::{
    permutation_importance, permutation_importance_grouped, shapley_brute, ClassProbability,
    Importance, ScalarModel, DEFAULT_MAX_SHAPLEY_FEATURES,
};
pub use forest::{
    train_random_forest, ClassificationTree, ForestConfig, MaxFeatures, RandomForest, TreeConfig,
};
pub use gbdt::{train_gbdt, GbdtConfig, GbdtModel, RegressionTree};

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("training labels contain fewer than two classes")]
    DegenerateLabels,
    #[error("feature matrix has no columns")]
    EmptyFeatures,
    #[error("need at least {needed} training rows, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature schema does not match the model")]
    SchemaMismatch,
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("value at row {row}, column {col} is infinite")]
    NonFinite { row: usize, col: usize },
    #[error("{got} features exceed the exact-enumeration limit of {max}")]
    TooManyFeatures { got: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major feature table with named columns. Missing values are stored as NaN and
/// surface as `None` through the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    schema: Vec<String>,
    n_rows: usize,
    #[serde(with = "nan_as_null")]
    data: Vec<f64>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| if x.is_nan() { None } else { Some(*x) }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

impl FeatureMatrix {
    pub fn from_rows(schema: Vec<String>, rows: &[Vec<Option<f64>>]) -> Result<Self, BoostError> {
        let d = schema.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(BoostError::LengthMismatch {
                    what: "row width",
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend(row.iter().map(|v| v.unwrap_or(f64::NAN)));
        }
        Self::from_raw(schema, rows.len(), data)
    }

    /// Dense values where NaN marks a missing entry.
    pub fn from_array(schema: Vec<String>, values: &Array2<f64>) -> Result<Self, BoostError> {
        if values.ncols() != schema.len() {
            return Err(BoostError::LengthMismatch {
                what: "columns",
                expected: schema.len(),
                got: values.ncols(),
            });
        }
        Self::from_raw(schema, values.nrows(), values.iter().copied().collect())
    }

    fn from_raw(schema: Vec<String>, n_rows: usize, data: Vec<f64>) -> Result<Self, BoostError> {
        let d = schema.len().max(1);
        if let Some(i) = data.iter().position(|v| v.is_infinite()) {
            return Err(BoostError::NonFinite {
                row: i / d,
                col: i % d,
            });
        }
        Ok(FeatureMatrix {
            schema,
            n_rows,
            data,
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.data[row * self.n_cols() + col];
        (!v.is_nan()).then_some(v)
    }

    /// Raw row with NaN for missing entries.
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub(crate) fn raw(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n_rows, self.n_cols()), self.data.clone())
            .expect("consistent shape")
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let data = rows
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        FeatureMatrix {
            schema: self.schema.clone(),
            n_rows: rows.len(),
            data,
        }
    }

    /// Appends columns (n_rows x k) to the right.
    pub fn with_columns(
        &self,
        names: &[String],
        values: &Array2<f64>,
    ) -> Result<FeatureMatrix, BoostError> {
        if values.nrows() != self.n_rows || values.ncols() != names.len() {
            return Err(BoostError::LengthMismatch {
                what: "appended rows",
                expected: self.n_rows,
                got: values.nrows(),
            });
        }
        let mut schema = self.schema.clone();
        schema.extend(names.iter().cloned());
        let mut data = Vec::with_capacity(self.n_rows * schema.len());
        for i in 0..self.n_rows {
            data.extend_from_slice(self.row(i));
            data.extend(values.row(i).iter());
        }
        Self::from_raw(schema, self.n_rows, data)
    }

    pub(crate) fn set_raw(&mut self, row: usize, col: usize, v: f64) {
        let d = self.n_cols();
        self.data[row * d + col] = v;
    }
}

/// A fitted classifier producing one probability per price class.
pub trait ProbaModel: Sync {
    fn schema(&self) -> &[String];
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Array2<f64>, BoostError>;
}

pub(crate) fn check_labels(
    n_rows: usize,
    labels: &[PriceClass],
    min_rows: usize,
) -> Result<Vec<usize>, BoostError> {
    if labels.len() != n_rows {
        return Err(BoostError::LengthMismatch {
            what: "labels",
            expected: n_rows,
            got: labels.len(),
        });
    }
    if n_rows < min_rows {
        return Err(BoostError::TooFewSamples {
            needed: min_rows,
            got: n_rows,
        });
    }
    let y: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    let mut seen = [false; N_CLASSES];
    y.iter().for_each(|&c| seen[c] = true);
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(BoostError::DegenerateLabels);
    }
    Ok(y)
}

/// Index of the largest entry; the first wins ties.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Midpoint of two adjacent sorted values that still separates them after rounding.
pub(crate) fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}
