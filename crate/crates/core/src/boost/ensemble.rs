use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{train_gbdt, BoostError, FeatureMatrix, GbdtConfig, GbdtModel, ProbaModel};
use crate::graph::{gcn_probs, train_gcn, EventGraph, GcnConfig, GcnModel};
use crate::impact::{PriceClass, N_CLASSES};

/// Names of the GCN probability columns appended to the feature matrix.
pub fn gcn_columns() -> Vec<String> {
    (0..N_CLASSES).map(|c| format!("gcn_prob_{c}")).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub gcn: GcnConfig,
    pub gbdt: GbdtConfig,
}

/// GCN class probabilities stacked under a boosted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub gcn: GcnModel,
    pub gbdt: GbdtModel,
    base_schema: Vec<String>,
}

/// Trains the GCN on the training nodes, appends its probabilities for every node,
/// then boosts on the training rows of the augmented matrix. `features` rows follow
/// the graph's node order.
pub fn train_ensemble(
    graph: &EventGraph,
    features: &FeatureMatrix,
    labels: &[PriceClass],
    train_mask: &[bool],
    config: &EnsembleConfig,
) -> Result<EnsembleModel, BoostError> {
    let x = features.to_array();
    let gcn = train_gcn(graph, x.view(), labels, train_mask, &config.gcn)?;
    let augmented = augment_with(&gcn, graph, features)?;
    let train: Vec<usize> = (0..labels.len()).filter(|&i| train_mask[i]).collect();
    let y: Vec<PriceClass> = train.iter().map(|&i| labels[i]).collect();
    let gbdt = train_gbdt(&augmented.select_rows(&train), &y, &config.gbdt)?;
    Ok(EnsembleModel {
        gcn,
        gbdt,
        base_schema: features.schema().to_vec(),
    })
}

fn augment_with(
    gcn: &GcnModel,
    graph: &EventGraph,
    features: &FeatureMatrix,
) -> Result<FeatureMatrix, BoostError> {
    let probs: Array2<f64> = gcn_probs(gcn, graph, features.to_array().view())?;
    features.with_columns(&gcn_columns(), &probs)
}

impl EnsembleModel {
    pub fn schema(&self) -> &[String] {
        ProbaModel::schema(&self.gbdt)
    }

    /// Feature matrix with the GCN columns appended, as seen by the boosted model.
    pub fn augment(
        &self,
        graph: &EventGraph,
        features: &FeatureMatrix,
    ) -> Result<FeatureMatrix, BoostError> {
        if features.schema() != self.base_schema.as_slice() {
            return Err(BoostError::SchemaMismatch);
        }
        augment_with(&self.gcn, graph, features)
    }

    pub fn predict_proba(
        &self,
        graph: &EventGraph,
        features: &FeatureMatrix,
    ) -> Result<Array2<f64>, BoostError> {
        self.gbdt.predict_proba(&self.augment(graph, features)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Announcement;
    use crate::graph::build_event_graph;
    use chrono::{Days, NaiveDate};

    #[test]
    fn schema_appends_gcn_columns_last() {
        let events: Vec<Announcement> = (0..40)
            .map(|i| Announcement {
                id: format!("E{i:02}"),
                ticker: if i % 2 == 0 {
                    "AAA".into()
                } else {
                    "BBB".into()
                },
                date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + Days::new(i * 5),
                text: String::new(),
                icd10: vec![],
                phase: None,
                polarity: None,
            })
            .collect();
        let g = build_event_graph(&events, 365);
        let rows: Vec<Vec<Option<f64>>> =
            (0..40).map(|i| vec![Some((i % 2) as f64), None]).collect();
        let x = FeatureMatrix::from_rows(vec!["f".into(), "m".into()], &rows).unwrap();
        let labels: Vec<PriceClass> = (0..40)
            .map(|i| {
                if i % 2 == 0 {
                    PriceClass::Negative
                } else {
                    PriceClass::Positive
                }
            })
            .collect();
        let cfg = EnsembleConfig {
            gcn: GcnConfig {
                hidden: 8,
                epochs: 20,
                ..Default::default()
            },
            gbdt: GbdtConfig {
                n_rounds: 5,
                ..Default::default()
            },
        };
        let mask: Vec<bool> = (0..40).map(|i| i < 30).collect();
        let m = train_ensemble(&g, &x, &labels, &mask, &cfg).unwrap();
        let schema = m.schema();
        assert_eq!(&schema[..2], &["f".to_string(), "m".to_string()]);
        assert_eq!(&schema[2..], gcn_columns().as_slice());
        let p = m.predict_proba(&g, &x).unwrap();
        assert_eq!(p.dim(), (40, N_CLASSES));
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
    }
}
