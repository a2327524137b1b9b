use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{roc_auc_ovr, AucReport, EvalError, SplitPlan};
use crate::boost::{
    train_ensemble, train_gbdt, train_random_forest, EnsembleConfig, FeatureMatrix, ForestConfig,
    ProbaModel,
};
use crate::graph::EventGraph;
use crate::impact::{PriceClass, N_CLASSES};

/// Models compared on every holdout repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GcnGbdt,
    Gbdt,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::GcnGbdt, ModelKind::Gbdt, ModelKind::RandomForest];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::GcnGbdt => "gcn+gbdt",
            ModelKind::Gbdt => "gbdt",
            ModelKind::RandomForest => "random_forest",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub ensemble: EnsembleConfig,
    pub forest: ForestConfig,
}

impl CompareConfig {
    /// Seeds of every model offset by the repeat index.
    fn for_repeat(&self, r: usize) -> CompareConfig {
        let mut c = *self;
        let r = r as u64;
        c.ensemble.gcn.seed = c.ensemble.gcn.seed.wrapping_add(r);
        c.ensemble.gbdt.seed = c.ensemble.gbdt.seed.wrapping_add(r);
        c.forest.seed = c.forest.seed.wrapping_add(r);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatScores {
    pub repeat: usize,
    /// Test-fold AUC per model, in `ModelKind::ALL` order.
    pub reports: Vec<(ModelKind, AucReport)>,
}

impl RepeatScores {
    pub fn get(&self, kind: ModelKind) -> &AucReport {
        &self
            .reports
            .iter()
            .find(|(k, _)| *k == kind)
            .expect("every model is scored")
            .1
    }
}

fn rows(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

/// Trains the ensemble, GBDT alone and the forest on each repeat's train rows and
/// scores them on its test rows. Repeats run in parallel; results are in repeat order.
pub fn evaluate_repeats(
    graph: &EventGraph,
    features: &FeatureMatrix,
    labels: &[PriceClass],
    plan: &SplitPlan,
    config: &CompareConfig,
) -> Result<Vec<RepeatScores>, EvalError> {
    if features.n_rows() != labels.len() || graph.len() != labels.len() {
        return Err(EvalError::LengthMismatch(features.n_rows(), labels.len()));
    }
    let model_err = |e: crate::boost::BoostError| EvalError::Model(e.to_string());
    plan.repeats
        .par_iter()
        .enumerate()
        .map(|(r, split)| {
            let cfg = config.for_repeat(r);
            let mask = split.train_mask(labels.len());
            let y_train: Vec<PriceClass> = split.train.iter().map(|&i| labels[i]).collect();
            let y_test: Vec<PriceClass> = split.test.iter().map(|&i| labels[i]).collect();
            let x_train = features.select_rows(&split.train);
            let x_test = features.select_rows(&split.test);

            let ens =
                train_ensemble(graph, features, labels, &mask, &cfg.ensemble).map_err(model_err)?;
            let p_ens = rows(
                &ens.predict_proba(graph, features).map_err(model_err)?,
                &split.test,
            );
            let gbdt = train_gbdt(&x_train, &y_train, &cfg.ensemble.gbdt).map_err(model_err)?;
            let p_gbdt = gbdt.predict_proba(&x_test).map_err(model_err)?;
            let rf = train_random_forest(&x_train, &y_train, &cfg.forest).map_err(model_err)?;
            let p_rf = rf.predict_proba(&x_test).map_err(model_err)?;

            let reports = [
                (ModelKind::GcnGbdt, p_ens),
                (ModelKind::Gbdt, p_gbdt),
                (ModelKind::RandomForest, p_rf),
            ]
            .into_iter()
            .map(|(k, p)| Ok((k, roc_auc_ovr(p.view(), &y_test)?)))
            .collect::<Result<_, EvalError>>()?;
            Ok(RepeatScores { repeat: r, reports })
        })
        .collect()
}

/// Mean and sample standard deviation of a model's AUCs across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub model: ModelKind,
    pub per_class_mean: [Option<f64>; N_CLASSES],
    pub per_class_std: [Option<f64>; N_CLASSES],
    /// Repeats in which the class could be evaluated.
    pub per_class_folds: [usize; N_CLASSES],
    pub weighted_mean: Option<f64>,
    pub weighted_std: Option<f64>,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

pub fn summarize(model: ModelKind, repeats: &[RepeatScores]) -> AucSummary {
    let reports: Vec<&AucReport> = repeats.iter().map(|r| r.get(model)).collect();
    let mut s = AucSummary {
        model,
        per_class_mean: [None; N_CLASSES],
        per_class_std: [None; N_CLASSES],
        per_class_folds: [0; N_CLASSES],
        weighted_mean: None,
        weighted_std: None,
    };
    for k in 0..N_CLASSES {
        let v: Vec<f64> = reports.iter().filter_map(|r| r.per_class[k]).collect();
        s.per_class_folds[k] = v.len();
        (s.per_class_mean[k], s.per_class_std[k]) = mean_std(&v);
    }
    let w: Vec<f64> = reports.iter().filter_map(|r| r.weighted).collect();
    (s.weighted_mean, s.weighted_std) = mean_std(&w);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::GbdtConfig;
    use crate::evalkit::{stratified_splits_with, synth_graph_task, GraphTaskConfig};
    use crate::graph::GcnConfig;

    #[test]
    fn parallel_matches_sequential_and_is_deterministic() {
        let task = synth_graph_task(&GraphTaskConfig {
            n_events: 300,
            ..GraphTaskConfig::new(3)
        })
        .unwrap();
        let plan = stratified_splits_with(&task.labels, 1, 3, 0.67).unwrap();
        let cfg = CompareConfig {
            ensemble: EnsembleConfig {
                gcn: GcnConfig {
                    hidden: 8,
                    epochs: 30,
                    ..Default::default()
                },
                gbdt: GbdtConfig {
                    n_rounds: 10,
                    ..Default::default()
                },
            },
            forest: ForestConfig {
                n_trees: 10,
                ..Default::default()
            },
        };
        let all = evaluate_repeats(&task.graph, &task.features, &task.labels, &plan, &cfg).unwrap();
        for (r, split) in plan.repeats.iter().enumerate() {
            let one = SplitPlan {
                repeats: vec![split.clone()],
                ..plan.clone()
            };
            let mut seq = evaluate_repeats(
                &task.graph,
                &task.features,
                &task.labels,
                &one,
                &cfg.for_repeat(r),
            )
            .unwrap();
            seq[0].repeat = r;
            assert_eq!(seq[0], all[r]);
        }
        let s = summarize(ModelKind::Gbdt, &all);
        assert_eq!(s.per_class_folds, [3; N_CLASSES]);
        assert!(s.weighted_mean.is_some() && s.weighted_std.unwrap() >= 0.0);
    }
}
