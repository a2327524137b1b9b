use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_adjacency, EventGraph, GraphError, Propagation};
use crate::impact::{PriceClass, N_CLASSES};

const FORMAT_VERSION: u32 = 1;
/// Layer k propagates over the graph before its linear map.
const GRAPH_LAYER: [bool; 5] = [false, true, true, false, false];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Share of training nodes held out for snapshot selection.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            hidden: 64,
            epochs: 300,
            learning_rate: 1e-3,
            validation_fraction: 0.15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// FC(d, h) -> GConv(h, h) -> GConv(h, h) -> FC(h, h/2) -> FC(h/2, 6), ReLU between
/// layers and softmax on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    format_version: u32,
    layers: Vec<Dense>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    pub history: TrainingHistory,
}

fn widths(d: usize, h: usize) -> [(usize, usize); 5] {
    [(d, h), (h, h), (h, h), (h, h / 2), (h / 2, N_CLASSES)]
}

impl GcnModel {
    /// Glorot-uniform weights, zero biases, identity standardization.
    pub fn init(n_features: usize, hidden: usize, seed: u64) -> Result<Self, GraphError> {
        if hidden < 2 || n_features == 0 {
            return Err(GraphError::InvalidConfig(format!(
                "hidden={hidden}, features={n_features}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths(n_features, hidden)
            .iter()
            .map(|&(i, o)| {
                let limit = (6.0 / (i + o) as f64).sqrt();
                let mut l = Dense::zeros(i, o);
                l.w.mapv_inplace(|_| rng.random_range(-limit..limit));
                l
            })
            .collect();
        Ok(Self::with_layers(layers, n_features))
    }

    /// All weights and biases zero.
    pub fn zeroed(n_features: usize, hidden: usize) -> Result<Self, GraphError> {
        if hidden < 2 || n_features == 0 {
            return Err(GraphError::InvalidConfig(format!(
                "hidden={hidden}, features={n_features}"
            )));
        }
        let layers = widths(n_features, hidden)
            .iter()
            .map(|&(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self::with_layers(layers, n_features))
    }

    fn with_layers(layers: Vec<Dense>, d: usize) -> Self {
        GcnModel {
            format_version: FORMAT_VERSION,
            layers,
            feature_mean: vec![0.0; d],
            feature_std: vec![1.0; d],
            history: TrainingHistory::default(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn weights_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Replaces missing entries with the training mean and rescales to unit variance.
    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.feature_mean[j], self.feature_std[j]);
            col.mapv_inplace(|v| if v.is_nan() { 0.0 } else { (v - m) / s });
        }
        z
    }

    fn fit_standardization(&mut self, x: ArrayView2<'_, f64>, rows: &[usize]) {
        for j in 0..x.ncols() {
            let vals: Vec<f64> = rows
                .iter()
                .map(|&i| x[[i, j]])
                .filter(|v| !v.is_nan())
                .collect();
            if vals.is_empty() {
                self.feature_mean[j] = 0.0;
                self.feature_std[j] = 1.0;
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            self.feature_mean[j] = m;
            self.feature_std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let json = serde_json::to_string(self).map_err(|e| GraphError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        let m: GcnModel =
            serde_json::from_str(&text).map_err(|e| GraphError::Format(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(GraphError::Format(format!(
                "unsupported model version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

fn propagate(p: &Propagation, h: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.dim());
    for (v, row) in p.rows.iter().enumerate() {
        let mut o = out.row_mut(v);
        for &(u, w) in row {
            o.scaled_add(w, &h.row(u));
        }
    }
    out
}

/// `P^T g`.
fn propagate_t(p: &Propagation, g: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(g.dim());
    for (v, row) in p.rows.iter().enumerate() {
        for &(u, w) in row {
            out.row_mut(u).scaled_add(w, &g.row(v));
        }
    }
    out
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

struct Cache {
    /// Input to each layer's linear map (after propagation for graph layers).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

fn forward(layers: &[Dense], p: &Propagation, x: Array2<f64>) -> Cache {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut h = x;
    for (k, layer) in layers.iter().enumerate() {
        let input = if GRAPH_LAYER[k] { propagate(p, &h) } else { h };
        let z = input.dot(&layer.w) + &layer.b;
        h = if k + 1 < layers.len() {
            z.mapv(|v| v.max(0.0))
        } else {
            let mut s = z.clone();
            softmax_rows(&mut s);
            s
        };
        inputs.push(input);
        pre.push(z);
    }
    Cache {
        inputs,
        pre,
        probs: h,
    }
}

fn cross_entropy(probs: &Array2<f64>, labels: &[usize], rows: &[usize]) -> f64 {
    -rows
        .iter()
        .map(|&i| probs[[i, labels[i]]].max(1e-300).ln())
        .sum::<f64>()
        / rows.len() as f64
}

fn backward(
    layers: &[Dense],
    p: &Propagation,
    cache: &Cache,
    labels: &[usize],
    rows: &[usize],
) -> Vec<Dense> {
    let m = rows.len() as f64;
    let mut dz = Array2::zeros(cache.probs.dim());
    for &i in rows {
        let mut r = dz.row_mut(i);
        r.assign(&cache.probs.row(i));
        r[labels[i]] -= 1.0;
        r /= m;
    }
    let mut grads: Vec<Dense> = Vec::with_capacity(layers.len());
    for k in (0..layers.len()).rev() {
        grads.push(Dense {
            w: cache.inputs[k].t().dot(&dz),
            b: dz.sum_axis(Axis(0)),
        });
        if k == 0 {
            break;
        }
        let d_input = dz.dot(&layers[k].w.t());
        let dh = if GRAPH_LAYER[k] {
            propagate_t(p, &d_input)
        } else {
            d_input
        };
        dz = dh;
        dz.zip_mut_with(&cache.pre[k - 1], |g, z| {
            if *z <= 0.0 {
                *g = 0.0
            }
        });
    }
    grads.reverse();
    grads
}

fn class_indices(labels: &[PriceClass]) -> Vec<usize> {
    labels.iter().map(|c| c.index()).collect()
}

fn check_dims(
    model: &GcnModel,
    graph: &EventGraph,
    features: ArrayView2<'_, f64>,
) -> Result<(), GraphError> {
    if features.nrows() != graph.len() {
        return Err(GraphError::DimensionMismatch {
            what: "feature rows",
            expected: graph.len(),
            got: features.nrows(),
        });
    }
    if features.ncols() != model.n_features() {
        return Err(GraphError::DimensionMismatch {
            what: "feature columns",
            expected: model.n_features(),
            got: features.ncols(),
        });
    }
    Ok(())
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(layers: &[Dense]) -> Self {
        let zeros = || {
            layers
                .iter()
                .map(|l| Dense::zeros(l.w.nrows(), l.w.ncols()))
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &[Dense], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for (((l, g), m), v) in layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut l.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, g, m, v| update(p, *g, m, v));
            ndarray::Zip::from(&mut l.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, g, m, v| update(p, *g, m, v));
        }
    }
}

/// Full-batch transductive training: every node is propagated, the loss covers the
/// training nodes only, and the parameters with the lowest validation loss are kept.
pub fn train_gcn(
    graph: &EventGraph,
    features: ArrayView2<'_, f64>,
    labels: &[PriceClass],
    train_mask: &[bool],
    config: &GcnConfig,
) -> Result<GcnModel, GraphError> {
    let n = graph.len();
    if labels.len() != n || train_mask.len() != n {
        return Err(GraphError::DimensionMismatch {
            what: "labels",
            expected: n,
            got: labels.len().min(train_mask.len()),
        });
    }
    if !(0.0..1.0).contains(&config.validation_fraction) || config.learning_rate <= 0.0 {
        return Err(GraphError::InvalidConfig(
            "validation fraction in [0, 1) and positive learning rate".into(),
        ));
    }
    let mut model = GcnModel::init(features.ncols(), config.hidden, config.seed)?;
    check_dims(&model, graph, features)?;
    let y = class_indices(labels);

    let mut train: Vec<usize> = (0..n).filter(|&i| train_mask[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    train.shuffle(&mut rng);
    let n_val = (train.len() as f64 * config.validation_fraction).round() as usize;
    let mut val: Vec<usize> = train
        .drain(..n_val.min(train.len().saturating_sub(1)))
        .collect();
    train.sort_unstable();
    val.sort_unstable();
    let mut seen = [false; N_CLASSES];
    train.iter().for_each(|&i| seen[y[i]] = true);
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(GraphError::DegenerateLabels);
    }

    let mut fit_rows = train.clone();
    fit_rows.extend(&val);
    model.fit_standardization(features, &fit_rows);
    let x = model.standardize(features);
    let p = normalize_adjacency(graph);

    let mut adam = Adam::new(&model.layers);
    let mut best: Option<(f64, usize, Vec<Dense>)> = None;
    let mut history = TrainingHistory::default();
    for epoch in 0..config.epochs {
        let cache = forward(&model.layers, &p, x.clone());
        let loss = cross_entropy(&cache.probs, &y, &train);
        if !loss.is_finite() {
            return Err(GraphError::NonFiniteLoss(epoch));
        }
        history.train_loss.push(loss);
        if !val.is_empty() {
            let vl = cross_entropy(&cache.probs, &y, &val);
            history.val_loss.push(vl);
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, model.layers.clone()));
            }
        }
        let grads = backward(&model.layers, &p, &cache, &y, &train);
        adam.step(&mut model.layers, &grads, config.learning_rate);
    }
    match best {
        Some((_, epoch, layers)) => {
            model.layers = layers;
            history.best_epoch = epoch;
        }
        None => history.best_epoch = config.epochs,
    }
    model.history = history;
    if !model.weights_finite() {
        return Err(GraphError::NonFiniteLoss(config.epochs));
    }
    Ok(model)
}

/// Class probabilities for every node; rows follow the graph's node order.
pub fn gcn_probs(
    model: &GcnModel,
    graph: &EventGraph,
    features: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, GraphError> {
    check_dims(model, graph, features)?;
    Ok(forward(
        &model.layers,
        &normalize_adjacency(graph),
        model.standardize(features),
    )
    .probs)
}

/// Weight entries first, then biases.
fn param_mut(layers: &mut [Dense], k: usize, idx: usize) -> &mut f64 {
    let n_w = layers[k].w.len();
    if idx < n_w {
        let cols = layers[k].w.ncols();
        &mut layers[k].w[[idx / cols, idx % cols]]
    } else {
        &mut layers[k].b[idx - n_w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation moved a ReLU across its kink.
    pub skipped_kinks: usize,
}

pub fn grad_check(
    model: &GcnModel,
    graph: &EventGraph,
    features: ArrayView2<'_, f64>,
    labels: &[PriceClass],
    mask: &[bool],
    epsilon: f64,
) -> Result<GradCheckReport, GraphError> {
    grad_check_with_fault(model, graph, features, labels, mask, epsilon, None)
}

/// Compares the analytic gradient with central differences on every parameter.
/// `zero_layer` discards the analytic gradient of one layer, for negative controls.
pub fn grad_check_with_fault(
    model: &GcnModel,
    graph: &EventGraph,
    features: ArrayView2<'_, f64>,
    labels: &[PriceClass],
    mask: &[bool],
    epsilon: f64,
    zero_layer: Option<usize>,
) -> Result<GradCheckReport, GraphError> {
    check_dims(model, graph, features)?;
    let y = class_indices(labels);
    let rows: Vec<usize> = (0..graph.len()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(GraphError::InvalidConfig("empty mask".into()));
    }
    let p = normalize_adjacency(graph);
    let x = model.standardize(features);
    let base = forward(&model.layers, &p, x.clone());
    let mut grads = backward(&model.layers, &p, &base, &y, &rows);
    if let Some(k) = zero_layer {
        grads[k].w.fill(0.0);
        grads[k].b.fill(0.0);
    }
    let signs = |c: &Cache| -> Vec<bool> {
        c.pre[..c.pre.len() - 1]
            .iter()
            .flat_map(|z| z.iter().map(|v| *v > 0.0))
            .collect()
    };
    let base_signs = signs(&base);

    let mut layers = model.layers.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let eval = |layers: &[Dense]| {
        let c = forward(layers, &p, x.clone());
        (cross_entropy(&c.probs, &y, &rows), signs(&c) == base_signs)
    };
    for k in 0..layers.len() {
        for idx in 0..layers[k].w.len() + layers[k].b.len() {
            let analytic = *param_mut(&mut grads, k, idx);
            let orig = *param_mut(&mut layers, k, idx);
            *param_mut(&mut layers, k, idx) = orig + epsilon;
            let (plus, ok_p) = eval(&layers);
            *param_mut(&mut layers, k, idx) = orig - epsilon;
            let (minus, ok_m) = eval(&layers);
            *param_mut(&mut layers, k, idx) = orig;
            if !(ok_p && ok_m) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            report.max_relative_error = report.max_relative_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Announcement;
    use crate::graph::build_event_graph;
    use chrono::{Days, NaiveDate};

    fn events(n: usize, seed: u64) -> Vec<Announcement> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Announcement {
                id: format!("E{i:03}"),
                ticker: ["AAA", "BBB", "CCC"][rng.random_range(0..3)].into(),
                date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
                    + Days::new(rng.random_range(0..600)),
                text: String::new(),
                icd10: vec![],
                phase: None,
                polarity: None,
            })
            .collect()
    }

    fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0))
    }

    fn random_labels(n: usize, seed: u64) -> Vec<PriceClass> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| PriceClass::ALL[rng.random_range(0..N_CLASSES)])
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let g = build_event_graph(&events(15, seed), 365);
            let x = random_features(15, 3, seed);
            let model = GcnModel::init(3, 6, seed).unwrap();
            let mask: Vec<bool> = (0..15).map(|i| i % 3 != 0).collect();
            let r =
                grad_check(&model, &g, x.view(), &random_labels(15, seed), &mask, 1e-5).unwrap();
            assert!(r.max_relative_error <= 1e-4, "seed {seed}: {r:?}");
            assert!(r.checked > model.n_parameters() / 2);
            let bad = grad_check_with_fault(
                &model,
                &g,
                x.view(),
                &random_labels(15, seed),
                &mask,
                1e-5,
                Some(2),
            )
            .unwrap();
            assert!(bad.max_relative_error > 0.1);
        }
    }

    #[test]
    fn grad_check_single_feature() {
        // Gradients of a one-column input come back column-major.
        let g = build_event_graph(&events(8, 4), 365);
        let x = random_features(8, 1, 4);
        let model = GcnModel::init(1, 3, 4).unwrap();
        let r = grad_check(&model, &g, x.view(), &random_labels(8, 4), &[true; 8], 1e-5).unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn zero_model_gradients_finite() {
        let g = build_event_graph(&events(10, 1), 365);
        let x = random_features(10, 2, 1);
        let model = GcnModel::zeroed(2, 4).unwrap();
        let cache = forward(
            &model.layers,
            &normalize_adjacency(&g),
            model.standardize(x.view()),
        );
        let y = class_indices(&random_labels(10, 1));
        let grads = backward(
            &model.layers,
            &normalize_adjacency(&g),
            &cache,
            &y,
            &(0..10).collect::<Vec<_>>(),
        );
        assert!(grads
            .iter()
            .all(|d| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite())));
        for row in cache.probs.rows() {
            assert!(row.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
        }
    }

    #[test]
    fn rows_sum_to_one_and_isolated_node_uses_own_features() {
        let g = build_event_graph(&events(25, 3), 365);
        let x = random_features(25, 4, 3);
        let model = GcnModel::init(4, 8, 3).unwrap();
        let probs = gcn_probs(&model, &g, x.view()).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
        let lone = Propagation::from_in_neighbors(&[vec![]]);
        let alone = forward(
            &model.layers,
            &lone,
            x.slice(ndarray::s![0..1, ..]).to_owned(),
        )
        .probs;
        let p0 = Propagation::from_in_neighbors(&[vec![], vec![0], vec![0, 1]]);
        let with_children = forward(
            &model.layers,
            &p0,
            x.slice(ndarray::s![0..3, ..]).to_owned(),
        )
        .probs;
        assert_eq!(alone.row(0), with_children.row(0));
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10;
        let ins: Vec<Vec<usize>> = (0..n)
            .map(|v| (0..v).filter(|_| rng.random_bool(0.3)).collect())
            .collect();
        let x = random_features(n, 3, 9);
        let model = GcnModel::init(3, 8, 9).unwrap();
        let base = forward(
            &model.layers,
            &Propagation::from_in_neighbors(&ins),
            x.clone(),
        )
        .probs;

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        // perm[new] = old
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let ins_p: Vec<Vec<usize>> = perm
            .iter()
            .map(|&old| ins[old].iter().map(|&u| inv[u]).collect())
            .collect();
        let x_p = Array2::from_shape_fn((n, 3), |(i, j)| x[[perm[i], j]]);
        let out = forward(&model.layers, &Propagation::from_in_neighbors(&ins_p), x_p).probs;
        for (new, &old) in perm.iter().enumerate() {
            for c in 0..N_CLASSES {
                assert!((out[[new, c]] - base[[old, c]]).abs() < 1e-12);
            }
        }
    }

    fn two_cliques() -> (EventGraph, Array2<f64>, Vec<PriceClass>) {
        let mut evs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let (t, c) = if i % 2 == 0 {
                ("AAA", PriceClass::Negative)
            } else {
                ("BBB", PriceClass::Positive)
            };
            evs.push(Announcement {
                id: format!("E{i:03}"),
                ticker: t.into(),
                date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + Days::new(i as u64 * 3),
                text: String::new(),
                icd10: vec![],
                phase: None,
                polarity: None,
            });
            labels.push(c);
        }
        let g = build_event_graph(&evs, 365);
        let idx = g.index_of();
        let mut x = Array2::zeros((40, 2));
        let mut y = vec![PriceClass::Negative; 40];
        for (e, l) in evs.iter().zip(&labels) {
            let r = idx[e.id.as_str()];
            x[[r, if *l == PriceClass::Negative { 0 } else { 1 }]] = 1.0;
            y[r] = *l;
        }
        (g, x, y)
    }

    #[test]
    fn separable_cliques_fit() {
        let (g, x, y) = two_cliques();
        let cfg = GcnConfig {
            hidden: 16,
            epochs: 200,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let model = train_gcn(&g, x.view(), &y, &[true; 40], &cfg).unwrap();
        let probs = gcn_probs(&model, &g, x.view()).unwrap();
        let correct = probs
            .rows()
            .into_iter()
            .zip(&y)
            .filter(|(r, l)| {
                let arg = (0..N_CLASSES)
                    .max_by(|&a, &b| r[a].total_cmp(&r[b]))
                    .unwrap();
                arg == l.index()
            })
            .count();
        assert!(correct as f64 / 40.0 >= 0.95, "{correct}");
    }

    #[test]
    fn deterministic_and_roundtrip() {
        let (g, x, y) = two_cliques();
        let cfg = GcnConfig {
            hidden: 8,
            epochs: 30,
            ..Default::default()
        };
        let a = train_gcn(&g, x.view(), &y, &[true; 40], &cfg).unwrap();
        let b = train_gcn(&g, x.view(), &y, &[true; 40], &cfg).unwrap();
        assert_eq!(a.history.train_loss, b.history.train_loss);
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path().join("gcn.json")).unwrap();
        assert_eq!(GcnModel::load(dir.path().join("gcn.json")).unwrap(), a);
    }

    #[test]
    fn uninformative_features_give_priors() {
        let (g, _, _) = two_cliques();
        let x = Array2::zeros((40, 3));
        let y: Vec<PriceClass> = (0..40)
            .map(|i| PriceClass::ALL[if i < 20 { 0 } else { 1 + i % 2 }])
            .collect();
        let cfg = GcnConfig {
            hidden: 8,
            epochs: 600,
            learning_rate: 2e-2,
            validation_fraction: 0.0,
            seed: 3,
        };
        let model = train_gcn(&g, x.view(), &y, &[true; 40], &cfg).unwrap();
        let probs = gcn_probs(&model, &g, x.view()).unwrap();
        let prior = [0.5, 0.25, 0.25, 0.0, 0.0, 0.0];
        for row in probs.rows() {
            for c in 0..3 {
                assert!((row[c] - prior[c]).abs() < 0.02, "{row}");
            }
        }
    }

    #[test]
    fn degenerate_and_dimension_errors() {
        let (g, x, _) = two_cliques();
        let y = vec![PriceClass::Positive; 40];
        assert!(matches!(
            train_gcn(&g, x.view(), &y, &[true; 40], &GcnConfig::default()),
            Err(GraphError::DegenerateLabels)
        ));
        let model = GcnModel::init(3, 8, 0).unwrap();
        assert!(matches!(
            gcn_probs(&model, &g, x.view()),
            Err(GraphError::DimensionMismatch { .. })
        ));
    }
}
