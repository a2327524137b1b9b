use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_labels, split_threshold, BoostError, FeatureMatrix, ProbaModel};
use crate::impact::{PriceClass, N_CLASSES};

const FORMAT_VERSION: u32 = 1;
const MIN_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Share of rows drawn (without replacement) for each round.
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Smallest hessian sum allowed in a child.
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            subsample: 0.8,
            lambda: 1.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Axis-aligned regression tree; rows go left when `x <= threshold`, missing values
/// follow the learned default direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() {
                        *default_left
                    } else {
                        v <= *threshold
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { value } => Some(*value),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    format_version: u32,
    schema: Vec<String>,
    pub base_scores: [f64; N_CLASSES],
    pub learning_rate: f64,
    pub max_depth: usize,
    /// One tree per class per round.
    pub trees: Vec<Vec<RegressionTree>>,
    /// Training cross-entropy before the first round and after each round.
    pub train_loss: Vec<f64>,
    pub seed: u64,
}

/// Non-missing rows sorted by value, and the missing rows, per feature.
struct Presorted {
    order: Vec<Vec<u32>>,
    missing: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &FeatureMatrix) -> Self {
        let (order, missing) = (0..x.n_cols())
            .into_par_iter()
            .map(|j| {
                let (mut present, mut absent) = (Vec::new(), Vec::new());
                for i in 0..x.n_rows() {
                    if x.raw(i, j).is_nan() {
                        absent.push(i as u32);
                    } else {
                        present.push(i as u32);
                    }
                }
                present.sort_by(|&a, &b| {
                    x.raw(a as usize, j)
                        .total_cmp(&x.raw(b as usize, j))
                        .then(a.cmp(&b))
                });
                (present, absent)
            })
            .unzip();
        Presorted { order, missing }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

struct GrowParams {
    max_depth: usize,
    lambda: f64,
    min_child_weight: f64,
    learning_rate: f64,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Level-wise exact greedy growth: one pass over each feature's sorted rows per depth
/// evaluates every frontier node at once.
fn grow_tree(
    x: &FeatureMatrix,
    pre: &Presorted,
    in_sample: &[bool],
    g: &[f64],
    h: &[f64],
    p: &GrowParams,
) -> RegressionTree {
    let n = x.n_rows();
    let mut node_of: Vec<usize> = vec![usize::MAX; n];
    let (mut g0, mut h0) = (0.0, 0.0);
    for i in (0..n).filter(|&i| in_sample[i]) {
        node_of[i] = 0;
        g0 += g[i];
        h0 += h[i];
    }
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut stats = vec![(g0, h0)];
    let mut frontier = vec![0usize];

    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &v) in frontier.iter().enumerate() {
            slot[v] = s;
        }
        let k = frontier.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        for j in 0..x.n_cols() {
            let (mut gm, mut hm) = (vec![0.0; k], vec![0.0; k]);
            for &r in &pre.missing[j] {
                let node = node_of[r as usize];
                if node != usize::MAX && slot[node] != usize::MAX {
                    gm[slot[node]] += g[r as usize];
                    hm[slot[node]] += h[r as usize];
                }
            }
            let (mut gl, mut hl) = (vec![0.0; k], vec![0.0; k]);
            let mut last: Vec<Option<f64>> = vec![None; k];
            let mut any_missing = vec![false; k];
            for &r in &pre.missing[j] {
                let node = node_of[r as usize];
                if node != usize::MAX && slot[node] != usize::MAX {
                    any_missing[slot[node]] = true;
                }
            }
            for &r in &pre.order[j] {
                let r = r as usize;
                let node = node_of[r];
                if node == usize::MAX || slot[node] == usize::MAX {
                    continue;
                }
                let s = slot[node];
                let v = x.raw(r, j);
                if let Some(prev) = last[s] {
                    if v > prev {
                        let (gt, ht) = stats[frontier[s]];
                        let (gr, hr) = (gt - gm[s] - gl[s], ht - hm[s] - hl[s]);
                        let parent = score(gt, ht, p.lambda);
                        let mut consider =
                            |lg: f64, lh: f64, rg: f64, rh: f64, default_left: bool| {
                                if lh < p.min_child_weight || rh < p.min_child_weight {
                                    return;
                                }
                                let gain = 0.5
                                    * (score(lg, lh, p.lambda) + score(rg, rh, p.lambda) - parent);
                                if best[s].is_none_or(|b| gain > b.gain) {
                                    best[s] = Some(Candidate {
                                        gain,
                                        feature: j,
                                        threshold: split_threshold(prev, v),
                                        default_left,
                                    });
                                }
                            };
                        if any_missing[s] {
                            consider(gl[s] + gm[s], hl[s] + hm[s], gr, hr, true);
                            consider(gl[s], hl[s], gr + gm[s], hr + hm[s], false);
                        } else {
                            consider(gl[s], hl[s], gr, hr, hl[s] >= hr);
                        }
                    }
                }
                gl[s] += g[r];
                hl[s] += h[r];
                last[s] = Some(v);
            }
        }

        let mut next = Vec::new();
        let mut children: Vec<Option<(usize, usize)>> = vec![None; k];
        for (s, cand) in best.iter().enumerate() {
            let Some(c) = cand.filter(|c| c.gain > 1e-12) else {
                continue;
            };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes[frontier[s]] = TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                default_left: c.default_left,
                left: l,
                right: r,
            };
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            stats.push((0.0, 0.0));
            stats.push((0.0, 0.0));
            children[s] = Some((l, r));
            next.extend([l, r]);
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let node = node_of[i];
            if node == usize::MAX || slot.get(node).is_none_or(|s| *s == usize::MAX) {
                continue;
            }
            let s = slot[node];
            let (Some((l, r)), Some(c)) = (children[s], best[s]) else {
                continue;
            };
            let v = x.raw(i, c.feature);
            let child = if (v.is_nan() && c.default_left) || v <= c.threshold {
                l
            } else {
                r
            };
            node_of[i] = child;
            stats[child].0 += g[i];
            stats[child].1 += h[i];
        }
        frontier = next;
    }

    for (node, (gs, hs)) in nodes.iter_mut().zip(&stats) {
        if let TreeNode::Leaf { value } = node {
            *value = -gs / (hs + p.lambda) * p.learning_rate;
        }
    }
    RegressionTree { nodes }
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, z) in out.iter_mut().zip(scores) {
        *o = (z - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

fn mean_cross_entropy(scores: &Array2<f64>, y: &[usize]) -> f64 {
    let mut p = [0.0; N_CLASSES];
    let total: f64 = scores
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &c)| {
            softmax_into(row.as_slice().expect("contiguous"), &mut p);
            -p[c].max(1e-300).ln()
        })
        .sum();
    total / y.len() as f64
}

/// Softmax multiclass boosting with second-order (gradient + hessian) leaf values.
pub fn train_gbdt(
    x: &FeatureMatrix,
    labels: &[PriceClass],
    config: &GbdtConfig,
) -> Result<GbdtModel, BoostError> {
    if x.n_cols() == 0 {
        return Err(BoostError::EmptyFeatures);
    }
    let y = check_labels(x.n_rows(), labels, MIN_ROWS)?;
    if !(config.subsample > 0.0 && config.subsample <= 1.0)
        || config.learning_rate <= 0.0
        || config.lambda < 0.0
    {
        return Err(BoostError::InvalidConfig(
            "subsample in (0, 1], positive learning rate, lambda >= 0".into(),
        ));
    }
    let n = x.n_rows();
    let mut counts = [0usize; N_CLASSES];
    y.iter().for_each(|&c| counts[c] += 1);
    let base_scores = counts.map(|c| (c as f64 / n as f64).max(1e-6).ln());

    let pre = Presorted::new(x);
    let params = GrowParams {
        max_depth: config.max_depth,
        lambda: config.lambda,
        min_child_weight: config.min_child_weight,
        learning_rate: config.learning_rate,
    };
    let mut scores = Array2::from_shape_fn((n, N_CLASSES), |(_, c)| base_scores[c]);
    let mut train_loss = vec![mean_cross_entropy(&scores, &y)];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_sample = ((n as f64 * config.subsample).round() as usize).clamp(1, n);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut probs = Array2::<f64>::zeros((n, N_CLASSES));

    for _ in 0..config.n_rounds {
        let mut in_sample = vec![n_sample == n; n];
        if n_sample < n {
            rows.shuffle(&mut rng);
            rows[..n_sample].iter().for_each(|&i| in_sample[i] = true);
        }
        for (mut p, s) in probs.rows_mut().into_iter().zip(scores.rows()) {
            softmax_into(
                s.as_slice().expect("contiguous"),
                p.as_slice_mut().expect("contiguous"),
            );
        }
        let round: Vec<RegressionTree> = (0..N_CLASSES)
            .into_par_iter()
            .map(|c| {
                let g: Vec<f64> = (0..n)
                    .map(|i| probs[[i, c]] - if y[i] == c { 1.0 } else { 0.0 })
                    .collect();
                let h: Vec<f64> = (0..n)
                    .map(|i| (probs[[i, c]] * (1.0 - probs[[i, c]])).max(1e-16))
                    .collect();
                grow_tree(x, &pre, &in_sample, &g, &h, &params)
            })
            .collect();
        for i in 0..n {
            let row = x.row(i);
            for (c, t) in round.iter().enumerate() {
                scores[[i, c]] += t.predict_row(row);
            }
        }
        train_loss.push(mean_cross_entropy(&scores, &y));
        trees.push(round);
    }
    Ok(GbdtModel {
        format_version: FORMAT_VERSION,
        schema: x.schema().to_vec(),
        base_scores,
        learning_rate: config.learning_rate,
        max_depth: config.max_depth,
        trees,
        train_loss,
        seed: config.seed,
    })
}

impl GbdtModel {
    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn predict_scores_row(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let mut s = self.base_scores;
        for round in &self.trees {
            for (c, t) in round.iter().enumerate() {
                s[c] += t.predict_row(row);
            }
        }
        s
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let mut p = [0.0; N_CLASSES];
        softmax_into(&self.predict_scores_row(row), &mut p);
        p
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BoostError> {
        std::fs::write(
            path,
            serde_json::to_string(self).map_err(|e| BoostError::Format(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BoostError> {
        let m: GbdtModel = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| BoostError::Format(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(BoostError::Format(format!(
                "unsupported model version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

impl ProbaModel for GbdtModel {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Array2<f64>, BoostError> {
        if x.schema() != self.schema.as_slice() {
            return Err(BoostError::SchemaMismatch);
        }
        let rows: Vec<[f64; N_CLASSES]> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_proba_row(x.row(i)))
            .collect();
        Ok(Array2::from_shape_fn((rows.len(), N_CLASSES), |(i, c)| {
            rows[i][c]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::argmax;
    use rand::Rng;

    fn threshold_data(n: usize, seed: u64) -> (FeatureMatrix, Vec<PriceClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows: Vec<Vec<Option<f64>>> = xs.iter().map(|v| vec![Some(*v)]).collect();
        let y = xs
            .iter()
            .map(|v| {
                if *v < 0.0 {
                    PriceClass::Negative
                } else {
                    PriceClass::Positive
                }
            })
            .collect();
        (
            FeatureMatrix::from_rows(vec!["x".into()], &rows).unwrap(),
            y,
        )
    }

    fn accuracy(m: &GbdtModel, x: &FeatureMatrix, y: &[PriceClass]) -> f64 {
        let p = m.predict_proba(x).unwrap();
        let hits = p
            .rows()
            .into_iter()
            .zip(y)
            .filter(|(r, c)| argmax(r.iter().copied()) == c.index())
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn zero_rounds_predict_priors() {
        let (x, y) = threshold_data(40, 1);
        let m = train_gbdt(
            &x,
            &y,
            &GbdtConfig {
                n_rounds: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let neg = y.iter().filter(|c| **c == PriceClass::Negative).count() as f64 / 40.0;
        let p = m.predict_proba(&x).unwrap();
        for row in p.rows() {
            assert!((row[PriceClass::Negative.index()] - neg).abs() < 1e-4);
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_fit_and_monotone_loss() {
        let (x, y) = threshold_data(200, 2);
        let m = train_gbdt(
            &x,
            &y,
            &GbdtConfig {
                n_rounds: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
        assert!(m
            .trees
            .iter()
            .flatten()
            .all(|t| t.depth() <= 4 && t.leaf_values().all(f64::is_finite)));
    }

    #[test]
    fn deterministic() {
        let (x, y) = threshold_data(100, 3);
        let cfg = GbdtConfig {
            n_rounds: 15,
            seed: 9,
            ..Default::default()
        };
        let a = train_gbdt(&x, &y, &cfg).unwrap();
        let b = train_gbdt(&x, &y, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn missing_values_learn_direction() {
        // Missing rows all belong to the positive class.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let v = (i % 20) as f64 / 20.0 - 0.5;
            if i % 3 == 0 {
                rows.push(vec![None]);
                y.push(PriceClass::Positive);
            } else {
                rows.push(vec![Some(v)]);
                y.push(if v < 0.0 {
                    PriceClass::Negative
                } else {
                    PriceClass::Positive
                });
            }
        }
        let x = FeatureMatrix::from_rows(vec!["x".into()], &rows).unwrap();
        let m = train_gbdt(
            &x,
            &y,
            &GbdtConfig {
                n_rounds: 30,
                subsample: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let p = m.predict_proba_row(&[f64::NAN]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(argmax(p), PriceClass::Positive.index());
        assert!(accuracy(&m, &x, &y) > 0.95);
    }

    #[test]
    fn errors_and_schema() {
        let (x, y) = threshold_data(10, 4);
        assert!(matches!(
            train_gbdt(&x, &y, &GbdtConfig::default()),
            Err(BoostError::TooFewSamples { .. })
        ));
        let (x, _) = threshold_data(30, 4);
        let y = vec![PriceClass::Positive; 30];
        assert!(matches!(
            train_gbdt(&x, &y, &GbdtConfig::default()),
            Err(BoostError::DegenerateLabels)
        ));
        let (x, y) = threshold_data(30, 4);
        let m = train_gbdt(
            &x,
            &y,
            &GbdtConfig {
                n_rounds: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let other = FeatureMatrix::from_rows(vec!["z".into()], &[vec![Some(0.0)]]).unwrap();
        assert!(matches!(
            m.predict_proba(&other),
            Err(BoostError::SchemaMismatch)
        ));
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path().join("m.json")).unwrap();
        assert_eq!(GbdtModel::load(dir.path().join("m.json")).unwrap(), m);
    }

    #[test]
    fn cluster_rows_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [(-2.0, -2.0), (2.0, 2.0), (-2.0, 2.0)];
        let classes = [
            PriceClass::ExtremelyNegative,
            PriceClass::Positive,
            PriceClass::ExtremelyPositive,
        ];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for k in 0..90 {
            let (cx, cy) = centers[k % 3];
            rows.push(vec![
                Some(cx + rng.random_range(-0.5..0.5)),
                Some(cy + rng.random_range(-0.5..0.5)),
            ]);
            y.push(classes[k % 3]);
        }
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        let m = train_gbdt(
            &x,
            &y,
            &GbdtConfig {
                n_rounds: 50,
                ..Default::default()
            },
        )
        .unwrap();
        for (c, cls) in centers.iter().zip(classes) {
            assert_eq!(argmax(m.predict_proba_row(&[c.0, c.1])), cls.index());
        }
        assert!(m
            .predict_proba_row(&[f64::NAN, f64::NAN])
            .iter()
            .all(|p| p.is_finite()));
    }
}
