use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_labels, split_threshold, BoostError, FeatureMatrix, ProbaModel};
use crate::impact::{PriceClass, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().round() as usize).clamp(1, d),
            MaxFeatures::Count(k) => k.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features considered at each split, drawn afresh per node.
    pub max_features: MaxFeatures,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ClassNode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

/// CART classification tree grown on Gini impurity. Missing values take whichever
/// side of a split gives the lower impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    nodes: Vec<ClassNode>,
}

fn gini_weighted(counts: &[usize; N_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    nf - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / nf
}

fn add(a: &mut [usize; N_CLASSES], b: &[usize; N_CLASSES]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn majority(counts: &[usize; N_CLASSES]) -> usize {
    argmax(counts.iter().map(|&c| c as f64))
}

impl ClassificationTree {
    /// `rows` may repeat (bootstrap draws).
    pub fn fit(
        x: &FeatureMatrix,
        y: &[usize],
        rows: &[usize],
        config: &TreeConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let d = x.n_cols();
        let k = config.max_features.resolve(d);
        let mut nodes = vec![ClassNode::Leaf { class: 0 }];
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
        while let Some((id, members, depth)) = stack.pop() {
            let mut counts = [0usize; N_CLASSES];
            members.iter().for_each(|&i| counts[y[i]] += 1);
            let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
            let depth_ok = config.max_depth.is_none_or(|m| depth < m);
            let split = if !pure && depth_ok && members.len() >= 2 * config.min_samples_leaf {
                let features: Vec<usize> = if k == d {
                    (0..d).collect()
                } else {
                    sample(rng, d, k).into_vec()
                };
                best_split(x, y, &members, &counts, &features, config.min_samples_leaf)
            } else {
                None
            };
            match split {
                Some((feature, threshold, default_left)) => {
                    let (mut l, mut r) = (Vec::new(), Vec::new());
                    for &i in &members {
                        let v = x.raw(i, feature);
                        if (v.is_nan() && default_left) || v <= threshold {
                            l.push(i);
                        } else {
                            r.push(i);
                        }
                    }
                    let (li, ri) = (nodes.len(), nodes.len() + 1);
                    nodes[id] = ClassNode::Split {
                        feature,
                        threshold,
                        default_left,
                        left: li,
                        right: ri,
                    };
                    nodes.push(ClassNode::Leaf { class: 0 });
                    nodes.push(ClassNode::Leaf { class: 0 });
                    stack.push((ri, r, depth + 1));
                    stack.push((li, l, depth + 1));
                }
                None => {
                    nodes[id] = ClassNode::Leaf {
                        class: majority(&counts),
                    }
                }
            }
        }
        ClassificationTree { nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                ClassNode::Leaf { class } => return *class,
                ClassNode::Split {
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

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

fn best_split(
    x: &FeatureMatrix,
    y: &[usize],
    members: &[usize],
    total: &[usize; N_CLASSES],
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64, bool)> {
    let parent = gini_weighted(total, members.len());
    let mut best: Option<(f64, usize, f64, bool)> = None;
    for &j in features {
        let mut present: Vec<(f64, usize)> = Vec::with_capacity(members.len());
        let mut miss = [0usize; N_CLASSES];
        let mut n_miss = 0;
        for &i in members {
            let v = x.raw(i, j);
            if v.is_nan() {
                miss[y[i]] += 1;
                n_miss += 1;
            } else {
                present.push((v, y[i]));
            }
        }
        present.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut present_total = *total;
        present_total
            .iter_mut()
            .zip(&miss)
            .for_each(|(t, m)| *t -= m);
        let mut left = [0usize; N_CLASSES];
        for w in 0..present.len().saturating_sub(1) {
            left[present[w].1] += 1;
            let (lo, hi) = (present[w].0, present[w + 1].0);
            if hi <= lo {
                continue;
            }
            let nl = w + 1;
            let mut right = present_total;
            right.iter_mut().zip(&left).for_each(|(r, l)| *r -= l);
            let nr = present.len() - nl;
            for default_left in [true, false] {
                if n_miss == 0 && !default_left {
                    continue;
                }
                let (mut l, mut r) = (left, right);
                let (mut a, mut b) = (nl, nr);
                if default_left {
                    add(&mut l, &miss);
                    a += n_miss;
                } else {
                    add(&mut r, &miss);
                    b += n_miss;
                }
                if a < min_leaf || b < min_leaf {
                    continue;
                }
                let gain = parent - gini_weighted(&l, a) - gini_weighted(&r, b);
                // With no missing rows, unseen missing values follow the larger child.
                let dl = if n_miss == 0 { a >= b } else { default_left };
                if gain > 1e-12 && best.is_none_or(|bb| gain > bb.0) {
                    best = Some((gain, j, split_threshold(lo, hi), dl));
                }
            }
        }
    }
    best.map(|(_, j, t, dl)| (j, t, dl))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            bootstrap: true,
            tree: TreeConfig {
                max_features: MaxFeatures::Sqrt,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    schema: Vec<String>,
    pub trees: Vec<ClassificationTree>,
}

pub fn train_random_forest(
    x: &FeatureMatrix,
    labels: &[PriceClass],
    config: &ForestConfig,
) -> Result<RandomForest, BoostError> {
    if x.n_cols() == 0 {
        return Err(BoostError::EmptyFeatures);
    }
    if config.n_trees == 0 {
        return Err(BoostError::InvalidConfig(
            "forest needs at least one tree".into(),
        ));
    }
    let y = check_labels(x.n_rows(), labels, 20)?;
    let n = x.n_rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            ClassificationTree::fit(x, &y, &rows, &config.tree, &mut rng)
        })
        .collect();
    Ok(RandomForest {
        schema: x.schema().to_vec(),
        trees,
    })
}

impl ProbaModel for RandomForest {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    /// Share of trees voting for each class.
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Array2<f64>, BoostError> {
        if x.schema() != self.schema.as_slice() {
            return Err(BoostError::SchemaMismatch);
        }
        let w = 1.0 / self.trees.len() as f64;
        let rows: Vec<[f64; N_CLASSES]> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                let mut p = [0.0; N_CLASSES];
                self.trees
                    .iter()
                    .for_each(|t| p[t.predict_row(x.row(i))] += w);
                p
            })
            .collect();
        Ok(Array2::from_shape_fn((rows.len(), N_CLASSES), |(i, c)| {
            rows[i][c]
        }))
    }
}
