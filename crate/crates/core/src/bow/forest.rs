//! Bagged CART ensembles.
//!
//! Every tree minimises within-node squared error. For 0/1 labels that is
//! the Gini criterion up to a constant factor, so one tree type serves as
//! both classifier (leaf value = fraction of positives) and regressor.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vectorize::DocTermMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Dense column-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        FeatureMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn from_dtm(dtm: &DocTermMatrix) -> Self {
        let mut m = FeatureMatrix::zeros(dtm.n_docs(), dtm.n_terms());
        for (i, row) in dtm.rows.iter().enumerate() {
            for &(t, c) in row {
                m.data[t as usize * m.n_rows + i] = c as f32;
            }
        }
        m
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::InvalidInput("feature columns differ in length".into()));
        }
        let data = columns.iter().flat_map(|c| c.iter().map(|&v| v as f32)).collect();
        Ok(FeatureMatrix { n_rows, n_cols: columns.len(), data })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn column(&self, j: usize) -> &[f32] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[j * self.n_rows + i]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for j in 0..self.n_cols {
            let col = self.column(j);
            data.extend(rows.iter().map(|&i| col[i]));
        }
        FeatureMatrix { n_rows: rows.len(), n_cols: self.n_cols, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    TreeEnsembleClassifier,
    TreeEnsembleRegressor,
}

/// Number of candidate features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    #[default]
    Sqrt,
    Log2,
    All,
    Fraction(f64),
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            FeaturesPerSplit::Sqrt => (p as f64).sqrt() as usize,
            FeaturesPerSplit::Log2 => (p as f64).log2() as usize,
            FeaturesPerSplit::All => p,
            FeaturesPerSplit::Fraction(f) => (f * p as f64) as usize,
            FeaturesPerSplit::Count(n) => n,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small.
    pub max_depth: Option<usize>,
    /// Defaults to 1 for classifiers and 5 for regressors.
    pub min_leaf: Option<usize>,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::classifier(0)
    }
}

impl LearnerSpec {
    pub fn classifier(seed: u64) -> Self {
        LearnerSpec {
            kind: LearnerKind::TreeEnsembleClassifier,
            n_trees: 100,
            max_depth: None,
            min_leaf: None,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
            seed,
        }
    }

    pub fn regressor(seed: u64) -> Self {
        LearnerSpec { kind: LearnerKind::TreeEnsembleRegressor, ..LearnerSpec::classifier(seed) }
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf.unwrap_or(match self.kind {
            LearnerKind::TreeEnsembleClassifier => 1,
            LearnerKind::TreeEnsembleRegressor => 5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid_parameter("n_trees", "must be at least 1"));
        }
        if self.min_leaf() == 0 {
            return Err(Error::invalid_parameter("min_leaf", "must be at least 1"));
        }
        if let FeaturesPerSplit::Fraction(f) = self.features_per_split {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid_parameter("features_per_split", "fraction must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Fits a model on `(x, y)`. `tags` key the random streams, so the same
/// call always gives the same model.
pub trait Learner: Send + Sync {
    fn fit(&self, x: &FeatureMatrix, y: &[f64], tags: &[u64]) -> Result<Box<dyn Model>>;
}

pub trait Model: Send + Sync {
    fn predict(&self, x: &FeatureMatrix) -> Vec<f64>;
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    feature: u32,
    threshold: f32,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &FeatureMatrix, i: usize) -> f64 {
        let mut k = 0usize;
        loop {
            let n = &self.nodes[k];
            if n.feature == LEAF {
                return n.value;
            }
            k = if x.get(i, n.feature as usize) <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(spec: &LearnerSpec, x: &FeatureMatrix, y: &[f64], tags: &[u64]) -> Result<Self> {
        spec.validate()?;
        if x.n_rows() != y.len() {
            return Err(Error::InvalidInput("feature rows and labels differ in length".into()));
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("cannot fit a forest on zero rows".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("labels must be finite".into()));
        }
        let trees = (0..spec.n_trees as u64)
            .into_par_iter()
            .map(|t| {
                let mut stream_tags = tags.to_vec();
                stream_tags.push(t);
                let mut r = rng::stream(spec.seed, &stream_tags);
                grow(spec, x, y, &mut r)
            })
            .collect();
        Ok(Forest { trees })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>() / self.trees.len() as f64)
            .collect()
    }
}

impl Model for Forest {
    fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        Forest::predict(self, x)
    }
}

impl Learner for LearnerSpec {
    fn fit(&self, x: &FeatureMatrix, y: &[f64], tags: &[u64]) -> Result<Box<dyn Model>> {
        if self.kind == LearnerKind::TreeEnsembleClassifier && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("classifier labels must be 0 or 1".into()));
        }
        Ok(Box::new(Forest::fit(self, x, y, tags)?))
    }
}

struct Split {
    feature: usize,
    threshold: f32,
    score: f64,
}

fn grow(spec: &LearnerSpec, x: &FeatureMatrix, y: &[f64], r: &mut StreamRng) -> Tree {
    let n = x.n_rows();
    let mut samples: Vec<u32> = if spec.bootstrap {
        (0..n).map(|_| r.random_range(0..n as u32)).collect()
    } else {
        (0..n as u32).collect()
    };
    let min_leaf = spec.min_leaf();
    let mtry = spec.features_per_split.resolve(x.n_cols());
    let mut features: Vec<u32> = (0..x.n_cols() as u32).collect();
    let mut scratch: Vec<(f32, f64)> = Vec::new();
    let mut nodes: Vec<Node> = vec![];
    // (node index, start, end, depth)
    let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
    nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });

    while let Some((k, start, end, depth)) = stack.pop() {
        let node = &samples[start..end];
        let m = node.len() as f64;
        let (s, s2) = node.iter().fold((0.0, 0.0), |(a, b), &i| {
            let v = y[i as usize];
            (a + v, b + v * v)
        });
        nodes[k].value = s / m;
        let sse = s2 - s * s / m;
        let can_split = node.len() >= 2 * min_leaf
            && node.len() >= 2
            && spec.max_depth.is_none_or(|d| depth < d)
            && sse > 1e-12 * (1.0 + s2);
        if !can_split {
            continue;
        }
        let best = best_split(x, y, node, &mut features, mtry, min_leaf, s * s / m, &mut scratch, r);
        let Some(best) = best else { continue };

        let col = x.column(best.feature);
        let slice = &mut samples[start..end];
        let mut mid = 0;
        for i in 0..slice.len() {
            if col[slice[i] as usize] <= best.threshold {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        nodes[k].feature = best.feature as u32;
        nodes[k].threshold = best.threshold;
        nodes[k].left = left as u32;
        nodes[k].right = left as u32 + 1;
        stack.push((left + 1, start + mid, end, depth + 1));
        stack.push((left, start, start + mid, depth + 1));
    }
    Tree { nodes }
}

/// Visits features in random order until `mtry` non-constant ones have been
/// scored, and returns the split with the largest reduction in squared
/// error, if any improves on the parent.
#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &FeatureMatrix,
    y: &[f64],
    node: &[u32],
    features: &mut [u32],
    mtry: usize,
    min_leaf: usize,
    parent_score: f64,
    scratch: &mut Vec<(f32, f64)>,
    r: &mut StreamRng,
) -> Option<Split> {
    let p = features.len();
    let mut best: Option<Split> = None;
    let mut visited = 0;
    let n = node.len();
    for k in 0..p {
        if visited >= mtry {
            break;
        }
        let pick = r.random_range(k..p);
        features.swap(k, pick);
        let f = features[k] as usize;
        let col = x.column(f);

        // Zeros dominate bag-of-words columns: keep them as one block and sort the rest.
        scratch.clear();
        let (mut zn, mut zs) = (0usize, 0.0);
        for &i in node {
            let v = col[i as usize];
            if v == 0.0 {
                zn += 1;
                zs += y[i as usize];
            } else {
                scratch.push((v, y[i as usize]));
            }
        }
        let constant = if scratch.is_empty() {
            true
        } else {
            zn == 0 && scratch.iter().all(|&(v, _)| v == scratch[0].0)
        };
        if constant {
            continue;
        }
        visited += 1;
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = zs + scratch.iter().map(|&(_, v)| v).sum::<f64>();
        let split_at = scratch.partition_point(|&(v, _)| v < 0.0);

        let items = scratch[..split_at]
            .iter()
            .map(|&(v, t)| (v, 1, t))
            .chain((zn > 0).then_some((0.0f32, zn, zs)))
            .chain(scratch[split_at..].iter().map(|&(v, t)| (v, 1, t)));
        let (mut ln, mut ls) = (0usize, 0.0);
        let mut prev: Option<f32> = None;
        for (v, c, sy) in items {
            if let Some(pv) = prev {
                let rn = n - ln;
                if v != pv && ln >= min_leaf && rn >= min_leaf {
                    let rs = total - ls;
                    let score = ls * ls / ln as f64 + rs * rs / rn as f64;
                    if score > parent_score + 1e-12 * parent_score.abs().max(1e-12)
                        && best.as_ref().is_none_or(|b| score > b.score)
                    {
                        let mut t = pv + (v - pv) / 2.0;
                        if t >= v {
                            t = pv;
                        }
                        best = Some(Split { feature: f, threshold: t, score });
                    }
                }
            }
            ln += c;
            ls += sy;
            prev = Some(v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(cols: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_columns(&cols.iter().map(|c| c.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_tree_separates_step() {
        let x = matrix(&[&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let spec = LearnerSpec { n_trees: 1, bootstrap: false, ..LearnerSpec::classifier(1) };
        let f = Forest::fit(&spec, &x, &y, &[]).unwrap();
        assert_eq!(f.predict(&x), y.to_vec());
        assert_eq!(f.trees()[0].n_leaves(), 2);
        let probe = matrix(&[&[2.4, 2.6]]);
        assert_eq!(f.predict(&probe), vec![0.0, 1.0]);
    }

    #[test]
    fn handles_negative_and_zero_values() {
        let x = matrix(&[&[-2.0, -1.0, 0.0, 0.0, 1.0, 2.0]]);
        let y = [5.0, 5.0, 1.0, 1.0, 9.0, 9.0];
        let spec = LearnerSpec { n_trees: 1, bootstrap: false, min_leaf: Some(1), ..LearnerSpec::regressor(1) };
        let f = Forest::fit(&spec, &x, &y, &[]).unwrap();
        assert_eq!(f.predict(&x), y.to_vec());
    }

    #[test]
    fn min_leaf_limits_growth() {
        let x = matrix(&[&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]]);
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let spec = LearnerSpec { n_trees: 1, bootstrap: false, min_leaf: Some(4), ..LearnerSpec::regressor(0) };
        let f = Forest::fit(&spec, &x, &y, &[]).unwrap();
        assert!(f.trees()[0].n_leaves() <= 2);
    }

    #[test]
    fn constant_features_do_not_count_toward_mtry() {
        // One informative column hidden among constant ones; mtry = 1.
        let mut cols: Vec<Vec<f64>> = vec![vec![3.0; 6]; 9];
        cols.push(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = FeatureMatrix::from_columns(&cols).unwrap();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let spec = LearnerSpec {
            n_trees: 5,
            bootstrap: false,
            features_per_split: FeaturesPerSplit::Count(1),
            ..LearnerSpec::classifier(3)
        };
        let f = Forest::fit(&spec, &x, &y, &[]).unwrap();
        assert_eq!(f.predict(&x), y.to_vec());
    }

    #[test]
    fn deterministic_and_tag_sensitive() {
        let x = matrix(&[&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &[1.0, 0.0, 1.0, 0.0, 2.0, 3.0, 1.0, 0.0]]);
        let y = [0.1, 0.5, 0.3, 0.9, 0.2, 0.8, 0.4, 0.6];
        let spec = LearnerSpec { n_trees: 7, min_leaf: Some(1), ..LearnerSpec::regressor(11) };
        let a = Forest::fit(&spec, &x, &y, &[1]).unwrap().predict(&x);
        let b = Forest::fit(&spec, &x, &y, &[1]).unwrap().predict(&x);
        let c = Forest::fit(&spec, &x, &y, &[2]).unwrap().predict(&x);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_non_binary_classifier_labels() {
        let x = matrix(&[&[0.0, 1.0]]);
        assert!(LearnerSpec::classifier(0).fit(&x, &[0.0, 0.5], &[]).is_err());
        assert!(matches!(
            LearnerSpec { n_trees: 0, ..LearnerSpec::classifier(0) }.validate(),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn mtry_rules() {
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(100), 10);
        assert_eq!(FeaturesPerSplit::All.resolve(7), 7);
        assert_eq!(FeaturesPerSplit::Fraction(0.01).resolve(50), 1);
        assert_eq!(FeaturesPerSplit::Count(80).resolve(50), 50);
    }

    #[test]
    fn sparse_matrix_roundtrip() {
        let dtm = super::super::vectorize::bow_vectorize(&[("a", "x y x"), ("b", "y")], 1, false).unwrap();
        let m = FeatureMatrix::from_dtm(&dtm);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.select_rows(&[1]).column(1), &[1.0]);
    }
}
