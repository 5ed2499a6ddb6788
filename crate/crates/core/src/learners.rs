//! Base classifiers fitted on balanced subsets.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// A fitted model mapping a feature row to P(y = 1 | x) in [0, 1].
pub trait ProbabilisticClassifier: Debug + Send + Sync {
    fn n_features(&self) -> usize;

    fn predict_proba(&self, row: &[f64]) -> Result<f64>;

    fn predict_all(&self, ds: &LabeledDataset) -> Result<Vec<f64>> {
        ds.rows().map(|r| self.predict_proba(r)).collect()
    }
}

fn check_dim(expected: usize, row: &[f64]) -> Result<()> {
    if row.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: row.len(),
        });
    }
    Ok(())
}

/// Selects and fits a base learner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    #[default]
    Tree,
    Gnb,
}

impl LearnerKind {
    pub fn fit(&self, ds: &LabeledDataset) -> Result<Arc<dyn ProbabilisticClassifier>> {
        Ok(match self {
            LearnerKind::Tree => Arc::new(DecisionTree::fit(ds)?),
            LearnerKind::Gnb => Arc::new(GaussianNb::fit(ds)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Tree => "tree",
            LearnerKind::Gnb => "gnb",
        }
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(LearnerKind::Tree),
            "gnb" => Ok(LearnerKind::Gnb),
            other => Err(Error::invalid(format!("unknown base learner {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        positive_fraction: f64,
    },
}

/// Depth-unlimited CART with Gini impurity.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl DecisionTree {
    /// Grows until every node is pure, holds fewer than two rows, or has no
    /// feature with two distinct values. Among equal-impurity splits the
    /// lowest feature index wins, then the lowest threshold.
    pub fn fit(ds: &LabeledDataset) -> Result<Self> {
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_features: ds.n_features(),
        };
        let mut rows: Vec<usize> = (0..ds.n_rows()).collect();
        let mut scratch = Vec::with_capacity(rows.len());
        tree.grow(ds, &mut rows, &mut scratch);
        Ok(tree)
    }

    fn grow(&mut self, ds: &LabeledDataset, rows: &mut [usize], scratch: &mut Vec<(f64, u8)>) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let pos = rows.iter().filter(|&&i| ds.label(i) == 1).count();
        let leaf = Node::Leaf {
            positive_fraction: pos as f64 / n as f64,
        };
        self.nodes.push(leaf);
        if n < 2 || pos == 0 || pos == n {
            return id;
        }
        let Some(best) = best_split(ds, rows, pos, scratch) else {
            return id;
        };
        // Stable partition keeps the child row order deterministic.
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| ds.row(i)[best.feature] < best.threshold);
        let l = self.grow(ds, &mut left, scratch);
        let r = self.grow(ds, &mut right, scratch);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        check_dim(self.n_features, row)?;
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { positive_fraction } => return Ok(positive_fraction),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }
}

// Minimizing weighted child Gini is the same as maximizing
// sum over children of (p^2 + q^2) / n_child, which needs no division by n.
fn purity(pos: usize, n: usize) -> f64 {
    let p = pos as f64;
    let q = (n - pos) as f64;
    (p * p + q * q) / n as f64
}

fn best_split(
    ds: &LabeledDataset,
    rows: &[usize],
    total_pos: usize,
    scratch: &mut Vec<(f64, u8)>,
) -> Option<BestSplit> {
    let n = rows.len();
    let mut best: Option<BestSplit> = None;
    for feature in 0..ds.n_features() {
        scratch.clear();
        scratch.extend(rows.iter().map(|&i| (ds.row(i)[feature], ds.label(i))));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0;
        for k in 1..n {
            left_pos += scratch[k - 1].1 as usize;
            let (lo, hi) = (scratch[k - 1].0, scratch[k].0);
            if lo == hi {
                continue;
            }
            let score = purity(left_pos, k) + purity(total_pos - left_pos, n - k);
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mut threshold = 0.5 * lo + 0.5 * hi;
                if threshold <= lo {
                    threshold = hi;
                }
                best = Some(BestSplit {
                    feature,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

impl ProbabilisticClassifier for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict(row)
    }
}

/// Gaussian naive Bayes over the two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    priors: [f64; 2],
    means: [Vec<f64>; 2],
    variances: [Vec<f64>; 2],
}

/// Relative variance floor, scaled by the largest per-feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

impl GaussianNb {
    pub fn fit(ds: &LabeledDataset) -> Result<Self> {
        ds.require_both_classes()?;
        let d = ds.n_features();
        let n = ds.n_rows() as f64;

        let column_stats = |rows: &[usize]| {
            let m = rows.len() as f64;
            let mut mean = vec![0.0; d];
            for &i in rows {
                for (acc, v) in mean.iter_mut().zip(ds.row(i)) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![0.0; d];
            for &i in rows {
                for ((acc, v), mu) in var.iter_mut().zip(ds.row(i)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            (mean, var)
        };

        let all: Vec<usize> = (0..ds.n_rows()).collect();
        let (_, total_var) = column_stats(&all);
        let max_var = total_var.iter().cloned().fold(0.0, f64::max);
        let floor = if max_var > 0.0 {
            VAR_SMOOTHING * max_var
        } else {
            VAR_SMOOTHING
        };

        let neg = ds.majority_indices();
        let pos = ds.minority_indices();
        let (m0, mut v0) = column_stats(&neg);
        let (m1, mut v1) = column_stats(&pos);
        for v in v0.iter_mut().chain(v1.iter_mut()) {
            *v = v.max(floor);
        }
        Ok(GaussianNb {
            priors: [neg.len() as f64 / n, pos.len() as f64 / n],
            means: [m0, m1],
            variances: [v0, v1],
        })
    }

    pub fn priors(&self) -> [f64; 2] {
        self.priors
    }

    pub fn variances(&self, class: usize) -> &[f64] {
        &self.variances[class]
    }

    fn log_joint(&self, class: usize, row: &[f64]) -> f64 {
        let mut acc = self.priors[class].ln();
        for ((x, mu), var) in row.iter().zip(&self.means[class]).zip(&self.variances[class]) {
            let z = x - mu;
            acc -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + z * z / var);
        }
        acc
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        check_dim(self.means[0].len(), row)?;
        let l0 = self.log_joint(0, row);
        let l1 = self.log_joint(1, row);
        // Logistic of the log-odds, evaluated on the non-overflowing side.
        let t = l1 - l0;
        Ok(if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        })
    }
}

impl ProbabilisticClassifier for GaussianNb {
    fn n_features(&self) -> usize {
        self.means[0].len()
    }

    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict(row)
    }
}
