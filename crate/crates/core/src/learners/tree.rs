//! CART-style binary trees shared by the forest and boosting learners.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn set_leaf_value(&mut self, node: usize, v: f64) {
        if let Node::Leaf { value } = &mut self.nodes[node] {
            *value = v;
        }
    }
}

/// Additive node statistics. The split gain is
/// `cost(parent) - cost(left) - cost(right)`.
pub(crate) trait Criterion {
    type Stats: Copy + Default;

    fn add(&self, stats: &mut Self::Stats, sample: usize);
    fn sub(&self, stats: &mut Self::Stats, sample: usize);
    fn cost(&self, stats: &Self::Stats) -> f64;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
    fn is_pure(&self, stats: &Self::Stats) -> bool;
}

/// Weighted Gini impurity for binary labels.
pub(crate) struct Gini<'a> {
    pub labels: &'a [u8],
    pub weights: &'a [f64],
}

impl Criterion for Gini<'_> {
    type Stats = [f64; 2];

    fn add(&self, s: &mut [f64; 2], i: usize) {
        s[self.labels[i] as usize] += self.weights[i];
    }

    fn sub(&self, s: &mut [f64; 2], i: usize) {
        s[self.labels[i] as usize] -= self.weights[i];
    }

    fn cost(&self, s: &[f64; 2]) -> f64 {
        let total = s[0] + s[1];
        if total <= 0.0 {
            return 0.0;
        }
        total - (s[0] * s[0] + s[1] * s[1]) / total
    }

    /// Weighted fraud fraction.
    fn leaf_value(&self, s: &[f64; 2]) -> f64 {
        let total = s[0] + s[1];
        if total > 0.0 {
            s[1] / total
        } else {
            0.0
        }
    }

    fn is_pure(&self, s: &[f64; 2]) -> bool {
        s[0] <= 0.0 || s[1] <= 0.0
    }
}

/// Weighted least squares on a target vector.
pub(crate) struct LeastSquares<'a> {
    pub targets: &'a [f64],
    pub weights: &'a [f64],
}

impl Criterion for LeastSquares<'_> {
    /// (sum w, sum w*t)
    type Stats = [f64; 2];

    fn add(&self, s: &mut [f64; 2], i: usize) {
        s[0] += self.weights[i];
        s[1] += self.weights[i] * self.targets[i];
    }

    fn sub(&self, s: &mut [f64; 2], i: usize) {
        s[0] -= self.weights[i];
        s[1] -= self.weights[i] * self.targets[i];
    }

    fn cost(&self, s: &[f64; 2]) -> f64 {
        if s[0] <= 0.0 {
            0.0
        } else {
            -s[1] * s[1] / s[0]
        }
    }

    fn leaf_value(&self, s: &[f64; 2]) -> f64 {
        if s[0] > 0.0 {
            s[1] / s[0]
        } else {
            0.0
        }
    }

    fn is_pure(&self, _s: &[f64; 2]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowSettings {
    /// `None` means unlimited.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Non-constant features to examine per split; `None` examines all.
    pub max_features: Option<usize>,
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Samples that reached each leaf, keyed by node index.
    pub leaf_samples: Vec<(usize, Vec<usize>)>,
    /// Total gain attributed to each feature.
    pub importance: Vec<f64>,
}

const MIN_GAIN: f64 = 1e-12;

struct Pending {
    node: usize,
    samples: Vec<usize>,
    depth: usize,
}

pub(crate) fn grow<C: Criterion, R: Rng>(
    x: &Matrix,
    samples: Vec<usize>,
    criterion: &C,
    settings: GrowSettings,
    rng: &mut R,
) -> Grown {
    let d = x.cols();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut leaf_samples = Vec::new();
    let mut importance = vec![0.0; d];
    let mut stack = vec![Pending {
        node: 0,
        samples,
        depth: 0,
    }];
    let mut features: Vec<usize> = (0..d).collect();
    let mut order: Vec<(f64, usize)> = Vec::new();

    while let Some(Pending {
        node,
        samples,
        depth,
    }) = stack.pop()
    {
        let mut stats = C::Stats::default();
        for &i in &samples {
            criterion.add(&mut stats, i);
        }
        let parent_cost = criterion.cost(&stats);
        let can_split = samples.len() >= 2 * settings.min_leaf
            && settings.max_depth.is_none_or(|m| depth < m)
            && !criterion.is_pure(&stats);

        let mut best: Option<(f64, usize, f64)> = None;
        if can_split {
            if settings.max_features.is_some() {
                features.shuffle(rng);
            }
            let budget = settings.max_features.unwrap_or(d);
            let mut examined = 0;
            for &f in features.iter() {
                if examined >= budget {
                    break;
                }
                order.clear();
                order.extend(samples.iter().map(|&i| (x.get(i, f), i)));
                order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if order[0].0 == order[order.len() - 1].0 {
                    continue;
                }
                examined += 1;
                let mut left = C::Stats::default();
                let mut right = stats;
                for k in 0..order.len() - 1 {
                    let i = order[k].1;
                    criterion.add(&mut left, i);
                    criterion.sub(&mut right, i);
                    let (v, next) = (order[k].0, order[k + 1].0);
                    if v == next || k + 1 < settings.min_leaf || order.len() - k - 1 < settings.min_leaf {
                        continue;
                    }
                    let gain = parent_cost - criterion.cost(&left) - criterion.cost(&right);
                    if gain > MIN_GAIN && best.is_none_or(|b| gain > b.0) {
                        let mut threshold = 0.5 * (v + next);
                        if threshold >= next {
                            threshold = v;
                        }
                        best = Some((gain, f, threshold));
                    }
                }
            }
        }

        match best {
            Some((gain, feature, threshold)) => {
                importance[feature] += gain;
                let (l, r): (Vec<usize>, Vec<usize>) =
                    samples.iter().partition(|&&i| x.get(i, feature) <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[node] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push(Pending {
                    node: right,
                    samples: r,
                    depth: depth + 1,
                });
                stack.push(Pending {
                    node: left,
                    samples: l,
                    depth: depth + 1,
                });
            }
            None => {
                nodes[node] = Node::Leaf {
                    value: criterion.leaf_value(&stats),
                };
                leaf_samples.push((node, samples));
            }
        }
    }
    Grown {
        tree: Tree { nodes },
        leaf_samples,
        importance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_tree_separates_threshold() {
        let x = Matrix::from_rows(&[[0.1], [0.2], [0.3], [0.7], [0.8], [0.9]]).unwrap();
        let labels = [0, 0, 0, 1, 1, 1];
        let weights = [1.0; 6];
        let crit = Gini {
            labels: &labels,
            weights: &weights,
        };
        let settings = GrowSettings {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        };
        let g = grow(&x, (0..6).collect(), &crit, settings, &mut crate::seeded_rng(0));
        assert_eq!(g.tree.nodes.len(), 3);
        assert_eq!(g.tree.value(&[0.0]), 0.0);
        assert_eq!(g.tree.value(&[1.0]), 1.0);
        match &g.tree.nodes[0] {
            Node::Split { threshold, .. } => assert!((threshold - 0.5).abs() < 1e-12),
            Node::Leaf { .. } => panic!("expected a split"),
        }
        // parent gini mass 6 * 0.5 = 3, children pure
        assert!((g.importance[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<[f64; 1]> = (0..32).map(|i| [i as f64]).collect();
        let labels: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();
        let weights = vec![1.0; 32];
        let crit = Gini {
            labels: &labels,
            weights: &weights,
        };
        let x = Matrix::from_rows(&rows).unwrap();
        let settings = GrowSettings {
            max_depth: Some(2),
            min_leaf: 1,
            max_features: None,
        };
        let g = grow(&x, (0..32).collect(), &crit, settings, &mut crate::seeded_rng(0));
        assert!(g.leaf_samples.len() <= 4);
        let covered: usize = g.leaf_samples.iter().map(|(_, s)| s.len()).sum();
        assert_eq!(covered, 32);
    }
}
