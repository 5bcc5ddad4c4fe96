//! CART trees over dense real features. Samples with `x[feature] <= threshold`
//! go left.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split before settling for the best so far.
    pub max_features: usize,
}

/// Split criterion plus leaf value of a node's samples.
pub(crate) trait Criterion {
    /// Impurity-weighted cost of a sample set given accumulated statistics.
    type Stats: Clone;
    fn empty(&self) -> Self::Stats;
    fn add(&self, s: &mut Self::Stats, i: usize);
    fn remove(&self, s: &mut Self::Stats, i: usize);
    /// Sum over samples of the node impurity (lower is better).
    fn cost(&self, s: &Self::Stats) -> f64;
    fn count(&self, s: &Self::Stats) -> usize;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    fn leaf(&self, samples: &[usize]) -> Vec<f64>;
}

/// Gini impurity over class labels; leaves hold class proportions.
pub(crate) struct Gini<'a> {
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl Criterion for Gini<'_> {
    type Stats = (Vec<usize>, usize);
    fn empty(&self) -> Self::Stats {
        (vec![0; self.n_classes], 0)
    }
    fn add(&self, s: &mut Self::Stats, i: usize) {
        s.0[self.y[i]] += 1;
        s.1 += 1;
    }
    fn remove(&self, s: &mut Self::Stats, i: usize) {
        s.0[self.y[i]] -= 1;
        s.1 -= 1;
    }
    fn cost(&self, s: &Self::Stats) -> f64 {
        if s.1 == 0 {
            return 0.0;
        }
        let n = s.1 as f64;
        let sq: f64 = s.0.iter().map(|&c| (c as f64) * (c as f64)).sum();
        n - sq / n
    }
    fn count(&self, s: &Self::Stats) -> usize {
        s.1
    }
    fn is_pure(&self, s: &Self::Stats) -> bool {
        s.0.iter().filter(|&&c| c > 0).count() <= 1
    }
    fn leaf(&self, samples: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &i in samples {
            counts[self.y[i]] += 1.0;
        }
        let n = samples.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }
}

/// Squared error over residuals; leaves hold a Newton step for softmax
/// boosting, placed at position `class` of a `n_classes` vector.
pub(crate) struct Residual<'a> {
    pub r: &'a [f64],
    pub n_classes: usize,
    pub class: usize,
}

impl Criterion for Residual<'_> {
    type Stats = (f64, f64, usize);
    fn empty(&self) -> Self::Stats {
        (0.0, 0.0, 0)
    }
    fn add(&self, s: &mut Self::Stats, i: usize) {
        s.0 += self.r[i];
        s.1 += self.r[i] * self.r[i];
        s.2 += 1;
    }
    fn remove(&self, s: &mut Self::Stats, i: usize) {
        s.0 -= self.r[i];
        s.1 -= self.r[i] * self.r[i];
        s.2 -= 1;
    }
    fn cost(&self, s: &Self::Stats) -> f64 {
        if s.2 == 0 {
            return 0.0;
        }
        (s.1 - s.0 * s.0 / s.2 as f64).max(0.0)
    }
    fn count(&self, s: &Self::Stats) -> usize {
        s.2
    }
    fn is_pure(&self, s: &Self::Stats) -> bool {
        self.cost(s) <= 1e-12
    }
    fn leaf(&self, samples: &[usize]) -> Vec<f64> {
        let k = self.n_classes as f64;
        let (num, den) = samples.iter().fold((0.0, 0.0), |(n, d), &i| {
            let r = self.r[i];
            (n + r, d + r.abs() * (1.0 - r.abs()))
        });
        let step = if den.abs() < 1e-150 { 0.0 } else { (k - 1.0) / k * num / den };
        let mut v = vec![0.0; self.n_classes];
        v[self.class] = step;
        v
    }
}

/// Midpoint between two distinct sorted values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

pub(crate) fn grow<C: Criterion, R: Rng>(
    x: &[Vec<f64>],
    samples: Vec<usize>,
    crit: &C,
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let n_features = x.first().map_or(0, Vec::len);
    let mut nodes = Vec::new();
    // (node slot, samples, depth)
    let mut work = vec![(0usize, samples, 0usize)];
    nodes.push(Node::Leaf { value: Vec::new() });
    let mut order: Vec<usize> = (0..n_features).collect();
    while let Some((slot, samples, depth)) = work.pop() {
        let mut stats = crit.empty();
        for &i in &samples {
            crit.add(&mut stats, i);
        }
        let can_split = samples.len() >= params.min_samples_split.max(2)
            && params.max_depth.is_none_or(|d| depth < d)
            && !crit.is_pure(&stats);
        let best = if can_split {
            order.shuffle(rng);
            best_split(x, &samples, crit, &stats, &order, params.max_features)
        } else {
            None
        };
        match best {
            None => nodes[slot] = Node::Leaf { value: crit.leaf(&samples) },
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    samples.iter().partition(|&&i| x[i][feature] <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: Vec::new() });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                work.push((right, r, depth + 1));
                work.push((left, l, depth + 1));
            }
        }
    }
    Tree { nodes }
}

/// Lowest-cost split over features in `order`. At least `max_features`
/// features are examined, and more if none of those admits a split. Ties
/// keep the first split found.
fn best_split<C: Criterion>(
    x: &[Vec<f64>],
    samples: &[usize],
    crit: &C,
    total: &C::Stats,
    order: &[usize],
    max_features: usize,
) -> Option<(usize, f64)> {
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted = samples.to_vec();
    for (visited, &f) in order.iter().enumerate() {
        if visited >= max_features && best.is_some() {
            break;
        }
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = crit.empty();
        let mut right = total.clone();
        for w in 0..sorted.len() - 1 {
            let i = sorted[w];
            crit.add(&mut left, i);
            crit.remove(&mut right, i);
            let (lo, hi) = (x[i][f], x[sorted[w + 1]][f]);
            if lo == hi {
                continue;
            }
            let cost = crit.cost(&left) + crit.cost(&right);
            if best.is_none_or(|(c, _, _)| cost < c - 1e-12) {
                best = Some((cost, f, midpoint(lo, hi)));
            }
        }
        debug_assert_eq!(crit.count(&left) + 1, samples.len());
    }
    best.map(|(_, f, t)| (f, t))
}
