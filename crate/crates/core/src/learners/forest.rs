use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Unpruned classification tree grown on Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate {
    // Sum over children of sum_c(count_c^2) / n_child; larger means lower
    // weighted Gini impurity.
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.score > o.score
                    || (self.score == o.score
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

/// Midpoint between adjacent distinct values, nudged so that `lo` goes left
/// and `hi` goes right even when the midpoint rounds onto `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

struct Grower<'a, R> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    rng: R,
    buf: Vec<(f64, usize)>,
    features: Vec<usize>,
}

impl<R: Rng> Grower<'_, R> {
    fn class_counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in samples {
            counts[self.y[i]] += 1;
        }
        counts
    }

    fn best_for_feature(&mut self, samples: &[usize], feature: usize, totals: &[usize]) -> Option<Candidate> {
        self.buf.clear();
        self.buf.extend(samples.iter().map(|&i| (self.x.get(i, feature), self.y[i])));
        self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.buf.len();
        let mut left = vec![0usize; self.n_classes];
        let mut right = totals.to_vec();
        let mut sq_left = 0.0f64;
        let mut sq_right: f64 = totals.iter().map(|&c| (c * c) as f64).sum();
        let mut best: Option<Candidate> = None;
        for j in 0..n - 1 {
            let (v, c) = self.buf[j];
            sq_left += (2 * left[c] + 1) as f64;
            sq_right -= (2 * right[c] - 1) as f64;
            left[c] += 1;
            right[c] -= 1;
            let next = self.buf[j + 1].0;
            if next > v {
                let n_left = (j + 1) as f64;
                let score = sq_left / n_left + sq_right / (n as f64 - n_left);
                let cand = Candidate {
                    score,
                    feature,
                    threshold: midpoint(v, next),
                };
                // Within one feature thresholds increase, so strict > keeps the lowest.
                if best.is_none_or(|b| score > b.score) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    /// Examine features in random order until `max_features` features that
    /// admit a split have been seen (or none are left).
    fn best_split(&mut self, samples: &[usize], totals: &[usize]) -> Option<Candidate> {
        let d = self.features.len();
        let mut best: Option<Candidate> = None;
        let mut informative = 0;
        for drawn in 0..d {
            let pick = self.rng.random_range(drawn..d);
            self.features.swap(drawn, pick);
            let feature = self.features[drawn];
            if let Some(c) = self.best_for_feature(samples, feature, totals) {
                informative += 1;
                if c.beats(&best) {
                    best = Some(c);
                }
            }
            if informative >= self.max_features {
                break;
            }
        }
        best
    }

    fn grow(mut self, mut samples: Vec<usize>) -> DecisionTree {
        let mut nodes = vec![Node::Leaf { class: 0 }];
        let mut stack = vec![(0usize, 0usize, samples.len())];
        while let Some((node, lo, hi)) = stack.pop() {
            let totals = self.class_counts(&samples[lo..hi]);
            let majority = majority(&totals);
            let pure = totals.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure { None } else { self.best_split(&samples[lo..hi], &totals) };
            let Some(split) = split else {
                nodes[node] = Node::Leaf { class: majority };
                continue;
            };
            let part = &mut samples[lo..hi];
            let mut mid = 0;
            for k in 0..part.len() {
                if self.x.get(part[k], split.feature) <= split.threshold {
                    part.swap(k, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { class: majority });
            nodes.push(Node::Leaf { class: majority });
            nodes[node] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, lo + mid, hi));
            stack.push((left, lo, lo + mid));
        }
        DecisionTree { nodes }
    }
}

/// Most frequent class, lowest index on ties.
fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl DecisionTree {
    /// Grow on `samples` (indices into `x`, repeats allowed).
    pub(crate) fn fit<R: Rng>(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        samples: Vec<usize>,
        max_features: usize,
        rng: R,
    ) -> DecisionTree {
        Grower {
            x,
            y,
            n_classes,
            max_features: max_features.max(1),
            rng,
            buf: Vec::with_capacity(samples.len()),
            features: (0..x.cols()).collect(),
        }
        .grow(samples)
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Bagged Gini trees with sqrt(d) candidate features per split; prediction is
/// the majority vote over trees, ties to the earlier class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    n_classes: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub(crate) fn fit(x: &Matrix, y: &[usize], n_classes: usize, n_trees: usize, seed: u64) -> Self {
        let n = x.rows();
        let max_features = ((x.cols() as f64).sqrt().floor() as usize).max(1);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::stream(seed::derive(seed, &[t as u64]));
                let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(x, y, n_classes, bootstrap, max_features, rng)
            })
            .collect();
        RandomForest { n_classes, trees }
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                let mut votes = vec![0usize; self.n_classes];
                for t in &self.trees {
                    votes[t.predict_row(row)] += 1;
                }
                majority(&votes)
            })
            .collect()
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}
