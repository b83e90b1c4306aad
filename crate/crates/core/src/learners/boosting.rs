//! Multiclass gradient boosting with the softmax objective.
//!
//! Each round fits one depth-limited regression tree per class on the
//! first and second derivatives of the softmax cross-entropy, using the
//! exact greedy split search over pre-sorted feature columns. Leaf weights
//! are Newton steps `-G / (H + lambda)` scaled by the learning rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::midpoint;
use super::Matrix;

const LAMBDA: f64 = 1.0;
const MIN_CHILD_WEIGHT: f64 = 1.0;
const MIN_SPLIT_GAIN: f64 = 1e-6;
const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Feature columns sorted once per fit and shared by every tree.
struct SortedColumns {
    // For feature f: (value, row) pairs in ascending value order.
    columns: Vec<Vec<(f64, u32)>>,
}

impl SortedColumns {
    fn new(x: &Matrix) -> Self {
        let columns = (0..x.cols())
            .into_par_iter()
            .map(|f| {
                let mut col: Vec<(f64, u32)> = (0..x.rows()).map(|i| (x.get(i, f), i as u32)).collect();
                col.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                col
            })
            .collect();
        SortedColumns { columns }
    }
}

#[derive(Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn score(g: f64, h: f64) -> f64 {
    g * g / (h + LAMBDA)
}

const INACTIVE: u32 = u32::MAX;

/// Level-wise exact greedy tree. Returns the tree and each row's leaf value.
fn grow_tree(x: &Matrix, cols: &SortedColumns, grad: &[f64], hess: &[f64], max_depth: usize) -> (RegressionTree, Vec<f64>) {
    let n = x.rows();
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut sums: Vec<(f64, f64)> = vec![(grad.iter().sum(), hess.iter().sum())];
    // Row -> node being expanded at this level, or INACTIVE once it sits in a
    // finished leaf.
    let mut position: Vec<u32> = vec![0; n];
    let mut leaf_of: Vec<u32> = vec![0; n];
    let mut frontier: Vec<usize> = vec![0];

    for _depth in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        // Map node id -> slot in the frontier.
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot[node] = s;
        }
        // Packed per-row state for the scan: (gradient, hessian, frontier slot).
        let rows: Vec<(f64, f64, u32)> = (0..n)
            .map(|i| {
                let p = position[i];
                let s = if p == INACTIVE { INACTIVE } else { slot[p as usize] as u32 };
                (grad[i], hess[i], s)
            })
            .collect();
        let parents: Vec<(f64, f64, f64)> = frontier
            .iter()
            .map(|&node| {
                let (g, h) = sums[node];
                (g, h, score(g, h))
            })
            .collect();
        let per_feature: Vec<Vec<Option<SplitChoice>>> = cols
            .columns
            .par_iter()
            .enumerate()
            .map(|(feature, col)| {
                let k = frontier.len();
                // (left gradient sum, left hessian sum, last value seen)
                let mut state = vec![(0.0f64, 0.0f64, f64::NAN); k];
                let mut best: Vec<Option<SplitChoice>> = vec![None; k];
                for &(v, row) in col {
                    let (g_i, h_i, s) = rows[row as usize];
                    if s == INACTIVE {
                        continue;
                    }
                    let s = s as usize;
                    let (gl, hl, last) = state[s];
                    if last < v && hl >= MIN_CHILD_WEIGHT {
                        let (g, h, parent) = parents[s];
                        let (gr, hr) = (g - gl, h - hl);
                        if hr >= MIN_CHILD_WEIGHT {
                            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent);
                            if gain > MIN_SPLIT_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(SplitChoice {
                                    gain,
                                    feature,
                                    threshold: midpoint(last, v),
                                });
                            }
                        }
                    }
                    state[s] = (gl + g_i, hl + h_i, v);
                }
                best
            })
            .collect();

        // Reduce in feature order; strict > keeps the lowest feature index.
        let mut chosen: Vec<Option<SplitChoice>> = vec![None; frontier.len()];
        for feature_best in &per_feature {
            for (s, cand) in feature_best.iter().enumerate() {
                if let Some(c) = cand {
                    if chosen[s].is_none_or(|b| c.gain > b.gain) {
                        chosen[s] = Some(*c);
                    }
                }
            }
        }

        let mut next_frontier = Vec::new();
        // Child ids for each frontier slot that splits.
        let mut children: Vec<Option<(usize, usize)>> = vec![None; frontier.len()];
        for (s, choice) in chosen.iter().enumerate() {
            if let Some(c) = choice {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                sums.push((0.0, 0.0));
                sums.push((0.0, 0.0));
                nodes[frontier[s]] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                children[s] = Some((left, right));
                next_frontier.push(left);
                next_frontier.push(right);
            }
        }
        for i in 0..n {
            let p = position[i];
            if p == INACTIVE {
                continue;
            }
            let s = slot[p as usize];
            match (children[s], chosen[s]) {
                (Some((l, r)), Some(c)) => {
                    let child = if x.get(i, c.feature) <= c.threshold { l } else { r };
                    position[i] = child as u32;
                    sums[child].0 += grad[i];
                    sums[child].1 += hess[i];
                }
                _ => {
                    leaf_of[i] = p;
                    position[i] = INACTIVE;
                }
            }
        }
        frontier = next_frontier;
    }
    for i in 0..n {
        if position[i] != INACTIVE {
            leaf_of[i] = position[i];
        }
    }
    for (id, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            let (g, h) = sums[id];
            *value = -g / (h + LAMBDA);
        }
    }
    let values = leaf_of
        .iter()
        .map(|&l| match nodes[l as usize] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("rows end in leaves"),
        })
        .collect();
    (RegressionTree { nodes }, values)
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    n_classes: usize,
    learning_rate: f64,
    /// `rounds[r][k]` is the tree for class k in round r.
    rounds: Vec<Vec<RegressionTree>>,
    train_loss: Vec<f64>,
}

impl BoostedTrees {
    pub(crate) fn fit(x: &Matrix, y: &[usize], n_classes: usize, n_rounds: usize, learning_rate: f64, max_depth: usize) -> Self {
        let n = x.rows();
        let cols = SortedColumns::new(x);
        let mut scores = vec![0.0f64; n * n_classes];
        let mut prob = vec![0.0f64; n * n_classes];
        let mut rounds = Vec::with_capacity(n_rounds);
        let mut train_loss = Vec::with_capacity(n_rounds);
        for _ in 0..n_rounds {
            for i in 0..n {
                softmax_into(&scores[i * n_classes..(i + 1) * n_classes], &mut prob[i * n_classes..(i + 1) * n_classes]);
            }
            let trees: Vec<(RegressionTree, Vec<f64>)> = (0..n_classes)
                .into_par_iter()
                .map(|k| {
                    let mut grad = Vec::with_capacity(n);
                    let mut hess = Vec::with_capacity(n);
                    for i in 0..n {
                        let p = prob[i * n_classes + k];
                        let target = if y[i] == k { 1.0 } else { 0.0 };
                        grad.push(p - target);
                        hess.push((2.0 * p * (1.0 - p)).max(MIN_HESSIAN));
                    }
                    grow_tree(x, &cols, &grad, &hess, max_depth)
                })
                .collect();
            let mut round = Vec::with_capacity(n_classes);
            for (k, (tree, values)) in trees.into_iter().enumerate() {
                for i in 0..n {
                    scores[i * n_classes + k] += learning_rate * values[i];
                }
                round.push(tree);
            }
            rounds.push(round);
            let mut loss = 0.0;
            for i in 0..n {
                let row = &scores[i * n_classes..(i + 1) * n_classes];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                loss += lse - row[y[i]];
            }
            train_loss.push(loss / n as f64);
        }
        BoostedTrees {
            n_classes,
            learning_rate,
            rounds,
            train_loss,
        }
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                let mut scores = vec![0.0f64; self.n_classes];
                for round in &self.rounds {
                    for (k, tree) in round.iter().enumerate() {
                        scores[k] += self.learning_rate * tree.predict_row(row);
                    }
                }
                let mut best = 0;
                for k in 1..self.n_classes {
                    if scores[k] > scores[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn rounds(&self) -> usize {
        self.rounds.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_xor_like_pattern() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let a = (i % 2) as f64;
            let b = ((i / 2) % 2) as f64;
            rows.push(vec![a + 0.01 * i as f64, b]);
            y.push(((a as usize) ^ (b as usize)) as usize);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let m = BoostedTrees::fit(&x, &y, 2, 30, 0.3, 3);
        assert_eq!(m.predict(&x), y);
    }

    #[test]
    fn loss_decreases() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = BoostedTrees::fit(&x, &y, 3, 50, 0.1, 6);
        let loss = m.train_loss();
        assert!(loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(loss[0] < 3f64.ln());
    }

    #[test]
    fn pure_children_do_not_split_further() {
        // One threshold separates the classes; after the first split the
        // children hold constant gradients and no further gain exists.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = BoostedTrees::fit(&x, &y, 2, 1, 1.0, 6);
        assert_eq!(m.rounds[0][0].nodes.len(), 3);
        assert_eq!(m.predict(&x), y);
    }
}
