use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Brute-force k-nearest-neighbour classifier over Euclidean distance.
///
/// Neighbours are the k smallest `(distance, training index)` pairs. The vote
/// goes to the most frequent class; ties go to the class whose neighbours
/// have the smaller summed distance, then to the earlier class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    train: Matrix,
    labels: Vec<usize>,
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl KnnModel {
    pub(crate) fn fit(x: &Matrix, y: &[usize], n_classes: usize, k: usize) -> Self {
        KnnModel {
            k,
            n_classes,
            train: x.clone(),
            labels: y.to_vec(),
        }
    }

    fn predict_one(&self, query: &[f64], scratch: &mut Vec<(f64, usize)>) -> usize {
        scratch.clear();
        scratch.extend((0..self.train.rows()).map(|j| (squared_distance(query, self.train.row(j)), j)));
        let k = self.k.min(scratch.len());
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, by_distance_then_index);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(by_distance_then_index);
        let mut votes = vec![0usize; self.n_classes];
        let mut total = vec![0.0f64; self.n_classes];
        for &(d2, j) in scratch.iter() {
            let c = self.labels[j];
            votes[c] += 1;
            total[c] += d2.sqrt();
        }
        (0..self.n_classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(total[a].total_cmp(&total[b]))
                    .then(a.cmp(&b))
            })
            .expect("at least one neighbour")
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows())
            .into_par_iter()
            .map_init(Vec::new, |scratch, i| self.predict_one(x.row(i), scratch))
            .collect()
    }
}
