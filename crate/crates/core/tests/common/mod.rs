use painaffect_core::dataset::TaskLabel;

/// Full sort of all training points, then the same vote rule as the model:
/// most votes, then smallest summed distance, then earliest class.
pub fn knn_oracle(train: &[Vec<f64>], labels: &[TaskLabel], k: usize, query: &[f64]) -> TaskLabel {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(j, p)| (p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut tally: Vec<(TaskLabel, usize, f64)> = Vec::new();
    for &(d2, j) in all.iter().take(k) {
        match tally.iter_mut().find(|t| t.0 == labels[j]) {
            Some(t) => {
                t.1 += 1;
                t.2 += d2.sqrt();
            }
            None => tally.push((labels[j], 1, d2.sqrt())),
        }
    }
    // Summation order must match the model's (nearest first), which the
    // sorted iteration above already does.
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)));
    tally[0].0
}

