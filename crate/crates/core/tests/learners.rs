use painaffect_core::dataset::TaskLabel;
use painaffect_core::learners::{fit, fit_with_class_order, ClassifierKind, ClassifierSpec, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::knn_oracle;

const LABELS: [TaskLabel; 4] = TaskLabel::ALL;

#[test]
fn knn_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..200 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=8);
        // Small integer grids make distance and vote ties common.
        let grid = instance % 2 == 0;
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d)
                .map(|_| if grid { rng.random_range(-2..=2) as f64 } else { rng.random_range(-1.0..1.0) })
                .collect()
        };
        let train: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
        let labels: Vec<TaskLabel> = (0..n).map(|_| LABELS[rng.random_range(0..4)]).collect();
        let queries: Vec<Vec<f64>> = (0..10).map(|_| point(&mut rng)).collect();
        let model = fit(&ClassifierSpec::new(ClassifierKind::KNN), &Matrix::from_rows(&train).unwrap(), &labels).unwrap();
        let got = model.predict(&Matrix::from_rows(&queries).unwrap()).unwrap();
        for (q, g) in queries.iter().zip(&got) {
            assert_eq!(*g, knn_oracle(&train, &labels, 5, q), "instance {instance}, query {q:?}");
        }
    }
}

#[test]
fn knn_with_five_affect_points_always_says_affect() {
    let train: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, -(i as f64)]).collect();
    let model = fit(&ClassifierSpec::new(ClassifierKind::KNN), &Matrix::from_rows(&train).unwrap(), &[TaskLabel::A; 5]).unwrap();
    let probe = Matrix::from_rows(&[vec![1e6, 3.0], vec![-4.0, 0.5]]).unwrap();
    assert_eq!(model.predict(&probe).unwrap(), vec![TaskLabel::A; 2]);
}

#[test]
fn forest_fits_separable_training_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    while rows.len() < 40 {
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let margin = p[0] + 0.5 * p[1] - 0.2;
        if margin.abs() < 0.05 {
            continue;
        }
        y.push(if margin > 0.0 { TaskLabel::HLP } else { TaskLabel::BL });
        rows.push(p);
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let model = fit(&ClassifierSpec::new(ClassifierKind::RF).with_seed(3), &x, &y).unwrap();
    let pred = model.predict(&x).unwrap();
    let correct = pred.iter().zip(&y).filter(|(p, t)| p == t).count();
    assert_eq!(correct, 40);
}

/// Best single threshold on one feature, found exhaustively.
fn stump_oracle(rows: &[Vec<f64>], y: &[TaskLabel]) -> (usize, f64, TaskLabel, TaskLabel) {
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<TaskLabel> = rows.iter().zip(y).filter(|(r, _)| r[f] <= t).map(|(_, l)| *l).collect();
            let right: Vec<TaskLabel> = rows.iter().zip(y).filter(|(r, _)| r[f] > t).map(|(_, l)| *l).collect();
            if left.iter().all(|l| *l == left[0]) && right.iter().all(|l| *l == right[0]) && left[0] != right[0] {
                return (f, t, left[0], right[0]);
            }
        }
    }
    panic!("no perfect stump");
}

#[test]
fn one_boosting_round_equals_a_stump() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Feature 1 is pure noise with overlapping classes; feature 0 separates
    // at a gap between 0.4 and 0.6.
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let hi = i % 2 == 0;
            let v = if hi { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..0.4) };
            vec![v, rng.random_range(0.0..1.0)]
        })
        .collect();
    let y: Vec<TaskLabel> = rows.iter().map(|r| if r[0] > 0.5 { TaskLabel::LLP } else { TaskLabel::A }).collect();
    let mut spec = ClassifierSpec::new(ClassifierKind::GBT);
    spec.gbt_rounds = 1;
    spec.gbt_learning_rate = 1.0;
    let model = fit(&spec, &Matrix::from_rows(&rows).unwrap(), &y).unwrap();
    let (f, t, left, right) = stump_oracle(&rows, &y);
    let probes: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)]).collect();
    let got = model.predict(&Matrix::from_rows(&probes).unwrap()).unwrap();
    for (p, g) in probes.iter().zip(got) {
        assert_eq!(g, if p[f] <= t { left } else { right }, "probe {p:?}");
    }
}

#[test]
fn boosting_loss_is_non_increasing_at_checkpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<TaskLabel> = rows
        .iter()
        .map(|r| {
            // Noisy three-way labels so the loss keeps moving for many rounds.
            let s = r[0] + 0.3 * r[1] + 0.4 * rng.random_range(-1.0..1.0);
            if s < -0.3 {
                TaskLabel::BL
            } else if s < 0.3 {
                TaskLabel::LLP
            } else {
                TaskLabel::HLP
            }
        })
        .collect();
    let model = fit(&ClassifierSpec::new(ClassifierKind::GBT), &Matrix::from_rows(&rows).unwrap(), &y).unwrap();
    let loss = model.training_loss().unwrap();
    assert_eq!(loss.len(), 750);
    let checkpoints = [loss[0], loss[9], loss[99], loss[749]];
    assert!(checkpoints.windows(2).all(|w| w[1] <= w[0]), "{checkpoints:?}");
    assert!(loss[0] < 3f64.ln());
}

fn random_problem(seed: u64, n: usize, d: usize, k: usize) -> (Matrix, Vec<TaskLabel>, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|r| LABELS[((r[0] + 1.0) * k as f64 / 2.0).floor().min(k as f64 - 1.0) as usize])
        .collect();
    let probe: Vec<Vec<f64>> = (0..40).map(|_| (0..d).map(|_| rng.random_range(-1.2..1.2)).collect()).collect();
    (Matrix::from_rows(&rows).unwrap(), y, Matrix::from_rows(&probe).unwrap())
}

fn small_spec(kind: ClassifierKind, seed: u64) -> ClassifierSpec {
    let mut s = ClassifierSpec::new(kind).with_seed(seed);
    s.rf_trees = 30;
    s.gbt_rounds = 20;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabelling_commutes_with_prediction(seed in 0u64..1000, perm_index in 0usize..24, kind_index in 0usize..3) {
        let kind = ClassifierKind::ALL[kind_index];
        let (x, y, probe) = random_problem(seed, 60, 3, 4);
        // perm_index picks one of the 24 bijections of the four labels.
        let mut pool: Vec<TaskLabel> = LABELS.to_vec();
        let mut perm = Vec::new();
        let mut code = perm_index;
        for m in (1..=4).rev() {
            perm.push(pool.remove(code % m));
            code /= m;
        }
        let map = |l: TaskLabel| perm[LABELS.iter().position(|&c| c == l).unwrap()];
        let y2: Vec<TaskLabel> = y.iter().map(|&l| map(l)).collect();
        let spec = small_spec(kind, seed);
        let (base, relabelled) = if kind == ClassifierKind::KNN {
            // Continuous data: no exact vote ties, so plain fits already agree.
            (fit(&spec, &x, &y).unwrap(), fit(&spec, &x, &y2).unwrap())
        } else {
            let mut order: Vec<TaskLabel> = y.clone();
            order.sort();
            order.dedup();
            let order2: Vec<TaskLabel> = order.iter().map(|&l| map(l)).collect();
            (
                fit_with_class_order(&spec, &x, &y, &order).unwrap(),
                fit_with_class_order(&spec, &x, &y2, &order2).unwrap(),
            )
        };
        let p1: Vec<TaskLabel> = base.predict(&probe).unwrap().into_iter().map(map).collect();
        prop_assert_eq!(p1, relabelled.predict(&probe).unwrap());
    }

    #[test]
    fn fitting_is_deterministic(seed in 0u64..1000, kind_index in 0usize..3) {
        let kind = ClassifierKind::ALL[kind_index];
        let (x, y, probe) = random_problem(seed, 50, 4, 3);
        let spec = small_spec(kind, seed);
        let a = fit(&spec, &x, &y).unwrap();
        let b = fit(&spec, &x, &y).unwrap();
        prop_assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn predictions_come_from_the_fitted_classes(seed in 0u64..1000, kind_index in 0usize..3) {
        let (x, y, probe) = random_problem(seed, 40, 2, 2);
        let model = fit(&small_spec(ClassifierKind::ALL[kind_index], seed), &x, &y).unwrap();
        for p in model.predict(&probe).unwrap() {
            prop_assert!(model.classes.contains(&p));
        }
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let (x, y, _) = random_problem(1, 20, 3, 2);
    for kind in ClassifierKind::ALL {
        let model = fit(&small_spec(kind, 1), &x, &y).unwrap();
        let wrong = Matrix::from_rows(&[vec![0.0; 2]]).unwrap();
        assert!(model.predict(&wrong).is_err());
    }
}
