//! Classifier contract and the three from-scratch learners: k-nearest
//! neighbours, a Gini random forest and softmax gradient-boosted trees.

mod boosting;
mod forest;
mod knn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::TaskLabel;
use crate::error::{Error, Result};

pub use boosting::BoostedTrees;
pub use forest::{DecisionTree, RandomForest};
pub use knn::KnnModel;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::param(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::param(format!(
                    "row {i} has {} features, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Rows gathered in the given order.
    pub fn select(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    KNN,
    RF,
    GBT,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::KNN, ClassifierKind::RF, ClassifierKind::GBT];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::KNN => "KNN",
            ClassifierKind::RF => "RF",
            ClassifierKind::GBT => "GBT",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ClassifierKind::KNN),
            "rf" => Ok(ClassifierKind::RF),
            "gbt" | "xgb" => Ok(ClassifierKind::GBT),
            _ => Err(Error::param(format!("unknown classifier '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub knn_k: usize,
    pub rf_trees: usize,
    pub gbt_rounds: usize,
    pub gbt_learning_rate: f64,
    pub gbt_max_depth: usize,
    pub seed: u64,
}

impl ClassifierSpec {
    /// k = 5, 750 trees, 750 rounds at learning rate 0.1, depth 6.
    pub fn new(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            knn_k: 5,
            rf_trees: 750,
            gbt_rounds: 750,
            gbt_learning_rate: 0.1,
            gbt_max_depth: 6,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("knn_k", self.knn_k),
            ("rf_trees", self.rf_trees),
            ("gbt_rounds", self.gbt_rounds),
            ("gbt_max_depth", self.gbt_max_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::param(format!("{name} must be positive")));
            }
        }
        if !(self.gbt_learning_rate > 0.0 && self.gbt_learning_rate.is_finite()) {
            return Err(Error::param("gbt_learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FittedState {
    Constant(usize),
    Knn(KnnModel),
    Forest(RandomForest),
    Boosted(BoostedTrees),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub classes: Vec<TaskLabel>,
    pub dim: usize,
    state: FittedState,
}

/// Fit with the canonical class order (`TaskLabel` declaration order,
/// restricted to the labels present in `y`).
pub fn fit(spec: &ClassifierSpec, x: &Matrix, y: &[TaskLabel]) -> Result<TrainedModel> {
    let mut classes: Vec<TaskLabel> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    fit_with_class_order(spec, x, y, &classes)
}

/// Fit with an explicit class order. The order decides every class-order tie
/// rule, so relabelling the data and permuting the order alike yields the
/// same model up to the relabelling.
pub fn fit_with_class_order(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[TaskLabel],
    classes: &[TaskLabel],
) -> Result<TrainedModel> {
    spec.validate()?;
    if y.is_empty() || x.rows() == 0 {
        return Err(Error::param("cannot fit on an empty training set"));
    }
    if x.rows() != y.len() {
        return Err(Error::param(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.cols() == 0 {
        return Err(Error::param("feature dimension is zero"));
    }
    let y_idx = y
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::param(format!("label {l} missing from the class order")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let present = {
        let mut p = y_idx.clone();
        p.sort_unstable();
        p.dedup();
        p
    };
    let state = if present.len() == 1 {
        FittedState::Constant(present[0])
    } else {
        match spec.kind {
            ClassifierKind::KNN => FittedState::Knn(KnnModel::fit(x, &y_idx, classes.len(), spec.knn_k)),
            ClassifierKind::RF => FittedState::Forest(RandomForest::fit(x, &y_idx, classes.len(), spec.rf_trees, spec.seed)),
            ClassifierKind::GBT => FittedState::Boosted(BoostedTrees::fit(
                x,
                &y_idx,
                classes.len(),
                spec.gbt_rounds,
                spec.gbt_learning_rate,
                spec.gbt_max_depth,
            )),
        }
    };
    Ok(TrainedModel {
        spec: *spec,
        classes: classes.to_vec(),
        dim: x.cols(),
        state,
    })
}

pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<Vec<TaskLabel>> {
    model.predict(x)
}

impl TrainedModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<TaskLabel>> {
        Ok(self
            .predict_indices(x)?
            .into_iter()
            .map(|i| self.classes[i])
            .collect())
    }

    /// Predictions as indices into `classes`.
    pub fn predict_indices(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.dim {
            return Err(Error::param(format!(
                "model expects {} features, got {}",
                self.dim,
                x.cols()
            )));
        }
        Ok(match &self.state {
            FittedState::Constant(c) => vec![*c; x.rows()],
            FittedState::Knn(m) => m.predict(x),
            FittedState::Forest(m) => m.predict(x),
            FittedState::Boosted(m) => m.predict(x),
        })
    }

    /// Per-round mean training log-loss, for boosted models.
    pub fn training_loss(&self) -> Option<&[f64]> {
        match &self.state {
            FittedState::Boosted(m) => Some(m.train_loss()),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::data(format!("bad model blob: {e}")))
    }
}
