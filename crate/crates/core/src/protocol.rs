//! Case studies, evaluation schemes and the experiment runner.
//!
//! * Case -1: train, validate and test on BL, LLP and HLP only.
//! * Case 0: the case -1 model, tested with the affect windows added back
//!   (scored over BL, LLP, HLP and A).
//! * Case 5: BL folded into the affect class; classes LLP, HLP, A.
//! * Case 6: BL removed; classes LLP, HLP, A with a class-balanced training set.
//!
//! Cases -1, 0 and 5 share one training size and class proportion (BL in
//! case -1/0 corresponds to A in case 5); case 0 reuses case -1's training
//! set exactly, and cases 0 and 5 test on the same windows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContextFeatures, Corpus, TaskLabel};
use crate::error::{Error, Result};
use crate::learners::{fit, ClassifierSpec, Matrix, TrainedModel};
use crate::metrics::{confusion, Aggregate, ClassScore, ConfusionMatrix};
use crate::seed::{self, Stream};
use crate::signal::{build_feature_vector, Channel, PreprocessConfig};

/// Share of each training side carved off as a (never tuned on) validation set.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseId {
    CaseMinus1,
    Case0,
    Case5,
    Case6,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::CaseMinus1, CaseId::Case0, CaseId::Case5, CaseId::Case6];

    /// Short numeric name ("-1", "0", "5", "6").
    pub fn number(self) -> &'static str {
        match self {
            CaseId::CaseMinus1 => "-1",
            CaseId::Case0 => "0",
            CaseId::Case5 => "5",
            CaseId::Case6 => "6",
        }
    }

    /// Label set the case is scored on, in canonical order.
    pub fn eval_classes(self) -> Vec<TaskLabel> {
        use TaskLabel::*;
        match self {
            CaseId::CaseMinus1 => vec![BL, LLP, HLP],
            CaseId::Case0 => vec![BL, LLP, HLP, A],
            CaseId::Case5 | CaseId::Case6 => vec![LLP, HLP, A],
        }
    }

    /// Label set present in training.
    pub fn train_classes(self) -> Vec<TaskLabel> {
        use TaskLabel::*;
        match self {
            CaseId::CaseMinus1 | CaseId::Case0 => vec![BL, LLP, HLP],
            CaseId::Case5 | CaseId::Case6 => vec![LLP, HLP, A],
        }
    }

    /// Relabelling applied to training and validation windows (None = dropped).
    fn train_label(self, label: TaskLabel) -> Option<TaskLabel> {
        use TaskLabel::*;
        match (self, label) {
            (CaseId::CaseMinus1 | CaseId::Case0, A) => None,
            (CaseId::Case5, BL) => Some(A),
            (CaseId::Case6, BL) => None,
            (_, l) => Some(l),
        }
    }

    fn test_label(self, label: TaskLabel) -> Option<TaskLabel> {
        use TaskLabel::*;
        match (self, label) {
            (CaseId::CaseMinus1, A) => None,
            (CaseId::Case0, l) => Some(l),
            (c, l) => c.train_label(l),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}", self.number())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "-1" | "m1" | "minus1" | "caseminus1" => Ok(CaseId::CaseMinus1),
            "0" | "case0" => Ok(CaseId::Case0),
            "5" | "case5" => Ok(CaseId::Case5),
            "6" | "case6" => Ok(CaseId::Case6),
            _ => Err(Error::param(format!("unknown case '{s}' (expected -1, 0, 5 or 6)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvalScheme {
    /// Sample-level stratified split, repeated over seeds.
    Known { train_fraction: f64, n_seeds: usize },
    /// Whole subjects held out, repeated over seeded draws.
    Unknown { held_out_subjects: usize, n_repeats: usize },
    /// Stratified split inside each subject, repeated over seeds.
    PersonSpecific { train_fraction: f64, n_seeds: usize },
}

impl EvalScheme {
    pub fn known() -> Self {
        EvalScheme::Known { train_fraction: 0.7, n_seeds: 5 }
    }

    pub fn unknown() -> Self {
        EvalScheme::Unknown { held_out_subjects: 15, n_repeats: 5 }
    }

    pub fn person_specific() -> Self {
        EvalScheme::PersonSpecific { train_fraction: 0.7, n_seeds: 5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalScheme::Known { .. } => "known",
            EvalScheme::Unknown { .. } => "unknown",
            EvalScheme::PersonSpecific { .. } => "personal",
        }
    }

    pub fn repetitions(&self) -> usize {
        match *self {
            EvalScheme::Known { n_seeds, .. } | EvalScheme::PersonSpecific { n_seeds, .. } => n_seeds,
            EvalScheme::Unknown { n_repeats, .. } => n_repeats,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EvalScheme::Known { train_fraction, n_seeds } | EvalScheme::PersonSpecific { train_fraction, n_seeds } => {
                check_fraction(train_fraction)?;
                if n_seeds == 0 {
                    return Err(Error::param("n_seeds must be positive"));
                }
            }
            EvalScheme::Unknown { held_out_subjects, n_repeats } => {
                if held_out_subjects == 0 || n_repeats == 0 {
                    return Err(Error::param("held_out_subjects and n_repeats must be positive"));
                }
            }
        }
        Ok(())
    }
}

impl FromStr for EvalScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "known" => Ok(EvalScheme::known()),
            "unknown" | "lnso" => Ok(EvalScheme::unknown()),
            "personal" | "person" | "person-specific" => Ok(EvalScheme::person_specific()),
            _ => Err(Error::param(format!("unknown scheme '{s}' (expected known, unknown or personal)"))),
        }
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("train fraction must lie in (0, 1), got {f}")))
    }
}

/// Train/test partition as indices into `corpus.windows`, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Test subjects, for subject-level splits.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held_out: Vec<String>,
}

/// Seeded stratified selection: per-class quotas are `floor(n_c * fraction)`
/// plus the rounding remainder of `round(n * fraction)` handed to the classes
/// with the largest fractional parts (earlier class on ties). Returns
/// (selected, rest), both ascending.
fn stratified_take(items: &[(usize, TaskLabel)], fraction: f64, rng: &mut Stream) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<TaskLabel, Vec<usize>> = BTreeMap::new();
    for &(i, l) in items {
        by_class.entry(l).or_default().push(i);
    }
    let target = (items.len() as f64 * fraction).round() as usize;
    let mut quotas: Vec<(TaskLabel, usize, f64)> = by_class
        .iter()
        .map(|(&l, members)| {
            let exact = members.len() as f64 * fraction;
            (l, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        let (l, q, _) = quotas[k];
        if q < by_class[&l].len() {
            quotas[k].1 += 1;
        }
    }
    let mut selected = Vec::new();
    let mut rest = Vec::new();
    for (l, quota, _) in quotas {
        let mut members = by_class.remove(&l).expect("class present");
        members.sort_unstable();
        members.shuffle(rng);
        selected.extend_from_slice(&members[..quota]);
        rest.extend_from_slice(&members[quota..]);
    }
    selected.sort_unstable();
    rest.sort_unstable();
    (selected, rest)
}

fn labelled(corpus: &Corpus, indices: impl IntoIterator<Item = usize>) -> Vec<(usize, TaskLabel)> {
    indices.into_iter().map(|i| (i, corpus.windows[i].label())).collect()
}

/// Sample-level split stratified by task label.
pub fn split_known(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<Split> {
    check_fraction(train_fraction)?;
    if corpus.windows.is_empty() {
        return Err(Error::param("corpus has no windows"));
    }
    let items = labelled(corpus, 0..corpus.windows.len());
    let mut rng = seed::stream(seed::derive_tagged(seed, "split-known", &[]));
    let (train, test) = stratified_take(&items, train_fraction, &mut rng);
    Ok(Split { train, test, held_out: Vec::new() })
}

/// Leave `held_out` subjects out; draw `repeat_index` of a seeded series.
pub fn split_unknown(corpus: &Corpus, held_out: usize, repeat_index: usize, master_seed: u64) -> Result<Split> {
    let ids = corpus.subject_ids();
    if held_out == 0 || held_out >= ids.len() {
        return Err(Error::param(format!(
            "cannot hold out {held_out} of {} subjects",
            ids.len()
        )));
    }
    let mut shuffled: Vec<&str> = ids.clone();
    let mut rng = seed::stream(seed::derive_tagged(master_seed, "split-unknown", &[repeat_index as u64]));
    shuffled.shuffle(&mut rng);
    let mut test_ids: Vec<String> = shuffled[..held_out].iter().map(|s| s.to_string()).collect();
    test_ids.sort();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, w) in corpus.windows.iter().enumerate() {
        if test_ids.binary_search(&w.subject_id).is_ok() {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Ok(Split { train, test, held_out: test_ids })
}

/// Stratified split of one subject's windows. Every class the subject has
/// must have at least two windows.
pub fn split_personal(corpus: &Corpus, subject_id: &str, train_fraction: f64, seed: u64) -> Result<Split> {
    check_fraction(train_fraction)?;
    let items = labelled(
        corpus,
        corpus
            .windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.subject_id == subject_id)
            .map(|(i, _)| i),
    );
    if items.is_empty() {
        return Err(Error::Protocol {
            case: "personal".into(),
            message: format!("subject {subject_id} has no windows"),
        });
    }
    let mut counts: BTreeMap<TaskLabel, usize> = BTreeMap::new();
    for (_, l) in &items {
        *counts.entry(*l).or_default() += 1;
    }
    if let Some((l, n)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(Error::Protocol {
            case: "personal".into(),
            message: format!("subject {subject_id} has only {n} {l} window(s)"),
        });
    }
    let mut rng = seed::stream(seed::derive_tagged(seed, "split-personal", &[seed::hash_str(subject_id)]));
    let (train, test) = stratified_take(&items, train_fraction, &mut rng);
    Ok(Split { train, test, held_out: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    /// Index into `corpus.windows`.
    pub window: usize,
    pub subject_id: String,
    pub label: TaskLabel,
}

/// Per-split class counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassManifest {
    pub train: BTreeMap<TaskLabel, usize>,
    pub validation: BTreeMap<TaskLabel, usize>,
    pub test: BTreeMap<TaskLabel, usize>,
}

impl ClassManifest {
    fn count(samples: &[LabeledSample]) -> BTreeMap<TaskLabel, usize> {
        let mut m = BTreeMap::new();
        for s in samples {
            *m.entry(s.label).or_insert(0) += 1;
        }
        m
    }

    pub fn train_total(&self) -> usize {
        self.train.values().sum()
    }

    fn merge(&mut self, other: &ClassManifest) {
        for (mine, theirs) in [
            (&mut self.train, &other.train),
            (&mut self.validation, &other.validation),
            (&mut self.test, &other.test),
        ] {
            for (l, n) in theirs {
                *mine.entry(*l).or_insert(0) += n;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDatasets {
    pub case: CaseId,
    pub classes: Vec<TaskLabel>,
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub class_manifest: ClassManifest,
}

fn samples(corpus: &Corpus, indices: &[usize], relabel: impl Fn(TaskLabel) -> Option<TaskLabel>) -> Vec<LabeledSample> {
    indices
        .iter()
        .filter_map(|&i| {
            let w = &corpus.windows[i];
            relabel(w.label()).map(|label| LabeledSample {
                window: i,
                subject_id: w.subject_id.clone(),
                label,
            })
        })
        .collect()
}

/// Keep `n` of `pool` chosen by a seeded shuffle; result ascending.
fn subsample(mut pool: Vec<usize>, n: usize, rng: &mut Stream) -> Vec<usize> {
    pool.sort_unstable();
    pool.shuffle(rng);
    pool.truncate(n);
    pool.sort_unstable();
    pool
}

/// Build the train/validation/test sets of a case from a split.
///
/// The validation windows are carved from the training side before any
/// case-specific filtering, so every case sees the same carve for a seed.
pub fn build_case_datasets(corpus: &Corpus, case: CaseId, split: &Split, seed: u64) -> Result<CaseDatasets> {
    let pool = labelled(corpus, split.train.iter().copied());
    let mut rng = seed::stream(seed::derive_tagged(seed, "validation", &[]));
    let (validation_idx, rest) = stratified_take(&pool, VALIDATION_FRACTION, &mut rng);

    let mut by_label: BTreeMap<TaskLabel, Vec<usize>> = BTreeMap::new();
    for &i in &rest {
        by_label.entry(corpus.windows[i].label()).or_default().push(i);
    }
    let take = |l: TaskLabel| by_label.get(&l).cloned().unwrap_or_default();
    let train_idx: Vec<usize> = match case {
        // Uniform size and proportions: the BL slot of cases -1/0 and the A
        // slot of case 5 both hold as many windows as the BL pool.
        CaseId::CaseMinus1 | CaseId::Case0 => {
            let mut v = take(TaskLabel::BL);
            v.extend(take(TaskLabel::LLP));
            v.extend(take(TaskLabel::HLP));
            v
        }
        CaseId::Case5 => {
            let n_bl = take(TaskLabel::BL).len();
            let mut affect = take(TaskLabel::BL);
            affect.extend(take(TaskLabel::A));
            let mut rng = seed::stream(seed::derive_tagged(seed, "uniform", &[]));
            let mut v = subsample(affect, n_bl, &mut rng);
            v.extend(take(TaskLabel::LLP));
            v.extend(take(TaskLabel::HLP));
            v
        }
        CaseId::Case6 => {
            let classes = [TaskLabel::LLP, TaskLabel::HLP, TaskLabel::A];
            let m = classes.iter().map(|&l| take(l).len()).min().unwrap_or(0);
            let mut v = Vec::new();
            for (k, &l) in classes.iter().enumerate() {
                let mut rng = seed::stream(seed::derive_tagged(seed, "balance", &[k as u64]));
                v.extend(subsample(take(l), m, &mut rng));
            }
            v
        }
    };
    let mut train_idx = train_idx;
    train_idx.sort_unstable();

    let train = samples(corpus, &train_idx, |l| case.train_label(l));
    let validation = samples(corpus, &validation_idx, |l| case.train_label(l));
    let test = samples(corpus, &split.test, |l| case.test_label(l));
    let class_manifest = ClassManifest {
        train: ClassManifest::count(&train),
        validation: ClassManifest::count(&validation),
        test: ClassManifest::count(&test),
    };
    for (name, counts, required) in [
        ("train", &class_manifest.train, case.train_classes()),
        ("test", &class_manifest.test, case.eval_classes()),
    ] {
        if let Some(missing) = required.iter().find(|l| counts.get(l).copied().unwrap_or(0) == 0) {
            return Err(Error::Protocol {
                case: case.to_string(),
                message: format!("class {missing} is empty in the {name} split"),
            });
        }
    }
    Ok(CaseDatasets {
        case,
        classes: case.eval_classes(),
        train,
        validation,
        test,
        class_manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub case: CaseId,
    pub scheme: EvalScheme,
    /// Fused channels, kept sorted in EDA, ECG, EMG order.
    pub modalities: Vec<Channel>,
    pub classifier: ClassifierSpec,
    pub use_context: bool,
    pub preprocess: PreprocessConfig,
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::param("plan needs at least one modality"));
        }
        if self.modalities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("modalities must be distinct and in EDA, ECG, EMG order"));
        }
        self.scheme.validate()?;
        self.classifier.validate()?;
        self.preprocess.validate()
    }

    /// Human-readable coordinates, used to annotate errors.
    pub fn coordinates(&self) -> String {
        let mods: Vec<&str> = self.modalities.iter().map(|c| c.name()).collect();
        format!(
            "{} / {} / {} / {}{}",
            self.case,
            self.scheme.name(),
            mods.join("+"),
            self.classifier.kind,
            if self.use_context { " / context" } else { "" }
        )
    }
}

/// Feature rows for every corpus window under one (modalities, preprocessing,
/// context) choice; shared by every plan that agrees on those.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub modalities: Vec<Channel>,
    pub preprocess: PreprocessConfig,
    pub use_context: bool,
    pub matrix: Matrix,
}

impl FeatureTable {
    pub fn build(corpus: &Corpus, modalities: &[Channel], preprocess: &PreprocessConfig, use_context: bool) -> Result<Self> {
        let contexts: BTreeMap<&str, ContextFeatures> = if use_context {
            corpus
                .subjects
                .iter()
                .map(|s| ContextFeatures::for_subject(s).map(|c| (s.subject_id.as_str(), c)))
                .collect::<Result<_>>()?
        } else {
            BTreeMap::new()
        };
        let rows = corpus
            .windows
            .par_iter()
            .map(|w| {
                let ctx = if use_context {
                    Some(contexts.get(w.subject_id.as_str()).ok_or_else(|| {
                        Error::data(format!("no subject record for {}", w.subject_id))
                    })?)
                } else {
                    None
                };
                build_feature_vector(w, modalities, preprocess, ctx).map(|f| f.to_row())
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(Error::data("windows produce feature vectors of different lengths"));
            }
        }
        Ok(FeatureTable {
            modalities: modalities.to_vec(),
            preprocess: *preprocess,
            use_context,
            matrix: Matrix::from_rows(&rows)?,
        })
    }

    pub fn for_plan(plan: &ExperimentPlan, corpus: &Corpus) -> Result<Self> {
        Self::build(corpus, &plan.modalities, &plan.preprocess, plan.use_context)
    }

    fn matches(&self, plan: &ExperimentPlan) -> bool {
        self.modalities == plan.modalities && self.preprocess == plan.preprocess && self.use_context == plan.use_context
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject_id: String,
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix<TaskLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSubject {
    pub subject_id: String,
    pub reason: String,
}

/// One seed (known, personal) or repeat (unknown) of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub index: usize,
    pub seed: u64,
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix<TaskLabel>,
    pub per_class: BTreeMap<TaskLabel, ClassScore>,
    pub class_manifest: ClassManifest,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held_out_subjects: Vec<String>,
    /// Per-subject scores of the person-specific scheme.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subjects: Vec<SubjectScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub plan: ExperimentPlan,
    pub entries: Vec<ReportEntry>,
    pub aggregate: Aggregate,
}

/// Seed of repetition `index` of a scheme.
pub fn unit_seed(plan: &ExperimentPlan, index: usize) -> u64 {
    seed::derive_tagged(plan.master_seed, plan.scheme.name(), &[index as u64])
}

/// Split for repetition `index` of a (non-personal) scheme.
pub fn scheme_split(plan: &ExperimentPlan, corpus: &Corpus, index: usize) -> Result<Split> {
    match plan.scheme {
        EvalScheme::Known { train_fraction, .. } => split_known(corpus, train_fraction, unit_seed(plan, index)),
        EvalScheme::Unknown { held_out_subjects, .. } => split_unknown(corpus, held_out_subjects, index, plan.master_seed),
        EvalScheme::PersonSpecific { .. } => Err(Error::param("person-specific splits are per subject")),
    }
}

/// Build a case from a split and fit the plan's classifier on its training set.
pub fn fit_case_model(plan: &ExperimentPlan, corpus: &Corpus, table: &FeatureTable, split: &Split, seed: u64) -> Result<(CaseDatasets, TrainedModel)> {
    let ds = build_case_datasets(corpus, plan.case, split, seed)?;
    let rows: Vec<usize> = ds.train.iter().map(|s| s.window).collect();
    let labels: Vec<TaskLabel> = ds.train.iter().map(|s| s.label).collect();
    let spec = plan.classifier.with_seed(seed::derive(plan.classifier.seed, &[seed]));
    let model = fit(&spec, &table.matrix.select(&rows), &labels)?;
    Ok((ds, model))
}

fn score_split(plan: &ExperimentPlan, corpus: &Corpus, table: &FeatureTable, split: &Split, seed: u64) -> Result<(ConfusionMatrix<TaskLabel>, ClassManifest)> {
    let (ds, model) = fit_case_model(plan, corpus, table, split, seed)?;
    let rows: Vec<usize> = ds.test.iter().map(|s| s.window).collect();
    let truth: Vec<TaskLabel> = ds.test.iter().map(|s| s.label).collect();
    let predicted = model.predict(&table.matrix.select(&rows))?;
    Ok((confusion(&truth, &predicted, &ds.classes)?, ds.class_manifest))
}

fn entry_from(index: usize, seed: u64, cm: ConfusionMatrix<TaskLabel>, f1_macro: f64, class_manifest: ClassManifest) -> ReportEntry {
    let per_class = cm.classes.iter().copied().zip(cm.class_scores()).collect();
    ReportEntry {
        index,
        seed,
        f1_macro,
        confusion: cm,
        per_class,
        class_manifest,
        held_out_subjects: Vec::new(),
        subjects: Vec::new(),
        skipped: Vec::new(),
    }
}

fn personal_entry(plan: &ExperimentPlan, corpus: &Corpus, table: &FeatureTable, index: usize, train_fraction: f64) -> Result<ReportEntry> {
    let seed = unit_seed(plan, index);
    let outcomes: Vec<(String, Result<(ConfusionMatrix<TaskLabel>, ClassManifest)>)> = corpus
        .subject_ids()
        .into_par_iter()
        .map(|id| {
            let subject_seed = seed::derive(seed, &[seed::hash_str(id)]);
            let result = split_personal(corpus, id, train_fraction, subject_seed)
                .and_then(|split| score_split(plan, corpus, table, &split, subject_seed));
            (id.to_string(), result)
        })
        .collect();
    let mut total = ConfusionMatrix {
        classes: plan.case.eval_classes(),
        counts: vec![vec![0; plan.case.eval_classes().len()]; plan.case.eval_classes().len()],
    };
    let mut manifest = ClassManifest::default();
    let mut subjects = Vec::new();
    let mut skipped = Vec::new();
    for (subject_id, outcome) in outcomes {
        match outcome {
            Ok((cm, m)) => {
                total.add(&cm)?;
                manifest.merge(&m);
                subjects.push(SubjectScore {
                    subject_id,
                    f1_macro: cm.f1_macro(),
                    confusion: cm,
                });
            }
            Err(Error::Protocol { message, .. }) => skipped.push(SkippedSubject { subject_id, reason: message }),
            Err(e) => return Err(e.with_context(format!("subject {subject_id}"))),
        }
    }
    if subjects.is_empty() {
        return Err(Error::Protocol {
            case: plan.case.to_string(),
            message: "no subject has enough windows for a person-specific split".into(),
        });
    }
    let f1: Vec<f64> = subjects.iter().map(|s| s.f1_macro).collect();
    let mut entry = entry_from(index, seed, total, Aggregate::of(&f1).mean, manifest);
    entry.subjects = subjects;
    entry.skipped = skipped;
    Ok(entry)
}

/// Run every repetition of a plan on precomputed features.
pub fn run_experiment_with_features(plan: &ExperimentPlan, corpus: &Corpus, table: &FeatureTable) -> Result<EvaluationReport> {
    plan.validate()?;
    if !table.matches(plan) {
        return Err(Error::param("feature table was built for a different modality/preprocessing/context choice"));
    }
    if table.matrix.rows() != corpus.windows.len() {
        return Err(Error::param("feature table does not match the corpus"));
    }
    let reps = plan.scheme.repetitions();
    let entries = (0..reps)
        .into_par_iter()
        .map(|index| {
            let entry = match plan.scheme {
                EvalScheme::PersonSpecific { train_fraction, .. } => personal_entry(plan, corpus, table, index, train_fraction),
                _ => {
                    let seed = unit_seed(plan, index);
                    scheme_split(plan, corpus, index).and_then(|split| {
                        let (cm, manifest) = score_split(plan, corpus, table, &split, seed)?;
                        let f1 = cm.f1_macro();
                        let mut e = entry_from(index, seed, cm, f1, manifest);
                        e.held_out_subjects = split.held_out;
                        Ok(e)
                    })
                }
            };
            entry.map_err(|e| e.with_context(format!("{} / repetition {index}", plan.coordinates())))
        })
        .collect::<Result<Vec<_>>>()?;
    let f1: Vec<f64> = entries.iter().map(|e| e.f1_macro).collect();
    Ok(EvaluationReport {
        plan: plan.clone(),
        aggregate: Aggregate::of(&f1),
        entries,
    })
}

/// Compute features for the plan and run it.
pub fn run_experiment(plan: &ExperimentPlan, corpus: &Corpus) -> Result<EvaluationReport> {
    plan.validate()?;
    let table = FeatureTable::for_plan(plan, corpus).map_err(|e| e.with_context(plan.coordinates()))?;
    run_experiment_with_features(plan, corpus, &table)
}
