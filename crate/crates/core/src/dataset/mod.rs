//! Subjects, windows and labels of the merged pain/emotion corpus.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Channel, RawTrace};

pub use io::{load_corpus, store_corpus, MANIFEST_FILE};

/// Length of every labelled excerpt, in seconds.
pub const WINDOW_SECONDS: f64 = 5.5;

pub const MIN_AGE: u32 = 20;
pub const MAX_AGE: u32 = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" | "w" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            _ => Err(Error::param(format!("unknown gender '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub age: u32,
    pub gender: Gender,
    pub pain_responder: bool,
}

/// Elicited state of a recording, before label merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RawState {
    BL,
    PL1,
    PL2,
    PL3,
    PL4,
    Amusement,
    Anger,
    Disgust,
    Fear,
    Sadness,
}

impl RawState {
    pub const ALL: [RawState; 10] = [
        RawState::BL,
        RawState::PL1,
        RawState::PL2,
        RawState::PL3,
        RawState::PL4,
        RawState::Amusement,
        RawState::Anger,
        RawState::Disgust,
        RawState::Fear,
        RawState::Sadness,
    ];

    pub const AFFECTS: [RawState; 5] = [
        RawState::Amusement,
        RawState::Anger,
        RawState::Disgust,
        RawState::Fear,
        RawState::Sadness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RawState::BL => "BL",
            RawState::PL1 => "PL1",
            RawState::PL2 => "PL2",
            RawState::PL3 => "PL3",
            RawState::PL4 => "PL4",
            RawState::Amusement => "Amusement",
            RawState::Anger => "Anger",
            RawState::Disgust => "Disgust",
            RawState::Fear => "Fear",
            RawState::Sadness => "Sadness",
        }
    }

    pub fn is_pain(self) -> bool {
        matches!(
            self,
            RawState::PL1 | RawState::PL2 | RawState::PL3 | RawState::PL4
        )
    }

    pub fn is_affect(self) -> bool {
        RawState::AFFECTS.contains(&self)
    }
}

impl fmt::Display for RawState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RawState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RawState::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown raw state '{s}'")))
    }
}

/// Recognition target. Declaration order is the canonical class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskLabel {
    BL,
    LLP,
    HLP,
    A,
}

impl TaskLabel {
    pub const ALL: [TaskLabel; 4] = [TaskLabel::BL, TaskLabel::LLP, TaskLabel::HLP, TaskLabel::A];

    pub fn name(self) -> &'static str {
        match self {
            TaskLabel::BL => "BL",
            TaskLabel::LLP => "LLP",
            TaskLabel::HLP => "HLP",
            TaskLabel::A => "A",
        }
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// PL1/PL2 merge into low-level pain, PL3/PL4 into high-level pain, and
/// every discrete affect into a single affect class.
pub fn map_pain_levels(state: RawState) -> TaskLabel {
    match state {
        RawState::BL => TaskLabel::BL,
        RawState::PL1 | RawState::PL2 => TaskLabel::LLP,
        RawState::PL3 | RawState::PL4 => TaskLabel::HLP,
        RawState::Amusement
        | RawState::Anger
        | RawState::Disgust
        | RawState::Fear
        | RawState::Sadness => TaskLabel::A,
    }
}

/// Samples in one window at `sample_rate`.
pub fn window_len(sample_rate: u32) -> usize {
    (WINDOW_SECONDS * f64::from(sample_rate)).round() as usize
}

/// One 5.5 s multichannel excerpt of one subject in one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalWindow {
    pub subject_id: String,
    pub window_id: String,
    pub raw_state: RawState,
    pub sample_rate: u32,
    channels: BTreeMap<Channel, RawTrace>,
}

impl SignalWindow {
    pub fn new(
        subject_id: impl Into<String>,
        window_id: impl Into<String>,
        raw_state: RawState,
        traces: Vec<RawTrace>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let window_id = window_id.into();
        let first = traces
            .first()
            .ok_or_else(|| Error::data(format!("window {subject_id}/{window_id} has no channels")))?;
        let sample_rate = first.sample_rate;
        let expected = window_len(sample_rate);
        let mut channels = BTreeMap::new();
        for t in traces {
            if t.sample_rate != sample_rate {
                return Err(Error::data(format!(
                    "window {subject_id}/{window_id}: {} rate {} differs from {sample_rate}",
                    t.channel, t.sample_rate
                )));
            }
            if t.len() != expected {
                return Err(Error::data(format!(
                    "window {subject_id}/{window_id}: {} has {} samples, expected {expected}",
                    t.channel,
                    t.len()
                )));
            }
            if channels.insert(t.channel, t).is_some() {
                return Err(Error::data(format!(
                    "window {subject_id}/{window_id} repeats a channel"
                )));
            }
        }
        Ok(SignalWindow {
            subject_id,
            window_id,
            raw_state,
            sample_rate,
            channels,
        })
    }

    pub fn channel(&self, channel: Channel) -> Option<&RawTrace> {
        self.channels.get(&channel)
    }

    pub fn channels(&self) -> impl Iterator<Item = &RawTrace> {
        self.channels.values()
    }

    pub fn label(&self) -> TaskLabel {
        map_pain_levels(self.raw_state)
    }

    pub fn sample_count(&self) -> usize {
        window_len(self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DemographicGroup {
    F1,
    F2,
    F3,
    M4,
    M5,
    M6,
}

impl DemographicGroup {
    pub const ALL: [DemographicGroup; 6] = [
        DemographicGroup::F1,
        DemographicGroup::F2,
        DemographicGroup::F3,
        DemographicGroup::M4,
        DemographicGroup::M5,
        DemographicGroup::M6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Age bins [20,30), [30,50), [50,65]; the last bin is closed so that a
/// 65-year-old still has a group.
pub fn assign_demographic_group(gender: Gender, age: u32) -> Result<DemographicGroup> {
    if !(MIN_AGE..=MAX_AGE).contains(&age) {
        return Err(Error::param(format!(
            "age {age} outside [{MIN_AGE}, {MAX_AGE}]"
        )));
    }
    let bin = match age {
        20..=29 => 0,
        30..=49 => 1,
        _ => 2,
    };
    let female = [DemographicGroup::F1, DemographicGroup::F2, DemographicGroup::F3];
    let male = [DemographicGroup::M4, DemographicGroup::M5, DemographicGroup::M6];
    Ok(match gender {
        Gender::Female => female[bin],
        Gender::Male => male[bin],
    })
}

/// Demographic context appended to feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    /// 0 for female, 1 for male.
    pub gender_code: f64,
    /// (age - 20) / 45.
    pub age_normalized: f64,
    pub group_onehot: [f64; 6],
}

impl ContextFeatures {
    pub const LEN: usize = 8;

    pub fn for_subject(subject: &SubjectRecord) -> Result<Self> {
        let group = assign_demographic_group(subject.gender, subject.age)?;
        let mut group_onehot = [0.0; 6];
        group_onehot[group.index()] = 1.0;
        Ok(ContextFeatures {
            gender_code: match subject.gender {
                Gender::Female => 0.0,
                Gender::Male => 1.0,
            },
            age_normalized: f64::from(subject.age - MIN_AGE) / f64::from(MAX_AGE - MIN_AGE),
            group_onehot,
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::LEN);
        v.push(self.gender_code);
        v.push(self.age_normalized);
        v.extend_from_slice(&self.group_onehot);
        v
    }
}

/// Subjects present in both source datasets, minus the pain non-responders,
/// sorted by id.
pub fn merge_datasets<S: AsRef<str>>(
    pain_subjects: &[S],
    emotion_subjects: &[S],
    non_responders: &[S],
) -> Vec<String> {
    let emotion: BTreeSet<&str> = emotion_subjects.iter().map(AsRef::as_ref).collect();
    let excluded: BTreeSet<&str> = non_responders.iter().map(AsRef::as_ref).collect();
    pain_subjects
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| emotion.contains(s) && !excluded.contains(s))
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .map(str::to_owned)
        .collect()
}

/// Cut a multichannel recording into 5.5 s (or `window_seconds`) windows
/// starting at the recording start, every `stride_seconds`. Windows never run
/// past the end of the recording.
pub fn extract_windows(
    subject_id: &str,
    raw_state: RawState,
    recording: &[RawTrace],
    window_seconds: f64,
    stride_seconds: f64,
    id_prefix: &str,
) -> Result<Vec<SignalWindow>> {
    if !(window_seconds > 0.0) || !(stride_seconds > 0.0) {
        return Err(Error::param("window and stride must be positive"));
    }
    let Some(first) = recording.first() else {
        return Ok(Vec::new());
    };
    let rate = first.sample_rate;
    let len = first.len();
    for t in recording {
        if t.sample_rate != rate || t.len() != len {
            return Err(Error::data(format!(
                "{subject_id}/{raw_state}: channel {} has {} samples at {} Hz, expected {len} at {rate} Hz",
                t.channel,
                t.len(),
                t.sample_rate
            )));
        }
    }
    let win = (window_seconds * f64::from(rate)).round() as usize;
    let stride = ((stride_seconds * f64::from(rate)).round() as usize).max(1);
    if win == 0 || len < win {
        return Ok(Vec::new());
    }
    let count = (len - win) / stride + 1;
    (0..count)
        .map(|k| {
            let start = k * stride;
            let traces = recording
                .iter()
                .map(|t| RawTrace {
                    channel: t.channel,
                    sample_rate: rate,
                    samples: t.samples[start..start + win].to_vec(),
                })
                .collect();
            SignalWindow::new(subject_id, format!("{id_prefix}-{k:03}"), raw_state, traces)
        })
        .collect()
}

/// Subjects plus their labelled windows. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub subjects: Vec<SubjectRecord>,
    pub windows: Vec<SignalWindow>,
}

impl Corpus {
    /// Checks id uniqueness and that every window belongs to a known subject.
    /// Subjects are kept sorted by id; window order is preserved.
    pub fn new(mut subjects: Vec<SubjectRecord>, windows: Vec<SignalWindow>) -> Result<Self> {
        subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        let mut ids = BTreeSet::new();
        for s in &subjects {
            if !ids.insert(s.subject_id.as_str()) {
                return Err(Error::data(format!("duplicate subject id {}", s.subject_id)));
            }
        }
        let mut window_ids = BTreeSet::new();
        for w in &windows {
            if !ids.contains(w.subject_id.as_str()) {
                return Err(Error::data(format!(
                    "window {} references unknown subject {}",
                    w.window_id, w.subject_id
                )));
            }
            if !window_ids.insert((w.subject_id.as_str(), w.window_id.as_str())) {
                return Err(Error::data(format!(
                    "duplicate window {}/{}",
                    w.subject_id, w.window_id
                )));
            }
        }
        Ok(Corpus { subjects, windows })
    }

    pub fn subject(&self, subject_id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.subject_id == subject_id)
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.subjects.iter().map(|s| s.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    /// Drop non-responders and every subject outside `keep` (when given),
    /// together with their windows.
    pub fn curate(&self, keep: Option<&[String]>) -> Corpus {
        let allowed = |s: &SubjectRecord| {
            s.pain_responder && keep.is_none_or(|k| k.contains(&s.subject_id))
        };
        let subjects: Vec<SubjectRecord> = self.subjects.iter().filter(|s| allowed(s)).cloned().collect();
        let ids: BTreeSet<&str> = subjects.iter().map(|s| s.subject_id.as_str()).collect();
        let windows = self
            .windows
            .iter()
            .filter(|w| ids.contains(w.subject_id.as_str()))
            .cloned()
            .collect();
        Corpus { subjects, windows }
    }

    /// Window counts per task label.
    pub fn label_counts(&self) -> BTreeMap<TaskLabel, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.windows {
            *counts.entry(w.label()).or_insert(0) += 1;
        }
        counts
    }
}
