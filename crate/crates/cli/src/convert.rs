//! The `convert` subcommand: read a pain/emotion export laid out as
//!
//! ```text
//! <input>/subjects.csv              subject_id, age, gender
//! <input>/non_responders.txt        optional, one subject id per line
//! <input>/pain/<subject>/*.csv      state token (BL, BL1, BLN, PA1-4, PL1-4) in the file name
//! <input>/emotion/<subject>/*.csv   emotion name in the file name
//! ```
//!
//! and write a corpus. Signal files carry `gsr`/`eda`, `ecg` and
//! `emg_trapezius`/`emg` columns, comma or tab separated; other columns are
//! ignored.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::Args;
use serde::Deserialize;

use painaffect_core::dataset::{extract_windows, merge_datasets, store_corpus, Corpus, Gender, RawState, SubjectRecord};
use painaffect_core::signal::{Channel, RawTrace};

use crate::usage;

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Export root (contains subjects.csv, pain/ and emotion/).
    #[arg(long)]
    pub input: PathBuf,
    /// Corpus output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 5.5)]
    pub window_seconds: f64,
    #[arg(long, default_value_t = 5.5)]
    pub stride_seconds: f64,
}

#[derive(Debug, Deserialize)]
struct SubjectRow {
    subject_id: String,
    age: u32,
    gender: String,
}

fn tokens(stem: &str) -> impl Iterator<Item = &str> {
    stem.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty())
}

/// Pain state named by a file name token.
pub fn pain_state(stem: &str) -> Option<RawState> {
    tokens(stem).find_map(|t| match t.to_ascii_uppercase().as_str() {
        "BL" | "BL1" | "BLN" => Some(RawState::BL),
        "PA1" | "PL1" => Some(RawState::PL1),
        "PA2" | "PL2" => Some(RawState::PL2),
        "PA3" | "PL3" => Some(RawState::PL3),
        "PA4" | "PL4" => Some(RawState::PL4),
        _ => None,
    })
}

/// Emotion named by a file name token.
pub fn emotion_state(stem: &str) -> Option<RawState> {
    tokens(stem).find_map(|t| RawState::AFFECTS.into_iter().find(|s| s.name().eq_ignore_ascii_case(t)))
}

fn column_channel(name: &str) -> Option<Channel> {
    match name.trim().to_ascii_lowercase().as_str() {
        "gsr" | "eda" => Some(Channel::EDA),
        "ecg" => Some(Channel::ECG),
        "emg_trapezius" | "emg" => Some(Channel::EMG),
        _ => None,
    }
}

/// Parse one signal file into one trace per channel.
pub fn read_recording(path: &Path, sample_rate: u32) -> anyhow::Result<Vec<RawTrace>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = text.lines().next().unwrap_or("");
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(text.as_bytes());
    let columns: Vec<(usize, Channel)> = reader
        .headers()?
        .iter()
        .enumerate()
        .filter_map(|(i, h)| column_channel(h).map(|c| (i, c)))
        .collect();
    for c in Channel::ALL {
        if !columns.iter().any(|(_, k)| *k == c) {
            bail!("{}: no {} column", path.display(), c);
        }
    }
    let mut samples = vec![Vec::new(); columns.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed row {}", path.display(), line + 2))?;
        for (slot, (i, c)) in columns.iter().enumerate() {
            let v: f64 = record
                .get(*i)
                .unwrap_or("")
                .parse()
                .with_context(|| format!("{}: row {}: bad {} value", path.display(), line + 2, c))?;
            samples[slot].push(v);
        }
    }
    columns
        .iter()
        .zip(samples)
        .map(|((_, c), s)| RawTrace::new(*c, sample_rate, s).map_err(Into::into))
        .collect()
}

fn subject_dirs(root: &Path) -> anyhow::Result<Vec<String>> {
    if !root.is_dir() {
        bail!("missing directory {}", root.display());
    }
    let mut ids: Vec<String> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .collect();
    ids.sort();
    Ok(ids)
}

fn signal_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "tsv"))
        .collect();
    files.sort();
    Ok(files)
}

fn read_subjects(path: &Path) -> anyhow::Result<Vec<SubjectRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    reader
        .deserialize()
        .map(|r| r.with_context(|| format!("{}: malformed subject row", path.display())))
        .collect()
}

pub fn run(args: &ConvertArgs) -> anyhow::Result<()> {
    if args.sample_rate == 0 || !(args.window_seconds > 0.0) || !(args.stride_seconds > 0.0) {
        return Err(usage("sample rate, window and stride must be positive"));
    }
    let root = &args.input;
    let rows = read_subjects(&root.join("subjects.csv"))?;
    let non_responders: Vec<String> = match fs::read_to_string(root.join("non_responders.txt")) {
        Ok(text) => text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e).context("cannot read non_responders.txt"),
    };
    let pain = subject_dirs(&root.join("pain"))?;
    let emotion = subject_dirs(&root.join("emotion"))?;
    let kept = merge_datasets(&pain, &emotion, &non_responders);

    let mut subjects = Vec::new();
    let mut windows = Vec::new();
    for id in &kept {
        let row = rows
            .iter()
            .find(|r| &r.subject_id == id)
            .with_context(|| format!("subject {id} is missing from subjects.csv"))?;
        let gender: Gender = row.gender.parse()?;
        subjects.push(SubjectRecord { subject_id: id.clone(), age: row.age, gender, pain_responder: true });
        for (dir, classify) in [
            ("pain", pain_state as fn(&str) -> Option<RawState>),
            ("emotion", emotion_state),
        ] {
            for file in signal_files(&root.join(dir).join(id))? {
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let Some(state) = classify(stem) else {
                    eprintln!("skipping {}: no state in file name", file.display());
                    continue;
                };
                let recording = read_recording(&file, args.sample_rate)?;
                let prefix = format!("{}-{}", state.name(), stem);
                windows.extend(extract_windows(
                    id,
                    state,
                    &recording,
                    args.window_seconds,
                    args.stride_seconds,
                    &prefix,
                )?);
            }
        }
    }
    let corpus = Corpus::new(subjects, windows)?;
    store_corpus(&corpus, &args.out)?;
    println!(
        "{} subjects ({} pain, {} emotion, {} excluded), {} windows written to {}",
        corpus.subjects.len(),
        pain.len(),
        emotion.len(),
        non_responders.len(),
        corpus.windows.len(),
        args.out.display()
    );
    Ok(())
}
