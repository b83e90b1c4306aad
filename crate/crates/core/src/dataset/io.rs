//! Corpus directory format.
//!
//! ```text
//! <root>/manifest.jsonl            one JSON object per window
//! <root>/<subject>/<window>_<CH>.csv   one sample per line, LF-terminated
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Corpus, Gender, RawState, SignalWindow, SubjectRecord};
use crate::error::{Error, Result};
use crate::signal::{Channel, RawTrace};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    subject_id: String,
    age: u32,
    gender: Gender,
    pain_responder: bool,
    window_id: String,
    raw_state: RawState,
    channel_files: BTreeMap<String, String>,
    sample_rate: u32,
    /// SHA-256 of each channel file, keyed like `channel_files`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checksums: Option<BTreeMap<String, String>>,
}

fn safe_component(kind: &str, s: &str) -> Result<()> {
    let ok = !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{kind} '{s}' is not usable as a file name component"
        )))
    }
}

fn parse_channel_name(name: &str) -> Option<Channel> {
    Channel::ALL.into_iter().find(|c| c.name() == name)
}

fn encode_samples(samples: &[f64]) -> String {
    use std::fmt::Write as _;
    let mut out = String::with_capacity(samples.len() * 10);
    for v in samples {
        // Display prints the shortest decimal that round-trips, without exponents.
        writeln!(out, "{v}").expect("writing to a String");
    }
    out
}

/// Write the corpus under `root`, replacing any manifest already there.
/// Output bytes depend only on the corpus contents.
pub fn store_corpus(corpus: &Corpus, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let subjects: BTreeMap<&str, &SubjectRecord> = corpus
        .subjects
        .iter()
        .map(|s| (s.subject_id.as_str(), s))
        .collect();
    let mut manifest = String::new();
    for w in &corpus.windows {
        safe_component("subject id", &w.subject_id)?;
        safe_component("window id", &w.window_id)?;
        let subject = subjects.get(w.subject_id.as_str()).ok_or_else(|| {
            Error::data(format!("window {} has unknown subject {}", w.window_id, w.subject_id))
        })?;
        let dir = root.join(&w.subject_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut channel_files = BTreeMap::new();
        let mut checksums = BTreeMap::new();
        for trace in w.channels() {
            let rel = format!("{}/{}_{}.csv", w.subject_id, w.window_id, trace.channel);
            let body = encode_samples(&trace.samples);
            let path = root.join(&rel);
            fs::write(&path, body.as_bytes()).map_err(|e| Error::io(&path, e))?;
            checksums.insert(trace.channel.name().to_owned(), hex::encode(Sha256::digest(body.as_bytes())));
            channel_files.insert(trace.channel.name().to_owned(), rel);
        }
        let line = ManifestLine {
            subject_id: w.subject_id.clone(),
            age: subject.age,
            gender: subject.gender,
            pain_responder: subject.pain_responder,
            window_id: w.window_id.clone(),
            raw_state: w.raw_state,
            channel_files,
            sample_rate: w.sample_rate,
            checksums: Some(checksums),
        };
        manifest.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
        manifest.push('\n');
    }
    let path = root.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn load_error(path: &Path, line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_signal(path: &Path, expected_len: usize, checksum: Option<&String>) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| load_error(path, None, format!("cannot read signal file: {e}")))?;
    if let Some(sum) = checksum {
        let actual = hex::encode(Sha256::digest(&bytes));
        if !actual.eq_ignore_ascii_case(sum) {
            return Err(load_error(path, None, format!("checksum mismatch (manifest {sum}, file {actual})")));
        }
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| load_error(path, None, "signal file is not UTF-8"))?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(load_error(path, None, "truncated signal file (no final newline)"));
    }
    let mut samples = Vec::with_capacity(expected_len);
    for (i, line) in text.lines().enumerate() {
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| load_error(path, Some(i + 1), format!("not a number: '{line}'")))?;
        if !v.is_finite() {
            return Err(load_error(path, Some(i + 1), "non-finite sample"));
        }
        samples.push(v);
    }
    if samples.len() != expected_len {
        return Err(load_error(
            path,
            None,
            format!("truncated signal file: {} samples, expected {expected_len}", samples.len()),
        ));
    }
    Ok(samples)
}

pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| load_error(&manifest_path, None, format!("cannot read manifest: {e}")))?;
    let mut subjects: Vec<SubjectRecord> = Vec::new();
    let mut subject_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut windows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let at = |msg: String| load_error(&manifest_path, Some(lineno), msg);
        let line: ManifestLine = serde_json::from_str(raw).map_err(|e| at(format!("malformed manifest line: {e}")))?;
        let record = SubjectRecord {
            subject_id: line.subject_id.clone(),
            age: line.age,
            gender: line.gender,
            pain_responder: line.pain_responder,
        };
        match subject_index.get(&line.subject_id) {
            Some(&k) if subjects[k] != record => {
                return Err(at(format!("subject {} attributes differ from an earlier line", line.subject_id)));
            }
            Some(_) => {}
            None => {
                subject_index.insert(line.subject_id.clone(), subjects.len());
                subjects.push(record);
            }
        }
        if line.channel_files.is_empty() {
            return Err(at("window lists no channel files".into()));
        }
        let expected = super::window_len(line.sample_rate);
        let mut traces = Vec::new();
        for (name, rel) in &line.channel_files {
            let channel = parse_channel_name(name).ok_or_else(|| at(format!("unknown channel name '{name}'")))?;
            let path: PathBuf = root.join(rel);
            let checksum = line.checksums.as_ref().and_then(|c| c.get(name));
            let samples = read_signal(&path, expected, checksum)?;
            let trace = RawTrace::new(channel, line.sample_rate, samples)
                .map_err(|e| load_error(&path, None, e.to_string()))?;
            traces.push(trace);
        }
        let window = SignalWindow::new(line.subject_id, line.window_id, line.raw_state, traces)
            .map_err(|e| at(e.to_string()))?;
        windows.push(window);
    }
    Corpus::new(subjects, windows).map_err(|e| load_error(&manifest_path, None, e.to_string()))
}
