//! Report documents and the plot-ready tables derived from them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use painaffect_core::metrics::Aggregate;
use painaffect_core::protocol::{CaseId, EvalScheme, EvaluationReport, ExperimentPlan, ReportEntry};
use painaffect_core::signal::Channel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub tool_version: String,
    /// SHA-256 over the schema version, the resolved plan and the corpus
    /// fingerprint; identical hashes mean an identical document.
    pub config_hash: String,
    /// SHA-256 of the corpus manifest.
    pub corpus_sha256: String,
    pub plan: ExperimentPlan,
    pub entries: Vec<ReportEntry>,
    pub aggregate: Aggregate,
}

pub fn config_hash(plan: &ExperimentPlan, corpus_sha256: &str) -> String {
    let canonical = serde_json::to_string(&(SCHEMA_VERSION, plan, corpus_sha256)).expect("plan serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

impl ReportFile {
    pub fn new(report: EvaluationReport, corpus_sha256: &str) -> Self {
        ReportFile {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: config_hash(&report.plan, corpus_sha256),
            corpus_sha256: corpus_sha256.to_owned(),
            plan: report.plan,
            entries: report.entries,
            aggregate: report.aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read report {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => bail!("{}: schema version {v}, expected {SCHEMA_VERSION}", path.display()),
            None => bail!("{}: missing schema_version", path.display()),
        }
        serde_json::from_value(value).with_context(|| format!("{} is not a report", path.display()))
    }
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move report into {}", path.display()))?;
    Ok(())
}

/// "eda", "ecg", "emg", "all" (all three fused) or a "+"-joined set.
pub fn modality_label(modalities: &[Channel]) -> String {
    if modalities == Channel::ALL {
        "all".to_owned()
    } else {
        modalities.iter().map(|c| c.name().to_ascii_lowercase()).collect::<Vec<_>>().join("+")
    }
}

pub fn case_label(case: CaseId) -> &'static str {
    case.number()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Tsv,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report files, or directories whose *.json files are all read.
    pub inputs: Vec<PathBuf>,
    /// Directory receiving figure1 and figure4 tables.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
}

fn expand_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("cannot list {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn scheme_label(scheme: &EvalScheme) -> &'static str {
    scheme.name()
}

/// Rows of the per-plan summary table (one per report).
pub fn figure1_rows(reports: &[ReportFile]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                modality_label(&r.plan.modalities),
                case_label(r.plan.case).to_owned(),
                r.plan.classifier.kind.name().to_owned(),
                format!("{:.6}", r.aggregate.mean),
                format!("{:.6}", r.aggregate.std),
                scheme_label(&r.plan.scheme).to_owned(),
                r.plan.use_context.to_string(),
            ]
        })
        .collect()
}

/// Per-subject F1 from person-specific reports, averaged over seeds.
pub fn figure4_rows(reports: &[ReportFile]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        let mut per_subject: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for e in &r.entries {
            for s in &e.subjects {
                per_subject.entry(&s.subject_id).or_default().push(s.f1_macro);
            }
        }
        for (subject, f1) in per_subject {
            rows.push(vec![
                subject.to_owned(),
                case_label(r.plan.case).to_owned(),
                r.plan.classifier.kind.name().to_owned(),
                format!("{:.6}", Aggregate::of(&f1).mean),
                modality_label(&r.plan.modalities),
                r.plan.use_context.to_string(),
            ]);
        }
    }
    rows
}

pub const FIGURE1_HEADER: [&str; 7] = ["modality", "case", "classifier", "mean_f1", "std_f1", "scheme", "context"];
pub const FIGURE4_HEADER: [&str; 6] = ["subject", "case", "classifier", "f1", "modality", "context"];

fn table(header: &[&str], rows: &[Vec<String>], format: TableFormat) -> anyhow::Result<Vec<u8>> {
    let delimiter = match format {
        TableFormat::Csv => b',',
        TableFormat::Tsv => b'\t',
    };
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

pub fn run(args: &ReportArgs) -> anyhow::Result<()> {
    let files = expand_inputs(&args.inputs)?;
    let reports = files.iter().map(|p| ReportFile::read(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let ext = match args.format {
        TableFormat::Csv => "csv",
        TableFormat::Tsv => "tsv",
    };
    let (f1, f4) = (figure1_rows(&reports), figure4_rows(&reports));
    write_atomic(&args.out.join(format!("figure1.{ext}")), &table(&FIGURE1_HEADER, &f1, args.format)?)?;
    write_atomic(&args.out.join(format!("figure4.{ext}")), &table(&FIGURE4_HEADER, &f4, args.format)?)?;
    println!(
        "{} reports: {} figure1 rows, {} figure4 rows in {}",
        reports.len(),
        f1.len(),
        f4.len(),
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_labels() {
        assert_eq!(modality_label(&Channel::ALL), "all");
        assert_eq!(modality_label(&[Channel::EDA, Channel::EMG]), "eda+emg");
        assert_eq!(modality_label(&[Channel::ECG]), "ecg");
    }

    #[test]
    fn empty_tables_have_headers_only() {
        let t = table(&FIGURE1_HEADER, &[], TableFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(t).unwrap(), "modality,case,classifier,mean_f1,std_f1,scheme,context\n");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
