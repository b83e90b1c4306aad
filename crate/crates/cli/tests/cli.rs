use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_painaffect");

fn painaffect(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PAINAFFECT_THREADS").output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small six-subject cohort at 32 Hz.
fn tiny_corpus(dir: &Path) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("synth.toml");
    fs::write(&cfg, "n_subjects = 6\nfemale_count = 3\nwindows_per_state = 4\nsample_rate_hz = 32\n").unwrap();
    let corpus = dir.join("corpus");
    ok(&painaffect(&["synth", "--config", p(&cfg), "--out", p(&corpus)]));
    corpus
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_default_cohort_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "windows_per_state = 1\nsample_rate_hz = 32\n").unwrap();
    let stdout = ok(&painaffect(&["synth", "--config", p(&cfg), "--out", p(&dir.path().join("c"))]));
    assert!(stdout.starts_with("62 subjects, "), "{stdout}");
}

#[test]
fn synth_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_corpus(&dir.path().join("a"));
    let b = tiny_corpus(&dir.path().join("b"));
    assert_eq!(tree(&a), tree(&b));
    let cfg = dir.path().join("a/synth.toml");
    let c = dir.path().join("c");
    ok(&painaffect(&["synth", "--config", p(&cfg), "--out", p(&c), "--seed", "7"]));
    assert_ne!(tree(&a), tree(&c));
}

#[test]
fn synth_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "n_subjects = 0\n").unwrap();
    let out = painaffect(&["synth", "--config", p(&cfg), "--out", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_subjects"));

    fs::write(&cfg, "n_subject = 4\n").unwrap();
    let out = painaffect(&["synth", "--config", p(&cfg), "--out", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_one_report_per_plan_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let out = dir.path().join("reports");
    let args = [
        "run", "--corpus", p(&corpus), "--out", p(&out), "--case", "5", "--modality", "all", "--clf", "rf",
        "--scheme", "known", "--rf-trees", "20",
    ];
    ok(&painaffect(&args));
    let path = out.join("case5_known_all_rf.json");
    let first = fs::read_to_string(&path).unwrap();
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["entries"].as_array().unwrap().len(), 5);
    assert_eq!(report["plan"]["classifier"]["rf_trees"], 20);

    let again = ok(&painaffect(&args));
    assert!(again.contains("up to date"), "{again}");
    assert_eq!(fs::read_to_string(&path).unwrap(), first);

    // A fresh run into another directory reproduces the bytes.
    let other = dir.path().join("other");
    let mut fresh = args.to_vec();
    fresh[4] = p(&other);
    ok(&painaffect(&fresh));
    assert_eq!(fs::read_to_string(other.join("case5_known_all_rf.json")).unwrap(), first);

    // Changing a knob invalidates the stored report.
    let mut changed = args.to_vec();
    let last = changed.len() - 1;
    changed[last] = "21";
    let stdout = ok(&painaffect(&changed));
    assert!(stdout.contains("1 run, 0 up to date"), "{stdout}");
}

#[test]
fn grid_expands_cases_and_modalities() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let out = dir.path().join("reports");
    ok(&painaffect(&[
        "run", "--corpus", p(&corpus), "--out", p(&out), "--case", "-1,6", "--modality", "eda", "--modality",
        "ecg+emg", "--clf", "knn", "--repetitions", "2",
    ]));
    let mut names: Vec<String> =
        fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        [
            "case6_known_ecg+emg_knn.json",
            "case6_known_eda_knn.json",
            "casem1_known_ecg+emg_knn.json",
            "casem1_known_eda_knn.json",
        ]
    );
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let out = dir.path().join("reports");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "corpus = {:?}\nout = {:?}\ncases = [\"0\"]\nmodalities = [\"emg\"]\nclassifiers = [\"gbt\"]\ngbt_rounds = 3\nrepetitions = 2\ncontext = true\n",
            p(&corpus),
            p(&out)
        ),
    )
    .unwrap();
    ok(&painaffect(&["run", "--config", p(&cfg), "--gbt-rounds", "4"]));
    let text = fs::read_to_string(out.join("case0_known_emg_gbt_ctx.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["plan"]["classifier"]["gbt_rounds"], 4);
    assert_eq!(report["entries"].as_array().unwrap().len(), 2);
}

#[test]
fn run_rejects_bad_values_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let out = dir.path().join("reports");
    let base = ["run", "--corpus", p(&corpus), "--out", p(&out)];
    for extra in [
        &["--case", "3", "--modality", "all", "--clf", "knn"][..],
        &["--case", "5", "--modality", "eeg", "--clf", "knn"],
        &["--case", "5", "--modality", "all", "--clf", "svm"],
        &["--case", "5", "--modality", "all", "--clf", "knn", "--scheme", "loso"],
        &["--case", "5", "--modality", "all", "--clf", "knn", "--knn-k", "0"],
        &["--case", "5", "--modality", "all", "--clf", "knn", "--train-fraction", "1.2"],
        &["--case", "5", "--modality", "all", "--clf", "knn", "--bogus"],
    ] {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        let res = painaffect(&args);
        assert_eq!(res.status.code(), Some(2), "{extra:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert!(!out.exists());
    let res = painaffect(&["run", "--corpus", p(&dir.path().join("missing")), "--out", p(&out), "--case", "5",
        "--modality", "all", "--clf", "knn"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        ok(&painaffect(&[
            "--threads", threads, "run", "--corpus", p(&corpus), "--out", p(&out), "--case", "6", "--modality",
            "all", "--clf", "rf,gbt", "--rf-trees", "15", "--gbt-rounds", "5", "--scheme", "unknown",
            "--held-out-subjects", "2",
        ]));
        outputs.push(tree(&out));
    }
    assert_eq!(outputs[0].len(), 2);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn report_tables() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let known = dir.path().join("known");
    let personal = dir.path().join("personal");
    ok(&painaffect(&[
        "run", "--corpus", p(&corpus), "--out", p(&known), "--case", "5,6", "--modality", "all", "--clf", "knn",
    ]));
    ok(&painaffect(&[
        "run", "--corpus", p(&corpus), "--out", p(&personal), "--case", "5", "--modality", "all", "--clf", "knn",
        "--scheme", "personal", "--repetitions", "2",
    ]));
    let tables = dir.path().join("tables");
    ok(&painaffect(&["report", p(&known), p(&personal), "--out", p(&tables)]));
    let f1 = fs::read_to_string(tables.join("figure1.csv")).unwrap();
    let f4 = fs::read_to_string(tables.join("figure4.csv")).unwrap();
    assert_eq!(f1.lines().count(), 1 + 3);
    assert!(f1.starts_with("modality,case,classifier,mean_f1,std_f1"));
    assert!(f1.contains("\nall,5,KNN,"));
    assert_eq!(f4.lines().count(), 1 + 6);
    assert!(f4.lines().skip(1).all(|l| l.starts_with('S') && l.contains(",5,KNN,")));

    let tsv = dir.path().join("tsv");
    ok(&painaffect(&["report", p(&known), "--out", p(&tsv), "--format", "tsv"]));
    assert!(fs::read_to_string(tsv.join("figure1.tsv")).unwrap().starts_with("modality\tcase\t"));
}

#[test]
fn report_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let tables = dir.path().join("tables");
    ok(&painaffect(&["report", p(&empty), "--out", p(&tables)]));
    assert_eq!(fs::read_to_string(tables.join("figure1.csv")).unwrap().lines().count(), 1);
    assert_eq!(fs::read_to_string(tables.join("figure4.csv")).unwrap().lines().count(), 1);

    let stale = dir.path().join("stale.json");
    fs::write(&stale, "{\"schema_version\": 99}").unwrap();
    let res = painaffect(&["report", p(&stale), "--out", p(&tables)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("schema version 99"));
}

fn write_recording(path: &Path, rows: usize, tab: bool, phase: f64) {
    let sep = if tab { "\t" } else { "," };
    let mut text = ["time", "gsr", "ecg", "emg_trapezius"].join(sep);
    text.push('\n');
    for i in 0..rows {
        let t = i as f64 / 8.0;
        let vals = [t, 2.0 + (t + phase).sin(), (3.0 * t).cos(), 0.1 * (7.0 * t + phase).sin()];
        text.push_str(&vals.map(|v| format!("{v:.5}")).join(sep));
        text.push('\n');
    }
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

#[test]
fn convert_builds_a_corpus_from_an_export() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("export");
    fs::create_dir_all(&export).unwrap();
    fs::write(export.join("subjects.csv"), "subject_id,age,gender\na01,25,f\nb02,51,m\nc03,33,m\nd04,40,w\n").unwrap();
    fs::write(export.join("non_responders.txt"), "c03\n").unwrap();
    // d04 has no emotion recordings and is dropped by the merge.
    for (i, subject) in ["a01", "b02", "c03", "d04"].into_iter().enumerate() {
        for state in ["BL1", "PA1", "PA2", "PA3", "PA4"] {
            write_recording(&export.join(format!("pain/{subject}/{subject}-{state}-000.csv")), 100, i % 2 == 0, 0.1);
        }
    }
    for subject in ["a01", "b02", "c03"] {
        for emotion in ["amusement", "anger", "disgust", "fear", "sadness"] {
            write_recording(&export.join(format!("emotion/{subject}/{emotion}_1.csv")), 50, false, 0.7);
        }
    }
    let corpus = dir.path().join("corpus");
    let stdout = ok(&painaffect(&[
        "convert", "--input", p(&export), "--out", p(&corpus), "--sample-rate", "8",
    ]));
    // 100 rows at 8 Hz hold two 44-sample windows; 50 rows hold one.
    assert!(stdout.starts_with("2 subjects (4 pain, 3 emotion, 1 excluded), 30 windows"), "{stdout}");
    let manifest = fs::read_to_string(corpus.join("manifest.jsonl")).unwrap();
    assert!(manifest.contains("a01") && manifest.contains("b02"));
    assert!(!manifest.contains("c03") && !manifest.contains("d04"));

    fs::write(export.join("pain/a01/a01-BL1-000.csv"), "gsr,ecg\n1,2\n").unwrap();
    let res = painaffect(&["convert", "--input", p(&export), "--out", p(&dir.path().join("x")), "--sample-rate", "8"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("EMG"));
}
