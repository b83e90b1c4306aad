//! The `run` subcommand: expand flags and config into experiment plans,
//! skip plans whose report is already up to date, run the rest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use sha2::{Digest, Sha256};

use painaffect_core::dataset::{load_corpus, Corpus, MANIFEST_FILE};
use painaffect_core::learners::{ClassifierKind, ClassifierSpec};
use painaffect_core::protocol::{run_experiment_with_features, CaseId, EvalScheme, ExperimentPlan, FeatureTable};
use painaffect_core::signal::{Channel, PreprocessConfig};

use crate::config::RunFile;
use crate::report::{config_hash, modality_label, write_atomic, ReportFile};
use crate::usage;

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Run config (flat key = value file); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus directory (contains manifest.jsonl).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory receiving one JSON report per plan.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cases: -1, 0, 5, 6 or all (comma separated or repeated).
    #[arg(long = "case", value_delimiter = ',', allow_hyphen_values = true)]
    pub cases: Vec<String>,
    /// Modalities: eda, ecg, emg, all, or fused sets such as eda+emg.
    #[arg(long = "modality", value_delimiter = ',')]
    pub modalities: Vec<String>,
    /// Classifiers: knn, rf, gbt or all.
    #[arg(long = "clf", value_delimiter = ',')]
    pub classifiers: Vec<String>,
    /// Evaluation scheme: known, unknown or personal.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Append demographic context features.
    #[arg(long)]
    pub context: bool,
    /// Expand to every case x {eda, ecg, emg, all} x classifier.
    #[arg(long)]
    pub all_figure1: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classifier_seed: Option<u64>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub rf_trees: Option<usize>,
    #[arg(long)]
    pub gbt_rounds: Option<usize>,
    #[arg(long)]
    pub gbt_learning_rate: Option<f64>,
    #[arg(long)]
    pub gbt_max_depth: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Seeds (known, personal) or repeats (unknown).
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub held_out_subjects: Option<usize>,
    #[arg(long)]
    pub sg_window_samples: Option<usize>,
    #[arg(long)]
    pub sg_order: Option<usize>,
    #[arg(long)]
    pub ds_window_samples: Option<usize>,
    #[arg(long)]
    pub overlap_fraction: Option<f64>,
}

/// Everything needed to build plans once the corpus sample rate is known.
#[derive(Debug)]
pub struct Grid {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub cases: Vec<CaseId>,
    pub modalities: Vec<Vec<Channel>>,
    pub classifiers: Vec<ClassifierSpec>,
    pub scheme: EvalScheme,
    pub context: bool,
    pub master_seed: u64,
    args_preprocess: [Option<usize>; 3],
    args_overlap: Option<f64>,
}

fn parse_cases(values: &[String]) -> anyhow::Result<Vec<CaseId>> {
    let mut out = Vec::new();
    for v in values {
        if v.eq_ignore_ascii_case("all") {
            out.extend(CaseId::ALL);
        } else {
            out.push(v.parse().map_err(|e| usage(format!("--case: {e}")))?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn parse_modalities(values: &[String]) -> anyhow::Result<Vec<Vec<Channel>>> {
    let mut out = Vec::new();
    for v in values {
        let mut set: Vec<Channel> = if v.eq_ignore_ascii_case("all") {
            Channel::ALL.to_vec()
        } else {
            v.split('+')
                .map(|c| c.trim().parse::<Channel>().map_err(|e| usage(format!("--modality: {e}"))))
                .collect::<anyhow::Result<_>>()?
        };
        set.sort();
        set.dedup();
        if !out.contains(&set) {
            out.push(set);
        }
    }
    Ok(out)
}

fn parse_classifiers(values: &[String]) -> anyhow::Result<Vec<ClassifierKind>> {
    let mut out = Vec::new();
    for v in values {
        if v.eq_ignore_ascii_case("all") {
            out.extend(ClassifierKind::ALL);
        } else {
            out.push(v.parse().map_err(|e| usage(format!("--clf: {e}")))?);
        }
    }
    let mut seen = Vec::new();
    out.retain(|k| {
        let fresh = !seen.contains(k);
        seen.push(*k);
        fresh
    });
    Ok(out)
}

fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

fn pick_list(flag: &[String], file: &Option<Vec<String>>, name: &str) -> anyhow::Result<Vec<String>> {
    if !flag.is_empty() {
        Ok(flag.to_vec())
    } else {
        file.clone().ok_or_else(|| usage(format!("no {name} given (flag or config)")))
    }
}

impl Grid {
    /// Validate every enumeration and numeric knob before any work starts.
    pub fn resolve(args: &RunArgs) -> anyhow::Result<Grid> {
        let file = match &args.config {
            Some(p) => RunFile::load(p)?,
            None => RunFile::default(),
        };
        let corpus = pick(args.corpus.clone(), &file.corpus).ok_or_else(|| usage("--corpus is required"))?;
        let out = pick(args.out.clone(), &file.out).ok_or_else(|| usage("--out is required"))?;
        let (cases, modalities, kinds) = if args.all_figure1 {
            (
                CaseId::ALL.to_vec(),
                parse_modalities(&["eda", "ecg", "emg", "all"].map(String::from))?,
                ClassifierKind::ALL.to_vec(),
            )
        } else {
            (
                parse_cases(&pick_list(&args.cases, &file.cases, "case")?)?,
                parse_modalities(&pick_list(&args.modalities, &file.modalities, "modality")?)?,
                parse_classifiers(&pick_list(&args.classifiers, &file.classifiers, "classifier")?)?,
            )
        };
        if cases.is_empty() || modalities.is_empty() || kinds.is_empty() {
            return Err(usage("cases, modalities and classifiers must be non-empty"));
        }
        let scheme_name = pick(args.scheme.clone(), &file.scheme).unwrap_or_else(|| "known".into());
        let mut scheme: EvalScheme = scheme_name.parse().map_err(|e| usage(format!("--scheme: {e}")))?;
        let fraction = pick(args.train_fraction, &file.train_fraction);
        let reps = pick(args.repetitions, &file.repetitions);
        let held = pick(args.held_out_subjects, &file.held_out_subjects);
        match &mut scheme {
            EvalScheme::Known { train_fraction, n_seeds } | EvalScheme::PersonSpecific { train_fraction, n_seeds } => {
                *train_fraction = fraction.unwrap_or(*train_fraction);
                *n_seeds = reps.unwrap_or(*n_seeds);
            }
            EvalScheme::Unknown { held_out_subjects, n_repeats } => {
                *held_out_subjects = held.unwrap_or(*held_out_subjects);
                *n_repeats = reps.unwrap_or(*n_repeats);
            }
        }
        scheme.validate().map_err(|e| usage(e.to_string()))?;

        let classifiers = kinds
            .into_iter()
            .map(|kind| {
                let mut s = ClassifierSpec::new(kind);
                s.seed = pick(args.classifier_seed, &file.classifier_seed).unwrap_or(s.seed);
                s.knn_k = pick(args.knn_k, &file.knn_k).unwrap_or(s.knn_k);
                s.rf_trees = pick(args.rf_trees, &file.rf_trees).unwrap_or(s.rf_trees);
                s.gbt_rounds = pick(args.gbt_rounds, &file.gbt_rounds).unwrap_or(s.gbt_rounds);
                s.gbt_learning_rate = pick(args.gbt_learning_rate, &file.gbt_learning_rate).unwrap_or(s.gbt_learning_rate);
                s.gbt_max_depth = pick(args.gbt_max_depth, &file.gbt_max_depth).unwrap_or(s.gbt_max_depth);
                s.validate().map_err(|e| usage(e.to_string()))?;
                Ok(s)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;

        let grid = Grid {
            corpus,
            out,
            cases,
            modalities,
            classifiers,
            scheme,
            context: args.context || file.context.unwrap_or(false),
            master_seed: pick(args.seed, &file.master_seed).unwrap_or(42),
            args_preprocess: [
                pick(args.sg_window_samples, &file.sg_window_samples),
                pick(args.sg_order, &file.sg_order),
                pick(args.ds_window_samples, &file.ds_window_samples),
            ],
            args_overlap: pick(args.overlap_fraction, &file.overlap_fraction),
        };
        // Catch bad preprocessing overrides now, against a nominal rate.
        grid.preprocess(512)?;
        Ok(grid)
    }

    pub fn preprocess(&self, sample_rate: u32) -> anyhow::Result<PreprocessConfig> {
        let mut p = PreprocessConfig::for_sample_rate(sample_rate);
        let [sg_window, sg_order, ds_window] = self.args_preprocess;
        p.sg_window = sg_window.unwrap_or(p.sg_window);
        p.sg_order = sg_order.unwrap_or(p.sg_order);
        p.ds_window = ds_window.unwrap_or(p.ds_window);
        p.overlap = self.args_overlap.unwrap_or(p.overlap);
        p.validate().map_err(|e| usage(e.to_string()))?;
        Ok(p)
    }

    /// Plans in canonical order: modality, case, classifier.
    pub fn plans(&self, preprocess: PreprocessConfig) -> Vec<ExperimentPlan> {
        let mut plans = Vec::new();
        for modalities in &self.modalities {
            for &case in &self.cases {
                for classifier in &self.classifiers {
                    plans.push(ExperimentPlan {
                        case,
                        scheme: self.scheme,
                        modalities: modalities.clone(),
                        classifier: *classifier,
                        use_context: self.context,
                        preprocess,
                        master_seed: self.master_seed,
                    });
                }
            }
        }
        plans
    }
}

pub fn report_name(plan: &ExperimentPlan) -> String {
    let case = match plan.case {
        CaseId::CaseMinus1 => "m1",
        other => other.number(),
    };
    format!(
        "case{case}_{}_{}_{}{}.json",
        plan.scheme.name(),
        modality_label(&plan.modalities),
        plan.classifier.kind.name().to_ascii_lowercase(),
        if plan.use_context { "_ctx" } else { "" }
    )
}

fn corpus_fingerprint(root: &Path) -> anyhow::Result<String> {
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn up_to_date(path: &Path, hash: &str) -> bool {
    path.exists() && ReportFile::read(path).is_ok_and(|r| r.config_hash == hash)
}

fn sample_rate(corpus: &Corpus) -> anyhow::Result<u32> {
    let rate = corpus.windows.first().map(|w| w.sample_rate).context("corpus has no windows")?;
    if corpus.windows.iter().any(|w| w.sample_rate != rate) {
        anyhow::bail!("corpus mixes sample rates");
    }
    Ok(rate)
}

pub fn run(args: &RunArgs) -> anyhow::Result<()> {
    let grid = Grid::resolve(args)?;
    let loaded = load_corpus(&grid.corpus)?;
    let corpus = loaded.curate(None);
    let dropped = loaded.subjects.len() - corpus.subjects.len();
    if dropped > 0 {
        eprintln!("excluded {dropped} non-responder subject(s)");
    }
    let fingerprint = corpus_fingerprint(&grid.corpus)?;
    let plans = grid.plans(grid.preprocess(sample_rate(&corpus)?)?);
    for p in &plans {
        p.validate().map_err(|e| usage(format!("{}: {e}", p.coordinates())))?;
    }

    // Feature tables are shared by plans with the same modalities.
    let mut pending: BTreeMap<String, Vec<&ExperimentPlan>> = BTreeMap::new();
    let mut skipped = 0;
    for p in &plans {
        let path = grid.out.join(report_name(p));
        if up_to_date(&path, &config_hash(p, &fingerprint)) {
            skipped += 1;
            println!("up to date: {}", path.display());
        } else {
            pending.entry(modality_label(&p.modalities)).or_default().push(p);
        }
    }
    for group in pending.values() {
        let table = FeatureTable::for_plan(group[0], &corpus)?;
        for p in group {
            let report = run_experiment_with_features(p, &corpus, &table)?;
            let file = ReportFile::new(report, &fingerprint);
            let path = grid.out.join(report_name(p));
            write_atomic(&path, file.to_json().as_bytes())?;
            println!("{}: mean F1 {:.4} (std {:.4}) -> {}", p.coordinates(), file.aggregate.mean, file.aggregate.std, path.display());
        }
    }
    println!("{} plan(s): {} run, {} up to date", plans.len(), plans.len() - skipped, skipped);
    Ok(())
}
