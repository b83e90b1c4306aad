//! Flat `key = value` config files (TOML syntax, no tables).
//!
//! Generator keys:
//!
//! | key                 | unit        | default |
//! |---------------------|-------------|---------|
//! | `n_subjects`        | subjects    | 62      |
//! | `female_count`      | subjects    | 33      |
//! | `non_responders`    | subjects    | 0       |
//! | `windows_per_state` | windows     | 20      |
//! | `sample_rate_hz`    | samples/s   | 512     |
//! | `master_seed`       | -           | 42      |
//! | `subject_spread`    | scale       | 1.0     |
//! | `noise_level`       | scale       | 1.0     |
//! | `affect_overlap`    | fraction    | 0.6     |
//!
//! Run keys mirror the `run` flags; see [`RunFile`].

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::Deserialize;

use painaffect_core::synthgen::{GeneratorConfig, StateEffectTable};

use crate::usage;

fn parse_file<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub n_subjects: Option<usize>,
    pub female_count: Option<usize>,
    pub non_responders: Option<usize>,
    pub windows_per_state: Option<usize>,
    pub sample_rate_hz: Option<u32>,
    pub master_seed: Option<u64>,
    pub subject_spread: Option<f64>,
    pub noise_level: Option<f64>,
    pub affect_overlap: Option<f64>,
}

impl SynthFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        parse_file(path)
    }

    pub fn resolve(&self) -> Result<GeneratorConfig, String> {
        let d = GeneratorConfig::default();
        if let Some(o) = self.affect_overlap {
            if !(o >= 0.0 && o.is_finite()) {
                return Err(format!("affect_overlap must be a non-negative number, got {o}"));
            }
        }
        Ok(GeneratorConfig {
            n_subjects: self.n_subjects.unwrap_or(d.n_subjects),
            female_count: self.female_count.unwrap_or(d.female_count),
            non_responders: self.non_responders.unwrap_or(d.non_responders),
            windows_per_state: self.windows_per_state.unwrap_or(d.windows_per_state),
            sample_rate: self.sample_rate_hz.unwrap_or(d.sample_rate),
            master_seed: self.master_seed.unwrap_or(d.master_seed),
            state_effects: self.affect_overlap.map_or(d.state_effects, StateEffectTable::with_overlap),
            subject_spread: self.subject_spread.unwrap_or(d.subject_spread),
            noise_level: self.noise_level.unwrap_or(d.noise_level),
        })
    }
}

/// Run config; every key is optional and command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// "-1", "0", "5", "6" or "all".
    pub cases: Option<Vec<String>>,
    /// "eda", "ecg", "emg", "all", or fused sets such as "eda+emg".
    pub modalities: Option<Vec<String>>,
    /// "knn", "rf", "gbt" or "all".
    pub classifiers: Option<Vec<String>>,
    /// "known", "unknown" or "personal".
    pub scheme: Option<String>,
    pub context: Option<bool>,
    pub master_seed: Option<u64>,
    pub classifier_seed: Option<u64>,
    pub knn_k: Option<usize>,
    pub rf_trees: Option<usize>,
    pub gbt_rounds: Option<usize>,
    pub gbt_learning_rate: Option<f64>,
    pub gbt_max_depth: Option<usize>,
    /// Fraction of windows used for training (known and personal schemes).
    pub train_fraction: Option<f64>,
    /// Seeds (known, personal) or repeats (unknown).
    pub repetitions: Option<usize>,
    /// Subjects held out per repeat (unknown scheme).
    pub held_out_subjects: Option<usize>,
    pub sg_window_samples: Option<usize>,
    pub sg_order: Option<usize>,
    pub ds_window_samples: Option<usize>,
    pub overlap_fraction: Option<f64>,
}

impl RunFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        parse_file(path)
    }
}
