//! Raw trace preprocessing: Savitzky-Golay smoothing, min-max scaling and
//! moving-average downsampling, composed into fixed-length feature vectors.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContextFeatures, SignalWindow};
use crate::error::{Error, Result};

/// Biopotential channel. The declaration order is the fusion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    EDA,
    ECG,
    EMG,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::EDA, Channel::ECG, Channel::EMG];

    pub fn name(self) -> &'static str {
        match self {
            Channel::EDA => "EDA",
            Channel::ECG => "ECG",
            Channel::EMG => "EMG",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EDA" | "GSR" => Ok(Channel::EDA),
            "ECG" => Ok(Channel::ECG),
            "EMG" => Ok(Channel::EMG),
            _ => Err(Error::param(format!("unknown channel '{s}'"))),
        }
    }
}

/// One channel of samples at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub channel: Channel,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl RawTrace {
    pub fn new(channel: Channel, sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample_rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::data(format!("{channel} trace is empty")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "{channel} trace has a non-finite value at sample {i}"
            )));
        }
        Ok(RawTrace {
            channel,
            sample_rate,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn with_samples(&self, samples: Vec<f64>) -> RawTrace {
        RawTrace {
            channel: self.channel,
            sample_rate: self.sample_rate,
            samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Savitzky-Golay window, in samples (odd).
    pub sg_window: usize,
    pub sg_order: usize,
    /// Moving-average window, in samples.
    pub ds_window: usize,
    /// Fractional overlap between consecutive averaging windows.
    pub overlap: f64,
}

pub const DEFAULT_OVERLAP: f64 = 0.8;

impl PreprocessConfig {
    /// Defaults for a sample rate: 0.25 s smoothing window (rounded up to odd),
    /// cubic fit, 0.25 s averaging window at 80% overlap.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let quarter = f64::from(sample_rate) * 0.25;
        let mut sg_window = (quarter.ceil() as usize).max(5);
        if sg_window % 2 == 0 {
            sg_window += 1;
        }
        PreprocessConfig {
            sg_window,
            sg_order: 3,
            ds_window: (quarter.round() as usize).max(1),
            overlap: DEFAULT_OVERLAP,
        }
    }

    pub fn stride(&self) -> usize {
        stride_for(self.ds_window, self.overlap)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sg_window < 3 || self.sg_window % 2 == 0 {
            return Err(Error::param(format!(
                "sg_window must be odd and >= 3, got {}",
                self.sg_window
            )));
        }
        if self.sg_order >= self.sg_window {
            return Err(Error::param(format!(
                "sg_order {} must be below sg_window {}",
                self.sg_order, self.sg_window
            )));
        }
        if self.ds_window == 0 {
            return Err(Error::param("ds_window must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::param(format!(
                "overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        Ok(())
    }

    /// Number of components one channel of `len` samples yields.
    pub fn components_per_channel(&self, len: usize) -> usize {
        if self.ds_window > len {
            0
        } else {
            (len - self.ds_window) / self.stride() + 1
        }
    }
}

fn stride_for(window: usize, overlap: f64) -> usize {
    ((window as f64 * (1.0 - overlap)).round() as usize).max(1)
}

/// Convolution weights that evaluate the least-squares polynomial of degree
/// `order` at the centre of a `window`-sample frame.
pub fn savgol_coefficients(window: usize, order: usize) -> Result<Vec<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::param(format!(
            "Savitzky-Golay window must be odd and >= 3, got {window}"
        )));
    }
    if order >= window {
        return Err(Error::param(format!(
            "Savitzky-Golay order {order} must be below window {window}"
        )));
    }
    let half = (window / 2) as f64;
    // Positions scaled into [-1, 1] to keep the Vandermonde matrix well conditioned.
    let design = DMatrix::from_fn(window, order + 1, |r, c| {
        ((r as f64 - half) / half).powi(c as i32)
    });
    let pinv = design
        .svd(true, true)
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::param(format!("Savitzky-Golay design is singular: {e}")))?;
    Ok(pinv.row(0).iter().copied().collect())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Savitzky-Golay smoothing with mirror padding at both edges
/// (`x[-k] = x[k]`, `x[L-1+k] = x[L-1-k]`), so the output length equals the
/// input length.
pub fn savitzky_golay(trace: &RawTrace, window: usize, order: usize) -> Result<RawTrace> {
    let coeffs = savgol_coefficients(window, order)?;
    let n = trace.len();
    if window > n {
        return Err(Error::param(format!(
            "Savitzky-Golay window {window} exceeds trace length {n}"
        )));
    }
    let half = window / 2;
    let x = &trace.samples;
    let mut padded = Vec::with_capacity(n + 2 * half);
    padded.extend((1..=half).rev().map(|k| x[k]));
    padded.extend_from_slice(x);
    padded.extend((1..=half).map(|k| x[n - 1 - k]));
    let out = padded.windows(window).map(|w| dot(w, &coeffs)).collect();
    Ok(trace.with_samples(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub trace: RawTrace,
    /// Set when the input was constant; the output is then all zeros.
    pub degenerate: bool,
}

pub fn minmax_normalize(trace: &RawTrace) -> Normalized {
    let (lo, hi) = trace
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return Normalized {
            trace: trace.with_samples(vec![0.0; trace.len()]),
            degenerate: true,
        };
    }
    let samples = trace
        .samples
        .iter()
        .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect();
    Normalized {
        trace: trace.with_samples(samples),
        degenerate: false,
    }
}

/// Means of `ds_window`-sample frames taken every
/// `max(1, round(ds_window * (1 - overlap)))` samples from the start.
pub fn downsample_moving_average(samples: &[f64], ds_window: usize, overlap: f64) -> Result<Vec<f64>> {
    if ds_window == 0 {
        return Err(Error::param("downsample window must be >= 1"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::param(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    if ds_window > samples.len() {
        return Err(Error::param(format!(
            "downsample window {ds_window} exceeds trace length {}",
            samples.len()
        )));
    }
    let stride = stride_for(ds_window, overlap);
    let count = (samples.len() - ds_window) / stride + 1;
    let scale = 1.0 / ds_window as f64;
    Ok((0..count)
        .map(|i| {
            let start = i * stride;
            samples[start..start + ds_window].iter().sum::<f64>() * scale
        })
        .collect())
}

/// The normalized components `c_1..c_n` of one window, plus any appended
/// context features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub components: Vec<f64>,
    pub context: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.components.len() + self.context.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened row: signal components followed by context.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.len());
        row.extend_from_slice(&self.components);
        row.extend_from_slice(&self.context);
        row
    }
}

/// Filter, normalize and downsample one channel.
pub fn channel_components(trace: &RawTrace, config: &PreprocessConfig) -> Result<Vec<f64>> {
    let smoothed = savitzky_golay(trace, config.sg_window, config.sg_order)?;
    let normalized = minmax_normalize(&smoothed);
    downsample_moving_average(&normalized.trace.samples, config.ds_window, config.overlap)
}

/// Feature vector for a window: per-channel components concatenated in
/// EDA, ECG, EMG order (requested channels only), context appended last.
pub fn build_feature_vector(
    window: &SignalWindow,
    modalities: &[Channel],
    config: &PreprocessConfig,
    context: Option<&ContextFeatures>,
) -> Result<FeatureVector> {
    if modalities.is_empty() {
        return Err(Error::param("at least one modality is required"));
    }
    config.validate()?;
    let mut components = Vec::new();
    for channel in Channel::ALL {
        if !modalities.contains(&channel) {
            continue;
        }
        let trace = window.channel(channel).ok_or_else(|| {
            Error::data(format!(
                "window {}/{} has no {channel} channel",
                window.subject_id, window.window_id
            ))
        })?;
        components.extend(channel_components(trace, config)?);
    }
    Ok(FeatureVector {
        components,
        context: context.map(ContextFeatures::to_vec).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn trace(samples: Vec<f64>) -> RawTrace {
        RawTrace::new(Channel::EDA, 100, samples).unwrap()
    }

    /// Independent route: solve the normal equations of the windowed
    /// polynomial fit by Gaussian elimination and evaluate at the centre.
    fn brute_force_center_fit(window: &[f64], order: usize) -> f64 {
        let h = (window.len() / 2) as f64;
        let p = order + 1;
        let mut a = vec![vec![0.0; p + 1]; p];
        for (j, &y) in window.iter().enumerate() {
            let x = j as f64 - h;
            for r in 0..p {
                for c in 0..p {
                    a[r][c] += x.powi((r + c) as i32);
                }
                a[r][p] += y * x.powi(r as i32);
            }
        }
        for col in 0..p {
            let pivot = (col..p)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        // Value at the centre (x = 0) is the constant coefficient.
        a[0][p] / a[0][0]
    }

    #[test]
    fn constant_trace_is_unchanged() {
        let out = savitzky_golay(&trace(vec![5.0; 7]), 5, 2).unwrap();
        for v in out.samples {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_is_reproduced_in_interior() {
        let t2: Vec<f64> = (0..9).map(|t| (t * t) as f64).collect();
        let out = savitzky_golay(&trace(t2.clone()), 5, 2).unwrap();
        for i in 2..7 {
            assert!((out.samples[i] - t2[i]).abs() <= 1e-9, "t={i}");
        }
    }

    #[test]
    fn matches_per_window_least_squares() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let out = savitzky_golay(&trace(x.clone()), 7, 3).unwrap();
        for i in 3..57 {
            let expect = brute_force_center_fit(&x[i - 3..=i + 3], 3);
            assert!((out.samples[i] - expect).abs() < 1e-10);
        }
        // Edges follow the mirrored extension.
        let mirrored = [x[3], x[2], x[1], x[0], x[1], x[2], x[3]];
        assert!((out.samples[0] - brute_force_center_fit(&mirrored, 3)).abs() < 1e-10);
    }

    #[test]
    fn savgol_parameter_errors() {
        let t = trace(vec![1.0; 10]);
        assert!(savitzky_golay(&t, 4, 2).is_err());
        assert!(savitzky_golay(&t, 11, 2).is_err());
        assert!(savitzky_golay(&t, 5, 5).is_err());
        assert!(savitzky_golay(&t, 1, 0).is_err());
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&trace(vec![0.0, 1.0, 2.0])).trace.samples, vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&trace(vec![-2.0, 0.0, 2.0])).trace.samples, vec![0.0, 0.5, 1.0]);
        let flat = minmax_normalize(&trace(vec![3.0, 3.0, 3.0]));
        assert!(flat.degenerate);
        assert_eq!(flat.trace.samples, vec![0.0; 3]);
    }

    #[test]
    fn downsample_examples() {
        let out = downsample_moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 5, 0.8).unwrap();
        assert_eq!(out, vec![3.0, 4.0]);
        assert_eq!(downsample_moving_average(&[2.0, 4.0], 2, 0.0).unwrap(), vec![3.0]);
        assert!(downsample_moving_average(&[1.0, 2.0], 3, 0.5).is_err());
    }

    #[test]
    fn downsample_matches_windowed_mean_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..2816).map(|_| rng.random::<f64>()).collect();
        let out = downsample_moving_average(&x, 128, 0.8).unwrap();
        assert_eq!(out.len(), 104);
        for (i, v) in out.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..128 {
                acc += x[i * 26 + j];
            }
            assert!((v - acc / 128.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_config_at_512_hz() {
        let c = PreprocessConfig::for_sample_rate(512);
        assert_eq!((c.sg_window, c.sg_order, c.ds_window), (129, 3, 128));
        assert_eq!(c.stride(), 26);
        assert_eq!(c.components_per_channel(2816), 104);
        c.validate().unwrap();
    }

    #[test]
    fn channel_parsing() {
        assert_eq!("eda".parse::<Channel>().unwrap(), Channel::EDA);
        assert!("EOG".parse::<Channel>().is_err());
    }

    proptest! {
        #[test]
        fn minmax_affine_invariant_and_idempotent(
            xs in proptest::collection::vec(-100.0f64..100.0, 2..50),
            scale in 0.1f64..10.0,
            shift in -10.0f64..10.0,
        ) {
            let base = minmax_normalize(&trace(xs.clone()));
            prop_assume!(!base.degenerate);
            let moved = minmax_normalize(&trace(xs.iter().map(|v| v * scale + shift).collect()));
            for (a, b) in base.trace.samples.iter().zip(&moved.trace.samples) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let again = minmax_normalize(&base.trace);
            for (a, b) in base.trace.samples.iter().zip(&again.trace.samples) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn downsample_length_closed_form(len in 1usize..400, w_frac in 0.0f64..1.0, overlap in 0.0f64..0.99) {
            let w = ((len as f64 * w_frac) as usize).max(1);
            let x = vec![1.0; len];
            let out = downsample_moving_average(&x, w, overlap).unwrap();
            let s = ((w as f64 * (1.0 - overlap)).round() as usize).max(1);
            prop_assert_eq!(out.len(), (len - w) / s + 1);
        }
    }
}
