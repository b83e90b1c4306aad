//! Seeded synthetic cohorts shaped like the merged pain/emotion corpus.
//!
//! Each subject gets a profile (response latencies, resting levels, gains,
//! noise) and every window is drawn from an independent stream derived from
//! the master seed and the window's (subject, state, index) coordinates.
//!
//! Channel models:
//! * EDA: tonic level with linear drift, a stimulus-locked skin conductance
//!   response for pain states, spontaneous responses at a state-dependent
//!   Poisson rate, white noise.
//! * ECG: P-QRS-T template repeated at a state-dependent heart rate with
//!   jittered beat intervals, respiratory baseline wander, noise.
//! * EMG: white baseline activity plus bursts, either stimulus-locked (pain)
//!   or at a state-dependent Poisson rate; bursts carry a slow tension
//!   component alongside the broadband activity.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{window_len, Corpus, Gender, RawState, SignalWindow, SubjectRecord, MAX_AGE, MIN_AGE, WINDOW_SECONDS};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::signal::{Channel, RawTrace};

/// How one raw state moves each channel, before subject gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEffect {
    /// Shift of the EDA tonic level, microsiemens.
    pub eda_tonic_shift: f64,
    /// Peak of the stimulus-locked skin conductance response, microsiemens.
    pub eda_locked_amp: f64,
    /// Spontaneous skin conductance responses per second.
    pub scr_rate: f64,
    /// Peak of each spontaneous response, microsiemens.
    pub scr_amp: f64,
    /// Heart rate change, beats per minute.
    pub heart_rate_shift: f64,
    /// Standard deviation of beat intervals as a fraction of the mean interval.
    pub hrv: f64,
    /// Peak envelope of the stimulus-locked EMG burst, millivolts.
    pub emg_locked_amp: f64,
    /// Spontaneous EMG bursts per second.
    pub emg_burst_rate: f64,
    /// Peak envelope of each spontaneous burst, millivolts.
    pub emg_burst_amp: f64,
}

/// One [`StateEffect`] per [`RawState`], indexed by `RawState::index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEffectTable(pub Vec<StateEffect>);

impl StateEffectTable {
    pub fn get(&self, state: RawState) -> &StateEffect {
        &self.0[state.index()]
    }

    /// Pain states get stimulus-locked responses growing with pain level;
    /// affects get unlocked responses whose size is `affect_overlap` times a
    /// high-pain response, so they resemble pain without being time-locked.
    pub fn with_overlap(affect_overlap: f64) -> Self {
        let rest = StateEffect {
            eda_tonic_shift: 0.0,
            eda_locked_amp: 0.0,
            scr_rate: 0.04,
            scr_amp: 0.08,
            heart_rate_shift: 0.0,
            hrv: 0.04,
            emg_locked_amp: 0.0,
            emg_burst_rate: 0.04,
            emg_burst_amp: 0.02,
        };
        let pain = |level: f64| StateEffect {
            eda_tonic_shift: 0.05 * level,
            eda_locked_amp: 0.25 * level,
            heart_rate_shift: 2.5 * level,
            hrv: 0.03,
            emg_locked_amp: 0.025 * level,
            ..rest
        };
        let hlp_scr = 0.25 * 3.5;
        let hlp_emg = 0.025 * 3.5;
        let affect = |rate: f64, hr: f64, emg_rate: f64| StateEffect {
            eda_tonic_shift: 0.1,
            eda_locked_amp: 0.0,
            scr_rate: rate,
            scr_amp: affect_overlap * hlp_scr,
            heart_rate_shift: hr,
            hrv: 0.05,
            emg_locked_amp: 0.0,
            emg_burst_rate: emg_rate,
            emg_burst_amp: affect_overlap * hlp_emg,
        };
        StateEffectTable(vec![
            rest,
            pain(1.0),
            pain(1.5),
            pain(3.0),
            pain(4.0),
            affect(0.30, 3.0, 0.25),  // amusement
            affect(0.35, 5.0, 0.35),  // anger
            affect(0.25, 1.0, 0.20),  // disgust
            affect(0.40, 6.0, 0.30),  // fear
            affect(0.20, -3.0, 0.15), // sadness
        ])
    }
}

impl Default for StateEffectTable {
    fn default() -> Self {
        StateEffectTable::with_overlap(DEFAULT_AFFECT_OVERLAP)
    }
}

pub const DEFAULT_AFFECT_OVERLAP: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    pub female_count: usize,
    /// Extra subjects generated without any physiological pain response.
    pub non_responders: usize,
    pub windows_per_state: usize,
    pub sample_rate: u32,
    pub master_seed: u64,
    pub state_effects: StateEffectTable,
    /// Scale of cross-subject dispersion of latencies, gains and levels.
    pub subject_spread: f64,
    /// Multiplier on every noise source.
    pub noise_level: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_subjects: 62,
            female_count: 33,
            non_responders: 0,
            windows_per_state: 20,
            sample_rate: 512,
            master_seed: 42,
            state_effects: StateEffectTable::default(),
            subject_spread: 1.0,
            noise_level: 1.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::param("n_subjects must be positive"));
        }
        if self.female_count > self.n_subjects {
            return Err(Error::param(format!(
                "female_count {} exceeds n_subjects {}",
                self.female_count, self.n_subjects
            )));
        }
        if self.windows_per_state == 0 {
            return Err(Error::param("windows_per_state must be positive"));
        }
        if self.sample_rate < 32 {
            return Err(Error::param("sample_rate must be at least 32 samples/s"));
        }
        if self.state_effects.0.len() != RawState::ALL.len() {
            return Err(Error::param("state_effects needs one entry per raw state"));
        }
        if !(self.subject_spread >= 0.0) || !(self.noise_level > 0.0) {
            return Err(Error::param("subject_spread must be >= 0 and noise_level > 0"));
        }
        for (state, e) in RawState::ALL.iter().zip(&self.state_effects.0) {
            let rates = [e.scr_rate, e.emg_burst_rate, e.hrv, e.scr_amp, e.eda_locked_amp, e.emg_locked_amp, e.emg_burst_amp];
            if rates.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::param(format!("{state}: rates and amplitudes must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Per-subject physiology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub age: u32,
    pub gender: Gender,
    pub pain_responder: bool,
    /// Resting EDA level (microsiemens).
    pub eda_baseline: f64,
    /// Resting heart rate (beats per minute).
    pub heart_rate: f64,
    /// Resting EMG activity (millivolts rms).
    pub emg_baseline: f64,
    /// Multiplier on each state's effects, indexed by `RawState::index`.
    pub responsiveness: Vec<f64>,
    pub noise_scale: f64,
    /// Seconds from stimulus onset to the locked EDA response.
    pub eda_latency: f64,
    /// Extra latency of low-intensity responses.
    pub low_pain_delay: f64,
    pub scr_rise: f64,
    pub scr_decay: f64,
    pub emg_latency: f64,
    pub emg_width: f64,
    /// Standard deviation of the EDA drift slope (microsiemens per second).
    pub drift: f64,
    pub ecg_amplitude: f64,
}

impl SubjectProfile {
    pub fn record(&self) -> SubjectRecord {
        SubjectRecord {
            subject_id: self.subject_id.clone(),
            age: self.age,
            gender: self.gender,
            pain_responder: self.pain_responder,
        }
    }

    /// Effect actually applied for a state: non-responders show resting
    /// physiology during pain.
    pub fn effective_state(&self, state: RawState) -> RawState {
        if state.is_pain() && !self.pain_responder {
            RawState::BL
        } else {
            state
        }
    }
}

fn spread_uniform(rng: &mut Stream, center: f64, half_width: f64, spread: f64) -> f64 {
    center + spread * half_width * (2.0 * rng.random::<f64>() - 1.0)
}

fn lognormal_gain(rng: &mut Stream, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (sigma * z).exp()
}

/// Draw a subject's profile from its own stream.
pub fn draw_profile(config: &GeneratorConfig, index: usize, gender: Gender, pain_responder: bool) -> SubjectProfile {
    let mut rng = seed::stream(seed::derive_tagged(config.master_seed, "profile", &[index as u64]));
    let s = config.subject_spread;
    // Half of the cohort below 36, half above, within [20, 65].
    let age = if rng.random::<bool>() {
        rng.random_range(MIN_AGE..36)
    } else {
        rng.random_range(36..=MAX_AGE)
    };
    let mut responsiveness: Vec<f64> = (0..RawState::ALL.len()).map(|_| lognormal_gain(&mut rng, 0.25 * s)).collect();
    if !pain_responder {
        let bl = responsiveness[RawState::BL.index()];
        for st in RawState::ALL.iter().filter(|st| st.is_pain()) {
            responsiveness[st.index()] = bl;
        }
    }
    SubjectProfile {
        subject_id: format!("S{:03}", index + 1),
        age,
        gender,
        pain_responder,
        eda_baseline: spread_uniform(&mut rng, 6.0, 4.0, s).max(0.5),
        heart_rate: spread_uniform(&mut rng, 72.0, 12.0, s).max(45.0),
        emg_baseline: 0.01 * lognormal_gain(&mut rng, 0.3 * s),
        responsiveness,
        noise_scale: lognormal_gain(&mut rng, 0.3 * s) * config.noise_level,
        eda_latency: spread_uniform(&mut rng, 1.9, 1.1, s).max(0.6),
        low_pain_delay: spread_uniform(&mut rng, 0.6, 0.3, s).max(0.1),
        scr_rise: spread_uniform(&mut rng, 0.8, 0.4, s).max(0.2),
        scr_decay: spread_uniform(&mut rng, 4.0, 1.5, s).max(1.0),
        emg_latency: spread_uniform(&mut rng, 2.2, 1.2, s).max(0.4),
        emg_width: spread_uniform(&mut rng, 0.5, 0.2, s).max(0.15),
        drift: 0.02 * lognormal_gain(&mut rng, 0.4 * s),
        ecg_amplitude: lognormal_gain(&mut rng, 0.2 * s),
    }
}

/// Latent quantities realised while drawing a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTrace {
    /// Phasic EDA responses with onset inside the window (locked + spontaneous).
    pub eda_events: usize,
    /// EMG bursts centred inside the window.
    pub emg_bursts: usize,
    /// Beat times inside the window, seconds.
    pub beats: Vec<f64>,
}

/// Bi-exponential skin conductance response scaled to a unit peak.
struct ScrShape {
    rise: f64,
    decay: f64,
    norm: f64,
}

impl ScrShape {
    fn new(rise: f64, decay: f64) -> Self {
        let (rise, decay) = if (decay - rise).abs() < 1e-6 { (rise, rise * 1.5) } else { (rise, decay) };
        let t_peak = (decay.ln() - rise.ln()) * rise * decay / (decay - rise);
        let peak = (-t_peak / decay).exp() - (-t_peak / rise).exp();
        ScrShape { rise, decay, norm: 1.0 / peak }
    }

    fn at(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            0.0
        } else {
            self.norm * ((-tau / self.decay).exp() - (-tau / self.rise).exp())
        }
    }
}

fn quantize(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Draw one window of `state` for `profile`. Pure function of its inputs.
pub fn generate_window(
    profile: &SubjectProfile,
    effects: &StateEffectTable,
    state: RawState,
    sample_rate: u32,
    window_id: &str,
    rng: &mut Stream,
) -> Result<SignalWindow> {
    generate_window_traced(profile, effects, state, sample_rate, window_id, rng).map(|(w, _)| w)
}

pub fn generate_window_traced(
    profile: &SubjectProfile,
    effects: &StateEffectTable,
    state: RawState,
    sample_rate: u32,
    window_id: &str,
    rng: &mut Stream,
) -> Result<(SignalWindow, WindowTrace)> {
    let applied = profile.effective_state(state);
    let effect = effects.get(applied);
    let gain = profile.responsiveness[state.index()];
    let fs = f64::from(sample_rate);
    let n = window_len(sample_rate);
    let dt = 1.0 / fs;
    let noise = profile.noise_scale;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // EDA.
    let mut eda = vec![0.0; n];
    let tonic = profile.eda_baseline + gain * effect.eda_tonic_shift;
    let slope = profile.drift * rng.sample::<f64, _>(StandardNormal);
    let shape = ScrShape::new(profile.scr_rise, profile.scr_decay);
    let mut responses: Vec<(f64, f64)> = Vec::new();
    let mut eda_events = 0;
    if effect.eda_locked_amp > 0.0 {
        let delay = match applied {
            RawState::PL1 | RawState::PL2 => profile.low_pain_delay,
            _ => 0.0,
        };
        let onset = profile.eda_latency + delay + 0.1 * rng.sample::<f64, _>(StandardNormal);
        responses.push((onset, gain * effect.eda_locked_amp * rng.random_range(0.8..1.2)));
        eda_events += 1;
    }
    // Spontaneous responses; onsets up to 3 s before the window contribute tails.
    let lead = 3.0;
    let expected = effect.scr_rate * (WINDOW_SECONDS + lead);
    let count = if expected > 0.0 {
        Poisson::new(expected).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    for _ in 0..count {
        let onset = rng.random_range(-lead..WINDOW_SECONDS);
        if onset >= 0.0 {
            eda_events += 1;
        }
        responses.push((onset, gain * effect.scr_amp * rng.random_range(0.6..1.4)));
    }
    let eda_noise = 0.01 * noise;
    for (i, v) in eda.iter_mut().enumerate() {
        let t = i as f64 * dt;
        let mut x = tonic + slope * (t - WINDOW_SECONDS / 2.0);
        for &(onset, amp) in &responses {
            x += amp * shape.at(t - onset);
        }
        *v = x + eda_noise * unit.sample(rng);
    }

    // ECG.
    let mut ecg = vec![0.0; n];
    let hr = (profile.heart_rate + gain * effect.heart_rate_shift).max(30.0);
    let rr = 60.0 / hr;
    let mut beats = Vec::new();
    let mut t_beat = -rng.random_range(0.0..rr);
    while t_beat < WINDOW_SECONDS + 0.5 {
        beats.push(t_beat);
        let jitter: f64 = rng.sample(StandardNormal);
        t_beat += (rr * (1.0 + effect.hrv * jitter)).max(0.25);
    }
    // (offset s, width s, amplitude mV) for P, Q, R, S, T.
    let waves = [(-0.16, 0.025, 0.12), (-0.03, 0.008, -0.10), (0.0, 0.012, 1.0), (0.03, 0.008, -0.20), (0.25, 0.045, 0.30)];
    let amp = profile.ecg_amplitude;
    for &b in &beats {
        let lo = (((b - 0.35) * fs).floor().max(0.0)) as usize;
        let hi = ((((b + 0.5) * fs).ceil()).max(0.0) as usize).min(n);
        for i in lo..hi {
            let t = i as f64 * dt;
            let mut x = 0.0;
            for &(off, width, a) in &waves {
                let z = (t - b - off) / width;
                x += a * (-0.5 * z * z).exp();
            }
            ecg[i] += amp * x;
        }
    }
    let resp_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let resp_rate = rng.random_range(0.2..0.33);
    let ecg_noise = 0.02 * noise;
    for (i, v) in ecg.iter_mut().enumerate() {
        let t = i as f64 * dt;
        *v += 0.05 * (std::f64::consts::TAU * resp_rate * t + resp_phase).sin() + ecg_noise * unit.sample(rng);
    }
    let beats_in: Vec<f64> = beats.into_iter().filter(|&b| (0.0..WINDOW_SECONDS).contains(&b)).collect();

    // EMG.
    let mut bursts: Vec<(f64, f64, f64)> = Vec::new();
    if effect.emg_locked_amp > 0.0 {
        let centre = profile.emg_latency + 0.1 * rng.sample::<f64, _>(StandardNormal);
        bursts.push((centre, profile.emg_width, gain * effect.emg_locked_amp * rng.random_range(0.8..1.2)));
    }
    let expected = effect.emg_burst_rate * WINDOW_SECONDS;
    let count = if expected > 0.0 {
        Poisson::new(expected).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    for _ in 0..count {
        let centre = rng.random_range(0.0..WINDOW_SECONDS);
        bursts.push((centre, rng.random_range(0.2..0.5), gain * effect.emg_burst_amp * rng.random_range(0.6..1.4)));
    }
    let emg_noise = profile.emg_baseline * noise;
    let mut emg = vec![0.0; n];
    for (i, v) in emg.iter_mut().enumerate() {
        let t = i as f64 * dt;
        let mut envelope = 0.0;
        for &(centre, width, a) in &bursts {
            let z = (t - centre) / width;
            envelope += a * (-0.5 * z * z).exp();
        }
        // Broadband activity plus the slow tension component of a contraction.
        *v = (emg_noise + envelope) * unit.sample(rng) + 0.5 * envelope;
    }

    let traces = vec![
        RawTrace::new(Channel::EDA, sample_rate, eda.into_iter().map(quantize).collect())?,
        RawTrace::new(Channel::ECG, sample_rate, ecg.into_iter().map(quantize).collect())?,
        RawTrace::new(Channel::EMG, sample_rate, emg.into_iter().map(quantize).collect())?,
    ];
    let window = SignalWindow::new(profile.subject_id.clone(), window_id, state, traces)?;
    Ok((
        window,
        WindowTrace {
            eda_events,
            emg_bursts: bursts.len(),
            beats: beats_in,
        },
    ))
}

/// Stream for window `k` of `state` for subject `subject_index`.
pub fn window_stream(master_seed: u64, subject_index: usize, state: RawState, k: usize) -> Stream {
    seed::stream(seed::derive_tagged(
        master_seed,
        "window",
        &[subject_index as u64, state.index() as u64, k as u64],
    ))
}

/// Subject profiles for a config: `n_subjects` responders (with exactly
/// `female_count` women) followed by the non-responders.
pub fn draw_profiles(config: &GeneratorConfig) -> Result<Vec<SubjectProfile>> {
    config.validate()?;
    let mut genders: Vec<Gender> = (0..config.n_subjects)
        .map(|i| if i < config.female_count { Gender::Female } else { Gender::Male })
        .collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = seed::stream(seed::derive_tagged(config.master_seed, "genders", &[]));
        genders.shuffle(&mut rng);
    }
    let mut profiles: Vec<SubjectProfile> = genders
        .iter()
        .enumerate()
        .map(|(i, &g)| draw_profile(config, i, g, true))
        .collect();
    for j in 0..config.non_responders {
        let i = config.n_subjects + j;
        let mut rng = seed::stream(seed::derive_tagged(config.master_seed, "non-responder", &[j as u64]));
        let g = if rng.random::<bool>() { Gender::Female } else { Gender::Male };
        profiles.push(draw_profile(config, i, g, false));
    }
    Ok(profiles)
}

/// Whole cohort; windows ordered by subject, then state, then index.
pub fn generate_cohort(config: &GeneratorConfig) -> Result<Corpus> {
    let profiles = draw_profiles(config)?;
    let units: Vec<(usize, RawState, usize)> = (0..profiles.len())
        .flat_map(|s| {
            RawState::ALL
                .into_iter()
                .flat_map(move |st| (0..config.windows_per_state).map(move |k| (s, st, k)))
        })
        .collect();
    let windows = units
        .par_iter()
        .map(|&(s, st, k)| {
            let mut rng = window_stream(config.master_seed, s, st, k);
            generate_window(
                &profiles[s],
                &config.state_effects,
                st,
                config.sample_rate,
                &format!("{}-{k:03}", st.name()),
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(profiles.iter().map(SubjectProfile::record).collect(), windows)
}
