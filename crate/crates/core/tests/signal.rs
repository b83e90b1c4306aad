use painaffect_core::dataset::{window_len, ContextFeatures, Gender, RawState, SignalWindow, SubjectRecord};
use painaffect_core::signal::{
    build_feature_vector, channel_components, downsample_moving_average, minmax_normalize, savitzky_golay, Channel,
    PreprocessConfig, RawTrace,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE: u32 = 32;

fn window(seed: u64) -> SignalWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = window_len(RATE);
    let traces = Channel::ALL
        .into_iter()
        .map(|c| RawTrace::new(c, RATE, (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap())
        .collect();
    SignalWindow::new("S001", "W", RawState::BL, traces).unwrap()
}

/// Straight-line moving average at the derived stride.
fn mean_oracle(x: &[f64], w: usize, stride: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + w <= x.len() {
        out.push(x[start..start + w].iter().sum::<f64>() / w as f64);
        start += stride;
    }
    out
}

#[test]
fn polynomials_survive_smoothing_in_the_interior() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (window, order) in [(5, 2), (9, 3), (129, 3), (21, 5)] {
        for _ in 0..100 {
            let degree = rng.random_range(0..=order);
            let coef: Vec<f64> = (0..=degree).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..3 * window)
                .map(|i| {
                    let t = i as f64 / window as f64 - 1.0;
                    coef.iter().rev().fold(0.0, |acc, c| acc * t + c)
                })
                .collect();
            let out = savitzky_golay(&RawTrace::new(Channel::EDA, RATE, x.clone()).unwrap(), window, order).unwrap();
            assert_eq!(out.len(), x.len());
            let h = window / 2;
            for i in h..x.len() - h {
                assert!((out.samples[i] - x[i]).abs() <= 1e-9, "w={window} p={order} deg={degree} i={i}");
            }
        }
    }
}

#[test]
fn feature_vector_is_the_composition_of_its_stages() {
    let w = window(3);
    let cfg = PreprocessConfig::for_sample_rate(RATE);
    let fv = build_feature_vector(&w, &Channel::ALL, &cfg, None).unwrap();
    let mut expected = Vec::new();
    for c in Channel::ALL {
        let smoothed = savitzky_golay(w.channel(c).unwrap(), cfg.sg_window, cfg.sg_order).unwrap();
        let norm = minmax_normalize(&smoothed).trace.samples;
        expected.extend(mean_oracle(&norm, cfg.ds_window, cfg.stride()));
    }
    assert_eq!(fv.components.len(), expected.len());
    for (a, b) in fv.components.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn feature_vector_lengths() {
    let w = window(4);
    let cfg = PreprocessConfig::for_sample_rate(RATE);
    let n = cfg.components_per_channel(window_len(RATE));
    assert_eq!(channel_components(w.channel(Channel::ECG).unwrap(), &cfg).unwrap().len(), n);
    assert_eq!(build_feature_vector(&w, &Channel::ALL, &cfg, None).unwrap().len(), 3 * n);
    let subject = SubjectRecord { subject_id: "S001".into(), age: 44, gender: Gender::Male, pain_responder: true };
    let ctx = ContextFeatures::for_subject(&subject).unwrap();
    let fv = build_feature_vector(&w, &[Channel::EDA], &cfg, Some(&ctx)).unwrap();
    assert_eq!(fv.len(), n + ContextFeatures::LEN);
    assert_eq!(&fv.to_row()[n..], ctx.to_vec().as_slice());
    assert!(build_feature_vector(&w, &[], &cfg, None).is_err());
}

#[test]
fn default_layout_at_512_hz() {
    let cfg = PreprocessConfig::for_sample_rate(512);
    assert_eq!(cfg.components_per_channel(window_len(512)), 104);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn downsample_length_closed_form(len in 1usize..600, w_frac in 0.0f64..=1.0, overlap in 0.0f64..0.99) {
        let w = ((len as f64 * w_frac) as usize).clamp(1, len);
        let x: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let out = downsample_moving_average(&x, w, overlap).unwrap();
        let s = ((w as f64 * (1.0 - overlap)).round() as usize).max(1);
        prop_assert_eq!(out.len(), (len - w) / s + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn components_lie_in_unit_interval_with_fixed_length(seed in any::<u64>(), mask in 1usize..8) {
        let w = window(seed);
        let cfg = PreprocessConfig::for_sample_rate(RATE);
        let mods: Vec<Channel> = Channel::ALL.into_iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| c).collect();
        let fv = build_feature_vector(&w, &mods, &cfg, None).unwrap();
        prop_assert_eq!(fv.len(), mods.len() * cfg.components_per_channel(window_len(RATE)));
        prop_assert!(fv.components.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn minmax_affine_invariance(
        xs in proptest::collection::vec(-1e3f64..1e3, 2..80),
        scale in 0.01f64..100.0,
        shift in -1e3f64..1e3,
    ) {
        let t = |v: Vec<f64>| RawTrace::new(Channel::EMG, RATE, v).unwrap();
        let base = minmax_normalize(&t(xs.clone()));
        prop_assume!(!base.degenerate);
        let moved = minmax_normalize(&t(xs.iter().map(|v| v * scale + shift).collect()));
        let again = minmax_normalize(&base.trace);
        for ((a, b), c) in base.trace.samples.iter().zip(&moved.trace.samples).zip(&again.trace.samples) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((a - c).abs() <= 1e-12);
        }
    }
}
