use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fotrack::multichannel::{
    build_mtf, build_threshold, nearest_rank, percentile_surface, percentile_surface_rows,
    pre_event_threshold, GridView, MtfAccumulator, PercentileParams,
};
use fotrack::tfr::{self, TfrConfig, TfrKind};
use fotrack::window::make_window;

fn cfg() -> TfrConfig<f64> {
    TfrConfig::new(256, make_window(2.0, 30.0, 256).unwrap(), TfrKind::Stft).unwrap()
}

fn signal(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|m| (2.0 * PI * 0.7 * m as f64 / 30.0).sin() + rng.random_range(-0.5..0.5))
        .collect()
}

fn brute_surface(v: &[f64], l: usize, kk: usize, hk: usize, ht: usize, level: f64) -> Vec<f64> {
    let mut out = vec![0.0; l * kk];
    for m in 0..l {
        for k in 0..kk {
            let mut w = Vec::new();
            for r in m.saturating_sub(ht)..=(m + ht).min(l - 1) {
                for c in k.saturating_sub(hk)..=(k + hk).min(kk - 1) {
                    w.push(v[r * kk + c]);
                }
            }
            w.sort_by(f64::total_cmp);
            out[m * kk + k] = w[nearest_rank(level, w.len()) - 1];
        }
    }
    out
}

fn view(v: &[f64], l: usize, kk: usize) -> GridView<'_, f64> {
    // bin 1 Hz, fs 1 Hz: window_hz = 2hk+1, window_s = 2ht+1
    GridView {
        values: v,
        n_time: l,
        n_stored: kk,
        bin_hz: 1.0,
        fs: 1.0,
    }
}

#[test]
fn single_branch_without_q_is_p_magnitude() {
    let c = cfg();
    let p = tfr::stft("b.P", &signal(1, 600), &c).unwrap();
    let q = tfr::stft("b.Q", &vec![0.0; 600], &c).unwrap();
    let mtf = build_mtf(&[p.clone()], &[q]).unwrap();
    // sqrt(|c|²) and hypot differ only in the last bit
    for (a, b) in mtf.values.iter().zip(p.magnitudes()) {
        assert!((a - b).abs() <= 1e-15 * b);
    }
    assert_eq!(mtf.source_ids, vec!["b.P", "b.Q"]);
}

#[test]
fn duplicated_branch_scales_by_sqrt_two() {
    let c = cfg();
    let p = tfr::stft("P", &signal(2, 600), &c).unwrap();
    let q = tfr::stft("Q", &signal(3, 600), &c).unwrap();
    let one = build_mtf(&[p.clone()], &[q.clone()]).unwrap();
    let two = build_mtf(&[p.clone(), p], &[q.clone(), q]).unwrap();
    for (a, b) in one.values.iter().zip(&two.values) {
        assert!((a * 2f64.sqrt() - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn three_branches_match_direct_formula() {
    let c = cfg();
    let ps: Vec<_> = (0..3).map(|i| tfr::stft("P", &signal(10 + i, 600), &c).unwrap()).collect();
    let qs: Vec<_> = (0..3).map(|i| tfr::stft("Q", &signal(20 + i, 600), &c).unwrap()).collect();
    let mtf = build_mtf(&ps, &qs).unwrap();
    for i in (0..mtf.values.len()).step_by(7) {
        let direct: f64 = (0..3)
            .map(|b| ps[b].coeffs()[i].norm().powi(2) + qs[b].coeffs()[i].norm().powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((mtf.values[i] - direct).abs() <= 1e-12 * direct.max(1.0));
        // monotone in the number of branches
        let fewer = (ps[0].coeffs()[i].norm_sqr() + qs[0].coeffs()[i].norm_sqr()).sqrt();
        assert!(mtf.values[i] >= fewer);
    }
}

#[test]
fn mismatched_configs_are_rejected() {
    let a = tfr::stft("a", &signal(1, 600), &cfg()).unwrap();
    let other = TfrConfig::new(256, make_window(3.0, 30.0, 256).unwrap(), TfrKind::Stft).unwrap();
    let b = tfr::stft("b", &signal(1, 600), &other).unwrap();
    assert!(matches!(build_mtf(&[a.clone()], &[b]), Err(fotrack::Error::Aggregation(_))));
    assert!(build_mtf(&[a], &[]).is_err());
    assert!(MtfAccumulator::<f64>::new().finish().is_err());
}

#[test]
fn constant_grid_gives_constant_surface() {
    let v = vec![2.5; 40 * 30];
    let p = PercentileParams { window_hz: 5.0, window_s: 7.0, level: 0.97, time_stride: 1 };
    assert!(percentile_surface(&view(&v, 40, 30), &p).unwrap().iter().all(|&b| b == 2.5));
}

#[test]
fn random_grid_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v: Vec<f64> = (0..3600).map(|_| rng.random::<f64>()).collect();
    for level in [0.5, 0.97, 0.999_999] {
        let p = PercentileParams { window_hz: 5.0, window_s: 5.0, level, time_stride: 1 };
        let fast = percentile_surface(&view(&v, 60, 60), &p).unwrap();
        assert_eq!(fast, brute_surface(&v, 60, 60, 2, 2, level));
    }
    // level close to 1 gives the window maximum
    let p = PercentileParams { window_hz: 5.0, window_s: 5.0, level: 0.999_999, time_stride: 1 };
    let max = brute_surface(&v, 60, 60, 2, 2, 1.0);
    assert_eq!(percentile_surface(&view(&v, 60, 60), &p).unwrap(), max);
}

#[test]
fn row_subset_and_stride_agree_with_full_surface() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v: Vec<f64> = (0..80 * 20).map(|_| rng.random::<f64>()).collect();
    let p = PercentileParams { window_hz: 3.0, window_s: 11.0, level: 0.9, time_stride: 1 };
    let full = percentile_surface(&view(&v, 80, 20), &p).unwrap();
    let part = percentile_surface_rows(&view(&v, 80, 20), &p, 10..30).unwrap();
    assert_eq!(&full[10 * 20..30 * 20], &part[..]);
    let strided = percentile_surface(&view(&v, 80, 20), &PercentileParams { time_stride: 4, ..p }).unwrap();
    for m in (0..80).step_by(4) {
        assert_eq!(&strided[m * 20..(m + 1) * 20], &full[m * 20..(m + 1) * 20]);
    }
    assert_eq!(&strided[79 * 20..], &full[79 * 20..]);
    let (lo, hi) = (strided[5 * 20 + 3].min(strided[6 * 20 + 3]), 2.0);
    assert!(lo.is_finite() && lo < hi);
}

#[test]
fn invalid_windows_are_rejected() {
    let v = vec![1.0; 10 * 10];
    let g = view(&v, 10, 10);
    let bad = |p: PercentileParams| percentile_surface(&g, &p).is_err();
    assert!(bad(PercentileParams { window_hz: 0.5, window_s: 3.0, level: 0.9, time_stride: 1 }));
    assert!(bad(PercentileParams { window_hz: 3.0, window_s: 0.5, level: 0.9, time_stride: 1 }));
    assert!(bad(PercentileParams { window_hz: 30.0, window_s: 3.0, level: 0.9, time_stride: 1 }));
    assert!(bad(PercentileParams { window_hz: 3.0, window_s: 3.0, level: 1.0, time_stride: 1 }));
}

#[test]
fn threshold_is_pre_event_minimum() {
    // β constant in time
    let beta: Vec<f64> = (0..5).flat_map(|_| [1.0, 2.0, 3.0]).collect();
    let p = PercentileParams::default();
    assert_eq!(build_threshold(&beta, 3, 5, &p).unwrap().gamma, vec![1.0, 2.0, 3.0]);
    // single pre-event column
    let beta = vec![4.0, 5.0, 6.0, 0.0, 0.0, 0.0];
    assert_eq!(build_threshold(&beta, 3, 1, &p).unwrap().gamma, vec![4.0, 5.0, 6.0]);
    assert!(matches!(build_threshold(&beta, 3, 0, &p), Err(fotrack::Error::Threshold(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn surface_properties(seed in 0u64..1000, scale in 0.1..50.0_f64, lv in 0.1..0.9_f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..30 * 12).map(|_| rng.random::<f64>()).collect();
        let p = PercentileParams { window_hz: 3.0, window_s: 7.0, level: lv, time_stride: 1 };
        let base = percentile_surface(&view(&v, 30, 12), &p).unwrap();
        let higher = percentile_surface(&view(&v, 30, 12), &PercentileParams { level: lv + 0.05, ..p }).unwrap();
        prop_assert!(base.iter().zip(&higher).all(|(a, b)| a <= b));
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let sv = view(&scaled, 30, 12);
        let s = percentile_surface(&sv, &p).unwrap();
        prop_assert!(base.iter().zip(&s).all(|(a, b)| (a * scale - b).abs() <= 1e-12 * b.max(1.0)));
        let g0 = pre_event_threshold(&view(&v, 30, 12), 10, &p).unwrap().gamma;
        let g1 = pre_event_threshold(&sv, 10, &p).unwrap().gamma;
        prop_assert!(g0.iter().zip(&g1).all(|(a, b)| (a * scale - b).abs() <= 1e-12 * b.max(1.0)));
    }
}
