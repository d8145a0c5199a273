use std::f64::consts::PI;

use num_complex::Complex;
use proptest::prelude::*;

use fotrack::tfr::{self, Spectrum, TfrConfig, TfrKind};
use fotrack::window::{make_window, WindowStats, WindowVariant};

const FS: f64 = 30.0;
const N: usize = 1024;

fn cfg(sigma: f64, kind: TfrKind) -> TfrConfig<f64> {
    TfrConfig::new(N, make_window(sigma, FS, N).unwrap(), kind).unwrap()
}

fn tone(f: f64, len: usize) -> Vec<f64> {
    (0..len).map(|m| (2.0 * PI * f * m as f64 / FS).cos()).collect()
}

/// Samples whose whole (truncated) window lies inside the signal.
fn full_support(sigma: f64, len: usize) -> std::ops::Range<usize> {
    let m = make_window(sigma, FS, N).unwrap().m_half;
    m..len - m
}

fn interior(sigma: f64, len: usize) -> std::ops::Range<usize> {
    let e = (3.0 * WindowStats::for_sigma(sigma).std_time * FS).ceil() as usize;
    e..len - e
}

/// Complex chirp with Gaussian amplitude: IF f0 + c·t, log-amplitude quadratic.
fn gaussian_chirp(f0: f64, c: f64, len: usize) -> (Vec<Complex<f64>>, impl Fn(f64) -> f64) {
    let tc = len as f64 / FS / 2.0;
    let sa = 80.0;
    let x = (0..len)
        .map(|m| {
            let t = m as f64 / FS;
            let a = (-PI * ((t - tc) / sa).powi(2)).exp();
            Complex::from_polar(a, 2.0 * PI * (f0 * t + 0.5 * c * t * t))
        })
        .collect();
    (x, move |t: f64| f0 + c * t)
}

#[test]
fn zero_signal_gives_zero_grids() {
    let x = vec![0.0; 800];
    for kind in [TfrKind::Stft, TfrKind::Fsst, TfrKind::Fsst2] {
        let g = tfr::transform("z", &x, &cfg(5.0, kind)).unwrap();
        assert!(g.coeffs().iter().all(|c| c.norm() == 0.0));
        assert_eq!(g.spectrum, Spectrum::OneSided);
        assert_eq!(g.n_stored(), N / 2 + 1);
    }
}

#[test]
fn short_signal_is_rejected() {
    let c = cfg(5.0, TfrKind::Stft);
    let err = tfr::stft("s", &vec![1.0; c.window.len() - 1], &c).unwrap_err();
    assert!(matches!(err, fotrack::Error::SignalTooShort { .. }));
}

#[test]
fn tone_peaks_at_nearest_bin() {
    let len = 3000;
    let g = tfr::stft("t", &tone(0.5, len), &cfg(5.0, TfrKind::Stft)).unwrap();
    let expect = (0.5 * N as f64 / FS).round() as usize;
    assert_eq!(expect, 17);
    for m in interior(5.0, len) {
        let col = g.column(m);
        let best = (1..N / 2).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
        assert_eq!(best, expect, "m={m}");
    }
}

#[test]
fn stft_reconstruction_is_exact() {
    let len = 2000;
    let x: Vec<f64> = (0..len)
        .map(|m| (0.37 * m as f64).sin() + 0.3 * (1.9 * m as f64).cos() + 0.01 * m as f64)
        .collect();
    let c = cfg(5.0, TfrKind::Stft);
    let g = tfr::stft("r", &x, &c).unwrap();
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for (m, r) in g.reconstruct_all().iter().enumerate() {
        assert!((r - x[m]).abs() <= 1e-9 * scale, "m={m}");
    }
    let xc: Vec<Complex<f64>> = x.iter().enumerate().map(|(m, &v)| Complex::new(v, (m as f64 * 0.1).cos())).collect();
    let gc = tfr::stft_complex("r", &xc, &c).unwrap();
    assert_eq!(gc.n_stored(), N);
    for m in 0..len {
        let s = gc.band_sum_complex(m, 0, N - 1).unwrap();
        assert!((s - xc[m]).norm() <= 1e-9 * scale);
    }
}

#[test]
fn local_if_of_complex_tone_is_exact() {
    let f0 = 1.234;
    let x: Vec<Complex<f64>> = (0..900)
        .map(|m| Complex::from_polar(1.0, 2.0 * PI * f0 * m as f64 / FS))
        .collect();
    let c = cfg(3.0, TfrKind::Stft);
    let g = tfr::stft_complex("c", &x, &c).unwrap();
    let g1 = tfr::stft_variant_complex("c", &x, &c, WindowVariant::G1).unwrap();
    let est = tfr::local_if_estimate(&g, &g1).unwrap();
    let mut checked = 0;
    for m in full_support(3.0, 900) {
        for k in 0..N {
            // cells far down the window tail lose relative precision
            if g.magnitude(m, k) < 1e-3 * g.column(m).iter().map(|z| z.norm()).fold(0.0, f64::max) {
                continue;
            }
            let w = est.at(m, k).expect("valid");
            assert!((w - f0).abs() < 1e-6, "m={m} k={k} w={w}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn local_if_follows_linear_chirp() {
    let len = 3600;
    let (x, ifreq) = gaussian_chirp(2.0, 0.02, len);
    let c = cfg(5.0, TfrKind::Stft);
    let g = tfr::stft_complex("c", &x, &c).unwrap();
    let g1 = tfr::stft_variant_complex("c", &x, &c, WindowVariant::G1).unwrap();
    let est = tfr::local_if_estimate(&g, &g1).unwrap();
    for m in interior(5.0, len) {
        let col = g.column(m);
        let k = (0..N).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
        let w = est.at(m, k).unwrap();
        assert!((w - ifreq(m as f64 / FS)).abs() <= FS / N as f64, "m={m}");
    }
}

#[test]
fn noise_only_grid_has_few_strong_cells() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..1500).map(|_| StandardNormal.sample(&mut rng)).collect();
    let g = tfr::stft("n", &x, &cfg(5.0, TfrKind::Stft)).unwrap();
    let mut mags = g.magnitudes();
    mags.sort_by(f64::total_cmp);
    let med = mags[mags.len() / 2];
    let strong = mags.iter().filter(|&&v| v > 3.0 * med).count() as f64 / mags.len() as f64;
    assert!(strong < 0.01, "{strong}");
}

#[test]
fn fsst_concentrates_tone() {
    let len = 3000;
    let g = tfr::fsst("t", &tone(0.5, len), &cfg(5.0, TfrKind::Fsst)).unwrap();
    for m in interior(5.0, len) {
        let col = g.column(m);
        let total: f64 = col.iter().map(|c| c.norm_sqr()).sum();
        let near: f64 = col[16..=18].iter().map(|c| c.norm_sqr()).sum();
        assert!(near >= 0.95 * total, "m={m} {}", near / total);
    }
}

#[test]
fn fsst_band_reconstructs_tone() {
    let len = 3000;
    let x = tone(0.5, len);
    let g = tfr::fsst("t", &x, &cfg(5.0, TfrKind::Fsst)).unwrap();
    let range = interior(5.0, len);
    let n = range.len() as f64;
    let mse: f64 = range
        .map(|m| (g.band_sum(m, 14, 20).unwrap() - x[m]).powi(2))
        .sum::<f64>()
        / n;
    assert!(mse.sqrt() < 0.02, "{}", mse.sqrt());
}

#[test]
fn fsst2_recovers_chirp_rate_and_ridge() {
    let len = 3600;
    let (x, ifreq) = gaussian_chirp(2.0, 0.02, len);
    let c = cfg(5.0, TfrKind::Fsst2);
    let d = tfr::fsst2_diagnostics_complex(&x, &c).unwrap();
    let g = tfr::fsst2_complex("c", &x, &c).unwrap();
    let bin = FS / N as f64;
    for m in interior(5.0, len) {
        let col = g.column(m);
        let k = (0..N).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
        let truth = ifreq(m as f64 / FS);
        assert!((k as f64 * bin - truth).abs() <= bin, "m={m} k={k}");
        let sk = (truth / bin).round() as usize;
        let q = d.q_hz_per_s[d.idx(m, sk)];
        assert!((q - 0.02).abs() < 1e-3, "m={m} q={q}");
        let w2 = d.omega2_hz[d.idx(m, sk)];
        assert!((w2 - truth).abs() < 1e-3, "m={m} w2={w2} truth={truth}");
    }
}

#[test]
fn fsst2_tone_has_no_modulation() {
    let x: Vec<Complex<f64>> = (0..1200)
        .map(|m| Complex::from_polar(1.0, 2.0 * PI * 0.8 * m as f64 / FS))
        .collect();
    let d = tfr::fsst2_diagnostics_complex(&x, &cfg(5.0, TfrKind::Fsst2)).unwrap();
    let mut checked = 0;
    for m in full_support(5.0, 1200) {
        for k in 0..N {
            let i = d.idx(m, k);
            let colmax = (0..N).map(|j| d.magnitude[d.idx(m, j)]).fold(0.0, f64::max);
            if d.magnitude[i] < 1e-3 * colmax || d.q_hz_per_s[i].is_nan() {
                continue;
            }
            assert!(d.q_hz_per_s[i].abs() < 1e-3, "{}", d.q_hz_per_s[i]);
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn reassignment_conserves_column_sums() {
    let len = 1200;
    let x: Vec<f64> = (0..len)
        .map(|m| {
            let t = m as f64 / FS;
            (2.0 * PI * (0.4 * t + 0.002 * t * t)).cos() + 0.5 * (2.0 * PI * 1.3 * t).sin()
        })
        .collect();
    for kind in [TfrKind::Fsst, TfrKind::Fsst2] {
        let mut c = cfg(4.0, kind);
        c.gamma_reassign_rel = 0.0;
        let v = tfr::stft("x", &x, &c).unwrap();
        let t = tfr::transform("x", &x, &c).unwrap();
        for m in interior(4.0, len) {
            let a = v.band_sum(m, 0, N / 2).unwrap();
            let b = t.band_sum(m, 0, N / 2).unwrap();
            assert!((a - b).abs() < 1e-12 * x[m].abs().max(1.0), "{kind} m={m} {a} {b}");
        }
    }
    // complex input, two-sided
    let xc: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.3 * v)).collect();
    let mut c = cfg(4.0, TfrKind::Fsst);
    c.gamma_reassign_rel = 0.0;
    let v = tfr::stft_complex("x", &xc, &c).unwrap();
    let t = tfr::fsst_complex("x", &xc, &c).unwrap();
    for m in interior(4.0, len) {
        let a = v.band_sum_complex(m, 0, N - 1).unwrap();
        let b = t.band_sum_complex(m, 0, N - 1).unwrap();
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn stft_is_linear_and_time_covariant() {
    let len = 900;
    let f: Vec<f64> = (0..len).map(|m| (m as f64 * 0.11).sin()).collect();
    let h: Vec<f64> = (0..len).map(|m| (m as f64 * 0.023).cos() * 2.0).collect();
    let c = cfg(3.0, TfrKind::Stft);
    let mix: Vec<f64> = f.iter().zip(&h).map(|(a, b)| 1.5 * a - 0.7 * b).collect();
    let (gf, gh, gm) = (
        tfr::stft("f", &f, &c).unwrap(),
        tfr::stft("h", &h, &c).unwrap(),
        tfr::stft("m", &mix, &c).unwrap(),
    );
    for i in 0..gm.coeffs().len() {
        let e = gf.coeffs()[i] * 1.5 - gh.coeffs()[i] * 0.7;
        assert!((gm.coeffs()[i] - e).norm() < 1e-12);
    }
    let s = 37;
    let shifted: Vec<f64> = (0..len).map(|m| if m >= s { f[m - s] } else { 0.0 }).collect();
    let gs = tfr::stft("s", &shifted, &c).unwrap();
    for m in full_support(3.0, len - s) {
        for k in 0..=N / 2 {
            assert!((gs.magnitude(m + s, k) - gf.magnitude(m, k)).abs() < 1e-9);
        }
    }
}

#[test]
fn band_sum_bounds_and_empty_band() {
    let g = tfr::stft("z", &vec![0.0; 800], &cfg(5.0, TfrKind::Stft)).unwrap();
    assert_eq!(g.band_sum(400, 10, 12).unwrap(), 0.0);
    assert!(g.band_sum(400, 12, 10).is_err());
    assert!(g.band_sum(400, 0, N / 2 + 1).is_err());
    assert!(g.band_sum(800, 0, 3).is_err());
}

#[test]
fn magnitude_csv_has_frequency_header() {
    let g = tfr::stft("t", &tone(0.5, 700), &cfg(3.0, TfrKind::Stft)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    g.write_magnitude_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(head.len(), N / 2 + 2);
    assert_eq!(head[0], "time_s");
    assert!((head[2].parse::<f64>().unwrap() - FS / N as f64).abs() < 1e-12);
    assert_eq!(lines.count(), 700);
}

#[test]
fn f32_transforms_agree_with_f64() {
    let x = tone(0.5, 800);
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let c32 = TfrConfig::new(N, make_window(5.0_f32, 30.0, N).unwrap(), TfrKind::Fsst).unwrap();
    let g32 = tfr::fsst("t", &x32, &c32).unwrap();
    let g64 = tfr::fsst("t", &x, &cfg(5.0, TfrKind::Fsst)).unwrap();
    for m in interior(5.0, 800) {
        assert!((g32.band_sum(m, 14, 20).unwrap() as f64 - g64.band_sum(m, 14, 20).unwrap()).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn stft_inverts_random_signals(xs in proptest::collection::vec(-10.0..10.0_f64, 300..500), sigma in 0.5..3.0_f64) {
        let c = TfrConfig::new(256, make_window(sigma, 30.0, 256).unwrap(), TfrKind::Stft).unwrap();
        let g = tfr::stft("p", &xs, &c).unwrap();
        for (m, r) in g.reconstruct_all().iter().enumerate() {
            prop_assert!((r - xs[m]).abs() < 1e-9 * 10.0);
        }
    }
}

#[test]
fn squeezing_concentrates_a_fast_chirp() {
    let x: Vec<f64> = (0..3600)
        .map(|m| {
            let t = m as f64 / FS;
            (2.0 * PI * (1.0 * t + 0.01 * t * t)).cos()
        })
        .collect();
    let h: Vec<f64> = [TfrKind::Stft, TfrKind::Fsst, TfrKind::Fsst2]
        .iter()
        .map(|&k| tfr::transform("c", &x, &cfg(5.0, k)).unwrap().renyi_entropy(3.0).unwrap())
        .collect();
    assert!(h[2] < h[1] && h[1] < h[0], "{h:?}");
}
