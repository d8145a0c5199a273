use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fotrack::multichannel::{pre_event_threshold, GridView, MtfAccumulator, MtfGrid, PercentileParams, SpectralThreshold};
use fotrack::ridge::{
    check_separation, estimate_ridges, search_region, Direction, PathRule, Ridge, RidgeConfig, RidgeExtractor, RidgeSet,
};
use fotrack::tfr::{self, TfrConfig, TfrKind};
use fotrack::window::make_window;

const FS: f64 = 30.0;
const N: usize = 1024;

fn mtf_of(x: &[f64], kind: TfrKind) -> MtfGrid<f64> {
    let c = TfrConfig::new(N, make_window(5.0, FS, N).unwrap(), kind).unwrap();
    let mut acc = MtfAccumulator::new();
    acc.add(&tfr::transform("x", x, &c).unwrap()).unwrap();
    acc.finish().unwrap()
}

fn threshold(mtf: &MtfGrid<f64>, pre_s: f64) -> SpectralThreshold<f64> {
    let n_pre = (pre_s * FS).ceil() as usize;
    pre_event_threshold(&GridView::of_mtf(mtf), n_pre, &PercentileParams { time_stride: 3, ..Default::default() }).unwrap()
}

/// Colored ambient noise plus tones switched on at given times.
fn scenario(seed: u64, secs: f64, tones: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (secs * FS) as usize;
    let mut ar = 0.0;
    (0..len)
        .map(|m| {
            let t = m as f64 / FS;
            let e: f64 = StandardNormal.sample(&mut rng);
            ar = 0.9 * ar + 0.01 * e;
            ar + tones
                .iter()
                .filter(|&&(_, _, on)| t >= on)
                .map(|&(f, a, _)| a * (2.0 * PI * f * t).cos())
                .sum::<f64>()
        })
        .collect()
}

#[test]
fn region_examples() {
    let cfg = RidgeConfig::default();
    let bin = FS / 4096.0;
    let r = search_region(100, 50, Direction::Forward, &cfg, FS, bin, 1000, 200);
    let at30: Vec<_> = r.iter().filter(|p| p.0 == 130).map(|p| p.1).collect();
    assert_eq!(at30, (46..=54).collect::<Vec<_>>());
    assert_eq!(r.iter().map(|p| p.0).max(), Some(160));
    // edge of the grid
    assert!(search_region(999, 50, Direction::Forward, &cfg, FS, bin, 1000, 200).is_empty());
    assert!(search_region(0, 50, Direction::Backward, &cfg, FS, bin, 1000, 200).is_empty());
    let back = search_region(10, 0, Direction::Backward, &cfg, FS, bin, 1000, 200);
    assert!(back.iter().all(|&(m, k)| m < 10 && k <= 4));
    // zero slope keeps the anchor bin only
    let flat = RidgeConfig { maxder: 0.0, ..cfg };
    assert!(search_region(100, 50, Direction::Forward, &flat, FS, bin, 1000, 200).iter().all(|p| p.1 == 50));
}

#[test]
fn single_tone_gives_one_flat_ridge() {
    let x = scenario(1, 100.0, &[(0.5, 1.0, 30.0)]);
    let mtf = mtf_of(&x, TfrKind::Fsst);
    let thr = threshold(&mtf, 30.0);
    let ridges = estimate_ridges(&mtf, &thr, &RidgeConfig::default()).unwrap();
    assert_eq!(ridges.len(), 1, "{:?}", ridges.iter().map(|r| r.mean_freq()).collect::<Vec<_>>());
    let r = &ridges[0];
    let interior = (35.0 * FS) as usize..(95.0 * FS) as usize;
    for m in interior {
        assert_eq!(r.bin_at(m), Some(17));
    }
    assert!((r.m_start as f64 / FS - 30.0).abs() < 5.0);
}

#[test]
fn two_tones_ranked_by_energy() {
    let x = scenario(2, 100.0, &[(0.4, 1.0, 30.0), (0.8, 0.5, 30.0)]);
    let mtf = mtf_of(&x, TfrKind::Fsst2);
    let thr = threshold(&mtf, 30.0);
    let ridges = estimate_ridges(&mtf, &thr, &RidgeConfig::default()).unwrap();
    assert!(ridges.len() >= 2);
    assert!((ridges[0].mean_freq() - 0.4).abs() < 0.03);
    assert!((ridges[1].mean_freq() - 0.8).abs() < 0.03);
    assert!(ridges[0].energy > ridges[1].energy);
    assert!(check_separation(&ridges[..2], 0.08).is_empty());
}

#[test]
fn late_tone_onset_is_located() {
    // window tails leak a strong tone well before its onset, so keep it near the noise level
    let x = scenario(3, 130.0, &[(0.7, 0.05, 70.0)]);
    let mtf = mtf_of(&x, TfrKind::Fsst);
    let thr = threshold(&mtf, 60.0);
    let ridges = estimate_ridges(&mtf, &thr, &RidgeConfig::default()).unwrap();
    let r = ridges.iter().find(|r| (r.mean_freq() - 0.7).abs() < 0.03).expect("0.7 Hz ridge");
    assert!((r.m_start as f64 / FS - 70.0).abs() <= 3.0, "{}", r.m_start as f64 / FS);
}

fn flat_ridge(rank: usize, m_start: usize, len: usize, bin: usize, bin_hz: f64) -> Ridge<f64> {
    Ridge {
        rank,
        m_start,
        bins: vec![bin; len],
        anchors: vec![true; len],
        freqs_hz: vec![bin as f64 * bin_hz; len],
        energy: 1.0,
        magnitudes: vec![1.0; len],
        thresholds: vec![0.5; len],
    }
}

#[test]
fn separation_diagnostic() {
    let a = flat_ridge(1, 0, 100, 40, 0.01);
    let b = flat_ridge(2, 50, 100, 80, 0.01);
    let c = flat_ridge(3, 20, 50, 45, 0.01);
    assert!(check_separation(&[a.clone()], 0.08).is_empty());
    assert!(check_separation(&[a.clone(), b], 0.08).is_empty());
    let v = check_separation(&[a, c], 0.08);
    assert_eq!(v.len(), 50);
    assert_eq!((v[0].m, v[49].m), (20, 69));
}

#[test]
fn ridge_set_round_trips() {
    let x = scenario(4, 80.0, &[(0.5, 1.0, 30.0)]);
    let mtf = mtf_of(&x, TfrKind::Fsst);
    let thr = threshold(&mtf, 30.0);
    let ridges = estimate_ridges(&mtf, &thr, &RidgeConfig::default()).unwrap();
    let set = RidgeSet::new(FS, N, &ridges);
    let json = serde_json::to_string(&set).unwrap();
    let back: RidgeSet<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_ridges(), ridges);
}

/// Random grid: noise floor with a few wandering ridges.
fn random_grid(seed: u64) -> (MtfGrid<f64>, SpectralThreshold<f64>, RidgeConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bins = 2 * rng.random_range(32..=128usize);
    let l = rng.random_range(120..=600usize);
    let fs = 10.0;
    let kk = n_bins / 2 + 1;
    let mut v: Vec<f64> = (0..l * kk).map(|_| rng.random::<f64>()).collect();
    for _ in 0..rng.random_range(1..4) {
        let mut k = rng.random_range(2..kk - 2) as i64;
        let amp = rng.random_range(2.0..6.0);
        let start = rng.random_range(0..l / 2);
        for m in start..l {
            k = (k + rng.random_range(-1..=1)).clamp(0, kk as i64 - 1);
            v[m * kk + k as usize] += amp;
        }
    }
    let window = make_window(0.5, fs, n_bins).unwrap();
    let config = TfrConfig::new(n_bins, window, TfrKind::Fsst).unwrap();
    let mtf = MtfGrid { config, source_ids: vec!["r".into()], n_time: l, n_stored: kk, values: v };
    let thr = SpectralThreshold { gamma: vec![rng.random_range(0.9..1.5); kk], window_hz: 0.1, window_s: 1.0, level: 0.97 };
    let cfg = RidgeConfig {
        h_max: rng.random_range(1..6),
        u_intervals: rng.random_range(1..6),
        jumpt: rng.random_range(0.1..1.0),
        jumpf: rng.random_range(0.0..0.5),
        maxder: rng.random_range(0.0..1.0),
        l_c: rng.random_range(0.0..5.0),
        d1: rng.random_range(0..4),
        path_rule: [PathRule::Target, PathRule::Mean, PathRule::Majority, PathRule::All][rng.random_range(0..4)],
    };
    (mtf, thr, cfg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn ridge_invariants(seed in any::<u64>()) {
        let (mtf, thr, cfg) = random_grid(seed);
        let fs = mtf.fs();
        let bin = mtf.bin_hz();
        let ridges = estimate_ridges(&mtf, &thr, &cfg).unwrap();
        prop_assert_eq!(&ridges, &estimate_ridges(&mtf, &thr, &cfg).unwrap());
        prop_assert!(ridges.len() <= cfg.h_max);
        for (i, r) in ridges.iter().enumerate() {
            prop_assert!(r.len() as f64 / fs > cfg.l_c);
            // anchors above threshold on the grid of their round
            for (j, &b) in r.bins.iter().enumerate() {
                if r.anchors[j] {
                    prop_assert!(r.magnitudes[j] > thr.gamma[b]);
                }
            }
            // jump bound between consecutive anchors
            let anchors: Vec<usize> = (0..r.len()).filter(|&j| r.anchors[j]).collect();
            for w in anchors.windows(2) {
                let dj = w[1] - w[0];
                let lim = cfg.jumpf.min(cfg.maxder * dj as f64 / fs) + bin;
                prop_assert!((r.freqs_hz[w[1]] - r.freqs_hz[w[0]]).abs() <= lim + 1e-12);
                prop_assert!(dj as f64 <= cfg.jumpt * fs + 1e-9);
            }
            // later ridges stay clear of every earlier peel band
            for earlier in &ridges[..i] {
                for m in r.m_start..=r.m_end() {
                    if let Some(b) = earlier.bin_at(m) {
                        prop_assert!(r.bin_at(m).unwrap().abs_diff(b) > cfg.d1);
                    }
                }
            }
        }
    }

    #[test]
    fn adopted_ridge_dominates_its_round(seed in any::<u64>()) {
        let (mtf, thr, cfg) = random_grid(seed);
        let mut ex = RidgeExtractor::new(&mtf, &thr, cfg).unwrap();
        loop {
            let best = ex
                .candidates()
                .into_iter()
                .filter(|c| c.bins.len() as f64 / mtf.fs() > cfg.l_c)
                .map(|c| c.energy)
                .fold(f64::NEG_INFINITY, f64::max);
            match ex.step() {
                Some(r) => prop_assert_eq!(r.energy, best),
                None => break,
            }
        }
    }
}
