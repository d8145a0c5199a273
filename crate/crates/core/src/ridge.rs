//! Greedy extraction of maximal-energy ridges from the multi-channel grid,
//! with slope-limited jump search and peeling.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multichannel::{MtfGrid, SpectralThreshold};
use crate::num::Real;
use crate::tfr::TfrKind;
use crate::window::WindowStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeConfig {
    /// Maximum number of ridges `H`.
    pub h_max: usize,
    /// Number of seed intervals `U`.
    pub u_intervals: usize,
    /// Search horizon in seconds.
    pub jumpt: f64,
    /// Largest frequency jump in Hz.
    pub jumpf: f64,
    /// Largest frequency slope in Hz/s.
    pub maxder: f64,
    /// Minimum ridge duration in seconds.
    pub l_c: f64,
    /// Peel half-width in bins.
    pub d1: usize,
    /// Which points of a jump must clear the threshold.
    #[serde(default)]
    pub path_rule: PathRule,
}

/// Acceptance test applied to a jump before the ridge grows along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRule {
    /// Only the jump target must exceed the threshold.
    Target,
    /// The target and the mean of `|MTF|/γ` over the jump must exceed one.
    Mean,
    /// The target and more than half of the jump points must exceed the
    /// threshold.
    Majority,
    /// Every point of the jump must exceed the threshold.
    #[default]
    All,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            h_max: 7,
            u_intervals: 5,
            jumpt: 2.0,
            jumpf: 0.03,
            maxder: 0.03,
            l_c: 25.0,
            d1: 3,
            path_rule: PathRule::All,
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self, fs: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("ridge: {what}")));
        if self.h_max == 0 {
            return bad("h_max must be >= 1");
        }
        if self.u_intervals == 0 {
            return bad("u_intervals must be >= 1");
        }
        if !(self.jumpt >= 1.0 / fs) {
            return bad("jumpt must cover at least one sample");
        }
        if !(self.jumpf >= 0.0) || !(self.maxder >= 0.0) || !(self.l_c >= 0.0) {
            return bad("jumpf, maxder and l_c must be >= 0");
        }
        Ok(())
    }
}

/// Default peel half-width: `round(std_ĝ·N/fs)` for synchrosqueezed grids,
/// three times that for the STFT.
pub fn default_d1(kind: TfrKind, sigma: f64, n_bins: usize, fs: f64) -> usize {
    let w = WindowStats::for_sigma(sigma).std_freq * n_bins as f64 / fs;
    match kind {
        TfrKind::Stft => (3.0 * w).round() as usize,
        TfrKind::Fsst | TfrKind::Fsst2 => w.round() as usize,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ridge<T> {
    /// Extraction order, starting at 1.
    pub rank: usize,
    pub m_start: usize,
    /// Bin index per supported sample.
    pub bins: Vec<usize>,
    /// True where the point was a seed or jump target (not interpolated).
    pub anchors: Vec<bool>,
    pub freqs_hz: Vec<T>,
    /// `Σ |MTF|²` along the ridge on the working grid of its round.
    pub energy: T,
    /// Original MTF magnitude along the ridge.
    pub magnitudes: Vec<T>,
    /// Threshold `γ[bin]` along the ridge.
    pub thresholds: Vec<T>,
}

impl<T: Real> Ridge<T> {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Last supported sample (inclusive).
    pub fn m_end(&self) -> usize {
        self.m_start + self.bins.len() - 1
    }

    pub fn contains(&self, m: usize) -> bool {
        m >= self.m_start && m <= self.m_end()
    }

    pub fn bin_at(&self, m: usize) -> Option<usize> {
        self.contains(m).then(|| self.bins[m - self.m_start])
    }

    pub fn freq_at(&self, m: usize) -> Option<T> {
        self.contains(m).then(|| self.freqs_hz[m - self.m_start])
    }

    pub fn duration_s(&self, fs: T) -> T {
        T::of_usize(self.bins.len()) / fs
    }

    pub fn mean_freq(&self) -> T {
        crate::num::mean(&self.freqs_hz)
    }
}

/// A grown candidate before adoption.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub interval: usize,
    pub m_start: usize,
    pub bins: Vec<usize>,
    pub anchors: Vec<bool>,
    pub energy: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Frequency half-width (bins) of the search region `j` samples from the anchor.
#[inline]
fn half_width(j: usize, cfg: &RidgeConfig, fs: f64, bin_hz: f64) -> usize {
    let hz = cfg.jumpf.min(cfg.maxder * j as f64 / fs);
    (hz / bin_hz + 1e-9).floor() as usize
}

#[inline]
fn horizon(cfg: &RidgeConfig, fs: f64) -> usize {
    (cfg.jumpt * fs + 1e-9).floor() as usize
}

/// Cells of the slope-limited search cone next to an anchor, clipped to a
/// grid of `n_time × n_bins` cells, in row order then bin order.
#[allow(clippy::too_many_arguments)]
pub fn search_region(
    anchor_m: usize,
    anchor_k: usize,
    direction: Direction,
    cfg: &RidgeConfig,
    fs: f64,
    bin_hz: f64,
    n_time: usize,
    n_bins: usize,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 1..=horizon(cfg, fs) {
        let m = match direction {
            Direction::Forward => anchor_m + j,
            Direction::Backward => match anchor_m.checked_sub(j) {
                Some(m) => m,
                None => break,
            },
        };
        if m >= n_time {
            break;
        }
        let w = half_width(j, cfg, fs, bin_hz);
        let lo = anchor_k.saturating_sub(w);
        let hi = (anchor_k + w).min(n_bins.saturating_sub(1));
        out.extend((lo..=hi).map(|k| (m, k)));
    }
    out
}

/// Round-by-round ridge extraction on a private copy of the grid.
pub struct RidgeExtractor<'a, T> {
    mtf: &'a MtfGrid<T>,
    gamma: &'a [T],
    cfg: RidgeConfig,
    work: Vec<T>,
    peeled: Vec<bool>,
    n_bins: usize,
    fs: f64,
    bin_hz: f64,
    ridges: Vec<Ridge<T>>,
    done: bool,
}

impl<'a, T: Real> RidgeExtractor<'a, T> {
    pub fn new(mtf: &'a MtfGrid<T>, threshold: &'a SpectralThreshold<T>, cfg: RidgeConfig) -> Result<Self> {
        let fs = mtf.fs().to_f64_lossy();
        cfg.validate(fs)?;
        if threshold.gamma.len() != mtf.n_stored {
            return Err(Error::Contract(format!(
                "threshold has {} bins, grid has {}",
                threshold.gamma.len(),
                mtf.n_stored
            )));
        }
        Ok(Self {
            mtf,
            gamma: &threshold.gamma,
            cfg,
            work: mtf.values.clone(),
            peeled: vec![false; mtf.values.len()],
            // bins at or above N/2 are never tracked
            n_bins: mtf.n_stored.min(mtf.config.n_bins / 2),
            fs,
            bin_hz: mtf.bin_hz().to_f64_lossy(),
            ridges: Vec::new(),
            done: false,
        })
    }

    pub fn ridges(&self) -> &[Ridge<T>] {
        &self.ridges
    }

    pub fn into_ridges(self) -> Vec<Ridge<T>> {
        self.ridges
    }

    /// Working grid after the peeling done so far.
    pub fn work(&self) -> &[T] {
        &self.work
    }

    #[inline]
    fn idx(&self, m: usize, k: usize) -> usize {
        m * self.mtf.n_stored + k
    }

    #[inline]
    fn above(&self, m: usize, k: usize) -> bool {
        self.work[self.idx(m, k)] > self.gamma[k]
    }

    fn seed(&self, rows: std::ops::Range<usize>) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, T)> = None;
        for m in rows {
            for k in 1..self.n_bins {
                let i = self.idx(m, k);
                if self.peeled[i] {
                    continue;
                }
                let v = self.work[i];
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((m, k, v));
                }
            }
        }
        best.and_then(|(m, k, _)| self.above(m, k).then_some((m, k)))
    }

    fn path_accepted(&self, m0: usize, k0: usize, m1: usize, k1: usize) -> bool {
        match self.cfg.path_rule {
            PathRule::Target => true,
            PathRule::All => interpolate(m0, k0, m1, k1).all(|(m, k)| self.above(m, k)),
            PathRule::Majority => {
                let (mut above, mut n) = (0usize, 0usize);
                for (m, k) in interpolate(m0, k0, m1, k1) {
                    above += usize::from(self.above(m, k));
                    n += 1;
                }
                2 * above > n
            }
            PathRule::Mean => {
                let (mut sum, mut n) = (T::zero(), 0usize);
                for (m, k) in interpolate(m0, k0, m1, k1) {
                    let g = self.gamma[k];
                    if !(g > T::zero()) {
                        return true;
                    }
                    sum += self.work[self.idx(m, k)] / g;
                    n += 1;
                }
                sum > T::of_usize(n)
            }
        }
    }

    fn path_is_clear(&self, m0: usize, k0: usize, m1: usize, k1: usize) -> bool {
        interpolate(m0, k0, m1, k1).all(|(m, k)| !self.peeled[self.idx(m, k)])
    }

    /// Grows from an anchor in one direction; returns visited points in
    /// growth order (anchor excluded) with anchor flags.
    fn grow(&self, m: usize, k: usize, dir: Direction) -> Vec<(usize, usize, bool)> {
        let mut out = Vec::new();
        let (mut am, mut ak) = (m, k);
        loop {
            let mut best: Option<(usize, usize, T)> = None;
            for (cm, ck) in search_region(am, ak, dir, &self.cfg, self.fs, self.bin_hz, self.mtf.n_time, self.n_bins) {
                let i = self.idx(cm, ck);
                if ck == 0 || self.peeled[i] {
                    continue;
                }
                let v = self.work[i];
                let better = match best {
                    None => true,
                    Some((bm, bk, bv)) => v > bv || (v == bv && (cm, ck) < (bm, bk)),
                };
                if better && self.path_is_clear(am, ak, cm, ck) {
                    best = Some((cm, ck, v));
                }
            }
            let Some((nm, nk, _)) = best else { break };
            if !self.above(nm, nk) {
                break;
            }
            if !self.path_accepted(am, ak, nm, nk) {
                break;
            }
            let pts: Vec<(usize, usize)> = interpolate(am, ak, nm, nk).collect();
            let last = pts.len() - 1;
            for (i, (pm, pk)) in pts.into_iter().enumerate() {
                out.push((pm, pk, i == last));
            }
            am = nm;
            ak = nk;
        }
        out
    }

    fn candidate(&self, interval: usize, m: usize, k: usize) -> Candidate<T> {
        let back = self.grow(m, k, Direction::Backward);
        let fwd = self.grow(m, k, Direction::Forward);
        let m_start = back.last().map_or(m, |p| p.0);
        let mut bins = Vec::with_capacity(back.len() + fwd.len() + 1);
        let mut anchors = Vec::with_capacity(bins.capacity());
        for &(_, bk, a) in back.iter().rev() {
            bins.push(bk);
            anchors.push(a);
        }
        bins.push(k);
        anchors.push(true);
        for &(_, fk, a) in &fwd {
            bins.push(fk);
            anchors.push(a);
        }
        let energy = bins
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let v = self.work[self.idx(m_start + i, b)];
                v * v
            })
            .sum();
        Candidate {
            interval,
            m_start,
            bins,
            anchors,
            energy,
        }
    }

    /// Candidates of the next round, one per interval with a valid seed.
    pub fn candidates(&self) -> Vec<Candidate<T>> {
        let l = self.mtf.n_time;
        let u = self.cfg.u_intervals.min(l);
        (0..u)
            .filter_map(|i| {
                let rows = (i * l / u)..((i + 1) * l / u);
                self.seed(rows).map(|(m, k)| self.candidate(i, m, k))
            })
            .collect()
    }

    fn long_enough(&self, c: &Candidate<T>) -> bool {
        c.bins.len() as f64 / self.fs > self.cfg.l_c
    }

    /// Runs one round; `None` once no candidate survives or `H` ridges exist.
    pub fn step(&mut self) -> Option<&Ridge<T>> {
        if self.done || self.ridges.len() >= self.cfg.h_max {
            self.done = true;
            return None;
        }
        let best = self
            .candidates()
            .into_iter()
            .filter(|c| self.long_enough(c))
            .fold(None::<Candidate<T>>, |acc, c| match acc {
                Some(a) if a.energy >= c.energy => Some(a),
                _ => Some(c),
            });
        let Some(c) = best else {
            self.done = true;
            return None;
        };
        let ridge = Ridge {
            rank: self.ridges.len() + 1,
            m_start: c.m_start,
            freqs_hz: c.bins.iter().map(|&b| self.mtf.config.freq_of(b)).collect(),
            magnitudes: c
                .bins
                .iter()
                .enumerate()
                .map(|(i, &b)| self.mtf.at(c.m_start + i, b))
                .collect(),
            thresholds: c.bins.iter().map(|&b| self.gamma[b]).collect(),
            bins: c.bins,
            anchors: c.anchors,
            energy: c.energy,
        };
        self.peel(&ridge);
        self.ridges.push(ridge);
        self.ridges.last()
    }

    fn peel(&mut self, r: &Ridge<T>) {
        let d1 = self.cfg.d1;
        let kk = self.mtf.n_stored;
        for (i, &b) in r.bins.iter().enumerate() {
            let m = r.m_start + i;
            for k in b.saturating_sub(d1)..=(b + d1).min(kk - 1) {
                let idx = self.idx(m, k);
                self.work[idx] = T::zero();
                self.peeled[idx] = true;
            }
        }
    }
}

/// Straight-line path from `(m0,k0)` (excluded) to `(m1,k1)` (included),
/// bins rounded half away from zero.
fn interpolate(m0: usize, k0: usize, m1: usize, k1: usize) -> impl Iterator<Item = (usize, usize)> {
    let (lo, hi, forward) = if m1 > m0 { (m0, m1, true) } else { (m1, m0, false) };
    let span = (hi - lo) as f64;
    (1..=(hi - lo)).map(move |j| {
        let m = if forward { m0 + j } else { m0 - j };
        let k = k0 as f64 + (k1 as f64 - k0 as f64) * j as f64 / span;
        (m, k.round() as usize)
    })
}

/// Runs the extraction to completion.
pub fn estimate_ridges<T: Real>(
    mtf: &MtfGrid<T>,
    threshold: &SpectralThreshold<T>,
    cfg: &RidgeConfig,
) -> Result<Vec<Ridge<T>>> {
    let mut ex = RidgeExtractor::new(mtf, threshold, *cfg)?;
    while ex.step().is_some() {}
    Ok(ex.into_ridges())
}

/// A time sample where two ridges are closer than `2Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationViolation {
    pub rank_a: usize,
    pub rank_b: usize,
    pub m: usize,
}

pub fn check_separation<T: Real>(ridges: &[Ridge<T>], delta_hz: T) -> Vec<SeparationViolation> {
    let mut out = Vec::new();
    let gap = T::lit(2.0) * delta_hz;
    for (i, a) in ridges.iter().enumerate() {
        for b in &ridges[i + 1..] {
            let lo = a.m_start.max(b.m_start);
            let hi = a.m_end().min(b.m_end());
            for m in lo..=hi {
                if lo > hi {
                    break;
                }
                let (fa, fb) = (a.freq_at(m).expect("in range"), b.freq_at(m).expect("in range"));
                if (fa - fb).abs() < gap {
                    out.push(SeparationViolation {
                        rank_a: a.rank,
                        rank_b: b.rank,
                        m,
                    });
                }
            }
        }
    }
    out
}

/// JSON summary of one ridge; carries the full path so the ridge can be
/// rebuilt by later stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRecord<T> {
    pub rank: usize,
    pub energy: T,
    pub t_start: T,
    pub t_end: T,
    pub mean_freq: T,
    pub m_start: usize,
    pub bins: Vec<usize>,
    pub anchors: Vec<bool>,
    pub magnitudes: Vec<T>,
    pub thresholds: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSet<T> {
    pub fs: T,
    pub n_bins: usize,
    pub ridges: Vec<RidgeRecord<T>>,
}

impl<T: Real> RidgeSet<T> {
    pub fn new(fs: T, n_bins: usize, ridges: &[Ridge<T>]) -> Self {
        let records = ridges
            .iter()
            .map(|r| RidgeRecord {
                rank: r.rank,
                energy: r.energy,
                t_start: T::of_usize(r.m_start) / fs,
                t_end: T::of_usize(r.m_end()) / fs,
                mean_freq: r.mean_freq(),
                m_start: r.m_start,
                bins: r.bins.clone(),
                anchors: r.anchors.clone(),
                magnitudes: r.magnitudes.clone(),
                thresholds: r.thresholds.clone(),
            })
            .collect();
        Self {
            fs,
            n_bins,
            ridges: records,
        }
    }

    pub fn to_ridges(&self) -> Vec<Ridge<T>> {
        let bin = self.fs / T::of_usize(self.n_bins);
        self.ridges
            .iter()
            .map(|r| Ridge {
                rank: r.rank,
                m_start: r.m_start,
                bins: r.bins.clone(),
                anchors: r.anchors.clone(),
                freqs_hz: r.bins.iter().map(|&b| T::of_usize(b) * bin).collect(),
                energy: r.energy,
                magnitudes: r.magnitudes.clone(),
                thresholds: r.thresholds.clone(),
            })
            .collect()
    }
}

/// Writes `ridge_rank,time_s,freq_hz,magnitude` rows.
pub fn write_ridges_csv<T: Real>(path: &Path, ridges: &[Ridge<T>], fs: T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "ridge_rank,time_s,freq_hz,magnitude").map_err(io)?;
    for r in ridges {
        for i in 0..r.len() {
            let t = T::of_usize(r.m_start + i) / fs;
            writeln!(w, "{},{},{},{}", r.rank, t, r.freqs_hz[i], r.magnitudes[i]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
