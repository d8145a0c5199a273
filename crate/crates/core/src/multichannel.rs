//! Multi-channel magnitude aggregation and spectrum-dependent noise floors.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tfr::{write_grid_csv, TfrConfig, TfrGrid};

/// Aggregated magnitude grid `sqrt(Σ_i |TF_{P^i}|² + |TF_{Q^i}|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MtfGrid<T> {
    pub config: TfrConfig<T>,
    pub source_ids: Vec<String>,
    pub n_time: usize,
    pub n_stored: usize,
    /// Row-major, one row per time sample.
    pub values: Vec<T>,
}

impl<T: Real> MtfGrid<T> {
    #[inline]
    pub fn at(&self, m: usize, k: usize) -> T {
        self.values[m * self.n_stored + k]
    }

    pub fn bin_hz(&self) -> T {
        self.config.bin_hz()
    }

    pub fn fs(&self) -> T {
        self.config.fs()
    }

    pub fn freqs_hz(&self) -> Vec<T> {
        (0..self.n_stored).map(|k| self.config.freq_of(k)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_grid_csv(path, &self.freqs_hz(), self.fs(), self.n_time, &self.values)
    }
}

/// Streaming accumulator of squared magnitudes, so per-channel grids can be
/// dropped as soon as they are added.
#[derive(Debug, Clone)]
pub struct MtfAccumulator<T> {
    config: Option<TfrConfig<T>>,
    n_time: usize,
    n_stored: usize,
    ids: Vec<String>,
    sum_sq: Vec<T>,
}

impl<T: Real> Default for MtfAccumulator<T> {
    fn default() -> Self {
        Self {
            config: None,
            n_time: 0,
            n_stored: 0,
            ids: Vec::new(),
            sum_sq: Vec::new(),
        }
    }
}

impl<T: Real> MtfAccumulator<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, grid: &TfrGrid<T>) -> Result<()> {
        match &self.config {
            None => {
                self.config = Some(grid.config.clone());
                self.n_time = grid.n_time();
                self.n_stored = grid.n_stored();
                self.sum_sq = vec![T::zero(); self.n_time * self.n_stored];
            }
            Some(c) => {
                if !c.same_axes(&grid.config)
                    || self.n_time != grid.n_time()
                    || self.n_stored != grid.n_stored()
                {
                    return Err(Error::Aggregation(format!(
                        "grid `{}` does not share the configuration of `{}`",
                        grid.channel_id, self.ids[0]
                    )));
                }
            }
        }
        for (acc, c) in self.sum_sq.iter_mut().zip(grid.coeffs()) {
            *acc += c.norm_sqr();
        }
        self.ids.push(grid.channel_id.clone());
        Ok(())
    }

    pub fn finish(self) -> Result<MtfGrid<T>> {
        let config = self
            .config
            .ok_or_else(|| Error::Aggregation("no grids to aggregate".into()))?;
        Ok(MtfGrid {
            config,
            source_ids: self.ids,
            n_time: self.n_time,
            n_stored: self.n_stored,
            values: self.sum_sq.into_iter().map(|v| v.sqrt()).collect(),
        })
    }
}

/// Builds the multi-channel grid from aligned active/reactive power grids.
pub fn build_mtf<T: Real>(grids_p: &[TfrGrid<T>], grids_q: &[TfrGrid<T>]) -> Result<MtfGrid<T>> {
    if grids_p.is_empty() || grids_p.len() != grids_q.len() {
        return Err(Error::Aggregation(format!(
            "need equally many P and Q grids (got {} and {})",
            grids_p.len(),
            grids_q.len()
        )));
    }
    let mut acc = MtfAccumulator::new();
    for (p, q) in grids_p.iter().zip(grids_q) {
        acc.add(p)?;
        acc.add(q)?;
    }
    acc.finish()
}

/// Sliding-window percentile parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PercentileParams {
    /// Full window width in Hz.
    pub window_hz: f64,
    /// Full window length in seconds.
    pub window_s: f64,
    /// Quantile level in (0, 1).
    pub level: f64,
    /// Evaluate every `time_stride` rows and interpolate in between.
    pub time_stride: usize,
}

impl Default for PercentileParams {
    fn default() -> Self {
        Self {
            window_hz: 0.1,
            window_s: 25.0,
            level: 0.97,
            time_stride: 1,
        }
    }
}

/// Real grid with its frequency/time axes, the input of the percentile
/// machinery.
#[derive(Debug, Clone, Copy)]
pub struct GridView<'a, T> {
    pub values: &'a [T],
    pub n_time: usize,
    pub n_stored: usize,
    pub bin_hz: T,
    pub fs: T,
}

impl<'a, T: Real> GridView<'a, T> {
    pub fn of_mtf(mtf: &'a MtfGrid<T>) -> Self {
        Self {
            values: &mtf.values,
            n_time: mtf.n_time,
            n_stored: mtf.n_stored,
            bin_hz: mtf.bin_hz(),
            fs: mtf.fs(),
        }
    }
}

/// Half-widths (bins, samples) of the rectangle.
pub fn window_half_widths<T: Real>(view: &GridView<'_, T>, p: &PercentileParams) -> Result<(usize, usize)> {
    let bin = view.bin_hz.to_f64_lossy();
    let fs = view.fs.to_f64_lossy();
    if !(p.level > 0.0 && p.level < 1.0) {
        return Err(Error::InvalidParameter(format!("percentile level {} not in (0,1)", p.level)));
    }
    if !(p.window_hz > bin) {
        return Err(Error::InvalidParameter(format!(
            "threshold window {} Hz not wider than a bin ({bin} Hz)",
            p.window_hz
        )));
    }
    if !(p.window_s > 1.0 / fs) {
        return Err(Error::InvalidParameter(format!(
            "threshold window {} s not longer than a sample",
            p.window_s
        )));
    }
    if p.time_stride == 0 {
        return Err(Error::InvalidParameter("time stride must be >= 1".into()));
    }
    let hk = (p.window_hz / (2.0 * bin) + 1e-9).floor() as usize;
    let ht = (p.window_s * fs / 2.0 + 1e-9).floor() as usize;
    if 2 * hk + 1 > view.n_stored || 2 * ht + 1 > view.n_time {
        return Err(Error::InvalidParameter(format!(
            "threshold window {}x{} cells larger than grid {}x{}",
            2 * ht + 1,
            2 * hk + 1,
            view.n_time,
            view.n_stored
        )));
    }
    Ok((hk, ht))
}

/// Fenwick tree counting inserted ranks, with k-th smallest lookup.
struct Fenwick {
    tree: Vec<u32>,
    top: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
            top: n.next_power_of_two(),
        }
    }

    fn update(&mut self, rank: usize, add: bool) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            if add {
                self.tree[i] += 1;
            } else {
                self.tree[i] -= 1;
            }
            i += i & i.wrapping_neg();
        }
    }

    /// 0-based rank of the `r`-th smallest element (`r` ≥ 1).
    fn kth(&self, mut r: u32) -> usize {
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < r {
                pos = next;
                r -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Integer key with the ordering of the float (IEEE total order).
#[inline]
fn sort_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Nearest-rank quantile position (1-based) for `n` samples.
#[inline]
pub fn nearest_rank(level: f64, n: usize) -> usize {
    ((level * n as f64).ceil() as usize).clamp(1, n)
}

/// Sliding-rectangle percentile surface for all rows.
pub fn percentile_surface<T: Real>(view: &GridView<'_, T>, p: &PercentileParams) -> Result<Vec<T>> {
    percentile_surface_rows(view, p, 0..view.n_time)
}

/// Percentile surface evaluated only for rows `rows` (the rectangle still
/// draws on every row of the grid). Returns `rows.len() × n_stored` values.
pub fn percentile_surface_rows<T: Real>(
    view: &GridView<'_, T>,
    p: &PercentileParams,
    rows: Range<usize>,
) -> Result<Vec<T>> {
    let (hk, ht) = window_half_widths(view, p)?;
    if rows.start >= rows.end || rows.end > view.n_time {
        return Err(Error::InvalidParameter(format!(
            "row range {rows:?} outside grid of {} rows",
            view.n_time
        )));
    }
    let (l, kk) = (view.n_time, view.n_stored);
    // rows that can enter any evaluated rectangle
    let lo_row = rows.start.saturating_sub(ht);
    let hi_row = (rows.end - 1 + ht).min(l - 1);
    let n_strip_rows = hi_row - lo_row + 1;

    let eval_rows: Vec<usize> = {
        let mut v: Vec<usize> = rows.clone().step_by(p.time_stride).collect();
        if *v.last().expect("non-empty") != rows.end - 1 {
            v.push(rows.end - 1);
        }
        v
    };
    let n_rows = rows.len();
    let mut out = vec![T::zero(); n_rows * kk];
    let mut strip: Vec<T> = Vec::with_capacity(n_strip_rows * (2 * hk + 1));
    let mut order: Vec<u32> = Vec::with_capacity(strip.capacity());
    let mut rank: Vec<u32> = Vec::with_capacity(strip.capacity());
    let mut keyed: Vec<(u64, u32)> = Vec::with_capacity(strip.capacity());
    for k in 0..kk {
        let (k0, k1) = (k.saturating_sub(hk), (k + hk).min(kk - 1));
        let width = k1 - k0 + 1;
        // ranks are local to the strip of bins k0..=k1
        strip.clear();
        for r in lo_row..=hi_row {
            strip.extend_from_slice(&view.values[r * kk + k0..=r * kk + k1]);
        }
        keyed.clear();
        keyed.extend(strip.iter().enumerate().map(|(i, v)| (sort_key(v.to_f64_lossy()), i as u32)));
        keyed.sort_unstable();
        order.clear();
        order.extend(keyed.iter().map(|&(_, i)| i));
        rank.clear();
        rank.resize(strip.len(), 0);
        for (r, &i) in order.iter().enumerate() {
            rank[i as usize] = r as u32;
        }
        let mut fw = Fenwick::new(strip.len());
        let put = |fw: &mut Fenwick, r: usize, add: bool| {
            let base = (r - lo_row) * width;
            for i in base..base + width {
                fw.update(rank[i] as usize, add);
            }
        };
        // current rectangle rows [a, b]
        let (mut a, mut b) = (usize::MAX, 0usize);
        for &m in &eval_rows {
            let (na, nb) = (m.saturating_sub(ht), (m + ht).min(l - 1));
            if a == usize::MAX || na > b {
                if a != usize::MAX {
                    for r in a..=b {
                        put(&mut fw, r, false);
                    }
                }
                for r in na..=nb {
                    put(&mut fw, r, true);
                }
            } else {
                for r in a..na {
                    put(&mut fw, r, false);
                }
                for r in (b + 1)..=nb {
                    put(&mut fw, r, true);
                }
            }
            a = na;
            b = nb;
            let q = nearest_rank(p.level, (b - a + 1) * width);
            out[(m - rows.start) * kk + k] = strip[order[fw.kth(q as u32)] as usize];
        }
    }
    if p.time_stride > 1 {
        interpolate_rows(&mut out, kk, rows.start, &eval_rows);
    }
    Ok(out)
}

/// Fills rows between evaluated ones by linear interpolation in time.
fn interpolate_rows<T: Real>(out: &mut [T], kk: usize, start: usize, eval_rows: &[usize]) {
    for pair in eval_rows.windows(2) {
        let (m0, m1) = (pair[0] - start, pair[1] - start);
        for m in m0 + 1..m1 {
            let w = T::of_usize(m - m0) / T::of_usize(m1 - m0);
            for k in 0..kk {
                let (v0, v1) = (out[m0 * kk + k], out[m1 * kk + k]);
                out[m * kk + k] = v0 + (v1 - v0) * w;
            }
        }
    }
}

/// Per-bin noise floor from the pre-event part of a percentile surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralThreshold<T> {
    pub gamma: Vec<T>,
    pub window_hz: f64,
    pub window_s: f64,
    pub level: f64,
}

/// `γ[k] = min_{m < n_pre} β[m,k]`; `beta` holds at least `n_pre` rows.
pub fn build_threshold<T: Real>(
    beta: &[T],
    n_stored: usize,
    n_pre: usize,
    params: &PercentileParams,
) -> Result<SpectralThreshold<T>> {
    if n_pre == 0 {
        return Err(Error::Threshold("pre-event interval holds no samples".into()));
    }
    if beta.len() < n_pre * n_stored {
        return Err(Error::Threshold(format!(
            "percentile surface has {} rows, pre-event needs {n_pre}",
            beta.len() / n_stored.max(1)
        )));
    }
    let mut gamma = beta[..n_stored].to_vec();
    for row in beta[..n_pre * n_stored].chunks(n_stored).skip(1) {
        for (g, &b) in gamma.iter_mut().zip(row) {
            *g = g.min(b);
        }
    }
    Ok(SpectralThreshold {
        gamma,
        window_hz: params.window_hz,
        window_s: params.window_s,
        level: params.level,
    })
}

/// Threshold of a grid computed from its first `n_pre` rows only.
pub fn pre_event_threshold<T: Real>(
    view: &GridView<'_, T>,
    n_pre: usize,
    params: &PercentileParams,
) -> Result<SpectralThreshold<T>> {
    if n_pre == 0 {
        return Err(Error::Threshold("pre-event interval holds no samples".into()));
    }
    let n_pre = n_pre.min(view.n_time);
    let beta = percentile_surface_rows(view, params, 0..n_pre)?;
    build_threshold(&beta, view.n_stored, n_pre, params)
}

/// Per-signal threshold `γ_f` on a single TFR grid's magnitudes.
pub fn signal_threshold<T: Real>(
    grid: &TfrGrid<T>,
    n_pre: usize,
    params: &PercentileParams,
) -> Result<SpectralThreshold<T>> {
    let mags = grid.magnitudes();
    let view = GridView {
        values: &mags,
        n_time: grid.n_time(),
        n_stored: grid.n_stored(),
        bin_hz: grid.config.bin_hz(),
        fs: grid.config.fs(),
    };
    pre_event_threshold(&view, n_pre, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenwick_kth() {
        let mut f = Fenwick::new(10);
        for r in [3, 7, 1, 9] {
            f.update(r, true);
        }
        assert_eq!(f.kth(1), 1);
        assert_eq!(f.kth(2), 3);
        assert_eq!(f.kth(4), 9);
        f.update(3, false);
        assert_eq!(f.kth(2), 7);
    }

    #[test]
    fn nearest_rank_limits() {
        assert_eq!(nearest_rank(0.97, 100), 97);
        assert_eq!(nearest_rank(0.999999, 100), 100);
        assert_eq!(nearest_rank(0.001, 100), 1);
        assert_eq!(nearest_rank(0.5, 3), 2);
    }
}
