use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use realfft::{RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use super::{stored_bins, Spectrum, TfrConfig, TfrGrid, TfrKind};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::window::WindowVariant;

/// Per-column windowed DFT of either a real or a complex signal.
enum Columns<'a, T: Real> {
    Real {
        x: &'a [T],
        fft: Arc<dyn RealToComplex<T>>,
        buf: Vec<T>,
        scratch: Vec<Complex<T>>,
    },
    Complex {
        x: &'a [Complex<T>],
        fft: Arc<dyn Fft<T>>,
        buf: Vec<Complex<T>>,
        scratch: Vec<Complex<T>>,
    },
}

impl<'a, T: Real> Columns<'a, T> {
    fn real(x: &'a [T], n: usize) -> Self {
        let fft = RealFftPlanner::<T>::new().plan_fft_forward(n);
        let scratch = fft.make_scratch_vec();
        Columns::Real {
            x,
            fft,
            buf: vec![T::zero(); n],
            scratch,
        }
    }

    fn complex(x: &'a [Complex<T>], n: usize) -> Self {
        let fft = FftPlanner::<T>::new().plan_fft_forward(n);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Columns::Complex {
            x,
            fft,
            buf: vec![Complex::default(); n],
            scratch,
        }
    }

    fn len(&self) -> usize {
        match self {
            Columns::Real { x, .. } => x.len(),
            Columns::Complex { x, .. } => x.len(),
        }
    }

    fn spectrum(&self) -> Spectrum {
        match self {
            Columns::Real { .. } => Spectrum::OneSided,
            Columns::Complex { .. } => Spectrum::TwoSided,
        }
    }

    /// `out[k] = (1/N) Σ_n x[m+n] w[n] e^{-2πikn/N}` for the stored bins.
    fn transform(&mut self, m: usize, w: &[T], out: &mut [Complex<T>]) {
        let half = (w.len() - 1) / 2;
        match self {
            Columns::Real {
                x,
                fft,
                buf,
                scratch,
            } => {
                let n = buf.len();
                buf.iter_mut().for_each(|b| *b = T::zero());
                fill_segment(x.len(), n, m, half, |dst, src, i| buf[dst] = x[src] * w[i]);
                fft.process_with_scratch(buf, out, scratch)
                    .expect("fft buffer sizes");
                let scale = T::one() / T::of_usize(n);
                out.iter_mut().for_each(|c| *c = *c * scale);
            }
            Columns::Complex {
                x,
                fft,
                buf,
                scratch,
            } => {
                let n = buf.len();
                buf.iter_mut().for_each(|b| *b = Complex::default());
                fill_segment(x.len(), n, m, half, |dst, src, i| buf[dst] = x[src] * w[i]);
                fft.process_with_scratch(buf, scratch);
                let scale = T::one() / T::of_usize(n);
                for (o, b) in out.iter_mut().zip(buf.iter()) {
                    *o = *b * scale;
                }
            }
        }
    }
}

/// Calls `put(buffer_index, signal_index, window_index)` for each in-range
/// sample of the window centred at `m`; negative lags wrap to the end.
#[inline]
fn fill_segment(len: usize, n: usize, m: usize, half: usize, mut put: impl FnMut(usize, usize, usize)) {
    let lo = m.saturating_sub(half);
    let hi = (m + half).min(len - 1);
    for src in lo..=hi {
        let i = src + half - m;
        let dst = if src >= m { src - m } else { n - (m - src) };
        put(dst, src, i);
    }
}

fn check_len<T: Real>(len: usize, cfg: &TfrConfig<T>) -> Result<()> {
    let need = cfg.window.len();
    if len < need {
        return Err(Error::SignalTooShort { len, need });
    }
    Ok(())
}

fn grid_of_variant<T: Real>(
    id: &str,
    cols: &mut Columns<'_, T>,
    cfg: &TfrConfig<T>,
    variant: WindowVariant,
) -> TfrGrid<T> {
    let l = cols.len();
    let k = stored_bins(cfg.n_bins, cols.spectrum());
    let mut coeffs = vec![Complex::default(); l * k];
    let w = cfg.window.variant(variant).to_vec();
    for (m, col) in coeffs.chunks_mut(k).enumerate() {
        cols.transform(m, &w, col);
    }
    TfrGrid::from_parts(cfg.with_kind(TfrKind::Stft), id, cols.spectrum(), l, coeffs)
}

/// Discrete STFT of a real signal with the Gaussian window.
pub fn stft<T: Real>(id: &str, x: &[T], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    stft_variant(id, x, cfg, WindowVariant::G)
}

/// Discrete STFT of a complex signal (two-sided grid).
pub fn stft_complex<T: Real>(id: &str, x: &[Complex<T>], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    stft_variant_complex(id, x, cfg, WindowVariant::G)
}

/// STFT computed with one of the derived windows.
pub fn stft_variant<T: Real>(
    id: &str,
    x: &[T],
    cfg: &TfrConfig<T>,
    variant: WindowVariant,
) -> Result<TfrGrid<T>> {
    check_len(x.len(), cfg)?;
    Ok(grid_of_variant(id, &mut Columns::real(x, cfg.n_bins), cfg, variant))
}

pub fn stft_variant_complex<T: Real>(
    id: &str,
    x: &[Complex<T>],
    cfg: &TfrConfig<T>,
    variant: WindowVariant,
) -> Result<TfrGrid<T>> {
    check_len(x.len(), cfg)?;
    Ok(grid_of_variant(id, &mut Columns::complex(x, cfg.n_bins), cfg, variant))
}

/// Instantaneous-frequency estimates in Hz; `NaN` marks invalid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct IfGrid<T> {
    pub n_time: usize,
    pub n_stored: usize,
    pub values: Vec<T>,
}

impl<T: Real> IfGrid<T> {
    pub fn at(&self, m: usize, k: usize) -> Option<T> {
        let v = self.values[m * self.n_stored + k];
        v.is_finite().then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

#[inline]
fn two_pi<T: Real>() -> T {
    T::lit(2.0 * PI)
}

/// First-order IF in cycles/sample: `k/N − Im{V^{g'}/V^g}/(2π)`.
#[inline]
fn omega1<T: Real>(k: usize, n: usize, vg: Complex<T>, vg1: Complex<T>) -> T {
    T::of_usize(k) / T::of_usize(n) - (vg1 / vg).im / two_pi()
}

/// Local IF from the STFTs with `g` and `g'`.
pub fn local_if_estimate<T: Real>(g: &TfrGrid<T>, g1: &TfrGrid<T>) -> Result<IfGrid<T>> {
    if g.n_time() != g1.n_time() || g.n_stored() != g1.n_stored() || !g.config.same_axes(&g1.config) {
        return Err(Error::Contract("local_if_estimate: grids differ in shape".into()));
    }
    let n = g.config.n_bins;
    let fs = g.config.fs();
    let thr = g.config.gamma_reassign_rel * global_max(g.coeffs());
    let k = g.n_stored();
    let values = g
        .coeffs()
        .iter()
        .zip(g1.coeffs())
        .enumerate()
        .map(|(i, (&a, &b))| {
            if a.norm() < thr || a.norm() == T::zero() {
                T::nan()
            } else {
                omega1(i % k, n, a, b) * fs
            }
        })
        .collect();
    Ok(IfGrid {
        n_time: g.n_time(),
        n_stored: k,
        values,
    })
}

fn global_max<T: Real>(c: &[Complex<T>]) -> T {
    max_norm_sqr(c).sqrt()
}

#[inline]
fn max_norm_sqr<T: Real>(c: &[Complex<T>]) -> T {
    c.iter().map(|z| z.norm_sqr()).fold(T::zero(), T::max)
}

/// Adds `v` (coming from stored bin `k`) to the output column at target
/// bin `t`, taken modulo `N`, following the storage convention of `spectrum`.
#[inline]
fn scatter<T: Real>(out: &mut [Complex<T>], spectrum: Spectrum, n: usize, k: usize, t: i64, v: Complex<T>) {
    let n_i = n as i64;
    let t = t.rem_euclid(n_i);
    match spectrum {
        Spectrum::TwoSided => out[t as usize] += v,
        Spectrum::OneSided => {
            let half = n_i / 2;
            if k == 0 || k == n / 2 {
                // self-conjugate bins: split across the mirrored pair
                let s = if t <= half { t } else { n_i - t };
                if s == 0 || s == half {
                    out[s as usize] += v;
                } else {
                    out[s as usize] += v * T::lit(0.5);
                }
                return;
            }
            // the partner bin N-k lands on N-t with the conjugate value
            if t <= half {
                out[t as usize] += v;
            }
            if t >= half {
                out[(n_i - t) as usize % n] += v.conj();
            }
            if t == 0 {
                out[0] += v.conj();
            }
        }
    }
}

/// Reassigns every column of an STFT grid using `target(m, k, V^g, squared column max)`
/// returning a frequency in cycles/sample (or `None` to drop).
fn reassign<T: Real>(
    mut grid: TfrGrid<T>,
    kind: TfrKind,
    mut target: impl FnMut(usize, usize, Complex<T>, T) -> Option<T>,
    mut prepare: impl FnMut(usize),
) -> TfrGrid<T> {
    let n = grid.config.n_bins;
    let spectrum = grid.spectrum;
    let k_len = grid.n_stored();
    let mut vg = vec![Complex::default(); k_len];
    for m in 0..grid.n_time() {
        prepare(m);
        let col = &mut grid.coeffs[m * k_len..(m + 1) * k_len];
        vg.copy_from_slice(col);
        col.iter_mut().for_each(|c| *c = Complex::default());
        let colmax2 = max_norm_sqr(&vg);
        for (k, &v) in vg.iter().enumerate() {
            if let Some(w) = target(m, k, v, colmax2) {
                if let Some(t) = crate::num::round_to_i64(w * T::of_usize(n)) {
                    scatter(col, spectrum, n, k, t, v);
                }
            }
        }
    }
    grid.config.kind = kind;
    grid
}

fn fsst_impl<T: Real>(id: &str, mut cols: Columns<'_, T>, cfg: &TfrConfig<T>) -> TfrGrid<T> {
    let grid = grid_of_variant(id, &mut cols, cfg, WindowVariant::G);
    let thr = cfg.gamma_reassign_rel * global_max(grid.coeffs());
    let thr2 = thr * thr;
    let n = cfg.n_bins;
    let k_len = grid.n_stored();
    let g1 = cfg.window.g1.clone();
    let mut v1 = vec![Complex::default(); k_len];
    let v1_ptr = std::cell::RefCell::new(&mut v1);
    let cols = std::cell::RefCell::new(cols);
    reassign(
        grid,
        TfrKind::Fsst,
        |_, k, v, _| {
            let vn2 = v.norm_sqr();
            if vn2 < thr2 || vn2 == T::zero() {
                return None;
            }
            Some(omega1(k, n, v, v1_ptr.borrow()[k]))
        },
        |m| cols.borrow_mut().transform(m, &g1, &mut v1_ptr.borrow_mut()[..]),
    )
}

/// First-order synchrosqueezed STFT of a real signal.
pub fn fsst<T: Real>(id: &str, x: &[T], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    check_len(x.len(), cfg)?;
    Ok(fsst_impl(id, Columns::real(x, cfg.n_bins), cfg))
}

pub fn fsst_complex<T: Real>(id: &str, x: &[Complex<T>], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    check_len(x.len(), cfg)?;
    Ok(fsst_impl(id, Columns::complex(x, cfg.n_bins), cfg))
}

/// The four extra STFT columns needed by the second-order operators.
struct SecondOrder<T> {
    g1: Vec<Complex<T>>,
    g2: Vec<Complex<T>>,
    tg: Vec<Complex<T>>,
    tg1: Vec<Complex<T>>,
}

impl<T: Real> SecondOrder<T> {
    fn new(k: usize) -> Self {
        Self {
            g1: vec![Complex::default(); k],
            g2: vec![Complex::default(); k],
            tg: vec![Complex::default(); k],
            tg1: vec![Complex::default(); k],
        }
    }

    fn load(&mut self, cols: &mut Columns<'_, T>, cfg: &TfrConfig<T>, m: usize) {
        let w = &cfg.window;
        cols.transform(m, &w.g1, &mut self.g1);
        cols.transform(m, &w.g2, &mut self.g2);
        cols.transform(m, &w.tg, &mut self.tg);
        cols.transform(m, &w.tg1, &mut self.tg1);
    }

    /// Returns `(ω̂, ω̂², q̂)` in cycles/sample and cycles/sample²; `ω̂²` falls
    /// back to `ω̂` and `q̂` is `None` when the denominator is too small.
    fn estimate(&self, k: usize, n: usize, v: Complex<T>, denom_floor: T) -> (T, T, Option<T>) {
        let i2pi = Complex::new(T::zero(), two_pi::<T>());
        let eta = Complex::new(T::of_usize(k) / T::of_usize(n), T::zero());
        let (v1, v2, vt, vt1) = (self.g1[k], self.g2[k], self.tg[k], self.tg1[k]);
        let w_c = eta - v1 / (i2pi * v);
        let w1 = w_c.re;
        let d = vt * v1 - vt1 * v;
        if d.norm() > denom_floor {
            let q = (v2 * v - v1 * v1) / (i2pi * d);
            let w2 = (w_c - q * vt / v).re;
            if w2.is_finite() {
                return (w1, w2, Some(q.re));
            }
        }
        (w1, w1, None)
    }
}

fn fsst2_impl<T: Real>(id: &str, mut cols: Columns<'_, T>, cfg: &TfrConfig<T>) -> TfrGrid<T> {
    let grid = grid_of_variant(id, &mut cols, cfg, WindowVariant::G);
    let thr = cfg.gamma_reassign_rel * global_max(grid.coeffs());
    let thr2 = thr * thr;
    let n = cfg.n_bins;
    let so = std::cell::RefCell::new(SecondOrder::new(grid.n_stored()));
    let cols = std::cell::RefCell::new(cols);
    let rel = cfg.gamma_denom_rel;
    reassign(
        grid,
        TfrKind::Fsst2,
        |_, k, v, colmax2| {
            let vn2 = v.norm_sqr();
            if vn2 < thr2 || vn2 == T::zero() {
                return None;
            }
            let (_, w2, _) = so.borrow().estimate(k, n, v, rel * colmax2);
            Some(w2)
        },
        |m| so.borrow_mut().load(&mut cols.borrow_mut(), cfg, m),
    )
}

/// Second-order synchrosqueezed STFT of a real signal.
pub fn fsst2<T: Real>(id: &str, x: &[T], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    check_len(x.len(), cfg)?;
    Ok(fsst2_impl(id, Columns::real(x, cfg.n_bins), cfg))
}

pub fn fsst2_complex<T: Real>(id: &str, x: &[Complex<T>], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    check_len(x.len(), cfg)?;
    Ok(fsst2_impl(id, Columns::complex(x, cfg.n_bins), cfg))
}

/// Per-cell second-order estimates (`NaN` where undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct Fsst2Diagnostics<T> {
    pub n_time: usize,
    pub n_stored: usize,
    /// First-order IF, Hz.
    pub omega1_hz: Vec<T>,
    /// Second-order IF, Hz.
    pub omega2_hz: Vec<T>,
    /// Frequency modulation estimate, Hz/s.
    pub q_hz_per_s: Vec<T>,
    /// `|V^g|`.
    pub magnitude: Vec<T>,
}

impl<T: Real> Fsst2Diagnostics<T> {
    #[inline]
    pub fn idx(&self, m: usize, k: usize) -> usize {
        m * self.n_stored + k
    }
}

fn diagnostics_impl<T: Real>(mut cols: Columns<'_, T>, cfg: &TfrConfig<T>) -> Fsst2Diagnostics<T> {
    let grid = grid_of_variant("", &mut cols, cfg, WindowVariant::G);
    let thr = cfg.gamma_reassign_rel * global_max(grid.coeffs());
    let n = cfg.n_bins;
    let fs = cfg.fs();
    let k_len = grid.n_stored();
    let total = grid.n_time() * k_len;
    let mut out = Fsst2Diagnostics {
        n_time: grid.n_time(),
        n_stored: k_len,
        omega1_hz: vec![T::nan(); total],
        omega2_hz: vec![T::nan(); total],
        q_hz_per_s: vec![T::nan(); total],
        magnitude: grid.magnitudes(),
    };
    let mut so = SecondOrder::new(k_len);
    for m in 0..grid.n_time() {
        so.load(&mut cols, cfg, m);
        let col = grid.column(m);
        let colmax = col.iter().map(|z| z.norm()).fold(T::zero(), T::max);
        for (k, &v) in col.iter().enumerate() {
            let vn = v.norm();
            if vn < thr || vn == T::zero() {
                continue;
            }
            let (w1, w2, q) = so.estimate(k, n, v, cfg.gamma_denom_rel * colmax * colmax);
            let i = m * k_len + k;
            out.omega1_hz[i] = w1 * fs;
            out.omega2_hz[i] = w2 * fs;
            if let Some(q) = q {
                out.q_hz_per_s[i] = q * fs * fs;
            }
        }
    }
    out
}

pub fn fsst2_diagnostics<T: Real>(x: &[T], cfg: &TfrConfig<T>) -> Result<Fsst2Diagnostics<T>> {
    check_len(x.len(), cfg)?;
    Ok(diagnostics_impl(Columns::real(x, cfg.n_bins), cfg))
}

pub fn fsst2_diagnostics_complex<T: Real>(
    x: &[Complex<T>],
    cfg: &TfrConfig<T>,
) -> Result<Fsst2Diagnostics<T>> {
    check_len(x.len(), cfg)?;
    Ok(diagnostics_impl(Columns::complex(x, cfg.n_bins), cfg))
}

/// Dispatches on `cfg.kind`.
pub fn transform<T: Real>(id: &str, x: &[T], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    match cfg.kind {
        TfrKind::Stft => stft(id, x, cfg),
        TfrKind::Fsst => fsst(id, x, cfg),
        TfrKind::Fsst2 => fsst2(id, x, cfg),
    }
}

pub fn transform_complex<T: Real>(id: &str, x: &[Complex<T>], cfg: &TfrConfig<T>) -> Result<TfrGrid<T>> {
    match cfg.kind {
        TfrKind::Stft => stft_complex(id, x, cfg),
        TfrKind::Fsst => fsst_complex(id, x, cfg),
        TfrKind::Fsst2 => fsst2_complex(id, x, cfg),
    }
}
