//! Gaussian analysis window `g(t) = exp(-π t²/σ²)` and the derived windows
//! needed by the second-order reassignment operators.
//!
//! All tabulated samples use the sample index `n` as time variable: the
//! derivative windows are derivatives with respect to `n`, and the
//! time-weighted windows are multiplied by `n`. Frequencies derived from them
//! are therefore in cycles per sample until scaled by `fs`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tfr::{self, TfrConfig, TfrKind};

/// Truncation level of the tabulated window.
pub const TRUNCATION_LEVEL: f64 = 1e-8;
/// Largest admissible edge value when the window is truncated by `n_bins`.
pub const MAX_EDGE_VALUE: f64 = 1e-2;
/// Default order of the Rényi entropy used for concentration measurements.
pub const RENYI_ORDER: f64 = 3.0;

/// Tabulated Gaussian window and its companions, each of length `2M+1`
/// with the centre at index `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec<T> {
    /// Width parameter σ in seconds.
    pub sigma: T,
    pub fs: T,
    pub m_half: usize,
    /// `g[n]`
    pub g: Vec<T>,
    /// `dg/dn`
    pub g1: Vec<T>,
    /// `d²g/dn²`
    pub g2: Vec<T>,
    /// `n·g[n]`
    pub tg: Vec<T>,
    /// `n·dg/dn`
    pub tg1: Vec<T>,
}

/// Time/frequency spreads of the continuous window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats<T> {
    /// Standard deviation of `g` in seconds, `σ/√(2π)`.
    pub std_time: T,
    /// Standard deviation of `ĝ` in Hz, `1/(√(2π)σ)`.
    pub std_freq: T,
    /// Mode resolution `Δ = 3·std_freq`, Hz.
    pub delta: T,
}

impl<T: Real> WindowStats<T> {
    pub fn for_sigma(sigma: T) -> Self {
        let root = T::lit((2.0 * PI).sqrt());
        let std_freq = T::one() / (root * sigma);
        Self {
            std_time: sigma / root,
            std_freq,
            delta: T::lit(3.0) * std_freq,
        }
    }
}

impl<T: Real> WindowSpec<T> {
    pub fn len(&self) -> usize {
        2 * self.m_half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stats(&self) -> WindowStats<T> {
        WindowStats::for_sigma(self.sigma)
    }

    /// Value at the centre, `g(0)`.
    pub fn g0(&self) -> T {
        self.g[self.m_half]
    }

    /// σ expressed in samples.
    pub fn sigma_samples(&self) -> T {
        self.sigma * self.fs
    }

    pub fn variant(&self, v: WindowVariant) -> &[T] {
        match v {
            WindowVariant::G => &self.g,
            WindowVariant::G1 => &self.g1,
            WindowVariant::G2 => &self.g2,
            WindowVariant::Tg => &self.tg,
            WindowVariant::Tg1 => &self.tg1,
        }
    }
}

/// Selector for the five tabulated windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowVariant {
    G,
    G1,
    G2,
    Tg,
    Tg1,
}

/// Smallest `M` with `g(M/fs) < TRUNCATION_LEVEL`.
fn truncation_half_length(sigma_samples: f64) -> usize {
    let guess = (sigma_samples * (-(TRUNCATION_LEVEL.ln()) / PI).sqrt()).floor().max(0.0) as usize;
    let g = |m: usize| (-PI * (m as f64 / sigma_samples).powi(2)).exp();
    let mut m = guess.saturating_sub(1);
    while g(m) >= TRUNCATION_LEVEL {
        m += 1;
    }
    m
}

/// Builds the tabulated window for a transform with `n_bins` frequency bins.
pub fn make_window<T: Real>(sigma: T, fs: T, n_bins: usize) -> Result<WindowSpec<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be > 0")));
    }
    if !(fs > T::zero()) || !fs.is_finite() {
        return Err(Error::InvalidParameter(format!("fs {fs} must be > 0")));
    }
    if n_bins < 3 {
        return Err(Error::InvalidParameter(format!("n_bins {n_bins} must be >= 3")));
    }
    let s = sigma.to_f64_lossy() * fs.to_f64_lossy();
    let m_max = (n_bins - 1) / 2;
    let m_needed = truncation_half_length(s);
    let m_half = if m_needed > m_max {
        let edge = (-PI * (m_max as f64 / s).powi(2)).exp();
        if edge > MAX_EDGE_VALUE {
            return Err(Error::WindowTooWide {
                sigma: sigma.to_f64_lossy(),
                n_bins,
                edge,
            });
        }
        m_max
    } else {
        m_needed
    };

    let len = 2 * m_half + 1;
    let (mut g, mut g1, mut g2, mut tg, mut tg1) =
        (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
    let s2 = s * s;
    for i in 0..len {
        let n = i as f64 - m_half as f64;
        let gv = (-PI * n * n / s2).exp();
        let d1 = -2.0 * PI * n / s2 * gv;
        let d2 = (-2.0 * PI / s2 + 4.0 * PI * PI * n * n / (s2 * s2)) * gv;
        g.push(T::lit(gv));
        g1.push(T::lit(d1));
        g2.push(T::lit(d2));
        tg.push(T::lit(n * gv));
        tg1.push(T::lit(n * d1));
    }
    Ok(WindowSpec {
        sigma,
        fs,
        m_half,
        g,
        g1,
        g2,
        tg,
        tg1,
    })
}

/// Rényi entropy (base 2) of the normalised energy distribution `|c|²/Σ|c|²`.
/// Returns `None` when all magnitudes vanish.
pub fn renyi_entropy<T: Real>(magnitudes_sq: impl Iterator<Item = T> + Clone, order: T) -> Option<T> {
    let total: T = magnitudes_sq.clone().sum();
    if !(total > T::zero()) {
        return None;
    }
    let s: T = magnitudes_sq.map(|e| (e / total).powf(order)).sum();
    Some(s.log2() / (T::one() - order))
}

/// Picks the σ from `sigma_grid` minimising the order-3 Rényi entropy of the
/// FSST of `samples`; ties go to the smaller σ. Every candidate is evaluated
/// with the same `n_bins` so the entropies are comparable.
pub fn select_sigma_renyi<T: Real>(
    channel_id: &str,
    samples: &[T],
    fs: T,
    sigma_grid: &[T],
    n_bins: usize,
) -> Result<T> {
    select_sigma_renyi_with(channel_id, samples, fs, sigma_grid, n_bins, T::lit(RENYI_ORDER)).map(|(s, _)| s)
}

/// As [`select_sigma_renyi`], also returning the entropy of every candidate
/// in grid order.
pub fn select_sigma_renyi_with<T: Real>(
    channel_id: &str,
    samples: &[T],
    fs: T,
    sigma_grid: &[T],
    n_bins: usize,
    order: T,
) -> Result<(T, Vec<T>)> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidParameter("empty sigma grid".into()));
    }
    if samples.iter().all(|x| *x == T::zero()) {
        return Err(Error::DegenerateSpectrum(channel_id.to_string()));
    }
    let mut entropies = Vec::with_capacity(sigma_grid.len());
    let mut best: Option<(T, T)> = None;
    for &sigma in sigma_grid {
        let window = make_window(sigma, fs, n_bins)?;
        let cfg = TfrConfig::new(n_bins, window, TfrKind::Fsst)?;
        let grid = tfr::fsst(channel_id, samples, &cfg)?;
        let h = grid
            .renyi_entropy(order)
            .ok_or_else(|| Error::DegenerateSpectrum(channel_id.to_string()))?;
        entropies.push(h);
        best = match best {
            Some((bs, bh)) if h > bh || (h == bh && sigma >= bs) => Some((bs, bh)),
            _ => Some((sigma, h)),
        };
    }
    Ok((best.expect("non-empty grid").0, entropies))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spreads_for_sigma_five() {
        let st = WindowStats::for_sigma(5.0_f64);
        assert!((st.std_time - 1.99471).abs() < 1e-5);
        assert!((st.std_freq - 0.07979).abs() < 1e-5);
        assert!((st.std_time * st.std_freq - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((st.delta - 3.0 * st.std_freq).abs() < 1e-15);
    }

    #[test]
    fn centre_is_one_and_symmetries_hold() {
        for &sigma in &[0.3, 1.0, 5.0, 7.0] {
            let w = make_window(sigma, 30.0_f64, 1024).unwrap();
            assert_eq!(w.g0(), 1.0);
            let m = w.m_half;
            for i in 0..=m {
                assert_eq!(w.g[m + i], w.g[m - i]);
                assert_eq!(w.g1[m + i], -w.g1[m - i]);
                assert_eq!(w.tg[m + i], -w.tg[m - i]);
                assert_eq!(w.g2[m + i], w.g2[m - i]);
            }
            assert!(w.len() <= 1024);
        }
    }

    #[test]
    fn half_length_follows_truncation_rule() {
        let w = make_window(5.0_f64, 30.0, 1024).unwrap();
        let g = |m: f64| (-PI * (m / 150.0).powi(2)).exp();
        assert!(g(w.m_half as f64) < TRUNCATION_LEVEL);
        assert!(g(w.m_half as f64 - 1.0) >= TRUNCATION_LEVEL);
        // capped by the number of bins, edge small enough
        let w = make_window(5.0_f64, 30.0, 601).unwrap();
        assert_eq!(w.m_half, 300);
    }

    #[test]
    fn too_wide_window_is_rejected() {
        assert!(matches!(
            make_window(20.0_f64, 30.0, 512),
            Err(Error::WindowTooWide { .. })
        ));
        assert!(make_window(0.0_f64, 30.0, 512).is_err());
        assert!(make_window(1.0_f64, 30.0, 2).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let w = make_window(5.0_f64, 30.0, 1024).unwrap();
        let s = w.sigma_samples();
        let g = |n: f64| (-PI * n * n / (s * s)).exp();
        let h = 1e-3;
        let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
        for i in 0..w.len() {
            let n = i as f64 - w.m_half as f64;
            d1 = d1.max(((g(n + h) - g(n - h)) / (2.0 * h) - w.g1[i]).abs());
            d2 = d2.max(((g(n + h) - 2.0 * g(n) + g(n - h)) / (h * h) - w.g2[i]).abs());
            assert!((w.tg1[i] - n * w.g1[i]).abs() < 1e-15);
        }
        assert!(d1 < 1e-6, "g' deviation {d1}");
        assert!(d2 < 1e-5, "g'' deviation {d2}");
    }

    #[test]
    fn three_std_captures_energy() {
        for &sigma in &[1.0, 5.0, 6.5] {
            let fs = 30.0_f64;
            let w = make_window(sigma, fs, 1024).unwrap();
            let st = w.stats();
            let lim = 3.0 * st.std_time * fs;
            let m = w.m_half as f64;
            let inside: f64 = w
                .g
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as f64 - m).abs() <= lim)
                .map(|(_, g)| g * g / fs)
                .sum();
            let analytic = sigma / 2f64.sqrt();
            assert!(inside / analytic >= 0.99, "{}", inside / analytic);
        }
    }

    #[test]
    fn renyi_is_scale_invariant() {
        let e = [1.0_f64, 4.0, 0.5, 0.0, 2.0];
        let h1 = renyi_entropy(e.iter().copied(), 3.0).unwrap();
        let h2 = renyi_entropy(e.iter().map(|x| x * 49.0), 3.0).unwrap();
        assert!((h1 - h2).abs() < 1e-12);
        // a single occupied cell has zero entropy, uniform over 4 cells has 2 bits
        assert_eq!(renyi_entropy([0.0_f64, 3.0].into_iter(), 3.0).unwrap(), 0.0);
        assert!((renyi_entropy([1.0_f64; 4].into_iter(), 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(renyi_entropy([0.0_f64; 4].into_iter(), 3.0).is_none());
    }
}
