//! Discrete STFT and its first- and second-order synchrosqueezed versions.
//!
//! Grids are stored row-major, one row per time sample. Real input is kept
//! one-sided (`N/2+1` bins, the negative frequencies follow by conjugate
//! symmetry); complex input is kept two-sided (`N` bins).

mod engine;

use std::io::Write;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::window::{renyi_entropy, WindowSpec};

pub use engine::{
    fsst, fsst2, fsst2_complex, fsst2_diagnostics, fsst2_diagnostics_complex, fsst_complex,
    local_if_estimate, stft, stft_complex, stft_variant, stft_variant_complex, transform,
    transform_complex, Fsst2Diagnostics, IfGrid,
};

/// Default relative guard on `|V^g|` below which reassignment is skipped.
pub const GAMMA_REASSIGN_REL: f64 = 1e-6;
/// Default relative guard on the second-order denominator.
pub const GAMMA_DENOM_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfrKind {
    Stft,
    Fsst,
    Fsst2,
}

impl TfrKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stft" => Ok(TfrKind::Stft),
            "fsst" => Ok(TfrKind::Fsst),
            "fsst2" => Ok(TfrKind::Fsst2),
            other => Err(Error::Config(format!(
                "unknown transform `{other}` (expected stft, fsst or fsst2)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TfrKind::Stft => "stft",
            TfrKind::Fsst => "fsst",
            TfrKind::Fsst2 => "fsst2",
        }
    }
}

impl std::fmt::Display for TfrKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfrConfig<T> {
    pub n_bins: usize,
    pub window: WindowSpec<T>,
    pub kind: TfrKind,
    /// `|V^g|` guard relative to the global maximum of `|V^g|`.
    pub gamma_reassign_rel: T,
    /// Second-order denominator guard relative to the squared column maximum.
    pub gamma_denom_rel: T,
}

impl<T: Real> TfrConfig<T> {
    pub fn new(n_bins: usize, window: WindowSpec<T>, kind: TfrKind) -> Result<Self> {
        if n_bins < window.len() {
            return Err(Error::InvalidParameter(format!(
                "n_bins {n_bins} smaller than window length {}",
                window.len()
            )));
        }
        if n_bins % 2 != 0 {
            return Err(Error::InvalidParameter(format!("n_bins {n_bins} must be even")));
        }
        Ok(Self {
            n_bins,
            window,
            kind,
            gamma_reassign_rel: T::lit(GAMMA_REASSIGN_REL),
            gamma_denom_rel: T::lit(GAMMA_DENOM_REL),
        })
    }

    pub fn with_kind(&self, kind: TfrKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn fs(&self) -> T {
        self.window.fs
    }

    /// Frequency bin width `fs/N` in Hz.
    pub fn bin_hz(&self) -> T {
        self.window.fs / T::of_usize(self.n_bins)
    }

    pub fn freq_of(&self, k: usize) -> T {
        T::of_usize(k) * self.bin_hz()
    }

    /// Nearest bin to `freq_hz` (ties away from zero).
    pub fn bin_of(&self, freq_hz: T) -> i64 {
        crate::num::round_to_i64(freq_hz / self.bin_hz()).unwrap_or(i64::MAX)
    }

    /// Compatible configs share every field that fixes the bin/time axes.
    pub fn same_axes(&self, other: &Self) -> bool {
        self.n_bins == other.n_bins
            && self.window.sigma == other.window.sigma
            && self.window.fs == other.window.fs
            && self.kind == other.kind
    }
}

/// Layout of the frequency axis of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectrum {
    /// Bins `0..=N/2` of a real signal.
    OneSided,
    /// Bins `0..N` of a complex signal.
    TwoSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfrGrid<T> {
    pub config: TfrConfig<T>,
    pub channel_id: String,
    pub spectrum: Spectrum,
    n_time: usize,
    n_stored: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> TfrGrid<T> {
    pub(crate) fn from_parts(
        config: TfrConfig<T>,
        channel_id: &str,
        spectrum: Spectrum,
        n_time: usize,
        coeffs: Vec<Complex<T>>,
    ) -> Self {
        let n_stored = stored_bins(config.n_bins, spectrum);
        debug_assert_eq!(coeffs.len(), n_time * n_stored);
        Self {
            config,
            channel_id: channel_id.to_string(),
            spectrum,
            n_time,
            n_stored,
            coeffs,
        }
    }

    /// Number of time samples `L`.
    pub fn n_time(&self) -> usize {
        self.n_time
    }

    /// Number of stored bins per column.
    pub fn n_stored(&self) -> usize {
        self.n_stored
    }

    pub fn kind(&self) -> TfrKind {
        self.config.kind
    }

    #[inline]
    pub fn at(&self, m: usize, k: usize) -> Complex<T> {
        self.coeffs[m * self.n_stored + k]
    }

    pub fn column(&self, m: usize) -> &[Complex<T>] {
        &self.coeffs[m * self.n_stored..(m + 1) * self.n_stored]
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn magnitude(&self, m: usize, k: usize) -> T {
        self.at(m, k).norm()
    }

    /// Row-major magnitude grid.
    pub fn magnitudes(&self) -> Vec<T> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }

    /// Weight of stored bin `k` when summing a real signal's spectrum.
    #[inline]
    pub fn bin_weight(&self, k: usize) -> T {
        match self.spectrum {
            Spectrum::TwoSided => T::one(),
            Spectrum::OneSided => {
                if k == 0 || k == self.config.n_bins / 2 {
                    T::one()
                } else {
                    T::lit(2.0)
                }
            }
        }
    }

    /// Real-signal band reconstruction at time `m` over bins `k_lo..=k_hi`:
    /// `2·Re Σ T[m,k]`, with the DC and Nyquist bins counted once.
    pub fn band_sum(&self, m: usize, k_lo: usize, k_hi: usize) -> Result<T> {
        let half = self.config.n_bins / 2;
        if self.spectrum != Spectrum::OneSided {
            return Err(Error::Contract(
                "band_sum needs a one-sided grid; use band_sum_complex".into(),
            ));
        }
        if k_lo > k_hi || k_hi > half || m >= self.n_time {
            return Err(Error::BandOutOfRange {
                lo: k_lo,
                hi: k_hi,
                max: half,
            });
        }
        let col = self.column(m);
        let mut acc = T::zero();
        for (k, c) in col.iter().enumerate().take(k_hi + 1).skip(k_lo) {
            acc += self.bin_weight(k) * c.re;
        }
        Ok(acc / self.config.window.g0())
    }

    /// Plain complex band sum `Σ T[m,k]` over `k_lo..=k_hi` of a stored grid.
    pub fn band_sum_complex(&self, m: usize, k_lo: usize, k_hi: usize) -> Result<Complex<T>> {
        if k_lo > k_hi || k_hi >= self.n_stored || m >= self.n_time {
            return Err(Error::BandOutOfRange {
                lo: k_lo,
                hi: k_hi,
                max: self.n_stored - 1,
            });
        }
        let s: Complex<T> = self.column(m)[k_lo..=k_hi].iter().copied().sum();
        Ok(s / self.config.window.g0())
    }

    /// Full reconstruction of the analysed signal (real part for one-sided
    /// grids).
    pub fn reconstruct_all(&self) -> Vec<T> {
        (0..self.n_time)
            .map(|m| match self.spectrum {
                Spectrum::OneSided => self.band_sum(m, 0, self.config.n_bins / 2).unwrap_or(T::nan()),
                Spectrum::TwoSided => {
                    self.band_sum_complex(m, 0, self.n_stored - 1).map(|c| c.re).unwrap_or(T::nan())
                }
            })
            .collect()
    }

    /// Rényi entropy of the stored grid energy distribution.
    pub fn renyi_entropy(&self, order: T) -> Option<T> {
        renyi_entropy(self.coeffs.iter().map(|c| c.norm_sqr()), order)
    }

    /// Bin frequencies (Hz) of the stored bins.
    pub fn freqs_hz(&self) -> Vec<T> {
        (0..self.n_stored).map(|k| self.config.freq_of(k)).collect()
    }

    /// Writes `|T|` as CSV: header `time_s,<bin Hz>...`, one row per sample.
    pub fn write_magnitude_csv(&self, path: &Path) -> Result<()> {
        let mags = self.magnitudes();
        write_grid_csv(path, &self.freqs_hz(), self.config.fs(), self.n_time, &mags)
    }
}

pub(crate) fn stored_bins(n_bins: usize, spectrum: Spectrum) -> usize {
    match spectrum {
        Spectrum::OneSided => n_bins / 2 + 1,
        Spectrum::TwoSided => n_bins,
    }
}

/// Writes a row-major real grid with a frequency header.
pub fn write_grid_csv<T: Real>(
    path: &Path,
    freqs: &[T],
    fs: T,
    n_time: usize,
    values: &[T],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "time_s").map_err(io)?;
    for f in freqs {
        write!(w, ",{f}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let k = freqs.len();
    for m in 0..n_time {
        write!(w, "{}", T::of_usize(m) / fs).map_err(io)?;
        for v in &values[m * k..(m + 1) * k] {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
