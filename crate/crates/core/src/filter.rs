//! Hard-threshold bands around ridges and time-domain mode reconstruction.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::ridge::Ridge;
use crate::tfr::{Spectrum, TfrGrid};
use crate::window::WindowStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    pub d_min: usize,
    pub d_max: usize,
}

impl FilterParams {
    /// `d_min = 5`, `d_max = ⌈3·std_ĝ·N/fs⌉`.
    pub fn for_window(sigma: f64, n_bins: usize, fs: f64) -> Self {
        Self {
            d_min: 5,
            d_max: default_d_max(sigma, n_bins, fs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max == 0 || self.d_min > self.d_max {
            return Err(Error::InvalidParameter(format!(
                "filter: need 0 < d_min <= d_max, got d_min={} d_max={}",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }
}

pub fn default_d_max(sigma: f64, n_bins: usize, fs: f64) -> usize {
    let w = WindowStats::for_sigma(sigma).std_freq * n_bins as f64 / fs;
    (3.0 * w - 1e-9).ceil() as usize
}

/// Inclusive bin interval per supported sample of a ridge. An empty sample
/// has `k_lo > k_hi`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterBand {
    pub m_start: usize,
    pub k_lo: Vec<usize>,
    pub k_hi: Vec<usize>,
    pub d_min: usize,
    pub d_max: usize,
}

impl FilterBand {
    pub fn len(&self) -> usize {
        self.k_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_lo.is_empty()
    }

    pub fn contains(&self, m: usize) -> bool {
        m >= self.m_start && m < self.m_start + self.len()
    }

    pub fn at(&self, m: usize) -> Option<(usize, usize)> {
        self.contains(m).then(|| (self.k_lo[m - self.m_start], self.k_hi[m - self.m_start]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredComponent<T> {
    pub channel_id: String,
    pub rank: usize,
    /// Full-length signal, zero outside the ridge support.
    pub samples: Vec<T>,
    pub band: FilterBand,
}

impl<T> FilteredComponent<T> {
    /// Column label `<channel>.h<rank>`.
    pub fn label(&self) -> String {
        format!("{}.h{}", self.channel_id, self.rank)
    }
}

/// Highest usable bin of a grid for band construction.
fn top_bin<T: Real>(grid: &TfrGrid<T>) -> usize {
    match grid.spectrum {
        Spectrum::OneSided => grid.config.n_bins / 2,
        Spectrum::TwoSided => grid.n_stored() - 1,
    }
}

fn check_ridge<T: Real>(grid: &TfrGrid<T>, ridge: &Ridge<T>) -> Result<()> {
    if ridge.is_empty() || ridge.m_end() >= grid.n_time() {
        return Err(Error::Contract(format!(
            "ridge {} does not fit a grid of {} samples",
            ridge.rank,
            grid.n_time()
        )));
    }
    if let Some(&b) = ridge.bins.iter().find(|&&b| b == 0 || b > top_bin(grid)) {
        return Err(Error::Contract(format!("ridge {} visits bin {b}", ridge.rank)));
    }
    Ok(())
}

/// Band of one ridge on one channel's grid against that channel's threshold.
pub fn ht_band<T: Real>(
    grid: &TfrGrid<T>,
    ridge: &Ridge<T>,
    gamma_f: &[T],
    d_min: usize,
    d_max: usize,
) -> Result<FilterBand> {
    check_ridge(grid, ridge)?;
    let top = top_bin(grid);
    if gamma_f.len() <= top {
        return Err(Error::Contract(format!(
            "threshold has {} bins, grid needs {}",
            gamma_f.len(),
            top + 1
        )));
    }
    let below = |m: usize, k: usize| grid.magnitude(m, k) < gamma_f[k];
    let mut k_lo = Vec::with_capacity(ridge.len());
    let mut k_hi = Vec::with_capacity(ridge.len());
    for (i, &phi) in ridge.bins.iter().enumerate() {
        let m = ridge.m_start + i;
        let lo_clamp = phi.saturating_sub(d_max).max(1);
        let hi_clamp = (phi + d_max).min(top);
        let lo = (lo_clamp..phi.saturating_sub(d_min))
            .rev()
            .find(|&k| below(m, k))
            .unwrap_or(lo_clamp);
        let hi = ((phi + d_min + 1)..=hi_clamp).find(|&k| below(m, k)).unwrap_or(hi_clamp);
        k_lo.push(lo);
        k_hi.push(hi);
    }
    Ok(FilterBand {
        m_start: ridge.m_start,
        k_lo,
        k_hi,
        d_min,
        d_max,
    })
}

/// Bands of all ridges on one grid, made disjoint: where two bands overlap
/// at a sample, the boundary moves to the weakest bin strictly between the
/// two ridge bins, which goes to the lower-frequency band.
pub fn ht_bands<T: Real>(
    grid: &TfrGrid<T>,
    ridges: &[Ridge<T>],
    gamma_f: &[T],
    params: &FilterParams,
) -> Result<Vec<FilterBand>> {
    params.validate()?;
    let mut bands = ridges
        .iter()
        .map(|r| ht_band(grid, r, gamma_f, params.d_min, params.d_max))
        .collect::<Result<Vec<_>>>()?;
    if ridges.len() < 2 {
        return Ok(bands);
    }
    let lo = ridges.iter().map(|r| r.m_start).min().unwrap_or(0);
    let hi = ridges.iter().map(|r| r.m_end()).max().unwrap_or(0);
    let mut active: Vec<(usize, usize)> = Vec::new();
    for m in lo..=hi {
        active.clear();
        active.extend(ridges.iter().enumerate().filter_map(|(i, r)| r.bin_at(m).map(|b| (b, i))));
        active.sort_unstable();
        for w in active.windows(2) {
            let ((pa, a), (pb, b)) = (w[0], w[1]);
            if pa == pb {
                return Err(Error::Contract(format!(
                    "ridges {} and {} share bin {pa} at sample {m}",
                    ridges[a].rank, ridges[b].rank
                )));
            }
            let (ia, ib) = (m - bands[a].m_start, m - bands[b].m_start);
            if bands[a].k_hi[ia] < bands[b].k_lo[ib] {
                continue;
            }
            let split = if pb == pa + 1 {
                pa
            } else {
                (pa + 1..pb)
                    .min_by(|&x, &y| grid.magnitude(m, x).total_order(&grid.magnitude(m, y)))
                    .unwrap_or(pa)
            };
            bands[a].k_hi[ia] = bands[a].k_hi[ia].min(split);
            bands[b].k_lo[ib] = bands[b].k_lo[ib].max(split + 1);
        }
    }
    Ok(bands)
}

/// Band-limited reconstruction on the ridge support; zero elsewhere.
pub fn reconstruct_component<T: Real>(
    grid: &TfrGrid<T>,
    ridge: &Ridge<T>,
    band: &FilterBand,
) -> Result<FilteredComponent<T>> {
    if band.m_start != ridge.m_start || band.len() != ridge.len() || band.k_hi.len() != band.len() {
        return Err(Error::Contract(format!(
            "band support [{}, +{}) does not match ridge {} support [{}, +{})",
            band.m_start,
            band.len(),
            ridge.rank,
            ridge.m_start,
            ridge.len()
        )));
    }
    check_ridge(grid, ridge)?;
    let mut samples = vec![T::zero(); grid.n_time()];
    for (i, (&lo, &hi)) in band.k_lo.iter().zip(&band.k_hi).enumerate() {
        if lo > hi {
            continue;
        }
        let m = band.m_start + i;
        samples[m] = match grid.spectrum {
            Spectrum::OneSided => grid.band_sum(m, lo, hi)?,
            Spectrum::TwoSided => grid.band_sum_complex(m, lo, hi)?.re,
        };
    }
    Ok(FilteredComponent {
        channel_id: grid.channel_id.clone(),
        rank: ridge.rank,
        samples,
        band: band.clone(),
    })
}

/// Bands and components of every ridge on one channel's grid.
pub fn filter_channel<T: Real>(
    grid: &TfrGrid<T>,
    ridges: &[Ridge<T>],
    gamma_f: &[T],
    params: &FilterParams,
) -> Result<Vec<FilteredComponent<T>>> {
    let bands = ht_bands(grid, ridges, gamma_f, params)?;
    ridges
        .iter()
        .zip(&bands)
        .map(|(r, b)| reconstruct_component(grid, r, b))
        .collect()
}

/// Writes `time_s` plus one column per component.
pub fn write_components_csv<T: Real>(path: &Path, fs: T, comps: &[FilteredComponent<T>]) -> Result<()> {
    let n = comps.first().map_or(0, |c| c.samples.len());
    if comps.iter().any(|c| c.samples.len() != n) {
        return Err(Error::Contract("components differ in length".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "time_s").map_err(io)?;
    for c in comps {
        write!(w, ",{}", c.label()).map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for m in 0..n {
        write!(w, "{}", T::of_usize(m) / fs).map_err(io)?;
        for c in comps {
            write!(w, ",{}", c.samples[m]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
