//! Dissipating energy flow of filtered components and source ranking.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{median, Real};
use crate::ridge::Ridge;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeEstimator {
    #[default]
    Ols,
    TheilSen,
}

/// Filtered branch signals of one component, plus the raw voltage magnitude
/// used as the reactive-term denominator. Angles in radians.
#[derive(Debug, Clone, Copy)]
pub struct DefInputs<'a, T> {
    pub p: &'a [T],
    pub q: &'a [T],
    pub theta: &'a [T],
    pub v: &'a [T],
    pub v_raw: &'a [T],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefSeries<T> {
    pub branch_id: String,
    pub rank: usize,
    /// First sample of the integration interval; `w[0]` sits there.
    pub m_start: usize,
    pub w: Vec<T>,
    /// Fitted rate of change of `w`, energy per second.
    pub slope: T,
}

impl<T: Real> DefSeries<T> {
    pub fn w_final(&self) -> T {
        self.w.last().copied().unwrap_or_else(T::zero)
    }
}

/// Discrete energy flow over `interval`, starting from zero.
pub fn def_trajectory<T: Real>(inputs: &DefInputs<'_, T>, interval: Range<usize>) -> Result<Vec<T>> {
    let n = inputs.p.len();
    let lens = [inputs.q.len(), inputs.theta.len(), inputs.v.len(), inputs.v_raw.len()];
    if lens.iter().any(|&l| l != n) {
        return Err(Error::Contract(format!("def inputs differ in length: {n} vs {lens:?}")));
    }
    if interval.is_empty() || interval.end > n {
        return Err(Error::Contract(format!(
            "integration interval {interval:?} outside 0..{n}"
        )));
    }
    let mut w = Vec::with_capacity(interval.len());
    let mut acc = T::zero();
    w.push(acc);
    for m in interval.start + 1..interval.end {
        let vr = inputs.v_raw[m - 1];
        if vr == T::zero() {
            return Err(Error::DivisionGuard(m - 1));
        }
        acc += inputs.p[m - 1] * (inputs.theta[m] - inputs.theta[m - 1])
            + inputs.q[m - 1] / vr * (inputs.v[m] - inputs.v[m - 1]);
        w.push(acc);
    }
    Ok(w)
}

pub fn def_flow<T: Real>(
    branch_id: &str,
    rank: usize,
    inputs: &DefInputs<'_, T>,
    interval: Range<usize>,
    fs: T,
    estimator: SlopeEstimator,
) -> Result<DefSeries<T>> {
    let m_start = interval.start;
    let w = def_trajectory(inputs, interval)?;
    let slope = fit_slope(&w, fs, estimator);
    Ok(DefSeries {
        branch_id: branch_id.to_string(),
        rank,
        m_start,
        w,
        slope,
    })
}

/// Slope of `y` sampled at `fs` against time in seconds; zero for fewer
/// than two points.
pub fn fit_slope<T: Real>(y: &[T], fs: T, estimator: SlopeEstimator) -> T {
    let n = y.len();
    if n < 2 {
        return T::zero();
    }
    let per_sample = match estimator {
        SlopeEstimator::Ols => {
            let xm = T::of_usize(n - 1) / T::lit(2.0);
            let ym = crate::num::mean(y);
            let (mut sxy, mut sxx) = (T::zero(), T::zero());
            for (i, &v) in y.iter().enumerate() {
                let dx = T::of_usize(i) - xm;
                sxy += dx * (v - ym);
                sxx += dx * dx;
            }
            sxy / sxx
        }
        SlopeEstimator::TheilSen => {
            let mut s = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    s.push((y[j] - y[i]) / T::of_usize(j - i));
                }
            }
            median(&s).unwrap_or_else(T::zero)
        }
    };
    per_sample * fs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntervalRule {
    /// Ridge magnitude must exceed `factor·γ`.
    pub factor: f64,
    /// Minimum length in periods of the ridge's mean frequency.
    pub min_periods: f64,
}

impl Default for IntervalRule {
    fn default() -> Self {
        Self {
            factor: 2.0,
            min_periods: 2.0,
        }
    }
}

/// Longest run of the ridge support where `|MTF| > factor·γ`, widened
/// symmetrically to `min_periods` periods and clipped to `limit`. `None`
/// when no sample qualifies inside `limit`.
pub fn integration_interval<T: Real>(
    ridge: &Ridge<T>,
    fs: T,
    rule: &IntervalRule,
    limit: Range<usize>,
) -> Option<Range<usize>> {
    let lo = ridge.m_start.max(limit.start);
    let hi = (ridge.m_end() + 1).min(limit.end);
    if lo >= hi {
        return None;
    }
    let factor = T::lit(rule.factor);
    let mut best: Option<Range<usize>> = None;
    let mut run: Option<usize> = None;
    for m in lo..=hi {
        let ok = m < hi && {
            let i = m - ridge.m_start;
            ridge.magnitudes[i] > factor * ridge.thresholds[i]
        };
        match (ok, run) {
            (true, None) => run = Some(m),
            (false, Some(s)) => {
                if best.as_ref().is_none_or(|b| m - s > b.len()) {
                    best = Some(s..m);
                }
                run = None;
            }
            _ => {}
        }
    }
    let best = best?;
    let f = ridge.mean_freq().to_f64_lossy().abs();
    let need = if f > 0.0 {
        (rule.min_periods / f * fs.to_f64_lossy()).ceil() as usize
    } else {
        0
    };
    let need = need.min(hi - lo);
    if best.len() >= need {
        return Some(best);
    }
    let grow = need - best.len();
    let mut start = best.start.saturating_sub(grow / 2).max(lo);
    let end = (start + need).min(hi);
    start = end - need;
    Some(start..end)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "device", rename_all = "lowercase")]
pub enum Verdict {
    Source(String),
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRanking<T> {
    pub rank: usize,
    /// `(device_id, slope)` by slope descending, ties by id.
    pub ordered: Vec<(String, T)>,
    pub verdict: Verdict,
}

pub const DEFAULT_MARGIN: f64 = 2.0;

/// Orders devices by the slope on their outgoing branch. The top device is
/// the source if its slope is positive and more than `margin` times a
/// positive runner-up.
pub fn rank_sources<T: Real>(slopes: &[(String, T)], rank: usize, margin: T) -> Result<SourceRanking<T>> {
    if slopes.is_empty() {
        return Err(Error::Ranking(format!("no devices for component {rank}")));
    }
    if let Some((id, _)) = slopes.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Ranking(format!("slope of `{id}` is not finite")));
    }
    let mut ordered = slopes.to_vec();
    ordered.sort_by(|a, b| b.1.total_order(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top = ordered[0].1;
    let clear = match ordered.get(1) {
        Some(&(_, second)) if second > T::zero() => top > margin * second,
        _ => true,
    };
    let verdict = if top > T::zero() && clear {
        Verdict::Source(ordered[0].0.clone())
    } else {
        Verdict::Inconclusive
    };
    Ok(SourceRanking {
        rank,
        ordered,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDef<T> {
    pub branch_id: String,
    pub device: String,
    pub slope: T,
    pub w_final: T,
}

/// DEF summary of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefReport<T> {
    pub component_h: usize,
    pub freq_hz: T,
    pub interval_s: Option<(T, T)>,
    pub per_branch: Vec<BranchDef<T>>,
    pub ranking: Vec<(String, T)>,
    pub verdict: Verdict,
}

pub fn write_def_json<T: Real>(path: &Path, reports: &[DefReport<T>]) -> Result<()> {
    let s = serde_json::to_string_pretty(reports).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes W trajectories as CSV: `time_s` then one column per series,
/// blank outside each series' interval.
pub fn write_def_csv<T: Real>(path: &Path, fs: T, series: &[DefSeries<T>]) -> Result<()> {
    let lo = series.iter().map(|s| s.m_start).min().unwrap_or(0);
    let hi = series.iter().map(|s| s.m_start + s.w.len()).max().unwrap_or(0);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "time_s").map_err(io)?;
    for s in series {
        write!(w, ",{}.h{}", s.branch_id, s.rank).map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for m in lo..hi {
        write!(w, "{}", T::of_usize(m) / fs).map_err(io)?;
        for s in series {
            match m.checked_sub(s.m_start).and_then(|i| s.w.get(i)) {
                Some(v) => write!(w, ",{v}").map_err(io)?,
                None => write!(w, ",").map_err(io)?,
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
