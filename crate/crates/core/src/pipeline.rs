//! End-to-end analysis: preparation, multi-channel identification, per-channel
//! filtering and energy-flow ranking, split into stages that can run alone.

use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::def::{
    def_flow, integration_interval, rank_sources, BranchDef, DefInputs, DefReport, DefSeries, IntervalRule,
    SlopeEstimator, Verdict, DEFAULT_MARGIN,
};
use crate::error::{Error, Result};
use crate::filter::{default_d_max, filter_channel, FilterParams, FilteredComponent};
use crate::model::{repair_gaps_and_outliers, unwrap_angles, Branch, Channel, EventDataset};
use crate::multichannel::{pre_event_threshold, signal_threshold, GridView, MtfAccumulator, MtfGrid, PercentileParams, SpectralThreshold};
use crate::num::Real;
use crate::ridge::{default_d1, estimate_ridges, Ridge, RidgeConfig};
use crate::tfr::{transform, TfrConfig, TfrKind};
use crate::window::{make_window, select_sigma_renyi};

/// Window width: a fixed value in seconds or `"auto"` (Rényi selection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Fixed(f64),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SigmaRepr {
    Num(f64),
    Text(String),
}

impl Serialize for Sigma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Sigma::Fixed(v) => SigmaRepr::Num(v),
            Sigma::Auto => SigmaRepr::Text("auto".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match SigmaRepr::deserialize(d)? {
            SigmaRepr::Num(v) => Ok(Sigma::Fixed(v)),
            SigmaRepr::Text(s) if s == "auto" => Ok(Sigma::Auto),
            SigmaRepr::Text(s) => Err(serde::de::Error::custom(format!(
                "sigma must be a number of seconds or \"auto\", got `{s}`"
            ))),
        }
    }
}

impl std::str::FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Sigma::Auto);
        }
        s.parse()
            .map(Sigma::Fixed)
            .map_err(|_| Error::Config(format!("sigma must be a number or `auto`, got `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareSettings {
    /// Outlier cut in robust deviations.
    pub outlier_k: f64,
}

impl Default for PrepareSettings {
    fn default() -> Self {
        Self { outlier_k: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub d_min: Option<usize>,
    /// Defaults to `⌈3·std_ĝ·N/fs⌉`.
    pub d_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefSettings {
    pub interval: IntervalRule,
    pub estimator: SlopeEstimator,
    pub margin: f64,
}

impl Default for DefSettings {
    fn default() -> Self {
        Self {
            interval: IntervalRule::default(),
            estimator: SlopeEstimator::Ols,
            margin: DEFAULT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeSettings {
    pub h_max: usize,
    pub u_intervals: usize,
    pub jumpt: f64,
    pub jumpf: f64,
    pub maxder: f64,
    pub l_c: f64,
    /// Defaults from the window and transform kind.
    pub d1: Option<usize>,
    pub path_rule: crate::ridge::PathRule,
}

impl Default for RidgeSettings {
    fn default() -> Self {
        let r = RidgeConfig::default();
        Self {
            h_max: r.h_max,
            u_intervals: r.u_intervals,
            jumpt: r.jumpt,
            jumpf: r.jumpf,
            maxder: r.maxder,
            l_c: r.l_c,
            d1: None,
            path_rule: r.path_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tfr: TfrKind,
    pub sigma: Sigma,
    /// Candidates for `sigma = "auto"`, seconds.
    pub sigma_grid: Vec<f64>,
    pub n_bins: usize,
    /// End of the ambient-only interval; defaults to the dataset's.
    pub pre_event_s: Option<f64>,
    pub prepare: PrepareSettings,
    pub threshold: PercentileParams,
    pub ridge: RidgeSettings,
    pub filter: FilterSettings,
    pub def: DefSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tfr: TfrKind::Fsst,
            sigma: Sigma::Fixed(5.0),
            sigma_grid: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            n_bins: 1024,
            pre_event_s: None,
            prepare: PrepareSettings::default(),
            threshold: PercentileParams::default(),
            ridge: RidgeSettings::default(),
            filter: FilterSettings::default(),
            def: DefSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parameter checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Sigma::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma {s} must be > 0"));
            }
        } else if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s > 0.0)) {
            return bad("sigma_grid must hold positive values".into());
        }
        if self.n_bins < 4 || self.n_bins % 2 != 0 {
            return bad(format!("n_bins {} must be even and >= 4", self.n_bins));
        }
        if let Some(t) = self.pre_event_s {
            if !(t > 0.0) {
                return bad(format!("pre_event_s {t} must be > 0"));
            }
        }
        if !(self.prepare.outlier_k > 0.0) {
            return bad("prepare.outlier_k must be > 0".into());
        }
        let th = &self.threshold;
        if !(th.level > 0.0 && th.level < 1.0) || !(th.window_hz > 0.0) || !(th.window_s > 0.0) || th.time_stride == 0 {
            return bad("threshold needs 0 < level < 1, positive window and time_stride >= 1".into());
        }
        if let (Some(lo), Some(hi)) = (self.filter.d_min, self.filter.d_max) {
            if lo > hi || hi == 0 {
                return bad(format!("filter needs d_min <= d_max, got {lo} > {hi}"));
            }
        }
        let d = &self.def;
        if !(d.interval.factor > 0.0) || !(d.interval.min_periods >= 0.0) || !(d.margin >= 1.0) {
            return bad("def needs interval.factor > 0, interval.min_periods >= 0, margin >= 1".into());
        }
        Ok(())
    }

    pub fn ridge_config(&self, sigma: f64, fs: f64) -> Result<RidgeConfig> {
        let r = &self.ridge;
        let cfg = RidgeConfig {
            h_max: r.h_max,
            u_intervals: r.u_intervals,
            jumpt: r.jumpt,
            jumpf: r.jumpf,
            maxder: r.maxder,
            l_c: r.l_c,
            d1: r.d1.unwrap_or_else(|| default_d1(self.tfr, sigma, self.n_bins, fs)),
            path_rule: r.path_rule,
        };
        cfg.validate(fs).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn filter_params(&self, sigma: f64, fs: f64) -> Result<FilterParams> {
        let d_max = self.filter.d_max.unwrap_or_else(|| default_d_max(sigma, self.n_bins, fs));
        let p = FilterParams {
            d_min: self.filter.d_min.unwrap_or(5).min(d_max),
            d_max,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

/// Timed stage with a log line on completion.
fn timed<R>(stage: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let t0 = Instant::now();
    let r = f()?;
    info!("{stage}: {:.3} s", t0.elapsed().as_secs_f64());
    Ok(r)
}

/// Unwraps angles, repairs gaps and outliers of every channel.
pub fn prepare<T: Real>(ds: &EventDataset<T>, cfg: &PipelineConfig) -> Result<EventDataset<T>> {
    let k = T::lit(cfg.prepare.outlier_k);
    let fs = ds.spec.fs;
    let fix = |c: &Channel<T>| -> Result<Channel<T>> {
        let c = if c.kind.is_angle() { unwrap_angles(c)? } else { c.clone() };
        repair_gaps_and_outliers(&c, k, fs)
    };
    let branches = ds
        .branches
        .iter()
        .map(|b| {
            Ok(Branch {
                id: b.id.clone(),
                from_bus: b.from_bus.clone(),
                to_bus: b.to_bus.clone(),
                p: fix(&b.p)?,
                q: fix(&b.q)?,
                v_mag: fix(&b.v_mag)?,
                v_ang: fix(&b.v_ang)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let t_event = cfg.pre_event_s.map_or(ds.t_event, T::lit);
    EventDataset::new(ds.spec.clone(), branches, t_event)
}

/// Window width in use: the fixed value, or the Rényi choice on the P
/// channel with the largest variance.
pub fn resolve_sigma<T: Real>(ds: &EventDataset<T>, cfg: &PipelineConfig) -> Result<f64> {
    match cfg.sigma {
        Sigma::Fixed(s) => Ok(s),
        Sigma::Auto => {
            let mut best: Option<(&Channel<T>, T)> = None;
            for b in &ds.branches {
                let v = crate::num::variance(&b.p.samples);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((&b.p, v));
                }
            }
            let (ch, _) = best.ok_or_else(|| Error::Ingest("dataset has no branches".into()))?;
            let grid: Vec<T> = cfg.sigma_grid.iter().map(|&s| T::lit(s)).collect();
            let s = select_sigma_renyi(&ch.id, &ch.demeaned(), ds.spec.fs, &grid, cfg.n_bins)?;
            info!("sigma auto: {} s from `{}`", s, ch.id);
            Ok(s.to_f64_lossy())
        }
    }
}

pub fn tfr_config<T: Real>(sigma: f64, fs: T, cfg: &PipelineConfig) -> Result<TfrConfig<T>> {
    let w = make_window(T::lit(sigma), fs, cfg.n_bins)?;
    TfrConfig::new(cfg.n_bins, w, cfg.tfr)
}

/// Output of the identification front end.
#[derive(Debug, Clone)]
pub struct TfrStage<T> {
    pub sigma: f64,
    pub n_pre: usize,
    pub mtf: MtfGrid<T>,
    pub threshold: SpectralThreshold<T>,
}

/// MTF over the P and Q channels of every branch and its pre-event threshold.
pub fn stage_tfr<T: Real>(ds: &EventDataset<T>, cfg: &PipelineConfig) -> Result<TfrStage<T>> {
    let sigma = resolve_sigma(ds, cfg)?;
    let tc = tfr_config(sigma, ds.spec.fs, cfg)?;
    let mtf = timed("mtf", || {
        let mut acc = MtfAccumulator::new();
        for b in &ds.branches {
            for c in [&b.p, &b.q] {
                acc.add(&transform(&c.id, &c.demeaned(), &tc)?)?;
            }
        }
        acc.finish()
    })?;
    let n_pre = ds.pre_event_samples();
    let threshold = timed("threshold", || pre_event_threshold(&GridView::of_mtf(&mtf), n_pre, &cfg.threshold))?;
    Ok(TfrStage {
        sigma,
        n_pre,
        mtf,
        threshold,
    })
}

/// Ridges of an MTF; transform kind and bin count come from the grid.
pub fn stage_ridges<T: Real>(tfr: &TfrStage<T>, cfg: &PipelineConfig) -> Result<Vec<Ridge<T>>> {
    let cfg = PipelineConfig {
        tfr: tfr.mtf.config.kind,
        n_bins: tfr.mtf.config.n_bins,
        ..cfg.clone()
    };
    let rc = cfg.ridge_config(tfr.sigma, tfr.mtf.fs().to_f64_lossy())?;
    let ridges = timed("ridges", || estimate_ridges(&tfr.mtf, &tfr.threshold, &rc))?;
    for r in &ridges {
        info!(
            "ridge {}: {:.3} Hz mean, {:.1}-{:.1} s",
            r.rank,
            r.mean_freq(),
            T::of_usize(r.m_start) / tfr.mtf.fs(),
            T::of_usize(r.m_end()) / tfr.mtf.fs()
        );
    }
    Ok(ridges)
}

/// Components of every ridge on every channel, branch by branch in
/// P, Q, θ, V order.
pub fn stage_filter<T: Real>(
    ds: &EventDataset<T>,
    sigma: f64,
    ridges: &[Ridge<T>],
    cfg: &PipelineConfig,
) -> Result<Vec<FilteredComponent<T>>> {
    let tc = tfr_config(sigma, ds.spec.fs, cfg)?;
    let params = cfg.filter_params(sigma, ds.spec.fs.to_f64_lossy())?;
    let n_pre = ds.pre_event_samples();
    timed("filter", || {
        let mut out = Vec::new();
        for b in &ds.branches {
            for c in [&b.p, &b.q, &b.v_ang, &b.v_mag] {
                let grid = transform(&c.id, &c.demeaned(), &tc)?;
                let gamma = signal_threshold(&grid, n_pre, &cfg.threshold)?;
                out.extend(filter_channel(&grid, ridges, &gamma.gamma, &params)?);
            }
        }
        Ok(out)
    })
}

/// Component samples keyed by `<channel>.h<rank>`.
pub type ComponentTable<T> = BTreeMap<String, Vec<T>>;

pub fn component_table<T: Real>(comps: &[FilteredComponent<T>]) -> ComponentTable<T> {
    comps.iter().map(|c| (c.label(), c.samples.clone())).collect()
}

/// Energy-flow trajectories and ranking per ridge.
#[derive(Debug, Clone)]
pub struct DefStage<T> {
    pub reports: Vec<DefReport<T>>,
    pub series: Vec<DefSeries<T>>,
}

pub fn stage_def<T: Real>(
    ds: &EventDataset<T>,
    sigma: f64,
    ridges: &[Ridge<T>],
    comps: &ComponentTable<T>,
    cfg: &PipelineConfig,
) -> Result<DefStage<T>> {
    let tc: TfrConfig<T> = tfr_config(sigma, ds.spec.fs, cfg)?;
    let fs = ds.spec.fs;
    let len = ds.spec.len;
    let edge = tc.window.m_half.min(len / 2);
    let limit = edge..len - edge;
    let get = |c: &Channel<T>, h: usize| -> Result<&[T]> {
        let key = format!("{}.h{h}", c.id);
        comps
            .get(&key)
            .map(Vec::as_slice)
            .filter(|v| v.len() == len)
            .ok_or_else(|| Error::Contract(format!("component `{key}` missing or of wrong length")))
    };
    timed("def", || {
        let mut reports = Vec::new();
        let mut all_series = Vec::new();
        for r in ridges {
            let interval = integration_interval(r, fs, &cfg.def.interval, limit.clone());
            let mut per_branch = Vec::new();
            let mut by_device: BTreeMap<String, T> = BTreeMap::new();
            if let Some(iv) = interval.clone() {
                for b in &ds.branches {
                    let inputs = DefInputs {
                        p: get(&b.p, r.rank)?,
                        q: get(&b.q, r.rank)?,
                        theta: get(&b.v_ang, r.rank)?,
                        v: get(&b.v_mag, r.rank)?,
                        v_raw: &b.v_mag.samples,
                    };
                    let s = def_flow(&b.id, r.rank, &inputs, iv.clone(), fs, cfg.def.estimator)?;
                    per_branch.push(BranchDef {
                        branch_id: b.id.clone(),
                        device: b.from_bus.clone(),
                        slope: s.slope,
                        w_final: s.w_final(),
                    });
                    *by_device.entry(b.from_bus.clone()).or_insert_with(T::zero) += s.slope;
                    all_series.push(s);
                }
            }
            let slopes: Vec<(String, T)> = by_device.into_iter().collect();
            let (ranking, verdict) = if slopes.is_empty() {
                (Vec::new(), Verdict::Inconclusive)
            } else {
                let sr = rank_sources(&slopes, r.rank, T::lit(cfg.def.margin))?;
                (sr.ordered, sr.verdict)
            };
            info!("def h{}: {:?}", r.rank, verdict);
            reports.push(DefReport {
                component_h: r.rank,
                freq_hz: r.mean_freq(),
                interval_s: interval.map(|iv| (T::of_usize(iv.start) / fs, T::of_usize(iv.end - 1) / fs)),
                per_branch,
                ranking,
                verdict,
            });
        }
        Ok(DefStage {
            reports,
            series: all_series,
        })
    })
}

/// Everything produced by one end-to-end run.
#[derive(Debug, Clone)]
pub struct Analysis<T> {
    pub prepared: EventDataset<T>,
    pub tfr: TfrStage<T>,
    pub ridges: Vec<Ridge<T>>,
    pub components: Vec<FilteredComponent<T>>,
    pub def: DefStage<T>,
}

pub fn analyze<T: Real>(ds: &EventDataset<T>, cfg: &PipelineConfig) -> Result<Analysis<T>> {
    cfg.validate()?;
    let prepared = timed("prepare", || prepare(ds, cfg))?;
    let tfr = stage_tfr(&prepared, cfg)?;
    let ridges = stage_ridges(&tfr, cfg)?;
    let components = stage_filter(&prepared, tfr.sigma, &ridges, cfg)?;
    let def = stage_def(&prepared, tfr.sigma, &ridges, &component_table(&components), cfg)?;
    Ok(Analysis {
        prepared,
        tfr,
        ridges,
        components,
        def,
    })
}
