//! On-disk stage artifacts. Floats are written in shortest round-trip form,
//! so a stage that reads its predecessor's files sees the exact values an
//! end-to-end run keeps in memory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::def::{write_def_csv, write_def_json, DefReport};
use crate::error::{Error, Result};
use crate::filter::{write_components_csv, FilteredComponent};
use crate::multichannel::{MtfGrid, PercentileParams, SpectralThreshold};
use crate::num::Real;
use crate::pipeline::{tfr_config, ComponentTable, DefStage, PipelineConfig, TfrStage};
use crate::ridge::{write_ridges_csv, Ridge, RidgeSet};
use crate::tfr::{write_grid_csv, TfrKind};

pub const TFR_JSON: &str = "tfr.json";
pub const MTF_CSV: &str = "mtf.csv";
pub const THRESHOLD_CSV: &str = "threshold.csv";
pub const RIDGES_JSON: &str = "ridges.json";
pub const RIDGES_CSV: &str = "ridges.csv";
pub const COMPONENTS_CSV: &str = "components.csv";
pub const DEF_JSON: &str = "def.json";
pub const DEF_CSV: &str = "def_w.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CONFIG_TOML: &str = "config.toml";

/// Axes and provenance of an MTF dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfrMeta {
    pub kind: TfrKind,
    pub sigma: f64,
    pub n_bins: usize,
    pub fs: f64,
    pub n_time: usize,
    pub n_stored: usize,
    pub n_pre: usize,
    pub source_ids: Vec<String>,
    pub threshold: PercentileParams,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

fn parse<T: Real>(path: &Path, row: usize, cell: &str) -> Result<T> {
    cell.trim()
        .parse::<f64>()
        .map(T::lit)
        .map_err(|_| Error::Format(format!("{}: row {row}: bad number `{cell}`", path.display())))
}

pub fn write_tfr_stage<T: Real>(dir: &Path, stage: &TfrStage<T>) -> Result<()> {
    let mtf = &stage.mtf;
    let meta = TfrMeta {
        kind: mtf.config.kind,
        sigma: stage.sigma,
        n_bins: mtf.config.n_bins,
        fs: mtf.fs().to_f64_lossy(),
        n_time: mtf.n_time,
        n_stored: mtf.n_stored,
        n_pre: stage.n_pre,
        source_ids: mtf.source_ids.clone(),
        threshold: PercentileParams {
            window_hz: stage.threshold.window_hz,
            window_s: stage.threshold.window_s,
            level: stage.threshold.level,
            ..Default::default()
        },
    };
    write_json(&dir.join(TFR_JSON), &meta)?;
    mtf.write_csv(&dir.join(MTF_CSV))?;
    write_threshold_csv(&dir.join(THRESHOLD_CSV), &mtf.freqs_hz(), &stage.threshold.gamma)
}

pub fn write_threshold_csv<T: Real>(path: &Path, freqs: &[T], gamma: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["freq_hz", "gamma"]).map_err(fmt)?;
    for (f, g) in freqs.iter().zip(gamma) {
        w.write_record([f.to_string(), g.to_string()]).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tfr_meta(dir: &Path) -> Result<TfrMeta> {
    read_json(&dir.join(TFR_JSON))
}

pub fn read_tfr_stage<T: Real>(dir: &Path, cfg: &PipelineConfig) -> Result<TfrStage<T>> {
    let meta = read_tfr_meta(dir)?;
    let stage_cfg = PipelineConfig {
        tfr: meta.kind,
        n_bins: meta.n_bins,
        ..cfg.clone()
    };
    let config = tfr_config(meta.sigma, T::lit(meta.fs), &stage_cfg)?;

    let path = dir.join(MTF_CSV);
    let mut rdr = csv_reader(&path)?;
    let mut values = Vec::with_capacity(meta.n_time * meta.n_stored);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if rec.len() != meta.n_stored + 1 {
            return Err(Error::Format(format!(
                "{}: row {} has {} cells, expected {}",
                path.display(),
                i + 2,
                rec.len(),
                meta.n_stored + 1
            )));
        }
        for cell in rec.iter().skip(1) {
            values.push(parse::<T>(&path, i + 2, cell)?);
        }
    }
    if values.len() != meta.n_time * meta.n_stored {
        return Err(Error::Format(format!(
            "{}: {} rows, expected {}",
            path.display(),
            values.len() / meta.n_stored.max(1),
            meta.n_time
        )));
    }

    let path = dir.join(THRESHOLD_CSV);
    let mut rdr = csv_reader(&path)?;
    let mut gamma = Vec::with_capacity(meta.n_stored);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let cell = rec
            .get(1)
            .ok_or_else(|| Error::Format(format!("{}: row {} lacks gamma", path.display(), i + 2)))?;
        gamma.push(parse::<T>(&path, i + 2, cell)?);
    }
    if gamma.len() != meta.n_stored {
        return Err(Error::Format(format!(
            "{}: {} bins, expected {}",
            path.display(),
            gamma.len(),
            meta.n_stored
        )));
    }
    Ok(TfrStage {
        sigma: meta.sigma,
        n_pre: meta.n_pre,
        mtf: MtfGrid {
            config,
            source_ids: meta.source_ids,
            n_time: meta.n_time,
            n_stored: meta.n_stored,
            values,
        },
        threshold: SpectralThreshold {
            gamma,
            window_hz: meta.threshold.window_hz,
            window_s: meta.threshold.window_s,
            level: meta.threshold.level,
        },
    })
}

pub fn write_ridges<T: Real>(dir: &Path, ridges: &[Ridge<T>], fs: T, n_bins: usize) -> Result<()> {
    write_json(&dir.join(RIDGES_JSON), &RidgeSet::new(fs, n_bins, ridges))?;
    write_ridges_csv(&dir.join(RIDGES_CSV), ridges, fs)
}

pub fn read_ridges<T: Real>(dir: &Path) -> Result<Vec<Ridge<T>>> {
    let set: RidgeSet<T> = read_json(&dir.join(RIDGES_JSON))?;
    Ok(set.to_ridges())
}

pub fn write_components<T: Real>(dir: &Path, fs: T, comps: &[FilteredComponent<T>]) -> Result<()> {
    write_components_csv(&dir.join(COMPONENTS_CSV), fs, comps)
}

/// Component columns keyed by header label.
pub fn read_components<T: Real>(dir: &Path) -> Result<ComponentTable<T>> {
    let path = dir.join(COMPONENTS_CSV);
    let mut rdr = csv_reader(&path)?;
    let labels: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut cols: Vec<Vec<T>> = vec![Vec::new(); labels.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if rec.len() != labels.len() + 1 {
            return Err(Error::Format(format!("{}: row {} has {} cells", path.display(), i + 2, rec.len())));
        }
        for (c, cell) in cols.iter_mut().zip(rec.iter().skip(1)) {
            c.push(parse::<T>(&path, i + 2, cell)?);
        }
    }
    Ok(labels.into_iter().zip(cols).collect())
}

pub fn write_def<T: Real>(dir: &Path, fs: T, def: &DefStage<T>) -> Result<()> {
    write_def_json(&dir.join(DEF_JSON), &def.reports)?;
    write_def_csv(&dir.join(DEF_CSV), fs, &def.series)
}

pub fn read_def<T: Real>(dir: &Path) -> Result<Vec<DefReport<T>>> {
    read_json(&dir.join(DEF_JSON))
}

/// Run record written beside the artifacts; free of timings so repeated
/// runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: Option<PathBuf>,
    pub config: PipelineConfig,
    pub sigma: Option<f64>,
    pub fs: f64,
    pub n_samples: usize,
    pub branches: Vec<String>,
    pub ridges: Option<usize>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_JSON), self)
    }
}

pub fn write_config(dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    let path = dir.join(CONFIG_TOML);
    std::fs::write(&path, cfg.to_toml_string()).map_err(|e| Error::io(&path, e))
}

/// Magnitude dump of one grid under `dir/tfr/<channel>.csv`.
pub fn tfr_dump_path(dir: &Path, channel_id: &str) -> PathBuf {
    dir.join("tfr").join(format!("{channel_id}.csv"))
}

pub fn write_magnitude_dump<T: Real>(dir: &Path, grid: &crate::tfr::TfrGrid<T>) -> Result<PathBuf> {
    let path = tfr_dump_path(dir, &grid.channel_id);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mags = grid.magnitudes();
    write_grid_csv(&path, &grid.freqs_hz(), grid.config.fs(), grid.n_time(), &mags)?;
    Ok(path)
}
