//! PMU dataset representation, CSV ingestion/export and the preprocessing
//! steps that precede any time-frequency analysis.

mod ingest;
mod preprocess;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

pub use ingest::{
    export_contest_csv, ingest_contest_csv, phasor_to_power, power_to_current, read_signal_csv,
    write_signal_csv, AngleUnit, BranchMap, DatasetFiles, SignalTable, TopologyMap,
};
pub use preprocess::{
    repair_gaps_and_outliers, repair_with_report, unwrap_angles, RepairReport, MAD_SCALE,
    OUTLIER_WINDOW_S,
};

/// Uniform sampling grid shared by all channels of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec<T> {
    /// Sampling rate in Hz.
    pub fs: T,
    /// Number of samples per channel.
    pub len: usize,
    /// Epoch offset of the first sample in seconds.
    pub t0: T,
}

impl<T: Real> SamplingSpec<T> {
    pub fn new(fs: T, len: usize, t0: T) -> Result<Self> {
        if !(fs > T::zero()) || !fs.is_finite() {
            return Err(Error::InvalidParameter(format!("sampling rate {fs} must be > 0")));
        }
        if len < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 samples, got {len}")));
        }
        Ok(Self { fs, len, t0 })
    }

    /// Time in seconds of sample `m`, relative to `t0`.
    #[inline]
    pub fn time_of(&self, m: usize) -> T {
        T::of_usize(m) / self.fs
    }

    pub fn duration(&self) -> T {
        T::of_usize(self.len) / self.fs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    ActivePower,
    ReactivePower,
    VoltageMag,
    VoltageAngle,
    CurrentMag,
    CurrentAngle,
    Frequency,
}

impl ChannelKind {
    pub fn is_angle(self) -> bool {
        matches!(self, ChannelKind::VoltageAngle | ChannelKind::CurrentAngle)
    }

    /// Short tag used in artifact column names.
    pub fn tag(self) -> &'static str {
        match self {
            ChannelKind::ActivePower => "P",
            ChannelKind::ReactivePower => "Q",
            ChannelKind::VoltageMag => "V",
            ChannelKind::VoltageAngle => "theta",
            ChannelKind::CurrentMag => "I",
            ChannelKind::CurrentAngle => "phi",
            ChannelKind::Frequency => "f",
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One uniformly sampled measurement. Missing samples are NaN until
/// [`repair_gaps_and_outliers`] has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel<T> {
    pub id: String,
    pub kind: ChannelKind,
    pub unit: String,
    pub samples: Vec<T>,
}

impl<T: Real> Channel<T> {
    pub fn new(id: impl Into<String>, kind: ChannelKind, unit: impl Into<String>, samples: Vec<T>) -> Self {
        Self {
            id: id.into(),
            kind,
            unit: unit.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.samples.iter().filter(|x| x.is_nan()).count()
    }

    /// Copy with the mean removed, the form fed to the transforms.
    pub fn demeaned(&self) -> Vec<T> {
        let valid: Vec<T> = self.samples.iter().copied().filter(|x| !x.is_nan()).collect();
        let mu = crate::num::mean(&valid);
        self.samples.iter().map(|&x| x - mu).collect()
    }
}

/// A monitored branch. Powers are measured at `from_bus` and oriented
/// `from_bus -> to_bus`; the voltage channels belong to `from_bus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch<T> {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub p: Channel<T>,
    pub q: Channel<T>,
    pub v_mag: Channel<T>,
    pub v_ang: Channel<T>,
}

impl<T: Real> Branch<T> {
    pub fn channels(&self) -> [&Channel<T>; 4] {
        [&self.p, &self.q, &self.v_mag, &self.v_ang]
    }

    pub fn channels_mut(&mut self) -> [&mut Channel<T>; 4] {
        [&mut self.p, &mut self.q, &mut self.v_mag, &mut self.v_ang]
    }

    pub fn channel(&self, kind: ChannelKind) -> Option<&Channel<T>> {
        self.channels().into_iter().find(|c| c.kind == kind)
    }
}

/// A multi-branch PMU recording with its pre-event interval `[0, t_event)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDataset<T> {
    pub spec: SamplingSpec<T>,
    pub branches: Vec<Branch<T>>,
    /// End of the ambient-only pre-event interval, seconds from `t0`.
    pub t_event: T,
}

impl<T: Real> EventDataset<T> {
    pub fn new(spec: SamplingSpec<T>, branches: Vec<Branch<T>>, t_event: T) -> Result<Self> {
        let ds = Self {
            spec,
            branches,
            t_event,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Ingest("dataset has no branches".into()));
        }
        if !(self.t_event > T::zero()) || self.t_event >= self.spec.duration() {
            return Err(Error::Ingest(format!(
                "pre-event interval [0, {}) must be non-empty and shorter than the record ({} s)",
                self.t_event,
                self.spec.duration()
            )));
        }
        for b in &self.branches {
            for c in b.channels() {
                if c.len() != self.spec.len {
                    return Err(Error::Ingest(format!(
                        "channel `{}` has {} samples, expected {}",
                        c.id,
                        c.len(),
                        self.spec.len
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of leading samples inside the pre-event interval.
    pub fn pre_event_samples(&self) -> usize {
        let n = (self.t_event * self.spec.fs).ceil();
        num_traits::ToPrimitive::to_usize(&n)
            .unwrap_or(0)
            .min(self.spec.len)
    }

    pub fn branch(&self, id: &str) -> Option<&Branch<T>> {
        self.branches.iter().find(|b| b.id == id)
    }
}
