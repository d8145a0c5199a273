//! Ground-truth signal generators: AM-FM components, colored ambient noise
//! and the prescribed multi-branch scenarios.

mod scenario;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::add_noise_with;
use crate::model::SamplingSpec;

pub use scenario::{
    ambient_scenario, def_toy, scenario_names, tone_scenario, wecc_like, write_scenario, BranchTruth,
    ComponentTruth, GroundTruth, Scenario, SCENARIOS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum AmplitudeLaw {
    Constant { value: f64 },
    /// `peak·exp(−π((t−center)/width)²)`
    Gaussian { peak: f64, center: f64, width: f64 },
}

impl AmplitudeLaw {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            AmplitudeLaw::Constant { value } => value,
            AmplitudeLaw::Gaussian { peak, center, width } => peak * (-PI * ((t - center) / width).powi(2)).exp(),
        }
    }
}

/// Phase laws in cycles; the IF is the exact derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum PhaseLaw {
    Tone { freq: f64 },
    /// IF `f0 + rate·t`.
    LinearChirp { f0: f64, rate: f64 },
    /// IF linear between `(t, f)` knots (constant outside), phase zero at the
    /// first knot.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl PhaseLaw {
    pub fn inst_freq(&self, t: f64) -> f64 {
        match self {
            PhaseLaw::Tone { freq } => *freq,
            PhaseLaw::LinearChirp { f0, rate } => f0 + rate * t,
            PhaseLaw::PiecewiseLinear { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = knots.windows(2).position(|w| t <= w[1].0).expect("inside knots");
                let ((t0, f0), (t1, f1)) = (knots[i], knots[i + 1]);
                f0 + (f1 - f0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Phase in cycles, integrating the IF exactly.
    pub fn phase(&self, t: f64) -> f64 {
        match self {
            PhaseLaw::Tone { freq } => freq * t,
            PhaseLaw::LinearChirp { f0, rate } => f0 * t + 0.5 * rate * t * t,
            PhaseLaw::PiecewiseLinear { knots } => {
                let (t_first, f_first) = knots[0];
                if t <= t_first {
                    return f_first * (t - t_first);
                }
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    let ((t0, f0), (t1, f1)) = (w[0], w[1]);
                    if t <= t1 {
                        let d = t - t0;
                        let slope = (f1 - f0) / (t1 - t0);
                        return acc + f0 * d + 0.5 * slope * d * d;
                    }
                    acc += 0.5 * (f0 + f1) * (t1 - t0);
                }
                let (t_last, f_last) = knots[knots.len() - 1];
                acc + f_last * (t - t_last)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let PhaseLaw::PiecewiseLinear { knots } = self {
            if knots.is_empty() || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::InvalidParameter("IF knots must be non-empty with increasing times".into()));
            }
        }
        Ok(())
    }
}

/// One term `A(t)·cos(2π·h·φ(t) + offset)` on `[t_on, t_off)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub amplitude: AmplitudeLaw,
    pub phase: PhaseLaw,
    /// Harmonic multiplier applied to the phase.
    #[serde(default = "one")]
    pub harmonic: f64,
    /// Phase offset in radians.
    #[serde(default)]
    pub offset: f64,
    pub t_on: f64,
    pub t_off: f64,
}

fn one() -> f64 {
    1.0
}

impl ComponentSpec {
    pub fn tone(freq: f64, amplitude: f64) -> Self {
        Self {
            amplitude: AmplitudeLaw::Constant { value: amplitude },
            phase: PhaseLaw::Tone { freq },
            harmonic: 1.0,
            offset: 0.0,
            t_on: f64::NEG_INFINITY,
            t_off: f64::INFINITY,
        }
    }

    pub fn active(&self, t: f64) -> bool {
        t >= self.t_on && t < self.t_off
    }

    pub fn inst_freq(&self, t: f64) -> f64 {
        self.harmonic * self.phase.inst_freq(t)
    }

    pub fn value(&self, t: f64) -> f64 {
        if !self.active(t) {
            return 0.0;
        }
        self.amplitude.at(t) * (2.0 * PI * self.harmonic * self.phase.phase(t) + self.offset).cos()
    }
}

/// AR(1) colored noise with stationary standard deviation `std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientSpec {
    pub ar_coef: f64,
    pub std: f64,
}

impl Default for AmbientSpec {
    fn default() -> Self {
        Self { ar_coef: 0.98, std: 1.0 }
    }
}

impl AmbientSpec {
    pub fn generate(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a = self.ar_coef;
        let innov = self.std * (1.0 - a * a).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        let mut x = self.std * z;
        (0..len)
            .map(|_| {
                let out = x;
                let e: f64 = StandardNormal.sample(rng);
                x = a * x + innov * e;
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub components: Vec<ComponentSpec>,
    pub ambient: Option<AmbientSpec>,
    pub additive_snr_db: Option<f64>,
    pub seed: u64,
}

/// Generated channel with its noiseless components and their IFs (Hz, NaN
/// outside support).
#[derive(Debug, Clone, PartialEq)]
pub struct McsOutput {
    pub samples: Vec<f64>,
    /// Sum of components plus ambient, before additive noise.
    pub noiseless: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub ifs: Vec<Vec<f64>>,
}

/// Raises an aliasing error if any component reaches Nyquist on its support.
pub fn check_aliasing(components: &[ComponentSpec], spec: &SamplingSpec<f64>) -> Result<()> {
    let nyq = spec.fs / 2.0;
    for c in components {
        c.phase.validate()?;
        for m in 0..spec.len {
            let t = spec.time_of(m);
            if c.active(t) {
                let f = c.inst_freq(t);
                if !(f.abs() < nyq) {
                    return Err(Error::Aliasing { freq_hz: f, nyquist_hz: nyq });
                }
            }
        }
    }
    Ok(())
}

/// Multicomponent signal plus ambient and additive noise.
pub fn gen_mcs(spec: &ScenarioSpec, sampling: &SamplingSpec<f64>) -> Result<McsOutput> {
    check_aliasing(&spec.components, sampling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len = sampling.len;
    let times: Vec<f64> = (0..len).map(|m| sampling.time_of(m)).collect();
    let components: Vec<Vec<f64>> = spec
        .components
        .iter()
        .map(|c| times.iter().map(|&t| c.value(t)).collect())
        .collect();
    let ifs = spec
        .components
        .iter()
        .map(|c| times.iter().map(|&t| if c.active(t) { c.inst_freq(t) } else { f64::NAN }).collect())
        .collect();
    let mut noiseless = vec![0.0; len];
    for c in &components {
        for (acc, v) in noiseless.iter_mut().zip(c) {
            *acc += v;
        }
    }
    if let Some(amb) = &spec.ambient {
        for (acc, v) in noiseless.iter_mut().zip(amb.generate(len, &mut rng)) {
            *acc += v;
        }
    }
    let samples = match spec.additive_snr_db {
        Some(snr) => add_noise_with(&noiseless, snr, &mut rng)?,
        None => noiseless.clone(),
    };
    Ok(McsOutput {
        samples,
        noiseless,
        components,
        ifs,
    })
}
