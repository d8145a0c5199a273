use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen_mcs, AmbientSpec, AmplitudeLaw, ComponentSpec, PhaseLaw, ScenarioSpec};
use crate::error::{Error, Result};
use crate::model::{export_contest_csv, AngleUnit, Branch, Channel, ChannelKind, EventDataset, SamplingSpec, TopologyMap};

/// Names accepted by [`Scenario::by_name`].
pub const SCENARIOS: [&str; 4] = ["wecc-like", "def-toy", "tone", "ambient"];

pub fn scenario_names() -> String {
    SCENARIOS.join(", ")
}

/// Oscillation amplitudes per unit component, by channel kind.
#[derive(Debug, Clone, Copy)]
struct Coupling {
    p: f64,
    theta: f64,
    q: f64,
    v: f64,
}

/// Phase relations of one device to one oscillation group.
#[derive(Debug, Clone, Copy)]
struct Orientation {
    /// Lead of P over θ, radians.
    alpha: f64,
    /// Phase of Q relative to θ.
    beta: f64,
    /// Phase of |V| relative to θ.
    delta: f64,
}

impl Orientation {
    const SOURCE: Orientation = Orientation { alpha: 0.0, beta: 0.0, delta: 0.0 };

    fn sink(lag: f64) -> Orientation {
        Orientation { alpha: PI - lag, beta: PI - lag, delta: 0.0 }
    }
}

#[derive(Debug, Clone)]
struct Group {
    name: String,
    source_device: String,
    /// Named unit components; amplitude lives in each `ComponentSpec`.
    parts: Vec<(String, ComponentSpec)>,
}

#[derive(Debug, Clone)]
struct Device {
    id: String,
    base: [f64; 4],
    /// Mixing gain and orientation per group.
    links: Vec<(f64, Orientation)>,
    ambient_std: [f64; 4],
}

#[derive(Debug, Clone)]
struct Layout {
    fs: f64,
    duration: f64,
    t_event: f64,
    coupling: Coupling,
    groups: Vec<Group>,
    devices: Vec<Device>,
    ambient_ar: f64,
}

const KINDS: [ChannelKind; 4] = [
    ChannelKind::ActivePower,
    ChannelKind::VoltageAngle,
    ChannelKind::ReactivePower,
    ChannelKind::VoltageMag,
];

impl Layout {
    fn sampling(&self) -> SamplingSpec<f64> {
        SamplingSpec::new(self.fs, (self.duration * self.fs).round() as usize, 0.0).expect("valid layout")
    }

    /// Per-kind component spec of `part` as seen on `device`.
    fn channel_component(&self, kind_idx: usize, gain: f64, o: Orientation, part: &ComponentSpec) -> ComponentSpec {
        let c = &self.coupling;
        let (scale, shift) = match KINDS[kind_idx] {
            ChannelKind::ActivePower => (c.p, o.alpha),
            ChannelKind::VoltageAngle => (c.theta, -PI / 2.0),
            ChannelKind::ReactivePower => (c.q, o.beta),
            _ => (c.v, o.delta - PI / 2.0),
        };
        let amplitude = match part.amplitude {
            AmplitudeLaw::Constant { value } => AmplitudeLaw::Constant { value: value * gain * scale },
            AmplitudeLaw::Gaussian { peak, center, width } => AmplitudeLaw::Gaussian { peak: peak * gain * scale, center, width },
        };
        ComponentSpec { amplitude, offset: part.offset + shift, ..part.clone() }
    }

    fn channel_specs(&self, dev: &Device, kind_idx: usize) -> Vec<(String, ComponentSpec)> {
        let mut out = Vec::new();
        for (g, &(gain, o)) in self.groups.iter().zip(&dev.links) {
            if gain == 0.0 {
                continue;
            }
            for (name, part) in &g.parts {
                out.push((name.clone(), self.channel_component(kind_idx, gain, o, part)));
            }
        }
        out
    }

    fn build(&self, seed: u64, snr_db: Option<f64>) -> Result<EventDataset<f64>> {
        let sampling = self.sampling();
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut branches = Vec::new();
        for dev in &self.devices {
            let mut chans = Vec::new();
            for (ki, kind) in KINDS.iter().enumerate() {
                let spec = ScenarioSpec {
                    components: self.channel_specs(dev, ki).into_iter().map(|(_, c)| c).collect(),
                    ambient: (dev.ambient_std[ki] > 0.0).then_some(AmbientSpec { ar_coef: self.ambient_ar, std: dev.ambient_std[ki] }),
                    additive_snr_db: snr_db,
                    seed: seeds.random(),
                };
                let out = gen_mcs(&spec, &sampling)?;
                let unit = match kind {
                    ChannelKind::VoltageAngle => "rad",
                    ChannelKind::VoltageMag => "pu",
                    _ => "pu",
                };
                let samples = out.samples.iter().map(|v| v + dev.base[ki]).collect();
                chans.push(Channel::new(format!("{}.{}", dev.id, kind.tag()), *kind, unit, samples));
            }
            let mut it = chans.into_iter();
            let (p, v_ang, q, v_mag) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            branches.push(Branch {
                id: dev.id.clone(),
                from_bus: dev.id.clone(),
                to_bus: format!("{}-net", dev.id),
                p,
                q,
                v_mag,
                v_ang,
            });
        }
        EventDataset::new(sampling, branches, self.t_event)
    }

    /// Steady-state dissipating-energy slope of `device` for one group.
    fn analytic_slope(&self, dev: &Device, group: usize, freq_hz: f64, amplitude: f64) -> f64 {
        let (gain, o) = dev.links[group];
        let c = &self.coupling;
        let w = 2.0 * PI * freq_hz;
        let a2 = (gain * amplitude).powi(2);
        let v0 = dev.base[3];
        a2 * (c.p * c.theta * w / 2.0 * o.alpha.cos() + c.q * c.v * w / (2.0 * v0) * (o.beta - o.delta).cos())
    }

    fn truth(&self, name: &str, seed: u64, snr_db: Option<f64>) -> GroundTruth {
        let components = self
            .groups
            .iter()
            .flat_map(|g| {
                g.parts.iter().map(move |(n, c)| ComponentTruth {
                    name: n.clone(),
                    group: g.name.clone(),
                    source_device: g.source_device.clone(),
                    harmonic: c.harmonic,
                    t_on: c.t_on,
                    t_off: c.t_off.min(self.duration),
                    phase: c.phase.clone(),
                })
            })
            .collect();
        GroundTruth {
            scenario: name.to_string(),
            seed,
            snr_db,
            fs: self.fs,
            duration_s: self.duration,
            t_event: self.t_event,
            sources: self.groups.iter().map(|g| (g.name.clone(), g.source_device.clone())).collect(),
            components,
            branches: self
                .devices
                .iter()
                .map(|d| BranchTruth {
                    branch_id: d.id.clone(),
                    device: d.id.clone(),
                    analytic_slopes: BTreeMap::new(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTruth {
    pub name: String,
    pub group: String,
    pub source_device: String,
    pub harmonic: f64,
    pub t_on: f64,
    pub t_off: f64,
    pub phase: PhaseLaw,
}

impl ComponentTruth {
    /// True IF in Hz at `t`, `None` outside the support.
    pub fn inst_freq(&self, t: f64) -> Option<f64> {
        (t >= self.t_on && t < self.t_off).then(|| self.harmonic * self.phase.inst_freq(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTruth {
    pub branch_id: String,
    pub device: String,
    /// Steady-state DEF slope per oscillation group.
    pub analytic_slopes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub fs: f64,
    pub duration_s: f64,
    pub t_event: f64,
    /// Oscillation group name → injecting device.
    pub sources: BTreeMap<String, String>,
    pub components: Vec<ComponentTruth>,
    pub branches: Vec<BranchTruth>,
}

impl GroundTruth {
    pub fn component(&self, name: &str) -> Option<&ComponentTruth> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// A generated dataset with the information needed to score an analysis.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dataset: EventDataset<f64>,
    pub truth: GroundTruth,
    layout: Layout,
}

impl Scenario {
    pub fn by_name(name: &str, seed: u64, snr_db: Option<f64>) -> Result<Scenario> {
        match name {
            "wecc-like" => wecc_like(seed, snr_db),
            "def-toy" => def_toy(seed, snr_db),
            "tone" => tone_scenario(seed, snr_db),
            "ambient" => ambient_scenario(seed),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}`; valid scenarios: {}",
                scenario_names()
            ))),
        }
    }

    /// Noiseless contribution of the named components to one channel.
    pub fn clean_signal(&self, branch_id: &str, kind: ChannelKind, names: &[&str]) -> Option<Vec<f64>> {
        let dev = self.layout.devices.iter().find(|d| d.id == branch_id)?;
        let ki = KINDS.iter().position(|k| *k == kind)?;
        let sampling = self.layout.sampling();
        let specs: Vec<ComponentSpec> = self
            .layout
            .channel_specs(dev, ki)
            .into_iter()
            .filter(|(n, _)| names.contains(&n.as_str()))
            .map(|(_, c)| c)
            .collect();
        Some((0..sampling.len).map(|m| specs.iter().map(|c| c.value(sampling.time_of(m))).sum()).collect())
    }
}

fn square_wave_group(source: &str, t_on: f64, t_off: f64, knots: Vec<(f64, f64)>, harmonics: &[u32]) -> Group {
    Group {
        name: "square".into(),
        source_device: source.into(),
        parts: harmonics
            .iter()
            .map(|&h| {
                (
                    format!("square.h{h}"),
                    ComponentSpec {
                        amplitude: AmplitudeLaw::Constant { value: 4.0 / (PI * h as f64) },
                        phase: PhaseLaw::PiecewiseLinear { knots: knots.clone() },
                        harmonic: h as f64,
                        offset: 0.0,
                        t_on,
                        t_off,
                    },
                )
            })
            .collect(),
    }
}

fn tone_group(name: &str, source: &str, freq: f64, amplitude: f64, t_on: f64, t_off: f64) -> Group {
    Group {
        name: name.into(),
        source_device: source.into(),
        parts: vec![(
            name.into(),
            ComponentSpec { t_on, t_off, ..ComponentSpec::tone(freq, amplitude) },
        )],
    }
}

const COUPLING: Coupling = Coupling { p: 0.1, theta: 0.02, q: 0.05, v: 0.004 };

fn device(id: &str, idx: usize, links: Vec<(f64, Orientation)>, ambient: f64) -> Device {
    Device {
        id: id.into(),
        // large angle offsets make the exported, wrapped angles cross ±π
        base: [0.8 + 0.1 * idx as f64, 3.05 + 0.02 * idx as f64, 0.1, 1.02],
        links,
        ambient_std: [ambient * COUPLING.p, ambient * COUPLING.theta, ambient * COUPLING.q, ambient * COUPLING.v],
    }
}

/// Chirping square-wave source plus a late 0.7 Hz tone, four devices.
pub fn wecc_like(seed: u64, snr_db: Option<f64>) -> Result<Scenario> {
    let knots = vec![(30.0, 0.1), (80.0, 0.2), (130.0, 0.1)];
    let groups = vec![
        square_wave_group("gen79", 30.0, f64::INFINITY, knots, &[1, 3, 5, 7]),
        tone_group("tone", "gen15", 0.7, 0.6, 70.0, f64::INFINITY),
    ];
    let sink = Orientation::sink(0.4);
    let devices = vec![
        device("gen79", 0, vec![(1.0, Orientation::SOURCE), (0.3, sink)], 0.05),
        device("gen15", 1, vec![(0.3, sink), (1.0, Orientation::SOURCE)], 0.05),
        device("gen112", 2, vec![(0.4, sink), (0.4, sink)], 0.05),
        device("gen40", 3, vec![(0.25, sink), (0.5, sink)], 0.05),
    ];
    let layout = Layout {
        fs: 30.0,
        duration: 130.0,
        t_event: 30.0,
        coupling: COUPLING,
        groups,
        devices,
        ambient_ar: 0.98,
    };
    let dataset = layout.build(seed, snr_db)?;
    let mut truth = layout.truth("wecc-like", seed, snr_db);
    for (b, d) in truth.branches.iter_mut().zip(&layout.devices) {
        b.analytic_slopes.insert("tone".into(), layout.analytic_slope(d, 1, 0.7, 0.6));
    }
    Ok(Scenario { dataset, truth, layout })
}

/// Three branches sharing a 0.7 Hz oscillation injected by `gen1`.
pub fn def_toy(seed: u64, snr_db: Option<f64>) -> Result<Scenario> {
    let groups = vec![tone_group("tone", "gen1", 0.7, 1.0, 30.0, f64::INFINITY)];
    let devices = vec![
        device("gen1", 0, vec![(1.0, Orientation { alpha: 0.3, beta: 0.2, delta: 0.0 })], 0.01),
        device("gen2", 1, vec![(0.6, Orientation::sink(0.5))], 0.01),
        device("gen3", 2, vec![(0.4, Orientation::sink(0.9))], 0.01),
    ];
    let layout = Layout {
        fs: 30.0,
        duration: 120.0,
        t_event: 30.0,
        coupling: COUPLING,
        groups,
        devices,
        ambient_ar: 0.98,
    };
    let dataset = layout.build(seed, snr_db)?;
    let mut truth = layout.truth("def-toy", seed, snr_db);
    for (b, d) in truth.branches.iter_mut().zip(&layout.devices) {
        b.analytic_slopes.insert("tone".into(), layout.analytic_slope(d, 0, 0.7, 1.0));
    }
    Ok(Scenario { dataset, truth, layout })
}

/// One branch carrying a 0.5 Hz tone from 30 s.
pub fn tone_scenario(seed: u64, snr_db: Option<f64>) -> Result<Scenario> {
    let layout = Layout {
        fs: 30.0,
        duration: 100.0,
        t_event: 30.0,
        coupling: COUPLING,
        groups: vec![tone_group("tone", "gen1", 0.5, 1.0, 30.0, f64::INFINITY)],
        devices: vec![device("gen1", 0, vec![(1.0, Orientation::SOURCE)], 0.02)],
        ambient_ar: 0.98,
    };
    let dataset = layout.build(seed, snr_db)?;
    let truth = layout.truth("tone", seed, snr_db);
    Ok(Scenario { dataset, truth, layout })
}

/// Two branches of colored ambient noise only.
pub fn ambient_scenario(seed: u64) -> Result<Scenario> {
    let layout = Layout {
        fs: 30.0,
        duration: 130.0,
        t_event: 30.0,
        coupling: COUPLING,
        groups: vec![],
        devices: vec![device("gen1", 0, vec![], 1.0), device("gen2", 1, vec![], 1.0)],
        ambient_ar: 0.98,
    };
    let dataset = layout.build(seed, None)?;
    let truth = layout.truth("ambient", seed, None);
    Ok(Scenario { dataset, truth, layout })
}

/// Writes the four contest CSVs, `topology.toml` and `ground_truth.json`.
pub fn write_scenario(s: &Scenario, dir: &Path) -> Result<TopologyMap> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let topo = export_contest_csv(&s.dataset, dir, AngleUnit::Degrees)?;
    let path = dir.join("ground_truth.json");
    let json = serde_json::to_string_pretty(&s.truth).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(topo)
}
