//! Four-file PMU CSV convention: bus voltage magnitudes, bus voltage angles,
//! branch current magnitudes and branch current angles, each with a leading
//! `time` column. A TOML topology map pairs the columns into branches.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Branch, Channel, ChannelKind, EventDataset, SamplingSpec};
use crate::num::Real;

/// Maximum relative spread of the time step.
const TIME_STEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleUnit {
    #[serde(rename = "deg", alias = "degrees", alias = "degree")]
    Degrees,
    #[serde(rename = "rad", alias = "radians", alias = "radian")]
    Radians,
}

impl AngleUnit {
    /// Detects the unit from a free-form unit string.
    pub fn parse(unit: &str) -> Result<Self> {
        match unit.trim().to_ascii_lowercase().as_str() {
            "deg" | "degree" | "degrees" | "°" => Ok(AngleUnit::Degrees),
            "rad" | "radian" | "radians" | "" => Ok(AngleUnit::Radians),
            other => Err(Error::Ingest(format!("unknown angle unit `{other}`"))),
        }
    }

    fn to_radians(self) -> f64 {
        match self {
            AngleUnit::Degrees => PI / 180.0,
            AngleUnit::Radians => 1.0,
        }
    }
}

/// File names of the four signal tables, relative to the topology file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFiles {
    pub voltage_mag: PathBuf,
    pub voltage_ang: PathBuf,
    pub current_mag: PathBuf,
    pub current_ang: PathBuf,
}

impl Default for DatasetFiles {
    fn default() -> Self {
        Self {
            voltage_mag: "voltage_mag.csv".into(),
            voltage_ang: "voltage_ang.csv".into(),
            current_mag: "current_mag.csv".into(),
            current_ang: "current_ang.csv".into(),
        }
    }
}

impl DatasetFiles {
    /// Resolves relative paths against `dir`.
    pub fn resolved(&self, dir: &Path) -> DatasetFiles {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { dir.join(p) };
        DatasetFiles {
            voltage_mag: r(&self.voltage_mag),
            voltage_ang: r(&self.voltage_ang),
            current_mag: r(&self.current_mag),
            current_ang: r(&self.current_ang),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchMap {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub voltage_mag: String,
    pub voltage_ang: String,
    pub current_mag: String,
    pub current_ang: String,
    pub angle_unit: AngleUnit,
}

/// Dataset description: pre-event marker, file names and branch wiring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyMap {
    /// End of the ambient-only interval, seconds after the first sample.
    pub pre_event_s: f64,
    #[serde(default)]
    pub files: DatasetFiles,
    #[serde(rename = "branch")]
    pub branches: Vec<BranchMap>,
}

impl TopologyMap {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("topology map: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("topology map serialises")
    }
}

/// A `time` column plus named signal columns, as stored in one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    /// Column-major signal values; missing cells are NaN.
    pub columns: Vec<Vec<f64>>,
}

impl SignalTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(values);
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    c.parse::<f64>().ok()
}

/// Reads a signal table, checking that time is strictly increasing and uniform.
pub fn read_signal_csv(path: &Path) -> Result<SignalTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let ctx = |msg: String| Error::Ingest(format!("{}: {msg}", path.display()));
    let headers = rdr.headers().map_err(|e| ctx(e.to_string()))?.clone();
    if headers.is_empty() || !headers[0].trim().eq_ignore_ascii_case("time") {
        return Err(ctx("first column must be `time`".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut time = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ctx(e.to_string()))?;
        if rec.len() != names.len() + 1 {
            return Err(ctx(format!("row {} has {} cells, expected {}", row + 1, rec.len(), names.len() + 1)));
        }
        let t = parse_cell(&rec[0])
            .filter(|t| t.is_finite())
            .ok_or_else(|| ctx(format!("row {}: invalid time `{}`", row + 1, &rec[0])))?;
        time.push(t);
        for (j, col) in columns.iter_mut().enumerate() {
            let v = parse_cell(&rec[j + 1])
                .ok_or_else(|| ctx(format!("row {}: invalid value `{}` in `{}`", row + 1, &rec[j + 1], names[j])))?;
            col.push(v);
        }
    }
    check_time_axis(&time).map_err(ctx)?;
    Ok(SignalTable { time, names, columns })
}

fn check_time_axis(time: &[f64]) -> std::result::Result<(), String> {
    if time.len() < 2 {
        return Err(format!("need at least 2 rows, got {}", time.len()));
    }
    let step = (time[time.len() - 1] - time[0]) / (time.len() - 1) as f64;
    if !(step > 0.0) {
        return Err("time must be strictly increasing".into());
    }
    for (i, w) in time.windows(2).enumerate() {
        let dt = w[1] - w[0];
        if !(dt > 0.0) {
            return Err(format!("time not strictly increasing at row {}", i + 2));
        }
        if ((dt - step) / step).abs() > TIME_STEP_TOL {
            return Err(format!("non-uniform time step at row {} ({dt} vs {step})", i + 2));
        }
    }
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_signal_csv(path: &Path, table: &SignalTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut header = vec!["time".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header).map_err(wrap)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, t) in table.time.iter().enumerate() {
        row.clear();
        row.push(fmt_value(*t));
        row.extend(table.columns.iter().map(|c| fmt_value(c[i])));
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Complex power `P + jQ = V·conj(I)` from polar phasors (angles in radians).
#[inline]
pub fn phasor_to_power<T: Real>(v_mag: T, v_ang: T, i_mag: T, i_ang: T) -> (T, T) {
    let s = v_mag * i_mag;
    let d = v_ang - i_ang;
    (s * d.cos(), s * d.sin())
}

/// Current phasor producing `P + jQ` at voltage `v_mag∠v_ang` (inverse of
/// [`phasor_to_power`]).
#[inline]
pub fn power_to_current<T: Real>(p: T, q: T, v_mag: T, v_ang: T) -> (T, T) {
    let s = p.hypot(q);
    (s / v_mag, v_ang - q.atan2(p))
}

/// Loads the four CSV files and assembles branches with P/Q computed at the
/// sending bus. Missing cells propagate as NaN.
pub fn ingest_contest_csv<T: Real>(files: &DatasetFiles, topology: &TopologyMap) -> Result<EventDataset<T>> {
    let vm = read_signal_csv(&files.voltage_mag)?;
    let va = read_signal_csv(&files.voltage_ang)?;
    let im = read_signal_csv(&files.current_mag)?;
    let ia = read_signal_csv(&files.current_ang)?;

    let tables = [(&files.voltage_mag, &vm), (&files.voltage_ang, &va), (&files.current_mag, &im), (&files.current_ang, &ia)];
    for (path, t) in &tables[1..] {
        if t.time.len() != vm.time.len() {
            return Err(Error::Ingest(format!(
                "{} has {} rows but {} has {}",
                path.display(),
                t.time.len(),
                files.voltage_mag.display(),
                vm.time.len()
            )));
        }
        for (i, (a, b)) in vm.time.iter().zip(&t.time).enumerate() {
            if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::Ingest(format!(
                    "time columns of {} and {} disagree at row {} ({a} vs {b})",
                    files.voltage_mag.display(),
                    path.display(),
                    i + 2
                )));
            }
        }
    }
    if topology.branches.is_empty() {
        return Err(Error::Config("topology map lists no branches".into()));
    }

    let n = vm.time.len();
    let fs = (n - 1) as f64 / (vm.time[n - 1] - vm.time[0]);
    // printed time stamps carry rounding; snap rates that are integral to 1e-6
    let fs = if (fs - fs.round()).abs() < 1e-6 * fs { fs.round() } else { fs };
    let spec = SamplingSpec::new(T::lit(fs), n, T::lit(vm.time[0]))?;

    let lookup = |table: &'_ SignalTable, path: &Path, col: &str| -> Result<Vec<f64>> {
        table.column(col).map(<[f64]>::to_vec).ok_or_else(|| {
            Error::Config(format!("topology map references unknown column `{col}` in {}", path.display()))
        })
    };

    let mut branches = Vec::with_capacity(topology.branches.len());
    let mut seen = HashMap::new();
    for bm in &topology.branches {
        if seen.insert(bm.id.clone(), ()).is_some() {
            return Err(Error::Config(format!("duplicate branch id `{}`", bm.id)));
        }
        let v_mag = lookup(&vm, &files.voltage_mag, &bm.voltage_mag)?;
        let v_ang = lookup(&va, &files.voltage_ang, &bm.voltage_ang)?;
        let i_mag = lookup(&im, &files.current_mag, &bm.current_mag)?;
        let i_ang = lookup(&ia, &files.current_ang, &bm.current_ang)?;
        let k = bm.angle_unit.to_radians();
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for m in 0..n {
            let (pm, qm) = phasor_to_power(v_mag[m], v_ang[m] * k, i_mag[m], i_ang[m] * k);
            p.push(T::lit(pm));
            q.push(T::lit(qm));
        }
        let cid = |tag: &str| format!("{}.{tag}", bm.id);
        branches.push(Branch {
            id: bm.id.clone(),
            from_bus: bm.from_bus.clone(),
            to_bus: bm.to_bus.clone(),
            p: Channel::new(cid("P"), ChannelKind::ActivePower, "pu", p),
            q: Channel::new(cid("Q"), ChannelKind::ReactivePower, "pu", q),
            v_mag: Channel::new(cid("V"), ChannelKind::VoltageMag, "pu", v_mag.into_iter().map(T::lit).collect()),
            v_ang: Channel::new(
                cid("theta"),
                ChannelKind::VoltageAngle,
                "rad",
                v_ang.into_iter().map(|a| T::lit(a * k)).collect(),
            ),
        });
    }
    EventDataset::new(spec, branches, T::lit(topology.pre_event_s))
}

fn wrap_angle(x: f64, unit: AngleUnit) -> f64 {
    let x = match unit {
        AngleUnit::Degrees => x.to_degrees(),
        AngleUnit::Radians => x,
    };
    let period = match unit {
        AngleUnit::Degrees => 360.0,
        AngleUnit::Radians => 2.0 * PI,
    };
    let half = period / 2.0;
    let w = (x + half).rem_euclid(period) - half;
    if w == -half {
        half
    } else {
        w
    }
}

/// Writes a dataset in the four-file convention under `dir` and returns the
/// matching topology map (also written as `topology.toml`). Currents are
/// derived from P/Q and the sending-bus voltage; angles are wrapped.
pub fn export_contest_csv<T: Real>(ds: &EventDataset<T>, dir: &Path, angle_unit: AngleUnit) -> Result<TopologyMap> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = ds.spec.len;
    let time: Vec<f64> = (0..n)
        .map(|m| ds.spec.t0.to_f64_lossy() + m as f64 / ds.spec.fs.to_f64_lossy())
        .collect();
    let empty = || SignalTable {
        time: time.clone(),
        names: Vec::new(),
        columns: Vec::new(),
    };
    let (mut vm, mut va, mut im, mut ia) = (empty(), empty(), empty(), empty());
    let mut maps = Vec::new();
    for b in &ds.branches {
        if vm.column(&b.from_bus).is_none() {
            vm.push_column(b.from_bus.clone(), b.v_mag.samples.iter().map(|x| x.to_f64_lossy()).collect());
            va.push_column(
                b.from_bus.clone(),
                b.v_ang.samples.iter().map(|x| wrap_angle(x.to_f64_lossy(), angle_unit)).collect(),
            );
        }
        let mut i_mag = Vec::with_capacity(n);
        let mut i_ang = Vec::with_capacity(n);
        for m in 0..n {
            let (a, b2) = power_to_current(
                b.p.samples[m].to_f64_lossy(),
                b.q.samples[m].to_f64_lossy(),
                b.v_mag.samples[m].to_f64_lossy(),
                b.v_ang.samples[m].to_f64_lossy(),
            );
            i_mag.push(a);
            i_ang.push(wrap_angle(b2, angle_unit));
        }
        im.push_column(b.id.clone(), i_mag);
        ia.push_column(b.id.clone(), i_ang);
        maps.push(BranchMap {
            id: b.id.clone(),
            from_bus: b.from_bus.clone(),
            to_bus: b.to_bus.clone(),
            voltage_mag: b.from_bus.clone(),
            voltage_ang: b.from_bus.clone(),
            current_mag: b.id.clone(),
            current_ang: b.id.clone(),
            angle_unit,
        });
    }
    let topo = TopologyMap {
        pre_event_s: ds.t_event.to_f64_lossy(),
        files: DatasetFiles::default(),
        branches: maps,
    };
    let files = topo.files.resolved(dir);
    write_signal_csv(&files.voltage_mag, &vm)?;
    write_signal_csv(&files.voltage_ang, &va)?;
    write_signal_csv(&files.current_mag, &im)?;
    write_signal_csv(&files.current_ang, &ia)?;
    let tpath = dir.join("topology.toml");
    fs::write(&tpath, topo.to_toml_string()).map_err(|e| Error::io(&tpath, e))?;
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_from_phasors() {
        let (p, q) = phasor_to_power(1.0, 10f64.to_radians(), 0.5, (-20f64).to_radians());
        assert!((p - 0.5 * 30f64.to_radians().cos()).abs() < 1e-15);
        assert!((p - 0.4330127).abs() < 1e-7);
        assert!((q - 0.25).abs() < 1e-15);
    }

    #[test]
    fn current_inverts_power() {
        let (i, a) = power_to_current(-0.3_f64, 0.8, 1.02, 0.4);
        let (p, q) = phasor_to_power(1.02, 0.4, i, a);
        assert!((p + 0.3).abs() < 1e-14 && (q - 0.8).abs() < 1e-14);
    }

    #[test]
    fn missing_cells_parse_as_nan() {
        assert!(parse_cell("NaN").unwrap().is_nan());
        assert!(parse_cell(" nan ").unwrap().is_nan());
        assert!(parse_cell("").unwrap().is_nan());
        assert_eq!(parse_cell("1.5e-3"), Some(1.5e-3));
        assert_eq!(parse_cell("x"), None);
    }

    #[test]
    fn time_axis_checks() {
        assert!(check_time_axis(&[0.0, 0.1, 0.2]).is_ok());
        assert!(check_time_axis(&[0.0, 0.1, 0.25]).is_err());
        assert!(check_time_axis(&[0.0, 0.0]).is_err());
        assert!(check_time_axis(&[0.0]).is_err());
    }

    #[test]
    fn topology_rejects_unknown_keys() {
        let bad = r#"
pre_event_s = 30.0
sigma = 5.0
[[branch]]
id = "b"
from_bus = "a"
to_bus = "c"
voltage_mag = "a"
voltage_ang = "a"
current_mag = "b"
current_ang = "b"
angle_unit = "deg"
"#;
        assert!(matches!(TopologyMap::from_toml_str(bad), Err(Error::Config(_))));
        let good = bad.replace("sigma = 5.0\n", "");
        let t = TopologyMap::from_toml_str(&good).unwrap();
        assert_eq!(t.branches[0].angle_unit, AngleUnit::Degrees);
        assert_eq!(t.files, DatasetFiles::default());
    }
}
