use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use fotrack::artifacts::{self, Manifest};
use fotrack::model::{ingest_contest_csv, TopologyMap};
use fotrack::pipeline::{self, PipelineConfig, Sigma};
use fotrack::synth::{write_scenario, Scenario};
use fotrack::tfr::{transform, TfrKind};
use fotrack::{Error, ErrorClass, EventDatasetF64};

#[derive(Parser)]
#[command(name = "fotrack", version, about = "Forced-oscillation identification and source ranking")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Random seed for synthetic data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Transform: stft, fsst or fsst2.
    #[arg(long, global = true)]
    tfr: Option<String>,
    /// Additive white noise level for synthetic data, dB.
    #[arg(long = "snr-db", global = true, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Window width in seconds or `auto`.
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// Override any configuration key, e.g. `--set ridge.l_c=40`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic scenario in the four-file CSV format.
    Synth { scenario: String },
    /// Run every stage and write all artifacts.
    Analyze {
        /// Dataset directory (with topology.toml) or topology file.
        data: PathBuf,
        /// Also write per-channel magnitude grids under `tfr/`.
        #[arg(long)]
        dump_tfr: bool,
    },
    /// Multi-channel TFR and its threshold.
    Tfr {
        data: PathBuf,
        /// Also dump the magnitude grid of these channels.
        #[arg(long = "channel")]
        channels: Vec<String>,
    },
    /// Ridges from a previous `tfr` run.
    Ridges {
        /// Directory holding the previous stage (defaults to --out).
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Per-channel components along previously extracted ridges.
    Filter {
        data: PathBuf,
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Energy flow and source ranking from exported components.
    Def {
        data: PathBuf,
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Sets a dotted key in a TOML table; the value is parsed as TOML and taken
/// as a string when that fails.
fn set_key(root: &mut toml::Table, assignment: &str) -> Result<(), Error> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{assignment}`")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("--set: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Config file (explicit, else the one stored in `stored`), then flags.
fn load_config(g: &Global, stored: Option<&Path>) -> Result<PipelineConfig, Error> {
    let text = match (&g.config, stored.map(|d| d.join(artifacts::CONFIG_TOML))) {
        (Some(p), _) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        (None, Some(p)) if p.is_file() => Some(std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?),
        _ => None,
    };
    let mut table: toml::Table = match text {
        Some(t) => toml::from_str(&t).map_err(|e| Error::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    for s in &g.set {
        set_key(&mut table, s)?;
    }
    let mut cfg: PipelineConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(k) = &g.tfr {
        cfg.tfr = TfrKind::parse(k).map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(s) = &g.sigma {
        cfg.sigma = s.parse::<Sigma>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_dataset(path: &Path) -> Result<EventDatasetF64, Error> {
    let topo_path = if path.is_dir() { path.join("topology.toml") } else { path.to_path_buf() };
    let topo = TopologyMap::load(&topo_path)?;
    let dir = topo_path.parent().unwrap_or(Path::new("."));
    let ds = ingest_contest_csv(&topo.files.resolved(dir), &topo)?;
    info!(
        "loaded {} branches, {} samples at {} Hz from {}",
        ds.branches.len(),
        ds.spec.len,
        ds.spec.fs,
        topo_path.display()
    );
    Ok(ds)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest(command: &str, input: Option<&Path>, cfg: &PipelineConfig, ds: &EventDatasetF64) -> Manifest {
    Manifest {
        tool: "fotrack".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        input: input.map(Path::to_path_buf),
        config: cfg.clone(),
        sigma: None,
        fs: ds.spec.fs,
        n_samples: ds.spec.len,
        branches: ds.branches.iter().map(|b| b.id.clone()).collect(),
        ridges: None,
        artifacts: Vec::new(),
    }
}

/// Uses the transform kind, bin count and window of a stored `tfr` run.
fn adopt_tfr_meta(cfg: &mut PipelineConfig, from: &Path) -> Result<f64, Error> {
    let meta = artifacts::read_tfr_meta(from)?;
    cfg.tfr = meta.kind;
    cfg.n_bins = meta.n_bins;
    cfg.sigma = Sigma::Fixed(meta.sigma);
    Ok(meta.sigma)
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = &cli.global;
    let out = &g.out;
    match &cli.cmd {
        Cmd::Synth { scenario } => {
            let s = Scenario::by_name(scenario, g.seed, g.snr_db)?;
            create_dir(out)?;
            write_scenario(&s, out)?;
            info!("wrote scenario `{scenario}` (seed {}) to {}", g.seed, out.display());
        }
        Cmd::Analyze { data, dump_tfr } => {
            let cfg = load_config(g, None)?;
            info!("config:\n{}", cfg.to_toml_string());
            let ds = load_dataset(data)?;
            let a = pipeline::analyze(&ds, &cfg)?;
            create_dir(out)?;
            let fs = a.prepared.spec.fs;
            artifacts::write_config(out, &cfg)?;
            artifacts::write_tfr_stage(out, &a.tfr)?;
            artifacts::write_ridges(out, &a.ridges, fs, cfg.n_bins)?;
            artifacts::write_components(out, fs, &a.components)?;
            artifacts::write_def(out, fs, &a.def)?;
            let mut names: Vec<String> = [
                artifacts::CONFIG_TOML,
                artifacts::TFR_JSON,
                artifacts::MTF_CSV,
                artifacts::THRESHOLD_CSV,
                artifacts::RIDGES_JSON,
                artifacts::RIDGES_CSV,
                artifacts::COMPONENTS_CSV,
                artifacts::DEF_JSON,
                artifacts::DEF_CSV,
            ]
            .map(String::from)
            .to_vec();
            if *dump_tfr {
                let tc = pipeline::tfr_config(a.tfr.sigma, fs, &cfg)?;
                for b in &a.prepared.branches {
                    for c in b.channels() {
                        let p = artifacts::write_magnitude_dump(out, &transform(&c.id, &c.demeaned(), &tc)?)?;
                        names.push(p.strip_prefix(out).unwrap_or(&p).display().to_string());
                    }
                }
            }
            for r in &a.def.reports {
                info!("component h{} ({:.3} Hz): {:?}", r.component_h, r.freq_hz, r.verdict);
            }
            let mut m = manifest("analyze", Some(data), &cfg, &a.prepared);
            m.sigma = Some(a.tfr.sigma);
            m.ridges = Some(a.ridges.len());
            m.artifacts = names;
            m.write(out)?;
        }
        Cmd::Tfr { data, channels } => {
            let cfg = load_config(g, None)?;
            info!("config:\n{}", cfg.to_toml_string());
            let ds = pipeline::prepare(&load_dataset(data)?, &cfg)?;
            let st = pipeline::stage_tfr(&ds, &cfg)?;
            create_dir(out)?;
            artifacts::write_config(out, &cfg)?;
            artifacts::write_tfr_stage(out, &st)?;
            let mut names: Vec<String> = [artifacts::CONFIG_TOML, artifacts::TFR_JSON, artifacts::MTF_CSV, artifacts::THRESHOLD_CSV]
                .map(String::from)
                .to_vec();
            if !channels.is_empty() {
                let tc = pipeline::tfr_config(st.sigma, ds.spec.fs, &cfg)?;
                for id in channels {
                    let c = ds
                        .branches
                        .iter()
                        .flat_map(|b| b.channels())
                        .find(|c| &c.id == id)
                        .ok_or_else(|| Error::Config(format!("no channel `{id}` in the dataset")))?;
                    let p = artifacts::write_magnitude_dump(out, &transform(&c.id, &c.demeaned(), &tc)?)?;
                    names.push(p.strip_prefix(out).unwrap_or(&p).display().to_string());
                }
            }
            let mut m = manifest("tfr", Some(data), &cfg, &ds);
            m.sigma = Some(st.sigma);
            m.artifacts = names;
            m.write(out)?;
        }
        Cmd::Ridges { from } => {
            let from = from.as_deref().unwrap_or(out);
            let mut cfg = load_config(g, Some(from))?;
            adopt_tfr_meta(&mut cfg, from)?;
            let st = artifacts::read_tfr_stage::<f64>(from, &cfg)?;
            let ridges = pipeline::stage_ridges(&st, &cfg)?;
            create_dir(out)?;
            artifacts::write_ridges(out, &ridges, st.mtf.fs(), st.mtf.config.n_bins)?;
            info!("{} ridges", ridges.len());
        }
        Cmd::Filter { data, from } => {
            let from = from.as_deref().unwrap_or(out);
            let mut cfg = load_config(g, Some(from))?;
            let sigma = adopt_tfr_meta(&mut cfg, from)?;
            let ds = pipeline::prepare(&load_dataset(data)?, &cfg)?;
            let ridges = artifacts::read_ridges::<f64>(from)?;
            let comps = pipeline::stage_filter(&ds, sigma, &ridges, &cfg)?;
            create_dir(out)?;
            artifacts::write_components(out, ds.spec.fs, &comps)?;
            info!("{} components", comps.len());
        }
        Cmd::Def { data, from } => {
            let from = from.as_deref().unwrap_or(out);
            let mut cfg = load_config(g, Some(from))?;
            let sigma = adopt_tfr_meta(&mut cfg, from)?;
            let ds = pipeline::prepare(&load_dataset(data)?, &cfg)?;
            let ridges = artifacts::read_ridges::<f64>(from)?;
            let comps = artifacts::read_components::<f64>(from)?;
            let def = pipeline::stage_def(&ds, sigma, &ridges, &comps, &cfg)?;
            create_dir(out)?;
            artifacts::write_def(out, ds.spec.fs, &def)?;
            for r in &def.reports {
                info!("component h{} ({:.3} Hz): {:?}", r.component_h, r.freq_hz, r.verdict);
            }
        }
    }
    Ok(())
}
