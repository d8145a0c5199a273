use std::path::PathBuf;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ingest: {0}")]
    Ingest(String),
    #[error("config: {0}")]
    Config(String),
    #[error("preprocess: channel `{0}` is entirely missing")]
    UnrecoverableChannel(String),
    #[error("preprocess: channel `{id}` has kind {kind}, expected an angle channel")]
    NotAngle { id: String, kind: String },
    #[error("window: sigma {sigma} s too wide for {n_bins} bins (edge value {edge:.3e} > 1e-2)")]
    WindowTooWide {
        sigma: f64,
        n_bins: usize,
        edge: f64,
    },
    #[error("window: spectrum of channel `{0}` is identically zero")]
    DegenerateSpectrum(String),
    #[error("tfr: signal of length {len} shorter than window length {need}")]
    SignalTooShort { len: usize, need: usize },
    #[error("tfr: band [{lo}, {hi}] outside valid bins [0, {max}]")]
    BandOutOfRange { lo: usize, hi: usize, max: usize },
    #[error("multichannel: {0}")]
    Aggregation(String),
    #[error("multichannel: threshold: {0}")]
    Threshold(String),
    #[error("filter: {0}")]
    Contract(String),
    #[error("metrics: {0}")]
    UndefinedMetric(String),
    #[error("synth: component IF {freq_hz:.4} Hz reaches Nyquist {nyquist_hz:.4} Hz")]
    Aliasing { freq_hz: f64, nyquist_hz: f64 },
    #[error("def: voltage magnitude is zero at sample {0}")]
    DivisionGuard(usize),
    #[error("def: ranking: {0}")]
    Ranking(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::WindowTooWide { .. } => {
                ErrorClass::Config
            }
            Error::Io { .. }
            | Error::Ingest(_)
            | Error::UnrecoverableChannel(_)
            | Error::NotAngle { .. }
            | Error::Format(_)
            | Error::SignalTooShort { .. } => ErrorClass::Data,
            _ => ErrorClass::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
