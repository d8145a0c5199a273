//! Identification, filtering and source ranking of forced oscillations in
//! multi-channel PMU recordings.
//!
//! The numeric code is generic over [`num::Real`] (`f32` or `f64`); the
//! `*F64` aliases below cover the usual double-precision use.

pub mod artifacts;
pub mod def;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod model;
pub mod multichannel;
pub mod num;
pub mod pipeline;
pub mod ridge;
pub mod synth;
pub mod tfr;
pub mod window;

pub use error::{Error, ErrorClass, Result};
pub use num::Real;

pub type ChannelF64 = model::Channel<f64>;
pub type EventDatasetF64 = model::EventDataset<f64>;
pub type WindowSpecF64 = window::WindowSpec<f64>;
pub type TfrConfigF64 = tfr::TfrConfig<f64>;
pub type TfrGridF64 = tfr::TfrGrid<f64>;
pub type MtfGridF64 = multichannel::MtfGrid<f64>;
pub type SpectralThresholdF64 = multichannel::SpectralThreshold<f64>;
pub type RidgeF64 = ridge::Ridge<f64>;
pub type FilteredComponentF64 = filter::FilteredComponent<f64>;
pub type DefSeriesF64 = def::DefSeries<f64>;
