//! Fusion of asynchronous AIS reports with video-derived vessel tracks.
//!
//! The crate is organised bottom-up:
//!
//! * [`geo`] geodesy (WGS-84 direct/inverse problem), Mercator and pinhole projection
//! * [`ais`] cleaning, dead reckoning and storage of AIS trajectories
//! * [`tracking`] occlusion-aware tracking-by-detection producing visual trajectories
//! * [`similarity`] exact DTW, multilevel FastDTW and the direction-weighted similarity
//! * [`assignment`] rectangular linear assignment with forbidden / forced cells
//! * [`fusion`] the per-second fusion tick tying everything together
//! * [`metrics`] fusion and tracking evaluation
//! * [`simulator`] seeded synthetic scenes producing all input artifacts
//! * [`io`], [`config`] and [`commands`] file formats and the command drivers used by the CLI
//!
//! The numerical kernels ([`geo`], [`similarity`], [`assignment`], [`metrics`]) are generic over
//! [`Scalar`]; the stateful pipeline runs on `f64`. Concrete aliases for both precisions live at
//! the crate root.

pub mod ais;
pub mod assignment;
pub mod commands;
pub mod config;
pub mod error;
pub mod fusion;
pub mod geo;
pub mod io;
pub mod metrics;
pub mod scalar;
pub mod similarity;
pub mod simulator;
pub mod tracking;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Unix seconds. The engine runs at 1 Hz so every timestamp is an integer tick.
pub type Seconds = i64;

pub type GeoPoint = geo::GeoPoint<f64>;
pub type GeoPoint32 = geo::GeoPoint<f32>;
pub type WorldPoint = geo::WorldPoint<f64>;
pub type WorldPoint32 = geo::WorldPoint<f32>;
pub type PixelPoint = geo::PixelPoint<f64>;
pub type PixelPoint32 = geo::PixelPoint<f32>;
pub type CameraModel = geo::CameraModel<f64>;
pub type CameraModel32 = geo::CameraModel<f32>;
pub type Rect = geo::Rect<f64>;
pub type Rect32 = geo::Rect<f32>;
pub type PixelSeries = similarity::PixelSeries<f64>;
pub type PixelSeries32 = similarity::PixelSeries<f32>;
pub type CostMatrix = assignment::CostMatrix<f64>;
pub type CostMatrix32 = assignment::CostMatrix<f32>;
