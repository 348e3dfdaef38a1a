//! Geolocation-aware transformer regression on satellite image chips,
//! with plain transformer and convolutional baselines, spatially blocked
//! evaluation, Monte Carlo dropout uncertainty, and tiled map prediction.
//!
//! The crate is organized bottom-up: `numerics` provides tensors and
//! reverse-mode gradients, `geoenc` the sinusoidal geolocation encoder,
//! `raster` masked grids and stacks, `data` chips/samples/splits and a
//! synthetic benchmark generator, `model` the three architectures, and
//! `train`/`uncert`/`mapper` the workflows tied together by the `cli`
//! module.

pub mod cli;
pub mod data;
pub mod error;
pub mod geoenc;
pub mod mapper;
pub mod model;
pub mod numerics;
pub mod raster;
pub mod train;
pub mod uncert;

pub use error::{Error, Result};
