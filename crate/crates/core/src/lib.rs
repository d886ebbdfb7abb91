//! Indoor WiFi fingerprint localization with group-sparse recovery.

pub mod ap_selection;
pub mod clustering;
pub mod dft;
pub mod error;
pub mod evaluation;
pub mod interpolation;
pub mod localization;
pub mod radio_map;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
