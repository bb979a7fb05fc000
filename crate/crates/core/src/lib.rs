//! Private Evolution: differentially private synthetic data generated only
//! through blackbox generation APIs.
//!
//! The library is organized around one run of the evolutionary loop:
//! [`genapi`] produces and perturbs samples, [`voting`] scores a population
//! with a privatized nearest-neighbor histogram, [`engine`] resamples and
//! iterates, and [`accountant`] converts the noise level into (ε, δ).
//! [`metrics`] and [`theory`] measure how close the result gets.

pub mod accountant;
pub mod bench;
pub mod dataset;
pub mod distance;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod genapi;
pub mod matching;
pub mod metrics;
pub mod rng;
pub mod theory;
pub mod voting;

pub use dataset::{BallWorld, Dataset, Format, Population, Sample};
pub use error::{PeError, Result};
