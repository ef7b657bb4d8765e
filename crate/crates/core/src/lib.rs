//! Seq2seq forecasting of daily express delivery volumes with heterogeneous
//! feature embeddings and joint temporal/feature attention, built on a small
//! fp64 reverse-mode autodiff tape.

pub mod attention;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod hfr;
pub mod layers;
pub mod model;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
