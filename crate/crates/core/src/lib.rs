//! Bayesian marked point-process models for event sequences in team sports.

pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod event;
pub mod inference;
pub mod marks;
pub mod num;
pub mod random;
pub mod screening;
pub mod simulate;
pub mod synth;
pub mod time_model;
pub mod zone_model;

pub use error::{Error, Result};
pub use num::Real;

pub type ModelParams32 = inference::ModelParams<f32>;
pub type ModelParams64 = inference::ModelParams<f64>;
pub type TimeParams32 = time_model::TimeParams<f32>;
pub type TimeParams64 = time_model::TimeParams<f64>;
pub type ZoneParams32 = zone_model::ZoneParams<f32>;
pub type ZoneParams64 = zone_model::ZoneParams<f64>;
pub type ExcitationParams32 = marks::ExcitationParams<f32>;
pub type ExcitationParams64 = marks::ExcitationParams<f64>;
pub type LogLikBreakdown32 = inference::LogLikBreakdown<f32>;
pub type LogLikBreakdown64 = inference::LogLikBreakdown<f64>;
