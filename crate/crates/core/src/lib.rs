//! Deterministic simulation and analysis toolkit for downlink TDoA (DTDoA)
//! ultra-wideband positioning.
//!
//! The crate simulates a network of fixed anchors whose free-running clocks
//! are synchronized to a master over the air, generates range-difference
//! observables at passive receive-only tags, propagates timestamping noise
//! through every estimation step in closed form, validates those closed
//! forms by Monte Carlo, and solves the resulting hyperbolic
//! multilateration problem with dilution-of-precision analytics.
//!
//! Everything is seeded: identical inputs produce bit-identical outputs.

pub mod clocks;
pub mod dtdoa;
pub mod geometry;
pub mod montecarlo;
pub mod report;
pub mod rng;
pub mod scenarios;
pub mod solver;
pub mod sync;
pub mod uncertainty;

/// Unified error type for all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A rate or interval estimate was requested over a zero-length interval.
    #[error("time interval is zero or not positive")]
    ZeroInterval,
    /// Clock rate outside the plausibility guard around 1.
    #[error("clock rate {rate} violates |rate - 1| <= {guard}")]
    InvalidRate { rate: f64, guard: f64 },
    /// Noise specification with a negative scale or non-positive tick.
    #[error("invalid noise specification: {0}")]
    InvalidNoise(&'static str),
    /// Geometry that cannot support 2-D multilateration.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),
    /// Malformed or inconsistent configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Singular or underdetermined estimation problem.
    #[error("degenerate problem: {0}")]
    Degenerate(&'static str),
    /// Iterative solver exhausted its iteration budget.
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    /// Two frames of a broadcast cycle violate the guard time.
    #[error("schedule overlap: events at {first_s} s and {second_s} s are closer than the guard time")]
    ScheduleOverlap { first_s: f64, second_s: f64 },
}

impl Error {
    /// Stable machine-parseable code, used verbatim in CLI failure lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ZeroInterval => "ZERO_INTERVAL",
            Error::InvalidRate { .. } => "INVALID_RATE",
            Error::InvalidNoise(_) => "INVALID_NOISE",
            Error::InvalidGeometry(_) => "INVALID_GEOMETRY",
            Error::InvalidConfig(_) => "CONFIG_INVALID",
            Error::Degenerate(_) => "DEGENERATE",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::ScheduleOverlap { .. } => "SCHEDULE_OVERLAP",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
