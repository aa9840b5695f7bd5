//! Affine clock models with configurable timestamping noise.
//!
//! A clock maps true time `t` to the local reading `offset + rate * t`.
//! Reading a timestamp adds one white noise draw and optionally rounds the
//! result to a hardware tick. All times are f64 seconds; counter rollover
//! is not modeled.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default guard on |rate - 1|; real crystals drift at ppm scale.
pub const RATE_GUARD: f64 = 1e-3;

/// Timestamping noise distribution family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Gaussian,
    Uniform,
}

/// Per-node timestamping noise.
///
/// `scale` is the standard deviation for `Gaussian` and the half-width for
/// `Uniform` (standard deviation `scale/sqrt(3)`). When `quantize` is set,
/// the noisy reading is rounded to the nearest multiple of the tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseKind,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub quantize: Option<f64>,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { distribution: NoiseKind::None, scale: 0.0, quantize: None }
    }

    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec { distribution: NoiseKind::Gaussian, scale: sigma, quantize: None }
    }

    pub fn uniform(half_width: f64) -> Self {
        NoiseSpec { distribution: NoiseKind::Uniform, scale: half_width, quantize: None }
    }

    pub fn with_quantize(mut self, tick: f64) -> Self {
        self.quantize = Some(tick);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale < 0.0 {
            return Err(Error::InvalidNoise("scale must be finite and >= 0"));
        }
        if let Some(tick) = self.quantize {
            if !tick.is_finite() || tick <= 0.0 {
                return Err(Error::InvalidNoise("quantization tick must be > 0"));
            }
        }
        Ok(())
    }

    /// Standard deviation of one timestamping error, before quantization.
    pub fn sigma_ts(&self) -> f64 {
        match self.distribution {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => self.scale,
            NoiseKind::Uniform => self.scale / 3f64.sqrt(),
        }
    }

    fn draw(&self, rng: &mut (impl Rng + ?Sized)) -> f64 {
        let rng = &mut *rng;
        match self.distribution {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * self.scale
            }
            NoiseKind::Uniform => rng.random_range(-self.scale..=self.scale),
        }
    }
}

/// Affine clock: local reading is `offset + rate * t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset: f64,
    pub rate: f64,
    pub noise: NoiseSpec,
}

impl ClockModel {
    /// Clock with the default rate guard.
    pub fn new(offset: f64, rate: f64, noise: NoiseSpec) -> Result<Self> {
        Self::with_guard(offset, rate, noise, RATE_GUARD)
    }

    /// Clock with an explicit guard on |rate - 1|.
    pub fn with_guard(offset: f64, rate: f64, noise: NoiseSpec, guard: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() || (rate - 1.0).abs() > guard {
            return Err(Error::InvalidRate { rate, guard });
        }
        if !offset.is_finite() {
            return Err(Error::InvalidNoise("clock offset must be finite"));
        }
        noise.validate()?;
        Ok(ClockModel { offset, rate, noise })
    }

    /// Perfect clock: zero offset, unit rate, exact timestamps.
    pub fn ideal() -> Self {
        ClockModel { offset: 0.0, rate: 1.0, noise: NoiseSpec::none() }
    }

    /// Exact local reading, no noise and no quantization.
    pub fn read_ideal(&self, t: f64) -> f64 {
        self.offset + self.rate * t
    }

    /// Noisy timestamp: ideal reading plus one independent noise draw,
    /// quantized to the nearest tick when configured.
    pub fn read_measured(&self, t: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
        let raw = self.read_ideal(t) + self.noise.draw(rng);
        match self.noise.quantize {
            Some(tick) => (raw / tick).round() * tick,
            None => raw,
        }
    }
}
