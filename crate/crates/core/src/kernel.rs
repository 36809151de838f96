//! Distance-dependent detection probability of a wiper sensor.
//!
//! A vehicle at `sensor` "sees" the weather at `target` with probability
//! `p_max * exp(-d^2 / (2 sigma^2))`, an isotropic Gaussian rescaled so its
//! peak is `p_max`. Beyond [`CUTOFF_SIGMAS`] standard deviations the kernel is
//! exactly zero so affected cells can be enumerated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Point;

/// Distances at or beyond this many sigmas have zero detection probability.
pub const CUTOFF_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Decay scale in meters.
    pub sigma: f64,
    /// Detection probability at zero distance.
    pub p_max: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            sigma: 1000.0,
            p_max: 1.0,
        }
    }
}

impl KernelParams {
    pub fn new(sigma: f64, p_max: f64) -> Result<Self> {
        let k = KernelParams { sigma, p_max };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("kernel sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(Error::invalid(format!(
                "kernel p_max must be in (0, 1], got {}",
                self.p_max
            )));
        }
        Ok(())
    }

    /// Radius beyond which the kernel vanishes.
    pub fn cutoff(&self) -> f64 {
        CUTOFF_SIGMAS * self.sigma
    }

    /// Detection probability as a function of distance alone.
    pub fn at_distance(&self, d: f64) -> f64 {
        if d >= self.cutoff() {
            return 0.0;
        }
        self.p_max * (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

pub fn detection_probability(target: Point, sensor: Point, params: &KernelParams) -> f64 {
    params.at_distance(target.distance(&sensor))
}

pub fn miss_probability(target: Point, sensor: Point, params: &KernelParams) -> f64 {
    1.0 - detection_probability(target, sensor, params)
}
