//! Scalar input profiles applied along a fixed input direction.

use alloc::format;
use alloc::vec::Vec;

use core::f64::consts::PI;
// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::interp::interval;

/// Scalar profile `s(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    /// `amplitude sin(omega t + phase)`.
    Sine { amplitude: f64, omega: f64, phase: f64 },
    /// `rate t sin(2 pi t / period)`.
    RampSine { rate: f64, period: f64 },
    /// Piecewise-linear through `(time, value)` samples, held constant outside.
    Tabulated { time: Vec<f64>, value: Vec<f64> },
}

/// Input `u(t) = s(t) d` for a direction `d` in input space.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    pub profile: Profile,
    pub direction: Vec<f64>,
}

impl InputSignal {
    pub fn new(profile: Profile, direction: Vec<f64>) -> Result<Self> {
        if direction.is_empty() || direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("input direction must be a finite nonempty vector".into()));
        }
        match &profile {
            Profile::Sine { omega, .. } if !omega.is_finite() => {
                return Err(Error::Parameter("sine frequency must be finite".into()))
            }
            Profile::RampSine { period, .. } if !(*period > 0.0) => {
                return Err(Error::Parameter(format!("ramp-sine period must be positive, got {period}")))
            }
            Profile::Tabulated { time, value } => {
                if time.is_empty() || time.len() != value.len() {
                    return Err(Error::Parameter("tabulated input needs matching nonempty time and value".into()));
                }
                if time.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Parameter("tabulated input times must increase".into()));
                }
            }
            _ => {}
        }
        Ok(Self { profile, direction })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            profile: Profile::Zero,
            direction: alloc::vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn scalar(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::Sine { amplitude, omega, phase } => amplitude * (omega * t + phase).sin(),
            Profile::RampSine { rate, period } => rate * t * (2.0 * PI * t / period).sin(),
            Profile::Tabulated { time, value } => {
                if time.len() == 1 || t <= time[0] {
                    return value[0];
                }
                let n = time.len();
                if t >= time[n - 1] {
                    return value[n - 1];
                }
                let k = interval(time, t);
                let w = (t - time[k]) / (time[k + 1] - time[k]);
                value[k] * (1.0 - w) + value[k + 1] * w
            }
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let s = self.scalar(t);
        for (o, d) in out.iter_mut().zip(&self.direction) {
            *o = s * d;
        }
    }
}
