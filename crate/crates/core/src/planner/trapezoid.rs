use serde::{Deserialize, Serialize};

use super::PlannerError;

/// Velocity and acceleration bounds for one motion channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub vmax: f64,
    pub amax: f64,
}

impl MotionLimits {
    /// m/s and m/s^2.
    pub fn default_linear() -> Self {
        Self { vmax: 0.10, amax: 0.5 }
    }

    /// rad/s and rad/s^2.
    pub fn default_angular() -> Self {
        Self { vmax: 0.5, amax: 2.0 }
    }
}

/// Rest-to-rest trapezoidal velocity profile over a scalar distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidProfile {
    pub distance: f64,
    pub vmax: f64,
    pub amax: f64,
    pub t_acc: f64,
    pub t_cruise: f64,
    /// Total duration, `2 * t_acc + t_cruise`.
    pub duration: f64,
    /// Peak velocity actually reached.
    pub peak: f64,
}

pub fn plan_trapezoid(distance: f64, vmax: f64, amax: f64) -> Result<TrapezoidProfile, PlannerError> {
    if !(vmax.is_finite() && vmax > 0.0) {
        return Err(PlannerError::InvalidProfile(format!("vmax must be positive, got {vmax}")));
    }
    if !(amax.is_finite() && amax > 0.0) {
        return Err(PlannerError::InvalidProfile(format!("amax must be positive, got {amax}")));
    }
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(PlannerError::InvalidProfile(format!(
            "distance must be non-negative, got {distance}"
        )));
    }
    let (t_acc, t_cruise, peak) = if distance > vmax * vmax / amax {
        (vmax / amax, (distance - vmax * vmax / amax) / vmax, vmax)
    } else {
        let peak = (distance * amax).sqrt();
        (peak / amax, 0.0, peak)
    };
    Ok(TrapezoidProfile {
        distance,
        vmax,
        amax,
        t_acc,
        t_cruise,
        duration: 2.0 * t_acc + t_cruise,
        peak,
    })
}

impl TrapezoidProfile {
    pub fn is_triangular(&self) -> bool {
        self.t_cruise == 0.0
    }

    /// Position and velocity along the path at time `t`.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        let a = self.amax;
        if t <= 0.0 || self.duration == 0.0 {
            return (0.0, 0.0);
        }
        if t >= self.duration {
            return (self.distance, 0.0);
        }
        if t < self.t_acc {
            return (0.5 * a * t * t, a * t);
        }
        if t < self.t_acc + self.t_cruise {
            let s = 0.5 * a * self.t_acc * self.t_acc + self.peak * (t - self.t_acc);
            return (s, self.peak);
        }
        // Deceleration measured back from the end so s(T) = d exactly.
        let tau = self.duration - t;
        (self.distance - 0.5 * a * tau * tau, a * tau)
    }

    /// Acceleration at `t` (piecewise constant).
    pub fn acceleration(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.duration {
            0.0
        } else if t < self.t_acc {
            self.amax
        } else if t < self.t_acc + self.t_cruise {
            0.0
        } else {
            -self.amax
        }
    }
}
