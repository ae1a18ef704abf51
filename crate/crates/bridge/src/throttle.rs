use serde::{Deserialize, Serialize};

use crate::BridgeError;

/// Rate cap for one telemetry topic. Only the newest sample is ever sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrottlePolicy {
    /// Hz.
    pub rate: f64,
}

impl Default for ThrottlePolicy {
    fn default() -> Self {
        Self { rate: 20.0 }
    }
}

impl ThrottlePolicy {
    pub fn new(rate: f64) -> Result<Self, BridgeError> {
        if rate.is_finite() && rate > 0.0 {
            Ok(Self { rate })
        } else {
            Err(BridgeError::Config(format!("throttle rate must be positive, got {rate}")))
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Send slots on a fixed grid. While samples keep arriving the grid holds,
/// so the long-run rate equals the cap; after an idle gap the grid restarts
/// at the next send.
#[derive(Debug, Clone)]
pub struct Throttle {
    period: f64,
    next_slot: Option<f64>,
    last_seq: u64,
}

impl Throttle {
    pub fn new(policy: ThrottlePolicy) -> Self {
        Self {
            period: policy.period(),
            next_slot: None,
            last_seq: 0,
        }
    }

    /// Earliest time the next send may happen.
    pub fn next_slot(&self) -> Option<f64> {
        self.next_slot
    }

    /// Whether the sample `seq` should be sent at `now`. On `true` the caller
    /// must send it; the throttle records the send.
    pub fn offer(&mut self, now: f64, seq: u64) -> bool {
        if seq <= self.last_seq {
            return false;
        }
        if let Some(slot) = self.next_slot {
            if now < slot {
                return false;
            }
        }
        self.last_seq = seq;
        self.next_slot = Some(match self.next_slot {
            Some(slot) if now - slot < self.period => slot + self.period,
            _ => now + self.period,
        });
        true
    }

    /// Forget the grid, e.g. after a reconnect.
    pub fn reset_grid(&mut self) {
        self.next_slot = None;
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }
}
