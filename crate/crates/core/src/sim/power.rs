//! Constant-current power budget.

use serde::{Deserialize, Serialize};

use super::topology::Topology;

pub const CONTROL_UNIT_CURRENT_A: f64 = 0.106;
pub const UNIT_IDLE_CURRENT_A: f64 = 0.0025;
pub const ACTUATOR_CURRENT_A: f64 = 0.150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub current_a: f64,
    pub battery_hours: f64,
}

/// Draw of a control unit with `units` vibration units whose actuators are on
/// for `duty_sum` unit-equivalents of time, and runtime on `capacity_mah`.
pub fn estimate(units: usize, duty_sum: f64, capacity_mah: f64) -> PowerEstimate {
    let current_a =
        CONTROL_UNIT_CURRENT_A + UNIT_IDLE_CURRENT_A * units as f64 + ACTUATOR_CURRENT_A * duty_sum;
    PowerEstimate {
        current_a,
        battery_hours: capacity_mah / 1000.0 / current_a,
    }
}

/// Estimate for a topology given each unit's active-time fraction
/// (`duty_profile[chain][unit]`, missing entries count as idle).
pub fn estimate_power(topology: &Topology, duty_profile: &[Vec<f64>], capacity_mah: f64) -> PowerEstimate {
    let duty_sum: f64 = topology
        .chains
        .iter()
        .enumerate()
        .map(|(c, spec)| {
            duty_profile
                .get(c)
                .map(|row| row.iter().take(spec.units).map(|d| d.clamp(0.0, 1.0)).sum::<f64>())
                .unwrap_or(0.0)
        })
        .sum();
    estimate(topology.unit_count(), duty_sum, capacity_mah)
}
