//! Resistive ladder model of a chain's two power lines.
//!
//! Each chain carries three conductors: the MCU supply, the actuator supply
//! and a shared ground return. Every inter-unit segment adds
//! `segment_ohm` to each supply conductor and `ground_ratio * segment_ohm`
//! to the ground. MCUs are constant-current sinks; an active actuator is a
//! resistive load between the actuator supply and ground. The shared ground
//! is what couples actuator activity into the MCU rail.
//!
//! CLOSED chains are additionally fed at the far end through a return cable
//! of `return_segments` segments.

use nalgebra::{DMatrix, DVector};

use super::topology::LoopMode;

/// Minimum MCU operating voltage.
pub const MCU_MIN_V: f64 = 2.3;
/// Rated actuator voltage.
pub const ACTUATOR_MIN_V: f64 = 0.9;

/// Calibrated per-segment resistance, see [`calibrate`].
pub const DEFAULT_SEGMENT_OHM: f64 = 0.200_352_970_369_365_7;

/// Length of the bench chain used for threshold sweeps and calibration.
pub const BENCH_CHAIN_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderModel {
    pub segment_ohm: f64,
    pub ground_ratio: f64,
    pub actuator_load_ohm: f64,
    pub return_segments: f64,
    pub mcu_current_a: f64,
    pub supply_v: f64,
}

impl Default for LadderModel {
    fn default() -> Self {
        Self {
            segment_ohm: DEFAULT_SEGMENT_OHM,
            ground_ratio: 1.8,
            // 150 mA nominal draw at 5 V
            actuator_load_ohm: 5.0 / 0.150,
            return_segments: 4.0,
            mcu_current_a: 0.0025,
            supply_v: 5.0,
        }
    }
}

/// Supply voltages seen by one unit, measured against its local ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeVoltages {
    pub mcu: f64,
    pub actuator: f64,
}

impl NodeVoltages {
    pub fn mcu_ok(&self) -> bool {
        self.mcu >= MCU_MIN_V
    }

    pub fn actuator_ok(&self) -> bool {
        self.actuator >= ACTUATOR_MIN_V
    }
}

const MCU: usize = 0;
const ACT: usize = 1;
const GND: usize = 2;

impl LadderModel {
    /// Solves the nodal equations and returns the voltages at every unit.
    pub fn solve(&self, mode: LoopMode, active: &[bool]) -> Vec<NodeVoltages> {
        let n = active.len();
        if n == 0 {
            return Vec::new();
        }
        let idx = |line: usize, node: usize| line * n + node;
        let mut g = DMatrix::<f64>::zeros(3 * n, 3 * n);
        let mut b = DVector::<f64>::zeros(3 * n);

        let lines = [
            (MCU, self.segment_ohm, self.supply_v),
            (ACT, self.segment_ohm, self.supply_v),
            (GND, self.segment_ohm * self.ground_ratio, 0.0),
        ];
        for (line, r, source_v) in lines {
            let head = idx(line, 0);
            g[(head, head)] += 1.0 / r;
            b[head] += source_v / r;
            for node in 1..n {
                stamp(&mut g, idx(line, node - 1), idx(line, node), r);
            }
            if mode == LoopMode::Closed {
                let tail = idx(line, n - 1);
                let r_ret = r * self.return_segments;
                g[(tail, tail)] += 1.0 / r_ret;
                b[tail] += source_v / r_ret;
            }
        }
        for (node, &on) in active.iter().enumerate() {
            b[idx(MCU, node)] -= self.mcu_current_a;
            b[idx(GND, node)] += self.mcu_current_a;
            if on {
                stamp(&mut g, idx(ACT, node), idx(GND, node), self.actuator_load_ohm);
            }
        }

        let x = g
            .lu()
            .solve(&b)
            .expect("ladder conductance matrix is non-singular");
        (0..n)
            .map(|node| NodeVoltages {
                mcu: x[idx(MCU, node)] - x[idx(GND, node)],
                actuator: x[idx(ACT, node)] - x[idx(GND, node)],
            })
            .collect()
    }

    pub fn last_node(&self, mode: LoopMode, active: &[bool]) -> NodeVoltages {
        self.solve(mode, active).last().copied().unwrap_or(NodeVoltages {
            mcu: self.supply_v,
            actuator: self.supply_v,
        })
    }

    /// Last-node voltages on a `len`-unit chain with the first `k` units active.
    pub fn head_first(&self, mode: LoopMode, len: usize, k: usize) -> NodeVoltages {
        let active: Vec<bool> = (0..len).map(|i| i < k).collect();
        self.last_node(mode, &active)
    }
}

fn stamp(g: &mut DMatrix<f64>, a: usize, b: usize, r: f64) {
    let c = 1.0 / r;
    g[(a, a)] += c;
    g[(b, b)] += c;
    g[(a, b)] -= c;
    g[(b, a)] -= c;
}

/// Result of the 1-D resistance search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub segment_ohm: f64,
    /// Smallest resistance at which 18 active units pull the actuator line below its rating.
    pub lower_ohm: f64,
    /// Largest resistance at which 17 active units still keep the actuator line at its rating.
    pub upper_ohm: f64,
}

/// Finds the per-segment resistance for which the actuator line first drops
/// below [`ACTUATOR_MIN_V`] at exactly 18 active units on the bench chain.
///
/// Both bracket ends are found by bisection (the last-node voltage decreases
/// monotonically in resistance); the geometric midpoint is returned.
pub fn calibrate(template: &LadderModel, bench_len: usize) -> Calibration {
    let root = |k: usize| {
        let f = |r: f64| {
            let model = LadderModel {
                segment_ohm: r,
                ..*template
            };
            model.head_first(LoopMode::Open, bench_len, k).actuator - ACTUATOR_MIN_V
        };
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let lower_ohm = root(18);
    let upper_ohm = root(17);
    Calibration {
        segment_ohm: (lower_ohm * upper_ohm).sqrt(),
        lower_ohm,
        upper_ohm,
    }
}
