//! Closed-form per-frame allocation for local computation and for
//! offloading, and the rule that picks between them.
//!
//! Both strategies decode for the shortest time meeting the rate target,
//! `tau_D = R T / (B_h log2(1 + SNR))`. Local computation then runs the
//! processor for exactly `K R T / f_op`. Offloading picks the airtime
//! `tau_O = (R T ln2 / B_g) / (1 + W((x - 1) / e))`, with
//! `x = eta |g|^2 (|h^H w|^2 + sigma_n^2) / sigma_s^2`, and the power that
//! makes the offload link carry exactly `R T` bits. Whatever time remains is
//! spent harvesting.

use std::fmt;

use serde::Serialize;

use crate::energy::{self, EnergyBreakdown};
use crate::lambert::{lambert_w0, BRANCH_POINT};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    LocalCompute,
    Offload,
    HarvestOnly,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::LocalCompute => "local",
            Strategy::Offload => "offload",
            Strategy::HarvestOnly => "harvest",
        })
    }
}

/// Time slots (s) and offload power (W) for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Allocation {
    pub tau_e: f64,
    pub tau_d: f64,
    pub tau_c: f64,
    pub tau_o: f64,
    pub p_o: f64,
    pub i_o: bool,
    pub strategy: Strategy,
}

impl Allocation {
    pub const CSV_HEADER: [&'static str; 7] = ["tau_e", "tau_d", "tau_c", "tau_o", "p_o", "i_o", "strategy"];

    pub fn harvest_only(frame_duration: f64) -> Self {
        Self {
            tau_e: frame_duration,
            tau_d: 0.0,
            tau_c: 0.0,
            tau_o: 0.0,
            p_o: 0.0,
            i_o: false,
            strategy: Strategy::HarvestOnly,
        }
    }

    pub fn csv_row(&self) -> [String; 7] {
        [
            self.tau_e.to_string(),
            self.tau_d.to_string(),
            self.tau_c.to_string(),
            self.tau_o.to_string(),
            self.p_o.to_string(),
            u8::from(self.i_o).to_string(),
            self.strategy.to_string(),
        ]
    }

    /// Checks the slot-partition invariants; `rel_tol` bounds the partition sum error.
    pub fn check(&self, frame_duration: f64, rel_tol: f64) -> Result<(), String> {
        let t = frame_duration;
        for (name, v) in [
            ("tau_e", self.tau_e),
            ("tau_d", self.tau_d),
            ("tau_c", self.tau_c),
            ("tau_o", self.tau_o),
        ] {
            if !(v >= 0.0 && v <= t) {
                return Err(format!("{name} = {v} outside [0, {t}]"));
            }
        }
        if !(self.p_o >= 0.0) {
            return Err(format!("p_o = {} is negative", self.p_o));
        }
        let sum = self.tau_e + self.tau_d + self.tau_c + self.tau_o;
        if (sum - t).abs() > rel_tol * t {
            return Err(format!("slots sum to {sum}, frame is {t}"));
        }
        let ok = match self.strategy {
            Strategy::LocalCompute => self.tau_o == 0.0 && self.p_o == 0.0 && !self.i_o,
            Strategy::Offload => self.tau_c == 0.0 && self.i_o,
            Strategy::HarvestOnly => {
                self.tau_e == t && self.tau_d == 0.0 && self.tau_c == 0.0 && self.tau_o == 0.0 && self.p_o == 0.0 && !self.i_o
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("slot pattern does not match strategy {}", self.strategy))
        }
    }
}

/// Why a strategy has no allocation for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Infeasibility {
    /// Rate target unreachable (local: the decode-plus-compute time test; offload: `R >= B_h log2(1 + SNR)`).
    RateUnreachable,
    /// Closed-form slots exceed the frame, `tau_E < 0`.
    FrameOverrun,
    /// Offload gain term `x = 0`, so `W = -1` and `tau_O` is unbounded.
    DegenerateGain,
    /// Non-finite intermediate (e.g. NaN input gains).
    Numeric,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Infeasibility::RateUnreachable => "rate target unreachable on this channel",
            Infeasibility::FrameOverrun => "required slots exceed the frame",
            Infeasibility::DegenerateGain => "offload gain term is zero",
            Infeasibility::Numeric => "non-finite input",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StrategyResult {
    Feasible {
        allocation: Allocation,
        breakdown: EnergyBreakdown,
    },
    Infeasible(Infeasibility),
}

impl StrategyResult {
    pub fn feasible(&self) -> bool {
        matches!(self, StrategyResult::Feasible { .. })
    }

    pub fn cost(&self) -> Option<f64> {
        match self {
            StrategyResult::Feasible { breakdown, .. } => Some(breakdown.cost),
            StrategyResult::Infeasible(_) => None,
        }
    }

    pub fn allocation(&self) -> Option<&Allocation> {
        match self {
            StrategyResult::Feasible { allocation, .. } => Some(allocation),
            StrategyResult::Infeasible(_) => None,
        }
    }

    pub fn breakdown(&self) -> Option<&EnergyBreakdown> {
        match self {
            StrategyResult::Feasible { breakdown, .. } => Some(breakdown),
            StrategyResult::Infeasible(_) => None,
        }
    }
}

/// `1 / (B_h log2(1 + SNR)) + K / f_op <= 1 / R`.
pub fn local_feasible(params: &SystemParams, eff_gain_down: f64) -> bool {
    let se = energy::spectral_efficiency(params, eff_gain_down);
    1.0 / (params.bw_downlink * se) + params.ops_per_bit / params.dev_ops_per_sec <= 1.0 / params.rate_min
}

/// `R < B_h log2(1 + SNR)`.
pub fn offload_feasible(params: &SystemParams, eff_gain_down: f64) -> bool {
    params.rate_min < params.bw_downlink * energy::spectral_efficiency(params, eff_gain_down)
}

/// Shortest decoding slot meeting the rate target.
pub fn optimal_decode_time(params: &SystemParams, eff_gain_down: f64) -> f64 {
    params.bits_per_frame() / (params.bw_downlink * energy::spectral_efficiency(params, eff_gain_down))
}

pub fn solve_local(params: &SystemParams, eff_gain_down: f64) -> StrategyResult {
    use StrategyResult::Infeasible;
    if !local_feasible(params, eff_gain_down) {
        return Infeasible(Infeasibility::RateUnreachable);
    }
    let t = params.frame_duration;
    let tau_d = optimal_decode_time(params, eff_gain_down);
    let tau_c = params.ops_per_bit * params.bits_per_frame() / params.dev_ops_per_sec;
    let tau_e = t - tau_d - tau_c;
    if !(tau_d.is_finite() && tau_c.is_finite()) {
        return Infeasible(Infeasibility::Numeric);
    }
    if tau_e < 0.0 {
        return Infeasible(Infeasibility::FrameOverrun);
    }
    let energies = (|| {
        let e_decode = energy::decode_energy(params, eff_gain_down, tau_d).ok()?;
        let rate = energy::throughput(params, eff_gain_down, tau_d).ok()?;
        let e_compute = energy::compute_energy(params, rate);
        let e_harvest = energy::harvested_energy(params, eff_gain_down, tau_e).ok()?;
        Some(energy::frame_cost(e_decode, e_compute, 0.0, e_harvest, false))
    })();
    match energies {
        Some(breakdown) if breakdown.cost.is_finite() => StrategyResult::Feasible {
            allocation: Allocation {
                tau_e,
                tau_d,
                tau_c,
                tau_o: 0.0,
                p_o: 0.0,
                i_o: false,
                strategy: Strategy::LocalCompute,
            },
            breakdown,
        },
        _ => Infeasible(Infeasibility::Numeric),
    }
}

/// Argument of W in the optimal offload time,
/// `(1/e) ((sigma_n^2 / sigma_s^2) eta |g|^2 2^(R T / (B_h tau_D)) - 1)`.
pub fn offload_lambert_arg(params: &SystemParams, gain_offload: f64, tau_d: f64) -> f64 {
    let exponent = params.bits_per_frame() / (params.bw_downlink * tau_d);
    let x = params.noise_dev / params.noise_server * params.eh_efficiency * gain_offload * exponent.exp2();
    (x - 1.0) / std::f64::consts::E
}

/// Transmit power that pushes exactly `R T` bits in `tau_o`.
pub fn offload_power(params: &SystemParams, gain_offload: f64, tau_o: f64) -> f64 {
    let y = params.bits_per_frame() / (params.bw_offload * tau_o);
    params.noise_server / gain_offload * (y * std::f64::consts::LN_2).exp_m1()
}

pub fn solve_offload(params: &SystemParams, eff_gain_down: f64, gain_offload: f64) -> StrategyResult {
    use StrategyResult::Infeasible;
    if !offload_feasible(params, eff_gain_down) {
        return Infeasible(Infeasibility::RateUnreachable);
    }
    if !(gain_offload.is_finite() && eff_gain_down.is_finite()) {
        return Infeasible(Infeasibility::Numeric);
    }
    if gain_offload <= 0.0 {
        return Infeasible(Infeasibility::DegenerateGain);
    }
    let t = params.frame_duration;
    let tau_d = optimal_decode_time(params, eff_gain_down);
    let arg = offload_lambert_arg(params, gain_offload, tau_d);
    if arg.is_nan() {
        return Infeasible(Infeasibility::Numeric);
    }
    // gain term x = 0 puts the argument exactly at the branch point
    if arg <= BRANCH_POINT {
        return Infeasible(Infeasibility::DegenerateGain);
    }
    let w = match lambert_w0(arg) {
        Ok(w) => w,
        Err(_) => return Infeasible(Infeasibility::Numeric),
    };
    if w + 1.0 <= 0.0 {
        return Infeasible(Infeasibility::DegenerateGain);
    }
    let tau_o = params.bits_per_frame() * std::f64::consts::LN_2 / params.bw_offload / (1.0 + w);
    let tau_e = t - tau_d - tau_o;
    if !tau_o.is_finite() || tau_e < 0.0 {
        return Infeasible(Infeasibility::FrameOverrun);
    }
    let p_o = offload_power(params, gain_offload, tau_o);
    if !(p_o.is_finite() && p_o >= 0.0) {
        return Infeasible(Infeasibility::Numeric);
    }
    let energies = (|| {
        let e_decode = energy::decode_energy(params, eff_gain_down, tau_d).ok()?;
        let e_harvest = energy::harvested_energy(params, eff_gain_down, tau_e).ok()?;
        Some(energy::frame_cost(e_decode, 0.0, tau_o * p_o, e_harvest, true))
    })();
    match energies {
        Some(breakdown) if breakdown.cost.is_finite() => StrategyResult::Feasible {
            allocation: Allocation {
                tau_e,
                tau_d,
                tau_c: 0.0,
                tau_o,
                p_o,
                i_o: true,
                strategy: Strategy::Offload,
            },
            breakdown,
        },
        _ => Infeasible(Infeasibility::Numeric),
    }
}

/// The two sides of the closed-form offload test:
/// `K R T (e_op + eta P_rx / f_op)` against `tau_O (p_O + eta P_rx)`.
/// Offloading wins when the first exceeds the second.
pub fn decision_sides(params: &SystemParams, eff_gain_down: f64, offload: &Allocation) -> (f64, f64) {
    let a = energy::harvest_power(params, eff_gain_down);
    let lhs = params.ops_per_bit * params.bits_per_frame() * (params.energy_per_op() + a / params.dev_ops_per_sec);
    let rhs = offload.tau_o * (offload.p_o + a);
    (lhs, rhs)
}

/// Outcome of the per-frame decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub allocation: Allocation,
    pub breakdown: EnergyBreakdown,
    pub local: StrategyResult,
    pub offload: StrategyResult,
    /// When both strategies are feasible: whether the closed-form side test
    /// picks the same strategy as the direct cost comparison.
    pub sides_agree: Option<bool>,
}

impl Decision {
    pub fn strategy(&self) -> Strategy {
        self.allocation.strategy
    }

    /// Cheaper feasible strategy ignoring storage (ties go to local).
    pub fn preferred(&self) -> Option<Strategy> {
        match (self.local.cost(), self.offload.cost()) {
            (Some(c1), Some(c2)) => Some(if c2 < c1 { Strategy::Offload } else { Strategy::LocalCompute }),
            (Some(_), None) => Some(Strategy::LocalCompute),
            (None, Some(_)) => Some(Strategy::Offload),
            (None, None) => None,
        }
    }
}

/// Harvest the whole frame.
pub fn harvest_only(params: &SystemParams, eff_gain_down: f64) -> (Allocation, EnergyBreakdown) {
    let t = params.frame_duration;
    let e_harvest = energy::harvest_power(params, eff_gain_down) * t;
    let breakdown = energy::frame_cost(0.0, 0.0, 0.0, e_harvest, false);
    (Allocation::harvest_only(t), breakdown)
}

/// Solves both strategies and returns the cheaper one if storage covers it,
/// otherwise a harvest-only frame.
pub fn decide(params: &SystemParams, eff_gain_down: f64, gain_offload: f64, e_stored: f64) -> Decision {
    let local = solve_local(params, eff_gain_down);
    let offload = solve_offload(params, eff_gain_down, gain_offload);

    let sides_agree = match (&local, &offload) {
        (
            StrategyResult::Feasible { breakdown: b1, .. },
            StrategyResult::Feasible {
                allocation: a2,
                breakdown: b2,
            },
        ) => {
            let (lhs, rhs) = decision_sides(params, eff_gain_down, a2);
            Some((lhs > rhs) == (b2.cost < b1.cost))
        }
        _ => None,
    };

    let mut decision = Decision {
        allocation: Allocation::harvest_only(params.frame_duration),
        breakdown: harvest_only(params, eff_gain_down).1,
        local,
        offload,
        sides_agree,
    };
    let chosen = match decision.preferred() {
        Some(Strategy::LocalCompute) => local,
        Some(Strategy::Offload) => offload,
        _ => return decision,
    };
    if let StrategyResult::Feasible { allocation, breakdown } = chosen {
        if breakdown.cost <= e_stored {
            decision.allocation = allocation;
            decision.breakdown = breakdown;
        }
    }
    decision
}
