//! Brute-force reference solutions for both per-frame problems and for
//! Lambert W. Nothing here calls the closed forms in [`crate::allocator`];
//! objectives and constraints are evaluated from the rate and energy
//! primitives of [`crate::energy`] only.
//!
//! # Tolerance
//!
//! Each search ends with a final bracket of width `w` around the best point.
//! The local objective is linear in both slots, with slopes
//! `L_D = B_h log2(1+SNR) (K e_op + eps) + eta P_rx` and `L_C = eta P_rx`, so
//! the grid gap is bounded by `L_D w_D + L_C w_C`. The offload objective is
//! convex in `tau_O`, so on its final bracket `[a, b]` the slope magnitude is
//! at most `max(|f'(a)|, |f'(b)|)` and the gap is at most that times `w`.
//! Both bounds get a floating-point allowance of
//! `FLOAT_SLACK * (E_D + compute or offload energy + eta P_rx T)`.
//!
//! # Offload power elimination
//!
//! For fixed `tau_O` the offload objective `lambda + eta P_rx tau_O` is
//! increasing in `lambda = p_O tau_O`, so the smallest `lambda` meeting the
//! offload bit constraint is optimal. The oracle finds that `lambda` by
//! bisection on the constraint and searches `tau_O` alone.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocator::{self, StrategyResult};
use crate::channel::{realize_channels, trial_rng};
use crate::energy;
use crate::error::{Error, Result};
use crate::lambert::{self, BRANCH_POINT};
use crate::params::SystemParams;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Relative allowance for rounding in the cost comparison.
pub const FLOAT_SLACK: f64 = 1e-12;

/// Offload bit constraint must hold to this relative accuracy at the closed form.
pub const RATE_TOL: f64 = 1e-9;

/// Absolute agreement required between [`lambert::lambert_w0`] and [`bisect_lambert`].
pub const LAMBERT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Grid step for the time axes, seconds.
    pub resolution: f64,
    /// Golden-section passes after the grid.
    pub refine_iters: usize,
    /// Log-spaced `lambda = p_O tau_O` samples (J) for the 2-D offload scan.
    pub power_grid: Vec<f64>,
}

impl GridSpec {
    pub fn for_params(params: &SystemParams) -> Self {
        Self {
            resolution: 1e-4 * params.frame_duration,
            refine_iters: 60,
            power_grid: log_space(1e-12, 1e-2, 241),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::Domain(format!("grid resolution must be > 0, got {}", self.resolution)));
        }
        Ok(())
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n.max(2) - 1) as f64))
        .collect()
}

/// Golden-section minimisation over `[a, b]`; returns the best evaluated point
/// and the final bracket width. `f` may return `+inf` for infeasible points.
fn golden<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, a);
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx < best.0 {
            *best = (fx, x);
        }
    };
    let fa = f(a);
    consider(a, fa, &mut best);
    let fb = f(b);
    consider(b, fb, &mut best);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    for _ in 0..iters {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
            consider(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
            consider(x2, f2, &mut best);
        }
    }
    (best.1, best.0, b - a)
}

/// Local-computation objective, or `+inf` outside the feasible set
/// (rate target, processor capacity, frame partition).
pub fn local_objective(params: &SystemParams, eff_gain_down: f64, tau_d: f64, tau_c: f64) -> f64 {
    let t = params.frame_duration;
    let tau_e = t - tau_d - tau_c;
    if !(tau_d >= 0.0 && tau_c >= 0.0 && tau_e >= 0.0) {
        return f64::INFINITY;
    }
    let Ok(rate) = energy::throughput(params, eff_gain_down, tau_d) else {
        return f64::INFINITY;
    };
    if rate < params.rate_min || tau_c * params.dev_ops_per_sec < params.ops_per_bit * rate * t {
        return f64::INFINITY;
    }
    let (Ok(ed), Ok(eh)) = (
        energy::decode_energy(params, eff_gain_down, tau_d),
        energy::harvested_energy(params, eff_gain_down, tau_e),
    ) else {
        return f64::INFINITY;
    };
    ed + energy::compute_energy(params, rate) - eh
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalOptimum {
    pub tau_d: f64,
    pub tau_c: f64,
    pub cost: f64,
    /// Grid-discretisation bound on `cost - true minimum`.
    pub tolerance: f64,
}

pub fn brute_local(params: &SystemParams, eff_gain_down: f64, spec: &GridSpec) -> Result<LocalOptimum> {
    spec.validate()?;
    let t = params.frame_duration;
    let iters = spec.refine_iters;
    let best_c = |tau_d: f64| {
        let (c, v, w) = golden(|c| local_objective(params, eff_gain_down, tau_d, c), 0.0, (t - tau_d).max(0.0), iters);
        (c, v, w)
    };

    let n = (t / spec.resolution).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut best_idx = None;
    for i in 0..=n {
        let tau_d = (i as f64 * spec.resolution).min(t);
        let (c, v, _) = best_c(tau_d);
        if v < best.0 {
            best = (v, tau_d, c);
            best_idx = Some(i);
        }
    }
    let Some(i) = best_idx else {
        return Err(Error::EmptyFeasibleSet("local computation"));
    };

    let lo = (i as f64 - 1.0).max(0.0) * spec.resolution;
    let hi = ((i as f64 + 1.0) * spec.resolution).min(t);
    let mut inner_width: f64 = 0.0;
    let (d, v, width_d) = golden(
        |d| {
            let (_, v, w) = best_c(d);
            inner_width = inner_width.max(w);
            v
        },
        lo,
        hi,
        iters,
    );
    if v < best.0 {
        best = (v, d, best_c(d).0);
    }

    let se = energy::spectral_efficiency(params, eff_gain_down);
    let a = energy::harvest_power(params, eff_gain_down);
    let slope_d = params.bw_downlink * se * (params.ops_per_bit * params.energy_per_op() + params.decode_energy_per_bit) + a;
    let scale = params.decode_energy_per_bit * params.bits_per_frame()
        + energy::compute_energy(params, params.rate_min)
        + a * t;
    let tolerance = slope_d * width_d + a * inner_width.max(spec.resolution * INV_PHI.powi(iters as i32)) + FLOAT_SLACK * scale;
    Ok(LocalOptimum {
        tau_d: best.1,
        tau_c: best.2,
        cost: best.0,
        tolerance,
    })
}

/// Left side of the offload bit constraint, `B_g tau_O log2(1 + |g|^2 lambda / (tau_O sigma_s^2))`.
pub fn offload_rate_lhs(params: &SystemParams, gain_offload: f64, tau_o: f64, lambda: f64) -> f64 {
    if tau_o <= 0.0 {
        return 0.0;
    }
    let snr = gain_offload * lambda / (tau_o * params.noise_server);
    params.bw_offload * tau_o * snr.ln_1p() / std::f64::consts::LN_2
}

/// Smallest `lambda` with `offload_rate_lhs >= R T`, by bisection.
pub fn min_lambda(params: &SystemParams, gain_offload: f64, tau_o: f64) -> f64 {
    let need = params.bits_per_frame();
    let ok = |l: f64| offload_rate_lhs(params, gain_offload, tau_o, l) >= need;
    let mut hi = 1e-30;
    while !ok(hi) {
        hi *= 4.0;
        if hi > 1e30 {
            return f64::INFINITY;
        }
    }
    let mut lo = hi / 4.0;
    if hi == 1e-30 {
        lo = 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Shortest decoding slot meeting the rate target, by bisection on the throughput.
pub fn min_decode_time(params: &SystemParams, eff_gain_down: f64) -> Option<f64> {
    let t = params.frame_duration;
    let ok = |d: f64| energy::throughput(params, eff_gain_down, d).is_ok_and(|r| r >= params.rate_min);
    if !ok(t) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, t);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Offload objective with `tau_D` fixed and `lambda` eliminated; `+inf` if out of the frame.
pub fn offload_objective(params: &SystemParams, eff_gain_down: f64, gain_offload: f64, tau_d: f64, tau_o: f64) -> f64 {
    let tau_e = params.frame_duration - tau_d - tau_o;
    if !(tau_o > 0.0 && tau_e >= 0.0) {
        return f64::INFINITY;
    }
    let lambda = min_lambda(params, gain_offload, tau_o);
    let (Ok(ed), Ok(eh)) = (
        energy::decode_energy(params, eff_gain_down, tau_d),
        energy::harvested_energy(params, eff_gain_down, tau_e),
    ) else {
        return f64::INFINITY;
    };
    ed + lambda - eh
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffloadOptimum {
    pub tau_d: f64,
    pub tau_o: f64,
    pub lambda: f64,
    pub p_o: f64,
    pub cost: f64,
    pub tolerance: f64,
}

pub fn brute_offload(params: &SystemParams, eff_gain_down: f64, gain_offload: f64, spec: &GridSpec) -> Result<OffloadOptimum> {
    spec.validate()?;
    let t = params.frame_duration;
    let tau_d = min_decode_time(params, eff_gain_down).ok_or(Error::EmptyFeasibleSet("offloading: rate target"))?;
    let f = |o: f64| offload_objective(params, eff_gain_down, gain_offload, tau_d, o);
    let span = t - tau_d;
    let n = (span / spec.resolution).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0);
    let mut best_idx = None;
    for i in 1..=n {
        let o = (i as f64 * spec.resolution).min(span);
        let v = f(o);
        if v < best.0 {
            best = (v, o);
            best_idx = Some(i);
        }
    }
    let Some(i) = best_idx else {
        return Err(Error::EmptyFeasibleSet("offloading"));
    };
    let lo = (i as f64 - 1.0) * spec.resolution;
    let hi = ((i as f64 + 1.0) * spec.resolution).min(span);
    let (o, v, width) = golden(f, lo.max(f64::MIN_POSITIVE), hi, spec.refine_iters);
    if v < best.0 {
        best = (v, o);
    }

    // convex in tau_O: slope bound from the bracket ends around the best point
    let half = 0.5 * width;
    let (a, b) = ((best.1 - half).max(f64::MIN_POSITIVE), (best.1 + half).min(span));
    let h = (width * 1e-3).max(1e-15 * t);
    let slope = |x: f64| {
        let (l, r) = ((x - h).max(f64::MIN_POSITIVE), (x + h).min(span));
        let (fl, fr) = (f(l), f(r));
        if fl.is_finite() && fr.is_finite() && r > l {
            ((fr - fl) / (r - l)).abs()
        } else {
            0.0
        }
    };
    let lambda = min_lambda(params, gain_offload, best.1);
    let harvest = energy::harvest_power(params, eff_gain_down);
    let scale = params.decode_energy_per_bit * params.bits_per_frame() + lambda + harvest * t;
    let tolerance = slope(a).max(slope(b)) * width + FLOAT_SLACK * scale;
    Ok(OffloadOptimum {
        tau_d,
        tau_o: best.1,
        lambda,
        p_o: lambda / best.1,
        cost: best.0,
        tolerance,
    })
}

/// Lowest objective over the `(tau_O, lambda)` grid, each point checked
/// against the bit constraint directly.
pub fn scan_offload_2d(params: &SystemParams, eff_gain_down: f64, gain_offload: f64, spec: &GridSpec, n_tau: usize) -> Option<f64> {
    let tau_d = min_decode_time(params, eff_gain_down)?;
    let span = params.frame_duration - tau_d;
    let need = params.bits_per_frame();
    let ed = energy::decode_energy(params, eff_gain_down, tau_d).ok()?;
    let a = energy::harvest_power(params, eff_gain_down);
    let mut best: Option<f64> = None;
    for i in 1..=n_tau {
        let o = span * i as f64 / n_tau as f64;
        for &l in &spec.power_grid {
            if offload_rate_lhs(params, gain_offload, o, l) >= need {
                let v = ed + l - a * (span - o);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

/// `W_0(x)` by plain bisection on `w e^w - x` over `[-1, max(1, ln(1+x)+1)]`.
pub fn bisect_lambert(x: f64) -> Result<f64> {
    if x.is_nan() || x < BRANCH_POINT {
        return Err(Error::Domain(format!("lambert W0 is undefined below -1/e, got {x}")));
    }
    let mut lo = -1.0f64;
    let mut hi = f64::max(1.0, x.ln_1p() + 1.0);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * mid.exp() - x > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Deterministic test points over `[-1/e + 1e-9, 1e6]`: half log-spaced
/// offsets from the branch point, half log-spaced positive values, plus 0.
pub fn lambert_test_points(n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let half = n / 2;
    let mut xs: Vec<f64> = log_space(1e-9, -BRANCH_POINT, half)
        .into_iter()
        .map(|off| BRANCH_POINT + off)
        .filter(|&x| x < 0.0)
        .collect();
    xs.push(0.0);
    xs.extend(log_space(1e-12, 1e6, n.saturating_sub(xs.len())));
    xs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Problem {
    Local,
    Offload,
    Lambert,
}

/// One row of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub problem: Problem,
    pub instance: usize,
    pub dist_ap_dev: f64,
    pub dist_dev_server: f64,
    pub ops_per_bit: f64,
    pub eff_gain_down: f64,
    pub gain_offload: f64,
    pub closed_form: f64,
    pub oracle: f64,
    pub deviation: f64,
    pub tolerance: f64,
    /// Relative offload bit-constraint error at the closed form (offload rows).
    pub rate_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub instances: usize,
    pub lambert_points: usize,
    pub seed: u64,
    /// Multiplies the closed-form `tau_O` (power left unchanged) before checking;
    /// `1.0` checks the solver as is.
    pub tau_o_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: 100,
            lambert_points: 1000,
            seed: 0,
            tau_o_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn max_deviation(&self, problem: Problem) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.problem == problem)
            .map(|r| r.deviation.abs())
            .fold(0.0, f64::max)
    }

    pub fn count(&self, problem: Problem) -> usize {
        self.rows.iter().filter(|r| r.problem == problem).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "verify: {} local, {} offload, {} lambert rows; max |dev| local {:.3e} J, offload {:.3e} J, lambert {:.3e}; {} failures",
            self.count(Problem::Local),
            self.count(Problem::Offload),
            self.count(Problem::Lambert),
            self.max_deviation(Problem::Local),
            self.max_deviation(Problem::Offload),
            self.max_deviation(Problem::Lambert),
            self.failures().count()
        )
    }
}

#[derive(Debug, Clone)]
struct Instance {
    params: SystemParams,
    eff_gain_down: f64,
    gain_offload: f64,
}

/// Random instances for which `solver` returns a feasible closed form.
/// Geometry and `K` vary: `d_t` in [2, 14] m, `d_s` in [2, 20] m,
/// `log10 K` in [2, 4.5].
fn feasible_instances<F>(base: &SystemParams, n: usize, seed: u64, solver: F) -> Vec<Instance>
where
    F: Fn(&SystemParams, f64, f64) -> bool,
{
    let mut rng = trial_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 100 * n.max(1) {
        attempts += 1;
        let params = SystemParams {
            dist_ap_dev: rng.random_range(2.0..14.0),
            dist_dev_server: rng.random_range(2.0..20.0),
            ops_per_bit: 10f64.powf(rng.random_range(2.0..4.5)),
            ..base.clone()
        };
        let Ok(ch) = realize_channels(&params, &mut rng) else {
            continue;
        };
        if solver(&params, ch.eff_gain_down, ch.gain_offload) {
            out.push(Instance {
                params,
                eff_gain_down: ch.eff_gain_down,
                gain_offload: ch.gain_offload,
            });
        }
    }
    out
}

fn check_local(inst: &Instance, index: usize, spec: &GridSpec) -> VerifyRow {
    let closed = allocator::solve_local(&inst.params, inst.eff_gain_down);
    let oracle = brute_local(&inst.params, inst.eff_gain_down, spec);
    let closed_cost = closed.cost().unwrap_or(f64::NAN);
    let (oracle_cost, tolerance) = oracle.map_or((f64::NAN, 0.0), |o| (o.cost, o.tolerance));
    let deviation = closed_cost - oracle_cost;
    VerifyRow {
        problem: Problem::Local,
        instance: index,
        dist_ap_dev: inst.params.dist_ap_dev,
        dist_dev_server: inst.params.dist_dev_server,
        ops_per_bit: inst.params.ops_per_bit,
        eff_gain_down: inst.eff_gain_down,
        gain_offload: inst.gain_offload,
        closed_form: closed_cost,
        oracle: oracle_cost,
        deviation,
        tolerance,
        rate_residual: 0.0,
        pass: deviation.abs() <= tolerance,
    }
}

fn check_offload(inst: &Instance, index: usize, spec: &GridSpec, tau_o_scale: f64) -> VerifyRow {
    let p = &inst.params;
    let (closed_cost, rate_residual) = match allocator::solve_offload(p, inst.eff_gain_down, inst.gain_offload) {
        StrategyResult::Feasible { allocation, breakdown } => {
            let tau_o = allocation.tau_o * tau_o_scale;
            let tau_e = p.frame_duration - allocation.tau_d - tau_o;
            let cost = breakdown.e_decode + tau_o * allocation.p_o - energy::harvest_power(p, inst.eff_gain_down) * tau_e;
            let bits = offload_rate_lhs(p, inst.gain_offload, tau_o, tau_o * allocation.p_o);
            (cost, (bits / p.bits_per_frame() - 1.0).abs())
        }
        StrategyResult::Infeasible(_) => (f64::NAN, f64::NAN),
    };
    let oracle = brute_offload(p, inst.eff_gain_down, inst.gain_offload, spec);
    let (oracle_cost, tolerance) = oracle.map_or((f64::NAN, 0.0), |o| (o.cost, o.tolerance));
    let deviation = closed_cost - oracle_cost;
    VerifyRow {
        problem: Problem::Offload,
        instance: index,
        dist_ap_dev: p.dist_ap_dev,
        dist_dev_server: p.dist_dev_server,
        ops_per_bit: p.ops_per_bit,
        eff_gain_down: inst.eff_gain_down,
        gain_offload: inst.gain_offload,
        closed_form: closed_cost,
        oracle: oracle_cost,
        deviation,
        tolerance,
        rate_residual,
        pass: deviation.abs() <= tolerance && rate_residual <= RATE_TOL,
    }
}

/// Runs both problems on `instances` random feasible cases each, plus a
/// Lambert W sweep against [`bisect_lambert`]. Instances run in parallel;
/// the row order is fixed.
pub fn verify(base: &SystemParams, opts: &VerifyOptions) -> VerifyReport {
    let spec = GridSpec::for_params(base);
    let local = feasible_instances(base, opts.instances, opts.seed, |p, gd, _| {
        allocator::solve_local(p, gd).feasible()
    });
    let offload = feasible_instances(base, opts.instances, opts.seed ^ 0x5eed, |p, gd, go| {
        allocator::solve_offload(p, gd, go).feasible()
    });

    let mut rows: Vec<VerifyRow> = local
        .par_iter()
        .enumerate()
        .map(|(i, inst)| check_local(inst, i, &spec))
        .collect();
    rows.extend(
        offload
            .par_iter()
            .enumerate()
            .map(|(i, inst)| check_offload(inst, i, &spec, opts.tau_o_scale))
            .collect::<Vec<_>>(),
    );
    for (i, x) in lambert_test_points(opts.lambert_points).into_iter().enumerate() {
        let fast = lambert::lambert_w0(x).unwrap_or(f64::NAN);
        let slow = bisect_lambert(x).unwrap_or(f64::NAN);
        let deviation = fast - slow;
        rows.push(VerifyRow {
            problem: Problem::Lambert,
            instance: i,
            dist_ap_dev: f64::NAN,
            dist_dev_server: f64::NAN,
            ops_per_bit: f64::NAN,
            eff_gain_down: x,
            gain_offload: f64::NAN,
            closed_form: fast,
            oracle: slow,
            deviation,
            tolerance: LAMBERT_TOL,
            rate_residual: 0.0,
            pass: deviation.abs() <= LAMBERT_TOL,
        });
    }
    // an instance count shortfall means the generator could not find enough
    // feasible draws, which the caller sees as missing rows
    VerifyReport { rows }
}
