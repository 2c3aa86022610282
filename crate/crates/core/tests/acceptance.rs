//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line; the process exits
//! nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use swipt_core::allocator::{self, decision_sides, Strategy, StrategyResult};
use swipt_core::channel::{realize_channels, trial_rng};
use swipt_core::energy;
use swipt_core::lambert::{lambert_w0, BRANCH_POINT, RESIDUAL_TOL};
use swipt_core::oracle::{self, Problem, VerifyOptions, LAMBERT_TOL, RATE_TOL};
use swipt_core::sim::{self, SweepAxis, SweepOptions, SweepRow};
use swipt_core::SystemParams;

/// Master seed for every statistical criterion. Fixed once.
const SEED: u64 = 20_180_611;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn lambert_correctness() -> Outcome {
    let xs = oracle::lambert_test_points(10_000);
    let start = Instant::now();
    let ws: Vec<f64> = xs.iter().map(|&x| lambert_w0(x).unwrap_or(f64::NAN)).collect();
    let elapsed = start.elapsed();

    let (mut worst_res, mut worst_dev) = (0.0f64, 0.0f64);
    let mut ok = xs.len() == 10_000 && xs[0] >= BRANCH_POINT + 1e-9 * 0.999 && *xs.last().unwrap() <= 1e6;
    for (&x, &w) in xs.iter().zip(&ws) {
        let scale = x.abs().max(1.0);
        let res = (w * w.exp() - x).abs() / scale;
        let dev = (w - oracle::bisect_lambert(x).unwrap_or(f64::NAN)).abs();
        ok &= res <= RESIDUAL_TOL && dev <= LAMBERT_TOL;
        worst_res = worst_res.max(res);
        worst_dev = worst_dev.max(dev);
    }
    ok &= within(elapsed, 1.0);
    outcome(
        ok,
        format!(
            "{} points, max scaled residual {worst_res:.2e}, max |W - bisection| {worst_dev:.2e}, {:.1} ms",
            xs.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let report = oracle::verify(
        &SystemParams::default(),
        &VerifyOptions {
            instances: 100,
            lambert_points: 0,
            seed: SEED,
            tau_o_scale: 1.0,
        },
    );
    let elapsed = start.elapsed();
    let counts_ok = report.count(Problem::Local) == 100 && report.count(Problem::Offload) == 100;
    let worst_rate = report
        .rows
        .iter()
        .filter(|r| r.problem == Problem::Offload)
        .map(|r| r.rate_residual)
        .fold(0.0, f64::max);
    let failures = report.failures().count();
    outcome(
        counts_ok && failures == 0 && worst_rate <= RATE_TOL && within(elapsed, 60.0),
        format!(
            "local {} / offload {} instances, {failures} outside tolerance, max deviation local {:.2e} J offload {:.2e} J, max rate residual {worst_rate:.1e}, {:.1} s",
            report.count(Problem::Local),
            report.count(Problem::Offload),
            report.max_deviation(Problem::Local),
            report.max_deviation(Problem::Offload),
            elapsed.as_secs_f64()
        ),
    )
}

fn decision_consistency() -> Outcome {
    let base = SystemParams::default();
    let mut rng = trial_rng(SEED, 3);
    let (mut n, mut agree, mut offloads, mut attempts) = (0, 0, 0, 0);
    while n < 1000 && attempts < 1_000_000 {
        attempts += 1;
        let params = SystemParams {
            dist_ap_dev: rng.random_range(2.0..12.0),
            dist_dev_server: rng.random_range(2.0..20.0),
            ops_per_bit: 10f64.powf(rng.random_range(2.5..4.6)),
            ..base.clone()
        };
        let ch = realize_channels(&params, &mut rng).expect("valid geometry");
        let offload = allocator::solve_offload(&params, ch.eff_gain_down, ch.gain_offload);
        let local = allocator::solve_local(&params, ch.eff_gain_down);
        let (Some(a2), true) = (offload.allocation(), local.feasible()) else {
            continue;
        };
        n += 1;
        let (lhs, rhs) = decision_sides(&params, ch.eff_gain_down, a2);
        let expected = if lhs > rhs { Strategy::Offload } else { Strategy::LocalCompute };
        let got = allocator::decide(&params, ch.eff_gain_down, ch.gain_offload, f64::INFINITY).strategy();
        if got == expected {
            agree += 1;
        }
        if expected == Strategy::Offload {
            offloads += 1;
        }
    }
    outcome(
        n == 1000 && agree == n,
        format!("{agree}/{n} instances agree ({offloads} offload, {} local)", n - offloads),
    )
}

fn sweep_rows(params: &SystemParams, axis: SweepAxis, values: &[f64], draws: usize) -> Vec<SweepRow> {
    let opts = SweepOptions {
        draws,
        outage_trials: 0,
        frames: 0,
    };
    sim::sweep(params, axis, values, &opts, SEED).expect("sweep runs")
}

/// First crossing of `f` from `>= 0` to `< 0`, interpolated in `x_map(value)`.
fn first_crossing(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64, x_map: impl Fn(f64) -> f64) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (y0, y1) = (f(&w[0]), f(&w[1]));
        if y0 >= 0.0 && y1 < 0.0 {
            let (x0, x1) = (x_map(w[0].value), x_map(w[1].value));
            Some(x0 + (x1 - x0) * y0 / (y0 - y1))
        } else {
            None
        }
    })
}

fn k_crossover() -> Outcome {
    let params = SystemParams {
        dist_ap_dev: 6.0,
        dist_dev_server: 10.0,
        ..SystemParams::default()
    };
    let ks: Vec<f64> = (0..=60).map(|i| 10f64.powf(2.0 + 0.05 * i as f64)).collect();
    let start = Instant::now();
    let rows = sweep_rows(&params, SweepAxis::OpsPerBit, &ks, 1000);
    let elapsed = start.elapsed();
    if rows[0].offload_cost < rows[0].local_cost {
        return outcome(false, "offload already cheaper at K=1e2".into());
    }
    let k_star = first_crossing(&rows, |r| r.offload_cost - r.local_cost, f64::log10).map(|x| 10f64.powf(x));
    match k_star {
        Some(k) => outcome(
            (2500.0..=10_000.0).contains(&k) && within(elapsed, 120.0),
            format!("K* = {k:.0} ops/bit, {:.1} s", elapsed.as_secs_f64()),
        ),
        None => outcome(false, "mean offload cost never drops below mean local cost".into()),
    }
}

fn distance_crossover() -> Outcome {
    let params = SystemParams {
        ops_per_bit: 1e4,
        dist_dev_server: 10.0,
        ..SystemParams::default()
    };
    let ds: Vec<f64> = (2..=15).map(f64::from).collect();
    let rows = sweep_rows(&params, SweepAxis::DistApDev, &ds, 1000);
    let local_surplus = |r: &SweepRow| r.local_e_harvest - r.local_consumed();
    let offload_surplus = |r: &SweepRow| r.offload_e_harvest - r.offload_consumed();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, surplus) in [("local", &local_surplus as &dyn Fn(&SweepRow) -> f64), ("offload", &offload_surplus)] {
        let near = rows.iter().filter(|r| r.value <= 7.0).all(|r| surplus(r) >= 0.0);
        let far = rows.iter().filter(|r| r.value >= 12.0).all(|r| surplus(r) < 0.0);
        let cross = first_crossing(&rows, surplus, |v| v);
        let cross_ok = cross.is_some_and(|d| (7.0..=12.0).contains(&d));
        ok &= near && far && cross_ok;
        detail.push(format!(
            "{name}: covered up to 7 m {near}, short from 12 m {far}, crossover {}",
            cross.map_or("none".into(), |d| format!("{d:.2} m"))
        ));
    }
    outcome(ok, detail.join("; "))
}

fn outage_vs_distance() -> Outcome {
    let start = Instant::now();
    let mut outages = Vec::new();
    for d in [6.0, 10.0, 15.0] {
        let params = SystemParams {
            dist_ap_dev: d,
            dist_dev_server: 10.0,
            ops_per_bit: 1e4,
            ..SystemParams::default()
        };
        let mc = sim::monte_carlo(&params, 100, 200, SEED).expect("monte carlo runs");
        outages.push((d, mc.outage_probability, mc.outage_half_width));
    }
    let elapsed = start.elapsed();
    let p = |i: usize| outages[i].1;
    let ok = p(0) < 0.05 && (0.40..=0.70).contains(&p(2)) && p(0) <= p(1) && p(1) <= p(2) && within(elapsed, 300.0);
    let detail = outages
        .iter()
        .map(|(d, o, hw)| format!("{d} m: {:.2}% +/- {:.2}", 100.0 * o, 100.0 * hw))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ok, format!("{detail} (100 frames x 200 trials), {:.1} s", elapsed.as_secs_f64()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf);
    buf
}

fn simulation_invariants() -> Outcome {
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool");
    let (one, four) = (pool(1), pool(4));
    let mut checked = 0;
    let mut problems = Vec::new();
    for d_t in [2.0, 6.0, 10.0, 15.0] {
        for k in [1e3, 1e4, 3e4] {
            let params = SystemParams {
                dist_ap_dev: d_t,
                ops_per_bit: k,
                ..SystemParams::default()
            };
            for seed in [SEED, 1, 7] {
                let trace = sim::run_trace(&params, 100, seed).expect("trace runs");
                if trace.frames.iter().any(|f| !(f.e_stored_begin >= 0.0) || !(f.e_stored_end() >= 0.0)) {
                    problems.push(format!("negative storage d_t={d_t} K={k} seed={seed}"));
                }
                if let Err(i) = trace.audit() {
                    problems.push(format!("audit mismatch at frame {i}, d_t={d_t} K={k} seed={seed}"));
                }
                if sim::run_trace(&params, 100, seed).expect("trace runs") != trace {
                    problems.push(format!("trace not deterministic d_t={d_t} K={k} seed={seed}"));
                }
                let mc = |pool: &rayon::ThreadPool| {
                    pool.install(|| {
                        let stats = sim::monte_carlo(&params, 50, 40, seed).expect("monte carlo runs");
                        csv_bytes(|b| stats.write_csv(b).expect("csv"))
                    })
                };
                if mc(&one) != mc(&four) {
                    problems.push(format!("monte carlo differs across pools d_t={d_t} K={k} seed={seed}"));
                }
                checked += 1;
            }
        }
    }
    let sweep = |pool: &rayon::ThreadPool| {
        pool.install(|| {
            let opts = SweepOptions {
                draws: 200,
                outage_trials: 20,
                frames: 20,
            };
            let rows = sim::sweep(&SystemParams::default(), SweepAxis::OpsPerBit, &[1e3, 1e4], &opts, SEED).expect("sweep runs");
            csv_bytes(|b| sim::write_sweep_csv(b, SweepAxis::OpsPerBit, &rows).expect("csv"))
        })
    };
    if sweep(&one) != sweep(&four) {
        problems.push("sweep differs across pools".into());
    }
    let detail = if problems.is_empty() {
        format!("{checked} traces: storage >= 0, audit exact, deterministic; 1 vs 4 threads identical")
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

fn random_params<R: Rng>(rng: &mut R) -> SystemParams {
    SystemParams {
        n_antennas: rng.random_range(1..=16),
        p_transmit: log_uniform(rng, 1e-3, 1e2),
        bw_downlink: log_uniform(rng, 1e3, 1e8),
        bw_offload: log_uniform(rng, 1e3, 1e8),
        noise_dev: log_uniform(rng, 1e-16, 1e-6),
        noise_server: log_uniform(rng, 1e-16, 1e-6),
        eh_efficiency: rng.random_range(0.0..=1.0),
        decode_energy_per_bit: log_uniform(rng, 1e-15, 1e-6),
        rate_min: log_uniform(rng, 1.0, 1e8),
        frame_duration: log_uniform(rng, 1e-4, 1e2),
        ops_per_bit: log_uniform(rng, 1.0, 1e7),
        dev_ops_per_sec: log_uniform(rng, 1e5, 1e11),
        immaturity_factor: log_uniform(rng, 1.0, 1e6),
        activity_factor: rng.random_range(0.0..=1.0),
        fanout: rng.random_range(1.0..10.0),
        rician_k_db: rng.random_range(-20.0..30.0),
        dist_ap_dev: rng.random_range(1.0..100.0),
        dist_dev_server: rng.random_range(1.0..100.0),
        normalize_beamformer: rng.random_bool(0.5),
        ..SystemParams::default()
    }
}

fn feasibility_fuzz() -> Outcome {
    let mut rng = trial_rng(SEED, 8);
    let mut problems = Vec::new();
    let (mut n_local, mut n_offload, mut n_neither) = (0, 0, 0);
    for i in 0..10_000 {
        let params = random_params(&mut rng);
        let gd = match rng.random_range(0..4) {
            0 => 0.0,
            1 => log_uniform(&mut rng, 1e-30, 1e-4),
            _ => realize_channels(&params, &mut rng).map_or(0.0, |c| c.eff_gain_down),
        };
        let go = log_uniform(&mut rng, 1e-30, 1.0);
        let e_stored = rng.random_range(0.0..1e-3);
        let run = catch_unwind(AssertUnwindSafe(|| {
            let se = (gd / params.noise_dev).ln_1p() / std::f64::consts::LN_2;
            let r = params.rate_min;
            let local_ok = se > 0.0 && 1.0 / (params.bw_downlink * se) + params.ops_per_bit / params.dev_ops_per_sec <= 1.0 / r;
            let offload_ok = r < params.bw_downlink * se && go > 0.0;
            let local = allocator::solve_local(&params, gd);
            let offload = allocator::solve_offload(&params, gd, go);
            let d = allocator::decide(&params, gd, go, e_stored);
            let mut bad = Vec::new();
            if !local_ok && local.feasible() {
                bad.push("local allocated although infeasible");
            }
            if !offload_ok && offload.feasible() {
                bad.push("offload allocated although infeasible");
            }
            match d.allocation.strategy {
                Strategy::LocalCompute if !local_ok => bad.push("decide chose infeasible local"),
                Strategy::Offload if !offload_ok => bad.push("decide chose infeasible offload"),
                Strategy::HarvestOnly => {}
                _ => {
                    if d.breakdown.cost > e_stored {
                        bad.push("decide spent more than stored");
                    }
                    if d.allocation.check(params.frame_duration, 1e-9).is_err() {
                        bad.push("allocation breaks the frame partition");
                    }
                }
            }
            for res in [&local, &offload] {
                if let StrategyResult::Feasible { allocation, breakdown } = res {
                    if allocation.check(params.frame_duration, 1e-9).is_err() || !breakdown.cost.is_finite() {
                        bad.push("feasible result with broken allocation");
                    }
                }
            }
            if i % 50 == 0 {
                if let Ok(trace) = sim::run_trace(&params, 5, i as u64) {
                    if trace.audit().is_err() || trace.frames.iter().any(|f| !(f.e_stored_begin >= 0.0)) {
                        bad.push("fuzzed trace breaks storage invariants");
                    }
                }
            }
            let _ = energy::throughput(&params, gd, 0.5 * params.frame_duration);
            (bad, local_ok, offload_ok)
        }));
        match run {
            Ok((bad, l, o)) => {
                if !bad.is_empty() {
                    problems.push(format!("draw {i}: {}", bad.join(", ")));
                }
                n_local += l as usize;
                n_offload += o as usize;
                n_neither += (!l && !o) as usize;
            }
            Err(_) => problems.push(format!("draw {i}: panic")),
        }
    }
    let detail = if problems.is_empty() {
        format!("10000 draws, no panic; local feasible {n_local}, offload feasible {n_offload}, neither {n_neither}")
    } else {
        format!("{} violations, first: {}", problems.len(), problems[0])
    };
    outcome(problems.is_empty(), detail)
}

fn main() {
    // keep the fuzz panics (if any) from flooding the report
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [(&str, Check); 8] = [
        ("lambert W correctness", lambert_correctness),
        ("closed form matches brute-force oracle", oracle_equivalence),
        ("decision rule consistency", decision_consistency),
        ("average-cost crossover in K", k_crossover),
        ("harvest covers consumption vs distance", distance_crossover),
        ("outage probability vs distance", outage_vs_distance),
        ("simulation invariants", simulation_invariants),
        ("feasibility logic under fuzzing", feasibility_fuzz),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict} {name}: {}", i + 1, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
