//! `swipt`: allocation reports, parameter sweeps, storage simulation and
//! oracle verification from the command line.
//!
//! Exit status: 0 success, 1 usage or I/O error, 2 invalid configuration,
//! 3 verification failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use swipt_core::allocator::{self, decision_sides, Decision, StrategyResult};
use swipt_core::oracle::{self, VerifyOptions};
use swipt_core::params::load_params_from_env;
use swipt_core::sim::{self, SweepAxis, SweepOptions};
use swipt_core::{realize_channels, trial_rng, Strategy, SystemParams};

#[derive(Parser)]
#[command(name = "swipt", version, about = "Energy-optimal SWIPT allocation, sweeps and storage simulation")]
struct Cli {
    /// TOML parameter file; missing keys take their defaults. `SWIPT_<KEY>`
    /// environment variables override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for CSV and summary output (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one frame: both strategies, the decision and the chosen allocation.
    Allocate(AllocateArgs),
    /// Average energies, decision rates and outage over a parameter axis.
    Sweep(SweepArgs),
    /// Multi-frame storage trace plus Monte-Carlo outage statistics.
    Simulate(SimulateArgs),
    /// Check the closed forms against the brute-force oracle.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct AllocateArgs {
    /// Effective downlink gain |h^H w|^2 (skips channel drawing).
    #[arg(long, requires = "gain_offload")]
    gain_down: Option<f64>,

    /// Offload link gain |g|^2.
    #[arg(long, requires = "gain_down")]
    gain_offload: Option<f64>,

    /// Number of channel draws; above 1 prints aggregate decision rates.
    #[arg(long, default_value_t = 1, conflicts_with = "gain_down")]
    repeat: usize,

    /// Energy in storage at the start of the frame, in joules.
    #[arg(long, default_value_t = f64::INFINITY)]
    stored: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// `K` (ops_per_bit), `dt` (dist_ap_dev) or `ds` (dist_dev_server).
    #[arg(long)]
    axis: String,

    /// Comma-separated axis values.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    values: Vec<f64>,

    /// Channel draws per value, also the number of outage trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,

    /// Frames per outage trial; 0 skips the outage simulation.
    #[arg(long, default_value_t = 100)]
    frames: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    frames: usize,

    #[arg(long, default_value_t = 200)]
    trials: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random feasible instances per problem.
    #[arg(long, default_value_t = 100)]
    instances: usize,

    /// Lambert W test points.
    #[arg(long, default_value_t = 1000, hide = true)]
    lambert_points: usize,

    /// Scales the closed-form offload time by 1.01 to exercise the failure path.
    #[arg(long, hide = true)]
    inject_bug: bool,
}

enum Failure {
    Usage(anyhow::Error),
    Config(anyhow::Error),
    Verification(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<swipt_core::Error>() {
            Some(swipt_core::Error::Io(_) | swipt_core::Error::Csv(_)) | None => Failure::Usage(e),
            Some(_) => Failure::Config(e),
        }
    }
}

impl From<swipt_core::Error> for Failure {
    fn from(e: swipt_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn load(cli: &Cli) -> Outcome<SystemParams> {
    let source = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Usage)?,
        None => String::new(),
    };
    Ok(load_params_from_env(&source)?)
}

fn out_dir(cli: &Cli) -> Outcome<PathBuf> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Usage)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Outcome<fs::File> {
    let path = dir.join(name);
    fs::File::create(&path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Usage)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Outcome {
    create(dir, name)?
        .write_all(text.as_bytes())
        .with_context(|| format!("writing {name}"))
        .map_err(Failure::Usage)
}

fn describe(name: &str, result: &StrategyResult) -> String {
    match result {
        StrategyResult::Feasible { allocation: a, breakdown: b } => format!(
            "{name}: tau_e={:.6e} s tau_d={:.6e} s tau_c={:.6e} s tau_o={:.6e} s p_o={:.6e} W\n\
             {:width$}  E_D={:.6e} J E_C={:.6e} J E_O={:.6e} J E_H={:.6e} J cost={:.6e} J",
            a.tau_e,
            a.tau_d,
            a.tau_c,
            a.tau_o,
            a.p_o,
            "",
            b.e_decode,
            b.e_compute,
            b.e_offload,
            b.e_harvest,
            b.cost,
            width = name.len()
        ),
        StrategyResult::Infeasible(why) => format!("{name}: infeasible ({why})"),
    }
}

fn report(params: &SystemParams, gain_down: f64, gain_offload: f64, d: &Decision) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "channel: eff_gain_down={gain_down:.6e} gain_offload={gain_offload:.6e}");
    let _ = writeln!(s, "{}", describe("local  ", &d.local));
    let _ = writeln!(s, "{}", describe("offload", &d.offload));
    if let Some(a2) = d.offload.allocation().filter(|_| d.local.feasible()) {
        let (lhs, rhs) = decision_sides(params, gain_down, a2);
        let _ = writeln!(s, "side test: lhs={lhs:.6e} rhs={rhs:.6e}");
    }
    let a = &d.allocation;
    match (a.strategy, d.preferred()) {
        (Strategy::HarvestOnly, None) => {
            let _ = writeln!(s, "decision: harvest (I_s=1): neither strategy is feasible on this channel, tau_e={}", a.tau_e);
        }
        (Strategy::HarvestOnly, Some(p)) => {
            let _ = writeln!(
                s,
                "decision: harvest (I_s=1): {p} costs {:.6e} J, more than the stored energy",
                d.local.cost().into_iter().chain(d.offload.cost()).fold(f64::INFINITY, f64::min)
            );
        }
        (chosen, _) => {
            let _ = writeln!(s, "decision: {chosen} (I_O={}), cost {:.6e} J", a.i_o as u8, d.breakdown.cost);
        }
    }
    s
}

fn cmd_allocate(cli: &Cli, args: &AllocateArgs) -> Outcome {
    let params = load(cli)?;
    if args.stored.is_nan() || args.stored < 0.0 {
        return Err(usage("--stored must be >= 0"));
    }
    if let (Some(gd), Some(go)) = (args.gain_down, args.gain_offload) {
        if !(gd >= 0.0 && go >= 0.0 && gd.is_finite() && go.is_finite()) {
            return Err(usage("--gain-down and --gain-offload must be finite and >= 0"));
        }
        let d = allocator::decide(&params, gd, go, args.stored);
        print!("{}", report(&params, gd, go, &d));
        return Ok(());
    }
    if args.repeat == 0 {
        return Err(usage("--repeat must be at least 1"));
    }
    let draws = (0..args.repeat as u64)
        .into_par_iter()
        .map(|t| realize_channels(&params, &mut trial_rng(cli.seed, t)))
        .collect::<swipt_core::Result<Vec<_>>>()?;
    let decisions: Vec<Decision> = draws
        .iter()
        .map(|c| allocator::decide(&params, c.eff_gain_down, c.gain_offload, args.stored))
        .collect();
    if args.repeat == 1 {
        print!("{}", report(&params, draws[0].eff_gain_down, draws[0].gain_offload, &decisions[0]));
    } else {
        let count = |s: Strategy| decisions.iter().filter(|d| d.strategy() == s).count();
        let n = decisions.len() as f64;
        println!(
            "{} draws: local {:.2}%, offload {:.2}%, harvest {:.2}%",
            decisions.len(),
            100.0 * count(Strategy::LocalCompute) as f64 / n,
            100.0 * count(Strategy::Offload) as f64 / n,
            100.0 * count(Strategy::HarvestOnly) as f64 / n
        );
    }
    if cli.out_dir.is_some() {
        let dir = out_dir(cli)?;
        let mut csv = String::from("draw,eff_gain_down,gain_offload,local_cost,offload_cost,");
        csv.push_str(&allocator::Allocation::CSV_HEADER.join(","));
        csv.push('\n');
        for (t, (c, d)) in draws.iter().zip(&decisions).enumerate() {
            let cost = |r: &StrategyResult| r.cost().map_or("inf".to_string(), |x| x.to_string());
            let _ = writeln!(
                csv,
                "{t},{},{},{},{},{}",
                c.eff_gain_down,
                c.gain_offload,
                cost(&d.local),
                cost(&d.offload),
                d.allocation.csv_row().join(",")
            );
        }
        write_text(&dir, "allocations.csv", &csv)?;
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Outcome {
    let params = load(cli)?;
    let axis: SweepAxis = args.axis.parse().map_err(|e: swipt_core::Error| usage(e.to_string()))?;
    if args.values.is_empty() {
        return Err(usage("--values needs at least one value"));
    }
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let opts = SweepOptions {
        draws: args.trials,
        outage_trials: if args.frames > 0 { args.trials } else { 0 },
        frames: args.frames,
    };
    let rows = sim::sweep(&params, axis, &args.values, &opts, cli.seed)?;
    let dir = out_dir(cli)?;
    sim::write_sweep_csv(create(&dir, "sweep.csv")?, axis, &rows)?;
    let mut summary = format!("sweep over {} ({} draws per value, seed {})\n", axis.key(), args.trials, cli.seed);
    for r in &rows {
        let _ = writeln!(
            summary,
            "{}={}: local cost {:.4e} J, offload cost {:.4e} J, local {:.1}% offload {:.1}% infeasible {:.1}%, outage {:.2}%",
            axis.key(),
            r.value,
            r.local_cost,
            r.offload_cost,
            100.0 * r.frac_local,
            100.0 * r.frac_offload,
            100.0 * r.frac_infeasible,
            100.0 * r.outage
        );
    }
    write_text(&dir, "summary.txt", &summary)?;
    write_text(&dir, "params.toml", &params.to_config_string())?;
    print!("{summary}");
    Ok(())
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Outcome {
    let params = load(cli)?;
    if args.frames == 0 || args.trials == 0 {
        return Err(usage("--frames and --trials must be at least 1"));
    }
    let trace = sim::run_trace(&params, args.frames, cli.seed)?;
    let stats = sim::monte_carlo(&params, args.frames, args.trials, cli.seed)?;
    let dir = out_dir(cli)?;
    trace.write_csv(create(&dir, "trace.csv")?)?;
    stats.write_csv(create(&dir, "monte_carlo.csv")?)?;
    let t = &trace.summary;
    let summary = format!(
        "trace (seed {}): outage {:.4}, mean net cost {:.4e} J, mean harvested {:.4e} J, final storage {:.4e} J\n{}\n",
        cli.seed,
        t.outage_probability,
        t.mean_net_cost,
        t.mean_harvested,
        t.final_storage,
        stats.summary()
    );
    write_text(&dir, "summary.txt", &summary)?;
    write_text(&dir, "params.toml", &params.to_config_string())?;
    print!("{summary}");
    Ok(())
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Outcome {
    let params = load(cli)?;
    if args.instances == 0 {
        return Err(usage("--instances must be at least 1"));
    }
    let opts = VerifyOptions {
        instances: args.instances,
        lambert_points: args.lambert_points,
        seed: cli.seed,
        tau_o_scale: if args.inject_bug { 1.01 } else { 1.0 },
    };
    let report = oracle::verify(&params, &opts);
    let dir = out_dir(cli)?;
    report.write_csv(create(&dir, "verify.csv")?)?;
    println!("{}", report.summary());
    if report.all_pass() {
        return Ok(());
    }
    for r in report.failures() {
        eprintln!(
            "FAIL {:?} #{}: d_t={} d_s={} K={} gains=({:e}, {:e}) closed={:e} oracle={:e} dev={:e} tol={:e} rate_residual={:e}",
            r.problem,
            r.instance,
            r.dist_ap_dev,
            r.dist_dev_server,
            r.ops_per_bit,
            r.eff_gain_down,
            r.gain_offload,
            r.closed_form,
            r.oracle,
            r.deviation,
            r.tolerance,
            r.rate_residual
        );
    }
    Err(Failure::Verification(format!("{} instances outside tolerance", report.failures().count())))
}

fn run(cli: &Cli) -> Outcome {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Allocate(a) => cmd_allocate(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Verify(a) => cmd_verify(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("invalid configuration: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(3)
        }
    }
}
