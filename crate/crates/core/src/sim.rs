//! Multi-frame energy-storage dynamics and Monte-Carlo statistics.
//!
//! Storage starts empty. Each frame draws a fresh channel, runs
//! [`allocator::decide`] against the stored energy, and updates storage:
//! `E_next = E - C` when the frame is processed, and `E_next = E + E_H(T)`
//! when the device only harvests. Storage is unbounded.
//!
//! Trials run on the current rayon pool with one RNG stream per trial
//! (`seed = master ^ trial`), and results are reduced in trial order, so
//! output does not depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::allocator::{self, Allocation, Strategy};
use crate::channel::{realize_channels, trial_rng, ChannelRealization};
use crate::energy;
use crate::error::{Error, Result};
use crate::params::SystemParams;

/// 95% normal-approximation quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Version of the CSV column layouts written by this module.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    /// Storage at the start of the frame.
    pub e_stored_begin: f64,
    /// Harvest-only frame.
    pub i_s: bool,
    pub strategy: Strategy,
    /// Optimal cost of the preferred strategy; `+inf` if neither is feasible.
    pub cost: f64,
    /// Energy harvested during the frame as actually allocated.
    pub e_harvest: f64,
    /// Energy a whole-frame harvest would collect on this channel.
    pub e_harvest_full: f64,
    pub allocation: Allocation,
}

impl FrameRecord {
    /// Storage after this frame.
    pub fn e_stored_end(&self) -> f64 {
        if self.i_s {
            self.e_stored_begin + self.e_harvest_full
        } else {
            self.e_stored_begin - self.cost
        }
    }
}

/// One frame of the storage recursion.
pub fn step_frame(params: &SystemParams, channel: &ChannelRealization, frame_index: usize, e_stored: f64) -> (FrameRecord, f64) {
    let decision = allocator::decide(params, channel.eff_gain_down, channel.gain_offload, e_stored);
    let cost = match decision.preferred() {
        Some(Strategy::LocalCompute) => decision.local.cost(),
        Some(Strategy::Offload) => decision.offload.cost(),
        _ => None,
    }
    .unwrap_or(f64::INFINITY);
    let e_harvest_full = energy::harvest_power(params, channel.eff_gain_down) * params.frame_duration;
    let i_s = !(e_stored - cost >= 0.0);
    debug_assert_eq!(i_s, decision.strategy() == Strategy::HarvestOnly);
    let record = FrameRecord {
        frame_index,
        e_stored_begin: e_stored,
        i_s,
        strategy: decision.strategy(),
        cost,
        e_harvest: decision.breakdown.e_harvest,
        e_harvest_full,
        allocation: decision.allocation,
    };
    let next = record.e_stored_end();
    (record, next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    /// Mean of `E_begin - E_end` per frame (negative: storage grows).
    pub mean_net_cost: f64,
    pub mean_harvested: f64,
    pub outage_probability: f64,
    pub final_storage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub params: SystemParams,
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub summary: TraceSummary,
}

impl SimTrace {
    /// Replays the recursion from empty storage; `Err` names the first frame that differs.
    pub fn audit(&self) -> std::result::Result<(), usize> {
        let mut e = 0.0;
        for r in &self.frames {
            if r.e_stored_begin != e || r.e_stored_begin < 0.0 || r.i_s != !(r.e_stored_begin - r.cost >= 0.0) {
                return Err(r.frame_index);
            }
            e = if r.i_s { e + r.e_harvest_full } else { e - r.cost };
        }
        Ok(())
    }

    /// Columns: `frame,e_stored_begin,i_s,strategy,cost,e_harvest,e_harvest_full,tau_e,tau_d,tau_c,tau_o,p_o,i_o`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["frame", "e_stored_begin", "i_s", "strategy", "cost", "e_harvest", "e_harvest_full"];
        header.extend(&Allocation::CSV_HEADER[..6]);
        wtr.write_record(&header)?;
        for r in &self.frames {
            let alloc = r.allocation.csv_row();
            let mut row = vec![
                r.frame_index.to_string(),
                r.e_stored_begin.to_string(),
                u8::from(r.i_s).to_string(),
                r.strategy.to_string(),
                r.cost.to_string(),
                r.e_harvest.to_string(),
                r.e_harvest_full.to_string(),
            ];
            row.extend(alloc[..6].iter().cloned());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn summarize(frames: &[FrameRecord]) -> TraceSummary {
    let n = frames.len() as f64;
    let net: f64 = frames.iter().map(|r| r.e_stored_begin - r.e_stored_end()).sum();
    let harvested: f64 = frames.iter().map(|r| r.e_harvest).sum();
    let outages = frames.iter().filter(|r| r.i_s).count() as f64;
    TraceSummary {
        mean_net_cost: net / n,
        mean_harvested: harvested / n,
        outage_probability: outages / n,
        final_storage: frames.last().map_or(0.0, FrameRecord::e_stored_end),
    }
}

/// `n_frames` frames from empty storage, one channel draw per frame.
pub fn run_trace(params: &SystemParams, n_frames: usize, seed: u64) -> Result<SimTrace> {
    if n_frames == 0 {
        return Err(Error::Domain("a trace needs at least one frame".into()));
    }
    params.validate()?;
    let mut rng = trial_rng(seed, 0);
    let mut frames = Vec::with_capacity(n_frames);
    let mut e = 0.0;
    for i in 0..n_frames {
        let ch = realize_channels(params, &mut rng)?;
        let (record, next) = step_frame(params, &ch, i, e);
        frames.push(record);
        e = next;
    }
    Ok(SimTrace {
        params: params.clone(),
        seed,
        summary: summarize(&frames),
        frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameStats {
    pub frame: usize,
    pub mean_storage: f64,
    pub storage_half_width: f64,
    pub outage_rate: f64,
    pub outage_half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloStats {
    pub n_trials: usize,
    pub n_frames: usize,
    pub per_frame: Vec<FrameStats>,
    pub outage_probability: f64,
    pub outage_half_width: f64,
    pub mean_net_cost: f64,
    pub mean_harvested: f64,
}

impl MonteCarloStats {
    /// Columns: `frame,mean_storage,storage_half_width,outage_rate,outage_half_width`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for s in &self.per_frame {
            wtr.serialize(s)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "{} trials x {} frames: outage {:.4} +/- {:.4}, mean net cost {:.4e} J, mean harvested {:.4e} J",
            self.n_trials, self.n_frames, self.outage_probability, self.outage_half_width, self.mean_net_cost, self.mean_harvested
        )
    }
}

/// Sample mean and 95% half-width, summed in slice order.
fn mean_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

fn aggregate(n_frames: usize, traces: &[SimTrace]) -> MonteCarloStats {
    let per_frame = (0..n_frames)
        .map(|i| {
            let storage: Vec<f64> = traces.iter().map(|t| t.frames[i].e_stored_begin).collect();
            let outage: Vec<f64> = traces.iter().map(|t| f64::from(u8::from(t.frames[i].i_s))).collect();
            let (mean_storage, storage_half_width) = mean_half_width(&storage);
            let (outage_rate, outage_half_width) = mean_half_width(&outage);
            FrameStats {
                frame: i,
                mean_storage,
                storage_half_width,
                outage_rate,
                outage_half_width,
            }
        })
        .collect();
    let outage: Vec<f64> = traces.iter().map(|t| t.summary.outage_probability).collect();
    let (outage_probability, outage_half_width) = mean_half_width(&outage);
    let n = traces.len() as f64;
    MonteCarloStats {
        n_trials: traces.len(),
        n_frames,
        per_frame,
        outage_probability,
        outage_half_width,
        mean_net_cost: traces.iter().map(|t| t.summary.mean_net_cost).sum::<f64>() / n,
        mean_harvested: traces.iter().map(|t| t.summary.mean_harvested).sum::<f64>() / n,
    }
}

/// One trace per seed, aggregated in seed order.
pub fn monte_carlo_with_seeds(params: &SystemParams, n_frames: usize, seeds: &[u64]) -> Result<MonteCarloStats> {
    if seeds.is_empty() {
        return Err(Error::Domain("monte carlo needs at least one trial".into()));
    }
    let traces = seeds
        .par_iter()
        .map(|&s| run_trace(params, n_frames, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(n_frames, &traces))
}

/// `n_trials` traces with seeds `master_seed ^ trial`.
pub fn monte_carlo(params: &SystemParams, n_frames: usize, n_trials: usize, master_seed: u64) -> Result<MonteCarloStats> {
    let seeds: Vec<u64> = (0..n_trials as u64).map(|t| master_seed ^ t).collect();
    monte_carlo_with_seeds(params, n_frames, &seeds)
}

/// Parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    OpsPerBit,
    DistApDev,
    DistDevServer,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::OpsPerBit => "ops_per_bit",
            SweepAxis::DistApDev => "dist_ap_dev",
            SweepAxis::DistDevServer => "dist_dev_server",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" | "ops_per_bit" => Ok(SweepAxis::OpsPerBit),
            "dt" | "d_t" | "dist_ap_dev" => Ok(SweepAxis::DistApDev),
            "ds" | "d_s" | "dist_dev_server" => Ok(SweepAxis::DistDevServer),
            other => Err(Error::Domain(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Independent channel draws averaged per value.
    pub draws: usize,
    /// Storage-simulation trials for the outage column; 0 skips it.
    pub outage_trials: usize,
    pub frames: usize,
}

/// Per-value averages. Strategy means run over the draws where that strategy
/// is feasible; decision fractions assume unlimited storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub n_draws: usize,
    pub n_local_feasible: usize,
    pub n_offload_feasible: usize,
    pub local_e_decode: f64,
    pub local_e_compute: f64,
    pub local_e_harvest: f64,
    pub local_cost: f64,
    pub offload_e_decode: f64,
    pub offload_e_offload: f64,
    pub offload_e_harvest: f64,
    pub offload_cost: f64,
    pub frac_local: f64,
    pub frac_offload: f64,
    pub frac_infeasible: f64,
    pub outage: f64,
    pub outage_half_width: f64,
}

impl SweepRow {
    pub fn local_consumed(&self) -> f64 {
        self.local_e_decode + self.local_e_compute
    }

    pub fn offload_consumed(&self) -> f64 {
        self.offload_e_decode + self.offload_e_offload
    }
}

#[derive(Default)]
struct Acc {
    n: usize,
    sums: [f64; 4],
}

impl Acc {
    fn add(&mut self, xs: [f64; 4]) {
        self.n += 1;
        for (s, x) in self.sums.iter_mut().zip(xs) {
            *s += x;
        }
    }

    fn means(&self) -> [f64; 4] {
        let n = self.n as f64;
        self.sums.map(|s| if self.n == 0 { f64::NAN } else { s / n })
    }
}

/// Evaluates one parameter set over `draws` channel draws. Draw `t` uses
/// seed `master ^ t` for every swept value.
pub fn sweep_point(params: &SystemParams, opts: &SweepOptions, master_seed: u64) -> Result<SweepRow> {
    let draws = (0..opts.draws as u64)
        .into_par_iter()
        .map(|t| realize_channels(params, &mut trial_rng(master_seed, t)))
        .collect::<Result<Vec<_>>>()?;

    let (mut local, mut offload) = (Acc::default(), Acc::default());
    let (mut n_local, mut n_offload) = (0usize, 0usize);
    for ch in &draws {
        let d = allocator::decide(params, ch.eff_gain_down, ch.gain_offload, f64::INFINITY);
        if let Some(b) = d.local.breakdown() {
            local.add([b.e_decode, b.e_compute, b.e_harvest, b.cost]);
        }
        if let Some(b) = d.offload.breakdown() {
            offload.add([b.e_decode, b.e_offload, b.e_harvest, b.cost]);
        }
        match d.preferred() {
            Some(Strategy::LocalCompute) => n_local += 1,
            Some(Strategy::Offload) => n_offload += 1,
            _ => {}
        }
    }
    let n = draws.len().max(1) as f64;
    let (outage, outage_half_width) = if opts.outage_trials > 0 {
        let mc = monte_carlo(params, opts.frames, opts.outage_trials, master_seed)?;
        (mc.outage_probability, mc.outage_half_width)
    } else {
        (f64::NAN, f64::NAN)
    };
    let [l_ed, l_ec, l_eh, l_c] = local.means();
    let [o_ed, o_eo, o_eh, o_c] = offload.means();
    Ok(SweepRow {
        value: f64::NAN,
        n_draws: draws.len(),
        n_local_feasible: local.n,
        n_offload_feasible: offload.n,
        local_e_decode: l_ed,
        local_e_compute: l_ec,
        local_e_harvest: l_eh,
        local_cost: l_c,
        offload_e_decode: o_ed,
        offload_e_offload: o_eo,
        offload_e_harvest: o_eh,
        offload_cost: o_c,
        frac_local: n_local as f64 / n,
        frac_offload: n_offload as f64 / n,
        frac_infeasible: (draws.len() - n_local - n_offload) as f64 / n,
        outage,
        outage_half_width,
    })
}

pub fn sweep(params: &SystemParams, axis: SweepAxis, values: &[f64], opts: &SweepOptions, master_seed: u64) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Domain("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let p = params.with_value(axis.key(), v)?;
            let mut row = sweep_point(&p, opts, master_seed)?;
            row.value = v;
            Ok(row)
        })
        .collect()
}

/// Columns follow [`SweepRow`] field order, with `value` renamed to the axis key.
pub fn write_sweep_csv<W: Write>(out: W, axis: SweepAxis, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record([
        axis.key(),
        "n_draws",
        "n_local_feasible",
        "n_offload_feasible",
        "local_e_decode",
        "local_e_compute",
        "local_e_harvest",
        "local_cost",
        "offload_e_decode",
        "offload_e_offload",
        "offload_e_harvest",
        "offload_cost",
        "frac_local",
        "frac_offload",
        "frac_infeasible",
        "outage",
        "outage_half_width",
    ])?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
