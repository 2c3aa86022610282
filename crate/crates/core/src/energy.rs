//! Per-frame rate and energy terms. All energies are in joules at full
//! double precision; magnitudes range from ~1e-21 (per operation) to ~1.

use serde::Serialize;

use crate::error::{check_range, Error, Result};
use crate::params::SystemParams;

/// Downlink SNR, `|h^H w|^2 / sigma_n^2`.
pub fn snr_down(params: &SystemParams, eff_gain_down: f64) -> f64 {
    eff_gain_down / params.noise_dev
}

/// Downlink spectral efficiency `log2(1 + SNR)` in bit/s/Hz.
pub fn spectral_efficiency(params: &SystemParams, eff_gain_down: f64) -> f64 {
    snr_down(params, eff_gain_down).ln_1p() / std::f64::consts::LN_2
}

/// Bits decoded during `tau_d`, `B_h * tau_d * log2(1 + SNR)`.
pub fn decoded_bits(params: &SystemParams, eff_gain_down: f64, tau_d: f64) -> f64 {
    params.bw_downlink * tau_d * spectral_efficiency(params, eff_gain_down)
}

/// Achievable throughput R in bit/s.
pub fn throughput(params: &SystemParams, eff_gain_down: f64, tau_d: f64) -> Result<f64> {
    check_range("tau_d", tau_d, 0.0, params.frame_duration)?;
    Ok(decoded_bits(params, eff_gain_down, tau_d) / params.frame_duration)
}

/// Received RF power available to the harvester, `|h^H w|^2 + sigma_n^2`.
pub fn received_power(params: &SystemParams, eff_gain_down: f64) -> f64 {
    eff_gain_down + params.noise_dev
}

/// Harvesting power `eta * (|h^H w|^2 + sigma_n^2)`; multiply by a duration
/// to get joules.
pub fn harvest_power(params: &SystemParams, eff_gain_down: f64) -> f64 {
    params.eh_efficiency * received_power(params, eff_gain_down)
}

pub fn harvested_energy(params: &SystemParams, eff_gain_down: f64, tau_e: f64) -> Result<f64> {
    check_range("tau_e", tau_e, 0.0, params.frame_duration)?;
    Ok(harvest_power(params, eff_gain_down) * tau_e)
}

/// Decoding energy, `epsilon` times the decoded bit count.
pub fn decode_energy(params: &SystemParams, eff_gain_down: f64, tau_d: f64) -> Result<f64> {
    check_range("tau_d", tau_d, 0.0, params.frame_duration)?;
    Ok(params.decode_energy_per_bit * decoded_bits(params, eff_gain_down, tau_d))
}

/// Local computation energy for a frame received at `rate` bit/s.
pub fn compute_energy(params: &SystemParams, rate: f64) -> f64 {
    params.energy_per_op() * params.ops_per_bit * rate * params.frame_duration
}

/// Bits the device can push to the server in `tau_o` at power `p_o`.
pub fn offload_bits(params: &SystemParams, gain_offload: f64, p_o: f64, tau_o: f64) -> Result<f64> {
    if !(p_o >= 0.0) || !(gain_offload >= 0.0) {
        return Err(Error::Domain(format!(
            "offload power and gain must be >= 0, got p_o={p_o}, |g|^2={gain_offload}"
        )));
    }
    check_range("tau_o", tau_o, 0.0, params.frame_duration)?;
    let snr = gain_offload * p_o / params.noise_server;
    Ok(params.bw_offload * tau_o * snr.ln_1p() / std::f64::consts::LN_2)
}

/// Energy terms of one frame and the resulting cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub e_decode: f64,
    pub e_compute: f64,
    pub e_offload: f64,
    pub e_harvest: f64,
    /// Net energy drawn from storage; negative means surplus is stored.
    pub cost: f64,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: [&'static str; 5] = ["e_decode", "e_compute", "e_offload", "e_harvest", "cost"];

    /// Energy spent on decoding plus computing or offloading, per `offload`.
    pub fn consumed(&self, offload: bool) -> f64 {
        if offload {
            self.e_decode + self.e_offload
        } else {
            self.e_decode + self.e_compute
        }
    }

    pub fn csv_row(&self) -> [String; 5] {
        [
            self.e_decode.to_string(),
            self.e_compute.to_string(),
            self.e_offload.to_string(),
            self.e_harvest.to_string(),
            self.cost.to_string(),
        ]
    }
}

/// Frame cost `C = E_C + (tau_O p_O - E_C) I_O + E_D - E_H`.
pub fn frame_cost(e_decode: f64, e_compute: f64, e_offload: f64, e_harvest: f64, i_o: bool) -> EnergyBreakdown {
    // each I_O branch equals its expanded form bit for bit
    let transfer = if i_o { e_offload } else { e_compute };
    let cost = transfer + e_decode - e_harvest;
    EnergyBreakdown {
        e_decode,
        e_compute,
        e_offload,
        e_harvest,
        cost,
    }
}
