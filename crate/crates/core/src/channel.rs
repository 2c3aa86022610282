//! Rician fading with ITU indoor path loss, and the conjugate beamformer.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::SystemParams;

/// RNG for one Monte-Carlo trial, `seed = master ^ index`.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master_seed ^ trial_index)
}

/// ITU indoor path loss in dB: `20 log10(f_c) + N log10(d) - 28`.
pub fn pathloss_db(d: f64, f_c_mhz: f64, n_coeff: f64) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(Error::Domain(format!("path-loss distance must be >= 1 m, got {d}")));
    }
    if !(f_c_mhz > 0.0) {
        return Err(Error::Domain(format!("carrier frequency must be > 0 MHz, got {f_c_mhz}")));
    }
    Ok(20.0 * f_c_mhz.log10() + n_coeff * d.log10() - 28.0)
}

/// Amplitude scale `sqrt(10^(-L/10))` for a loss of `loss_db`.
pub fn amplitude_scale(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 20.0)
}

/// One Rician-faded amplitude with `E|x|^2 = scale^2`.
///
/// The line-of-sight phase is uniform in `[0, 2pi)`. `k_linear = inf`
/// returns the pure line-of-sight term and `k_linear = 0` pure Rayleigh.
pub fn draw_rician<R: Rng + ?Sized>(rng: &mut R, k_linear: f64, scale: f64) -> Complex64 {
    let theta: f64 = rng.random_range(0.0..TAU);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let scatter = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    let (los_w, nlos_w) = if k_linear.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k_linear / (k_linear + 1.0)).sqrt(), (1.0 / (k_linear + 1.0)).sqrt())
    };
    (Complex64::from_polar(los_w, theta) + scatter * nlos_w) * scale
}

/// Conjugate beamformer `w_i = sqrt(p_t) * exp(j arg h_i)` and the
/// effective gain `|h^H w|^2`, evaluated numerically.
///
/// The weight phases are the phases of `h^H`, so every term of `h^H w` is real
/// and positive and the gain equals `p_t * (sum |h_i|)^2`.
pub fn conjugate_beamform(h: &[Complex64], p_t: f64) -> Result<(Vec<Complex64>, f64)> {
    if h.is_empty() || h.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(Error::Domain("conjugate beamforming needs a nonzero channel".into()));
    }
    let amp = p_t.sqrt();
    let w: Vec<Complex64> = h
        .iter()
        .map(|hi| Complex64::from_polar(amp, hi.arg()))
        .collect();
    let combined: Complex64 = h.iter().zip(&w).map(|(hi, wi)| hi.conj() * wi).sum();
    Ok((w, combined.norm_sqr()))
}

/// One quasi-static draw of both links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// AP to device, one entry per AP antenna.
    pub h: Vec<Complex64>,
    /// Device to fog server.
    pub g: Complex64,
    /// `|h^H w|^2` under conjugate beamforming.
    pub eff_gain_down: f64,
    /// `|g|^2`.
    pub gain_offload: f64,
}

impl ChannelRealization {
    /// Builds a realization straight from effective gains, bypassing fading
    /// (single-antenna downlink with `|h|^2 = eff_gain_down`).
    pub fn from_gains(eff_gain_down: f64, gain_offload: f64) -> Self {
        Self {
            h: vec![Complex64::new(eff_gain_down.max(0.0).sqrt(), 0.0)],
            g: Complex64::new(gain_offload.max(0.0).sqrt(), 0.0),
            eff_gain_down,
            gain_offload,
        }
    }
}

/// Draws `h` (distance `dist_ap_dev`) and `g` (distance `dist_dev_server`).
pub fn realize_channels<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Result<ChannelRealization> {
    let k = params.rician_k_linear();
    let scale_h = amplitude_scale(pathloss_db(
        params.dist_ap_dev,
        params.carrier_freq_mhz,
        params.pathloss_coeff,
    )?);
    let scale_g = amplitude_scale(pathloss_db(
        params.dist_dev_server,
        params.carrier_freq_mhz,
        params.pathloss_coeff,
    )?);
    let h: Vec<Complex64> = (0..params.n_antennas)
        .map(|_| draw_rician(rng, k, scale_h))
        .collect();
    let g = draw_rician(rng, k, scale_g);
    // a draw of exactly zero on every antenna has probability zero
    let eff_gain_down = match conjugate_beamform(&h, params.beamformer_power()) {
        Ok((_, gain)) => gain,
        Err(_) => 0.0,
    };
    Ok(ChannelRealization {
        h,
        g,
        eff_gain_down,
        gain_offload: g.norm_sqr(),
    })
}

/// Writes realizations as CSV, columns
/// `trial,h_abs_0,...,h_abs_{N-1},eff_gain_down,gain_offload`.
pub fn write_realizations_csv<W: Write>(out: W, realizations: &[ChannelRealization]) -> Result<()> {
    let n = realizations.first().map_or(0, |r| r.h.len());
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string()];
    header.extend((0..n).map(|i| format!("h_abs_{i}")));
    header.push("eff_gain_down".into());
    header.push("gain_offload".into());
    wtr.write_record(&header)?;
    for (trial, r) in realizations.iter().enumerate() {
        if r.h.len() != n {
            return Err(Error::Domain("realizations have differing antenna counts".into()));
        }
        let mut row = vec![trial.to_string()];
        row.extend(r.h.iter().map(|x| x.norm().to_string()));
        row.push(r.eff_gain_down.to_string());
        row.push(r.gain_offload.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
