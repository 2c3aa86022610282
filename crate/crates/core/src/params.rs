//! System constants and their key/value configuration format.
//!
//! A config file is flat TOML: one `key = value` per line, no tables. Every
//! key is optional and falls back to the reference scenario below. Unknown
//! keys are rejected.
//!
//! | key                       | unit            | default     |
//! |---------------------------|-----------------|-------------|
//! | `n_antennas`              | count           | 4           |
//! | `p_transmit`              | W               | 1.0         |
//! | `bw_downlink`             | Hz              | 2e6         |
//! | `bw_offload`              | Hz              | 2e6         |
//! | `noise_dev`               | W               | 1e-11       |
//! | `noise_server`            | W               | 1e-11       |
//! | `eh_efficiency`           | ratio in (0, 1] | 0.6         |
//! | `decode_energy_per_bit`   | J/bit           | 1e-10       |
//! | `rate_min`                | bit/s           | 2e4         |
//! | `frame_duration`          | s               | 1.0         |
//! | `ops_per_bit`             | op/bit          | 1e4         |
//! | `dev_ops_per_sec`         | op/s            | 1e9         |
//! | `immaturity_factor`       | ratio           | 1e4         |
//! | `activity_factor`         | ratio in (0, 1) | 0.1         |
//! | `fanout`                  | ratio           | 3.0         |
//! | `thermal_noise_density`   | J (W/Hz)        | 4e-21       |
//! | `carrier_freq_mhz`        | MHz             | 2400.0      |
//! | `pathloss_coeff`          | ratio           | 22.0        |
//! | `rician_k_db`             | dB              | 3.5         |
//! | `dist_ap_dev`             | m (>= 1)        | 6.0         |
//! | `dist_dev_server`         | m (>= 1)        | 10.0        |
//! | `normalize_beamformer`    | bool            | true        |
//!
//! `thermal_noise_density` is k_B * 290 K. No reference value is given for
//! it by the system model, so it is exposed like every other key.
//!
//! `normalize_beamformer = false` uses the unnormalized conjugate beamformer
//! `w_i = sqrt(P_T) * exp(j * arg(h_i))`, which radiates `N_A * P_T` in total.
//! The default scales it by `1/sqrt(N_A)` so that `||w||^2 = P_T`.
//!
//! Environment variables named `SWIPT_<KEY>` (upper case) override single keys.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix for environment-variable overrides.
pub const ENV_PREFIX: &str = "SWIPT_";

/// Every constant of the system model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    pub n_antennas: u32,
    pub p_transmit: f64,
    pub bw_downlink: f64,
    pub bw_offload: f64,
    pub noise_dev: f64,
    pub noise_server: f64,
    pub eh_efficiency: f64,
    pub decode_energy_per_bit: f64,
    pub rate_min: f64,
    pub frame_duration: f64,
    pub ops_per_bit: f64,
    pub dev_ops_per_sec: f64,
    pub immaturity_factor: f64,
    pub activity_factor: f64,
    pub fanout: f64,
    pub thermal_noise_density: f64,
    pub carrier_freq_mhz: f64,
    pub pathloss_coeff: f64,
    pub rician_k_db: f64,
    pub dist_ap_dev: f64,
    pub dist_dev_server: f64,
    pub normalize_beamformer: bool,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            p_transmit: 1.0,
            bw_downlink: 2e6,
            bw_offload: 2e6,
            noise_dev: 1e-11,
            noise_server: 1e-11,
            eh_efficiency: 0.6,
            decode_energy_per_bit: 100e-12,
            rate_min: 20e3,
            frame_duration: 1.0,
            ops_per_bit: 1e4,
            dev_ops_per_sec: 1e9,
            immaturity_factor: 1e4,
            activity_factor: 0.1,
            fanout: 3.0,
            thermal_noise_density: 4.0e-21,
            carrier_freq_mhz: 2400.0,
            pathloss_coeff: 22.0,
            rician_k_db: 3.5,
            dist_ap_dev: 6.0,
            dist_dev_server: 10.0,
            normalize_beamformer: true,
        }
    }
}

/// Recognised config keys, in serialization order.
pub const KEYS: &[&str] = &[
    "n_antennas",
    "p_transmit",
    "bw_downlink",
    "bw_offload",
    "noise_dev",
    "noise_server",
    "eh_efficiency",
    "decode_energy_per_bit",
    "rate_min",
    "frame_duration",
    "ops_per_bit",
    "dev_ops_per_sec",
    "immaturity_factor",
    "activity_factor",
    "fanout",
    "thermal_noise_density",
    "carrier_freq_mhz",
    "pathloss_coeff",
    "rician_k_db",
    "dist_ap_dev",
    "dist_dev_server",
    "normalize_beamformer",
];

/// `10^(x_db / 10)`.
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

impl SystemParams {
    /// Number of bits that must be decoded (and then computed or offloaded) per frame.
    pub fn bits_per_frame(&self) -> f64 {
        self.rate_min * self.frame_duration
    }

    /// Energy per logic operation, `F_0 * alpha * M_c * N_0 * ln 2`.
    pub fn energy_per_op(&self) -> f64 {
        self.fanout
            * self.activity_factor
            * self.immaturity_factor
            * self.thermal_noise_density
            * std::f64::consts::LN_2
    }

    /// Rician K factor as a linear ratio.
    pub fn rician_k_linear(&self) -> f64 {
        db_to_linear(self.rician_k_db)
    }

    /// Transmit power scale fed into the conjugate beamformer.
    pub fn beamformer_power(&self) -> f64 {
        if self.normalize_beamformer {
            self.p_transmit / f64::from(self.n_antennas)
        } else {
            self.p_transmit
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                })
            }
        }

        if self.n_antennas == 0 {
            return Err(Error::InvalidParam {
                field: "n_antennas",
                reason: "must be at least 1".into(),
            });
        }
        positive("p_transmit", self.p_transmit)?;
        positive("bw_downlink", self.bw_downlink)?;
        positive("bw_offload", self.bw_offload)?;
        positive("noise_dev", self.noise_dev)?;
        positive("noise_server", self.noise_server)?;
        if !(self.eh_efficiency > 0.0 && self.eh_efficiency <= 1.0) {
            return Err(Error::InvalidParam {
                field: "eh_efficiency",
                reason: format!("must lie in (0, 1], got {}", self.eh_efficiency),
            });
        }
        non_negative("decode_energy_per_bit", self.decode_energy_per_bit)?;
        positive("rate_min", self.rate_min)?;
        positive("frame_duration", self.frame_duration)?;
        positive("ops_per_bit", self.ops_per_bit)?;
        positive("dev_ops_per_sec", self.dev_ops_per_sec)?;
        non_negative("immaturity_factor", self.immaturity_factor)?;
        if !(self.activity_factor > 0.0 && self.activity_factor < 1.0) {
            return Err(Error::InvalidParam {
                field: "activity_factor",
                reason: format!("must lie in (0, 1), got {}", self.activity_factor),
            });
        }
        non_negative("fanout", self.fanout)?;
        non_negative("thermal_noise_density", self.thermal_noise_density)?;
        positive("carrier_freq_mhz", self.carrier_freq_mhz)?;
        non_negative("pathloss_coeff", self.pathloss_coeff)?;
        if self.rician_k_db.is_nan() || self.rician_k_db == f64::NEG_INFINITY {
            return Err(Error::InvalidParam {
                field: "rician_k_db",
                reason: format!("must be a number or +inf, got {}", self.rician_k_db),
            });
        }
        for (field, d) in [
            ("dist_ap_dev", self.dist_ap_dev),
            ("dist_dev_server", self.dist_dev_server),
        ] {
            if !(d.is_finite() && d >= 1.0) {
                return Err(Error::InvalidParam {
                    field,
                    reason: format!("path-loss model needs a distance >= 1 m, got {d}"),
                });
            }
        }
        let bits = self.bits_per_frame();
        if !(bits.is_finite() && bits > 0.0) {
            return Err(Error::InvalidParam {
                field: "rate_min",
                reason: format!("rate_min * frame_duration must be a positive bit count, got {bits}"),
            });
        }
        Ok(())
    }

    /// Flat `key = value` text that [`load_params`] parses back to `self` exactly.
    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("flat struct of scalars always serializes")
    }

    /// Returns a copy with one numeric key replaced.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        insert_key(&mut table, key, number_to_value(key, value))?;
        from_table(table)
    }
}

fn number_to_value(key: &str, value: f64) -> toml::Value {
    if key == "n_antennas" && value.fract() == 0.0 && value >= 0.0 {
        toml::Value::Integer(value as i64)
    } else {
        toml::Value::Float(value)
    }
}

fn insert_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    if !KEYS.contains(&key) {
        return Err(Error::UnknownKey(key.to_string()));
    }
    table.insert(key.to_string(), value);
    Ok(())
}

fn from_table(table: toml::Table) -> Result<SystemParams> {
    for (key, value) in &table {
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKey(key.clone()));
        }
        if value.is_table() || value.is_array() {
            return Err(Error::Parse(format!("`{key}` must be a scalar")));
        }
    }
    let params: SystemParams = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    params.validate()?;
    Ok(params)
}

fn parse_table(source: &str) -> Result<toml::Table> {
    source
        .parse::<toml::Table>()
        .map_err(|e| Error::Parse(e.to_string()))
}

/// Parses and validates a config. Empty input yields the defaults.
pub fn load_params(source: &str) -> Result<SystemParams> {
    from_table(parse_table(source)?)
}

/// Like [`load_params`], then applies `SWIPT_<KEY>` overrides from `vars`.
pub fn load_params_with_env<I, K, V>(source: &str, vars: I) -> Result<SystemParams>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut table = parse_table(source)?;
    for (name, raw) in vars {
        let Some(key) = name.as_ref().strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let key = key.to_ascii_lowercase();
        let raw = raw.as_ref().trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .ok_or_else(|| Error::Parse(format!("cannot parse {ENV_PREFIX}{} = {raw:?}", key.to_ascii_uppercase())))?;
        insert_key(&mut table, &key, value)?;
    }
    from_table(table)
}

/// [`load_params_with_env`] over the process environment.
pub fn load_params_from_env(source: &str) -> Result<SystemParams> {
    load_params_with_env(source, std::env::vars())
}
