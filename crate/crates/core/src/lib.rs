//! Energy-optimal time and power allocation for a time-switching SWIPT
//! ultra-low-power device that either computes locally or offloads to a fog
//! server, plus brute-force verification and storage simulation.
//!
//! Modules, bottom-up:
//!
//! - [`params`]: system constants and the key/value config format
//! - [`channel`]: Rician fading, ITU indoor path loss, conjugate beamforming
//! - [`energy`]: rate, harvest, decode, compute and offload energies; frame cost
//! - [`lambert`]: principal-branch Lambert W
//! - [`allocator`]: closed-form allocations and the local/offload decision
//! - [`oracle`]: grid-search reference solutions used to check the closed forms
//! - [`sim`]: energy-storage recursion, Monte-Carlo statistics, sweeps

// `!(x >= 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod channel;
pub mod energy;
pub mod error;
pub mod lambert;
pub mod oracle;
pub mod params;
pub mod sim;

pub use allocator::{decide, solve_local, solve_offload, Allocation, Decision, Infeasibility, Strategy, StrategyResult};
pub use channel::{realize_channels, trial_rng, ChannelRealization};
pub use energy::EnergyBreakdown;
pub use error::{Error, Result};
pub use lambert::lambert_w0;
pub use params::{db_to_linear, load_params, SystemParams};
pub use sim::{monte_carlo, run_trace, sweep, FrameRecord, MonteCarloStats, SimTrace, SweepAxis, SweepOptions, SweepRow};
