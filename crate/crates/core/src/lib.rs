//! Power allocation across the orthogonal subchannels of a two-hop
//! amplify-and-forward relay link.
//!
//! Four schemes are covered: joint source/relay allocation with full channel
//! knowledge ([`global`]), relay-side greedy link selection when the source
//! only knows its own hop ([`relay`]), both with the subchannels optionally
//! re-paired by gain rank, and a high-SNR closed form ([`asymptotic`]).
//! [`experiment`] runs Monte Carlo sweeps of all of them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod asymptotic;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod global;
pub mod link;
pub mod relay;
pub mod scalar;
mod search;

pub use asymptotic::{check_inverse_waterfilling, solve_asymptotic};
pub use channel::{sample_network, sort_for_asf, ChannelStats, NetworkRealization, Subchannel};
pub use error::{Error, Result};
pub use experiment::{run_experiment, write_csv, Case, DeltaMode, ExperimentConfig, SumRateCurve};
pub use global::{solve_case1, solve_case3, verify_kkt};
pub use relay::{solve_case2, solve_case4, Pairing, SourceMode};
pub use scalar::Scalar;

pub type Allocation = global::Allocation<f64>;
pub type SolverConfig = global::SolverConfig<f64>;
pub type AllocError = global::AllocError<f64>;
pub type Network = channel::NetworkRealization<f64>;
pub type Stats = channel::ChannelStats<f64>;
pub type SourcePlan = relay::SourcePlan<f64>;
pub type RelaySelection = relay::RelaySelection<f64>;
pub type AsymptoticSolution = asymptotic::AsymptoticSolution<f64>;
