//! Spectrum sharing for vehicular device-to-device links with learned,
//! bandwidth-limited feedback.
//!
//! A base station assigns uplink channels to D2D pairs that share them with
//! cellular users. Each pair observes only its local radio conditions,
//! compresses them through a small encoder network into a few real values
//! or bits, and sends that feedback upstream; the base station's Q-network
//! maps the concatenated feedback to a joint channel assignment. Everything
//! trains end to end against the simulated sum rate, with gradients passed
//! through the binary quantizer by the straight-through rule.
//!
//! The crates are organized bottom-up:
//! - [`channel`]: pathloss, shadowing, and fast-fading primitives.
//! - [`env`]: street-grid mobility, channel realizations, rates, rewards,
//!   and observations ([`V2xEnv`]).
//! - [`nn`]: dense networks, Huber loss, RMSProp, checkpoint text format.
//! - [`policy`]: per-link encoders + central Q-network ([`CompositeNet`])
//!   and the joint-action codec.
//! - [`train`]: replay buffer, target network, ε-greedy loop
//!   ([`run_training`]).
//! - [`baseline`]: exhaustive and random reference allocators.
//! - [`harness`]: experiment specs, noise/staleness degradations,
//!   counterfactual evaluation, and CSV-emitting sweeps.
//!
//! All randomness flows from explicit seeds through counter-based
//! generators, and floating point stays in f64 with fixed summation
//! orders, so training runs, evaluations, and sweep artifacts are
//! bit-reproducible.

pub mod baseline;
pub mod channel;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod train;

pub use baseline::{brute_force, random_policy, OracleResult};
pub use env::{Allocation, ChannelRealization, EnvConfig, Observation, StepOutcome, V2xEnv};
pub use error::{Error, Result};
pub use harness::sweep::{sweep, Study, SweepConfig};
pub use harness::{
    arp, evaluate, run_interval_eval, train_for_spec, EvalReport, ExperimentMode, ExperimentSpec,
    IntervalReport,
};
pub use nn::Network;
pub use policy::{CompositeNet, FeedbackMode, PolicyConfig};
pub use train::{run_training, EpisodeStats, ReplayBuffer, TrainConfig, TrainingRun};
