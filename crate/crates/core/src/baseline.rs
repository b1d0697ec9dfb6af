//! Reference allocators the learned policy is measured against.
//!
//! `brute_force` scores every joint channel assignment on the current
//! channel realization and keeps the best — the true optimum, feasible
//! because the action space is `num_channels^num_d2d` and the scorer caps
//! how large it will enumerate. `random_policy` is the floor: a uniform
//! draw over the same space.

use rand::Rng;

use crate::env::{sum_rate, ChannelRealization, EnvConfig};
use crate::error::{Error, Result};
use crate::policy::{action_count, action_decode};

/// Refuse to enumerate joint action spaces larger than this.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Outcome of exhaustive search over one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Encoded index of the best assignment (lowest index wins ties).
    pub best_action: usize,
    /// Sum rate of the best assignment, bits/s.
    pub best_reward: f64,
    /// Sum rate of every assignment, indexed by encoded action.
    pub reward_table: Vec<f64>,
}

/// Score all `num_channels^num_d2d` assignments and return the best one
/// along with the full table.
pub fn brute_force(
    realization: &ChannelRealization,
    config: &EnvConfig,
) -> Result<OracleResult> {
    let count = action_count(config.num_d2d, config.num_channels)?;
    if count as u64 > BRUTE_FORCE_LIMIT {
        return Err(Error::ActionSpaceTooLarge {
            size: count as u128,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut reward_table = Vec::with_capacity(count);
    let mut best_action = 0usize;
    let mut best_reward = f64::NEG_INFINITY;
    for action in 0..count {
        let allocation = action_decode(action, config.num_d2d, config.num_channels)?;
        let reward = sum_rate(&allocation, realization, config);
        // strict > keeps the lowest index on exact ties
        if reward > best_reward {
            best_reward = reward;
            best_action = action;
        }
        reward_table.push(reward);
    }

    Ok(OracleResult {
        best_action,
        best_reward,
        reward_table,
    })
}

/// A uniformly random joint assignment, encoded.
pub fn random_policy<R: Rng + ?Sized>(
    rng: &mut R,
    num_d2d: usize,
    num_channels: usize,
) -> Result<usize> {
    let count = action_count(num_d2d, num_channels)?;
    Ok(rng.random_range(0..count))
}
