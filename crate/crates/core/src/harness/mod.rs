//! Experiment driver: trains policies for declarative experiment specs and
//! evaluates them against the exhaustive and random baselines.
//!
//! Evaluation is counterfactual: at every step the current channel
//! realization is scored three ways — the policy's pick, the brute-force
//! optimum, and a uniformly random pick — before the world advances under
//! the policy's action. Returns are aggregated per episode, and quality is
//! summarized as the average return percentage (ARP), the policy's mean
//! episode return as a percentage of the optimum's.
//!
//! Two degradation knobs mirror deployment imperfections: Gaussian noise on
//! raw observation components before normalization (sensing error at the
//! vehicles) and on feedback values at the Q-network input (an imperfect
//! uplink), plus a feedback interval `F` under which the base station
//! reuses stale feedback for `F − 1` steps while the channels keep moving.

mod plots;
pub mod sweep;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::{brute_force, random_policy};
use crate::env::{EnvConfig, Observation, V2xEnv};
use crate::error::{Error, Result};
use crate::policy::{
    action_count, action_decode, argmax, CompositeNet, FeedbackMode, PolicyConfig,
};
use crate::train::{run_training, TrainConfig, TrainingRun};

/// What the per-link encoders send upstream, if anything. `None` removes
/// the feedback path entirely: the base station picks channels uniformly at
/// random and nothing is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    Real,
    Binary,
    None,
}

impl ExperimentMode {
    fn feedback_mode(self) -> Option<FeedbackMode> {
        match self {
            ExperimentMode::Real => Some(FeedbackMode::Real),
            ExperimentMode::Binary => Some(FeedbackMode::Binary),
            ExperimentMode::None => None,
        }
    }
}

/// One experiment point: what to train (mode, widths, schedule lengths,
/// seed) and how to test it (seeds, episode counts, feedback staleness,
/// noise levels). Environment geometry and the remaining training
/// hyperparameters come from [`EnvConfig`] and [`TrainConfig`] alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: ExperimentMode,
    /// Real feedback values per link (the encoder's bottleneck width).
    pub feedback_count: usize,
    /// Binary mode only: bits per feedback value; each link transmits
    /// `feedback_count · bits_per_feedback` bits total.
    pub bits_per_feedback: usize,
    pub batch_size: usize,
    /// Steps between feedback transmissions during evaluation (`1` means
    /// every step).
    pub feedback_interval: usize,
    /// Noise-to-signal power ratio in dB on raw observation components;
    /// `None` disables.
    pub input_noise_db: Option<f64>,
    /// Noise-to-signal power ratio in dB on transmitted feedback values;
    /// `None` disables.
    pub feedback_noise_db: Option<f64>,
    pub train_seed: u64,
    pub test_seeds: Vec<u64>,
    /// Training episodes.
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Test episodes per test seed.
    pub test_episodes: usize,
    pub encoder_hidden: Vec<usize>,
    pub qnet_hidden: Vec<usize>,
    /// Record every step's per-link rates in the report.
    pub trace_link_rates: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let policy = PolicyConfig::default();
        ExperimentSpec {
            mode: ExperimentMode::Real,
            feedback_count: 3,
            bits_per_feedback: 2,
            batch_size: 512,
            feedback_interval: 1,
            input_noise_db: None,
            feedback_noise_db: None,
            train_seed: 0,
            test_seeds: vec![100],
            episodes: 2000,
            steps_per_episode: 1000,
            test_episodes: 100,
            encoder_hidden: policy.encoder_hidden,
            qnet_hidden: policy.qnet_hidden,
            trace_link_rates: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.feedback_interval == 0 {
            return Err(Error::Config("feedback_interval must be at least 1".into()));
        }
        if self.mode == ExperimentMode::Binary && self.bits_per_feedback == 0 {
            return Err(Error::Config(
                "binary mode needs at least 1 bit per feedback value".into(),
            ));
        }
        if self.test_seeds.is_empty() {
            return Err(Error::Config("at least one test seed is required".into()));
        }
        if self.steps_per_episode == 0 {
            return Err(Error::Config("steps_per_episode must be at least 1".into()));
        }
        if self.test_episodes == 0 {
            return Err(Error::Config("test_episodes must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, value) in [
            ("input_noise_db", self.input_noise_db),
            ("feedback_noise_db", self.feedback_noise_db),
        ] {
            if let Some(db) = value {
                if db.is_nan() {
                    return Err(Error::Config(format!("{name} must not be NaN")));
                }
            }
        }
        Ok(())
    }

    /// Values each link sends to the base station per transmission. Zero
    /// means no feedback path: the base station cannot distinguish states
    /// and acts randomly instead of running a degenerate network.
    pub fn feedback_width(&self) -> usize {
        match self.mode {
            ExperimentMode::None => 0,
            ExperimentMode::Real => self.feedback_count,
            ExperimentMode::Binary => {
                if self.feedback_count == 0 {
                    0
                } else {
                    self.feedback_count * self.bits_per_feedback
                }
            }
        }
    }

    /// Network description for this point, or `None` when the feedback
    /// width is zero and no network exists.
    pub fn policy_config(&self) -> Option<PolicyConfig> {
        if self.feedback_width() == 0 {
            return None;
        }
        Some(PolicyConfig {
            mode: self.mode.feedback_mode()?,
            feedback_dim: self.feedback_count,
            feedback_bits: self.feedback_count * self.bits_per_feedback,
            encoder_hidden: self.encoder_hidden.clone(),
            qnet_hidden: self.qnet_hidden.clone(),
        })
    }

    /// Base training hyperparameters with this spec's schedule applied.
    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            episodes: self.episodes,
            steps_per_episode: self.steps_per_episode,
            ..base.clone()
        }
    }
}

/// Everything measured over one evaluation: per-episode returns of the
/// three schemes, the ARP summary, per-episode returns normalized by the
/// optimum, and optionally every step's per-link rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub policy_returns: Vec<f64>,
    pub optimal_returns: Vec<f64>,
    pub random_returns: Vec<f64>,
    /// `mean(policy) / mean(optimal) · 100`.
    pub arp: f64,
    /// Per-episode `policy / optimal`, in `[0, 1]` up to rounding.
    pub normalized_returns: Vec<f64>,
    /// When traced: one row per step (episodes concatenated), one column
    /// per link, bits/s, under the policy's allocations.
    pub link_rates: Option<Vec<Vec<f64>>>,
}

/// `mean(policy returns) / mean(optimal returns) · 100`.
pub fn arp(policy_returns: &[f64], optimal_returns: &[f64]) -> Result<f64> {
    if policy_returns.len() != optimal_returns.len() {
        return Err(Error::ShapeMismatch {
            context: "return series lengths",
            expected: optimal_returns.len(),
            actual: policy_returns.len(),
        });
    }
    if policy_returns.is_empty() {
        return Err(Error::Domain("cannot average empty return series".into()));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let optimal_mean = mean(optimal_returns);
    if optimal_mean == 0.0 {
        return Err(Error::Domain(
            "optimal mean return is zero; percentage undefined".into(),
        ));
    }
    Ok(mean(policy_returns) / optimal_mean * 100.0)
}

/// `v + |v|·10^(ratio_db/20)·z`, `z` standard normal — additive Gaussian
/// whose POWER is `10^(ratio_db/10)` times the component's. Zero components
/// stay zero; `None` is a true bypass that draws nothing.
fn noisy_value<R: Rng + ?Sized>(value: f64, std_scale: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    value + value.abs() * std_scale * z
}

fn db_to_std_scale(ratio_db: f64) -> f64 {
    10f64.powf(ratio_db / 20.0)
}

/// Perturb every raw (pre-normalization) observation component with
/// magnitude-proportional Gaussian noise. `None` returns the observation
/// unchanged without consuming the generator.
pub fn add_input_noise<R: Rng + ?Sized>(
    observation: &Observation,
    ratio_db: Option<f64>,
    rng: &mut R,
) -> Observation {
    let Some(db) = ratio_db else {
        return observation.clone();
    };
    let scale = db_to_std_scale(db);
    Observation {
        gains_db: observation
            .gains_db
            .iter()
            .map(|&v| noisy_value(v, scale, rng))
            .collect(),
        interference_dbm: observation
            .interference_dbm
            .iter()
            .map(|&v| noisy_value(v, scale, rng))
            .collect(),
        power_dbm: noisy_value(observation.power_dbm, scale, rng),
    }
}

/// Perturb one link's transmitted feedback vector (real or ±1 binary —
/// additive either way, not bit flips). Same scaling and bypass rules as
/// [`add_input_noise`].
pub fn add_feedback_noise<R: Rng + ?Sized>(
    feedback: &[f64],
    ratio_db: Option<f64>,
    rng: &mut R,
) -> Vec<f64> {
    let Some(db) = ratio_db else {
        return feedback.to_vec();
    };
    let scale = db_to_std_scale(db);
    feedback.iter().map(|&v| noisy_value(v, scale, rng)).collect()
}

fn check_policy_compatibility(
    composite: &CompositeNet,
    env_config: &EnvConfig,
    spec: &ExperimentSpec,
) -> Result<()> {
    let checks = [
        ("policy pair count", env_config.num_d2d, composite.num_d2d()),
        (
            "policy channel count",
            env_config.num_channels,
            composite.num_channels(),
        ),
        (
            "policy observation width",
            2 * env_config.num_channels + 1,
            composite.obs_dim(),
        ),
        (
            "policy feedback width",
            spec.feedback_width(),
            composite.feedback_width(),
        ),
    ];
    for (context, expected, actual) in checks {
        if expected != actual {
            return Err(Error::ShapeMismatch {
                context,
                expected,
                actual,
            });
        }
    }
    if spec.mode.feedback_mode() != Some(composite.mode()) {
        return Err(Error::Config(format!(
            "spec mode {:?} does not match the policy's {:?}",
            spec.mode,
            composite.mode()
        )));
    }
    Ok(())
}

/// Greedy (ε = 0) evaluation of a trained policy — or of the random base
/// station when `policy` is `None` — against the exhaustive optimum and a
/// random baseline scored on the same realizations.
///
/// All randomness derives from each test seed (the world from stream 0 as
/// in training, noise and random draws from stream 3), so repeated calls
/// with the same arguments reproduce the report bit for bit. Per step the
/// draw order is: input noise and feedback noise on transmission steps,
/// then the policy's own draw in no-feedback mode, then the random
/// baseline's.
pub fn evaluate(
    policy: Option<&CompositeNet>,
    env_config: &EnvConfig,
    spec: &ExperimentSpec,
) -> Result<EvalReport> {
    env_config.validate()?;
    spec.validate()?;
    match policy {
        Some(composite) => check_policy_compatibility(composite, env_config, spec)?,
        None => {
            if spec.feedback_width() != 0 {
                return Err(Error::Config(
                    "spec expects a trained policy but none was supplied".into(),
                ));
            }
        }
    }
    let num_actions = action_count(env_config.num_d2d, env_config.num_channels)?;
    let interval = spec.feedback_interval;

    let episode_total = spec.test_seeds.len() * spec.test_episodes;
    let mut policy_returns = Vec::with_capacity(episode_total);
    let mut optimal_returns = Vec::with_capacity(episode_total);
    let mut random_returns = Vec::with_capacity(episode_total);
    let mut link_rates: Option<Vec<Vec<f64>>> = spec.trace_link_rates.then(Vec::new);

    for &seed in &spec.test_seeds {
        let mut env = V2xEnv::new(env_config.clone(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        for _ in 0..spec.test_episodes {
            env.reset()?;
            let mut policy_sum = 0.0;
            let mut optimal_sum = 0.0;
            let mut random_sum = 0.0;
            // action held between feedback transmissions
            let mut held_action = 0usize;
            for step in 0..spec.steps_per_episode {
                let action = match policy {
                    Some(composite) => {
                        if step % interval == 0 {
                            let noisy: Vec<Vec<f64>> = env
                                .observations()
                                .iter()
                                .map(|o| {
                                    add_input_noise(o, spec.input_noise_db, &mut rng).normalized()
                                })
                                .collect();
                            let feedbacks: Vec<Vec<f64>> = composite
                                .encode_all(&noisy)?
                                .iter()
                                .map(|f| add_feedback_noise(f, spec.feedback_noise_db, &mut rng))
                                .collect();
                            held_action = argmax(&composite.q_values(&feedbacks)?);
                        }
                        held_action
                    }
                    None => rng.random_range(0..num_actions),
                };

                let oracle = brute_force(env.realization(), env_config)?;
                let random_action =
                    random_policy(&mut rng, env_config.num_d2d, env_config.num_channels)?;
                let allocation =
                    action_decode(action, env_config.num_d2d, env_config.num_channels)?;
                let outcome = env.step(&allocation)?;
                debug_assert!(outcome.reward <= oracle.best_reward * (1.0 + 1e-12));

                policy_sum += outcome.reward;
                optimal_sum += oracle.best_reward;
                random_sum += oracle.reward_table[random_action];
                if let Some(trace) = link_rates.as_mut() {
                    trace.push(outcome.per_link_rate);
                }
            }
            policy_returns.push(policy_sum);
            optimal_returns.push(optimal_sum);
            random_returns.push(random_sum);
        }
    }

    let arp = arp(&policy_returns, &optimal_returns)?;
    let normalized_returns = policy_returns
        .iter()
        .zip(&optimal_returns)
        .map(|(p, o)| p / o)
        .collect();
    Ok(EvalReport {
        policy_returns,
        optimal_returns,
        random_returns,
        arp,
        normalized_returns,
        link_rates,
    })
}

/// [`evaluate`] at the spec's feedback interval plus the every-step
/// reference the figure divides by.
#[derive(Debug, Clone)]
pub struct IntervalReport {
    pub report: EvalReport,
    /// Mean episode return at `F = 1` on identical seeds.
    pub baseline_mean_return: f64,
    /// `mean return at F` / `mean return at F = 1`.
    pub normalized_return: f64,
}

/// Evaluate under stale feedback and normalize by the same policy run with
/// feedback every step. `F = 1` yields a normalized return of exactly 1.
pub fn run_interval_eval(
    policy: Option<&CompositeNet>,
    env_config: &EnvConfig,
    spec: &ExperimentSpec,
) -> Result<IntervalReport> {
    let report = evaluate(policy, env_config, spec)?;
    let baseline_report;
    let baseline = if spec.feedback_interval == 1 {
        &report
    } else {
        let every_step = ExperimentSpec {
            feedback_interval: 1,
            ..spec.clone()
        };
        baseline_report = evaluate(policy, env_config, &every_step)?;
        &baseline_report
    };
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let baseline_mean_return = mean(&baseline.policy_returns);
    if baseline_mean_return == 0.0 {
        return Err(Error::Domain(
            "every-step policy return is zero; normalization undefined".into(),
        ));
    }
    let normalized_return = mean(&report.policy_returns) / baseline_mean_return;
    Ok(IntervalReport {
        report,
        baseline_mean_return,
        normalized_return,
    })
}

/// Train the network this spec calls for; `Ok(None)` when the spec has no
/// feedback path and there is nothing to train.
pub fn train_for_spec(
    env_config: &EnvConfig,
    base_train: &TrainConfig,
    spec: &ExperimentSpec,
) -> Result<Option<TrainingRun>> {
    spec.validate()?;
    let Some(policy_config) = spec.policy_config() else {
        return Ok(None);
    };
    policy_config.validate()?;
    let train_config = spec.train_config(base_train);
    run_training(env_config, &policy_config, &train_config, spec.train_seed).map(Some)
}
