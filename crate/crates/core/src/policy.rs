//! The allocator's decision architecture.
//!
//! Each D2D pair runs a small encoder network that compresses its local
//! observation into a short feedback vector — real-valued, or binarized to
//! ±1 through a tanh + sign head trained with the straight-through
//! estimator. The base station concatenates all K feedbacks and feeds them
//! to a Q-network whose output has one entry per joint channel assignment
//! (N^K actions). A frozen deep copy of both stages serves as the target
//! for bootstrapped value estimates; the copy spans the encoders too, since
//! the target value is a function of raw observations.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Allocation;
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Network};

/// Whether encoders emit real numbers or ±1 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Real,
    Binary,
}

/// Architecture knobs for the composite network. Hidden widths default to
/// the reference sizes; shrink them for quick experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub mode: FeedbackMode,
    /// Width of the encoder's real-valued head (N_k).
    pub feedback_dim: usize,
    /// Bits per link in binary mode (N_b); ignored in real mode.
    pub feedback_bits: usize,
    pub encoder_hidden: Vec<usize>,
    pub qnet_hidden: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            mode: FeedbackMode::Real,
            feedback_dim: 3,
            feedback_bits: 3,
            encoder_hidden: vec![16, 32, 16],
            qnet_hidden: vec![1200, 800, 600],
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feedback_dim == 0 {
            return Err(Error::Config("feedback_dim must be at least 1".into()));
        }
        if self.mode == FeedbackMode::Binary && self.feedback_bits == 0 {
            return Err(Error::Config("feedback_bits must be at least 1".into()));
        }
        if self.encoder_hidden.is_empty() || self.qnet_hidden.is_empty() {
            return Err(Error::Config(
                "encoder and Q-network need at least one hidden layer".into(),
            ));
        }
        if self.encoder_hidden.contains(&0) || self.qnet_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Values each encoder sends to the base station.
    pub fn feedback_width(&self) -> usize {
        match self.mode {
            FeedbackMode::Real => self.feedback_dim,
            FeedbackMode::Binary => self.feedback_bits,
        }
    }
}

/// Size of the joint action space, N^K, with an overflow guard.
pub fn action_count(num_d2d: usize, num_channels: usize) -> Result<usize> {
    const LIMIT: u64 = 100_000_000;
    let n = num_channels as u128;
    let mut acc: u128 = 1;
    for _ in 0..num_d2d {
        acc = acc.saturating_mul(n);
        if acc > LIMIT as u128 {
            return Err(Error::ActionSpaceTooLarge {
                size: acc,
                limit: LIMIT,
            });
        }
    }
    Ok(acc as usize)
}

/// Joint action index → per-pair channels. The index is a base-N numeral
/// whose least significant digit is pair 0's channel.
pub fn action_decode(index: usize, num_d2d: usize, num_channels: usize) -> Result<Allocation> {
    let count = action_count(num_d2d, num_channels)?;
    if index >= count {
        return Err(Error::ActionOutOfRange {
            index: index as u64,
            count: count as u64,
        });
    }
    let mut rest = index;
    let channels = (0..num_d2d)
        .map(|_| {
            let c = rest % num_channels;
            rest /= num_channels;
            c
        })
        .collect();
    Allocation::from_channels(channels, num_channels)
}

/// Per-pair channels → joint action index; inverse of [`action_decode`].
pub fn action_encode(allocation: &Allocation) -> usize {
    let n = allocation.num_channels();
    allocation
        .channels()
        .iter()
        .rev()
        .fold(0usize, |acc, &c| acc * n + c)
}

/// Index of the maximal entry, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// K encoder networks, the base-station Q-network, and frozen target copies
/// of both.
#[derive(Debug, Clone)]
pub struct CompositeNet {
    mode: FeedbackMode,
    num_d2d: usize,
    num_channels: usize,
    obs_dim: usize,
    feedback_width: usize,
    encoders: Vec<Network>,
    qnet: Network,
    target_encoders: Vec<Network>,
    target_qnet: Network,
}

impl CompositeNet {
    /// Build with fresh fan-balanced weights. `obs_dim` is the per-pair
    /// observation length (2N+1 in the simulator).
    pub fn new<R: Rng + ?Sized>(
        config: &PolicyConfig,
        num_d2d: usize,
        num_channels: usize,
        obs_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if num_d2d == 0 || num_channels == 0 {
            return Err(Error::Config(
                "need at least one D2D pair and one channel".into(),
            ));
        }
        let num_actions = action_count(num_d2d, num_channels)?;

        let mut encoder_dims: Vec<(usize, usize, Activation)> = Vec::new();
        let mut prev = obs_dim;
        for &h in &config.encoder_hidden {
            encoder_dims.push((prev, h, Activation::Relu));
            prev = h;
        }
        encoder_dims.push((prev, config.feedback_dim, Activation::Linear));
        if config.mode == FeedbackMode::Binary {
            // the quantizer head: one affine map, tanh, then sign with a
            // straight-through backward
            encoder_dims.push((config.feedback_dim, config.feedback_bits, Activation::SignSte));
        }

        let encoders: Vec<Network> = (0..num_d2d)
            .map(|_| Network::xavier(&encoder_dims, rng))
            .collect::<Result<_>>()?;

        let feedback_width = config.feedback_width();
        let mut qnet_dims: Vec<(usize, usize, Activation)> = Vec::new();
        let mut prev = num_d2d * feedback_width;
        for &h in &config.qnet_hidden {
            qnet_dims.push((prev, h, Activation::Relu));
            prev = h;
        }
        qnet_dims.push((prev, num_actions, Activation::Linear));
        let qnet = Network::xavier(&qnet_dims, rng)?;

        Ok(CompositeNet {
            mode: config.mode,
            num_d2d,
            num_channels,
            obs_dim,
            feedback_width,
            target_encoders: encoders.clone(),
            target_qnet: qnet.clone(),
            encoders,
            qnet,
        })
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn num_d2d(&self) -> usize {
        self.num_d2d
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn feedback_width(&self) -> usize {
        self.feedback_width
    }

    pub fn num_actions(&self) -> usize {
        self.qnet.output_dim()
    }

    pub fn encoders(&self) -> &[Network] {
        &self.encoders
    }

    pub fn encoders_mut(&mut self) -> &mut [Network] {
        &mut self.encoders
    }

    pub fn qnet(&self) -> &Network {
        &self.qnet
    }

    pub fn qnet_mut(&mut self) -> &mut Network {
        &mut self.qnet
    }

    pub fn target_encoders(&self) -> &[Network] {
        &self.target_encoders
    }

    pub fn target_qnet(&self) -> &Network {
        &self.target_qnet
    }

    /// Feedback of pair `k` for a normalized observation vector.
    pub fn encode(&self, k: usize, observation: &[f64]) -> Result<Vec<f64>> {
        self.encoders[k].feedforward(observation)
    }

    /// All K feedbacks for K normalized observations.
    pub fn encode_all(&self, observations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_observation_count(observations)?;
        observations
            .iter()
            .enumerate()
            .map(|(k, o)| self.encode(k, o))
            .collect()
    }

    /// Q-vector over joint actions for already-computed feedbacks. Exposed
    /// separately so callers can perturb the feedback (noise studies) before
    /// the base station sees it.
    pub fn q_values(&self, feedbacks: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.qnet.feedforward(&concat_feedbacks(feedbacks))
    }

    /// Q-vector straight from observations through the online networks.
    pub fn q_values_from_observations(&self, observations: &[Vec<f64>]) -> Result<Vec<f64>> {
        let feedbacks = self.encode_all(observations)?;
        self.q_values(&feedbacks)
    }

    /// Q-vector through the frozen target encoders and target Q-network.
    pub fn target_q_values_from_observations(
        &self,
        observations: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        self.check_observation_count(observations)?;
        let feedbacks: Vec<Vec<f64>> = observations
            .iter()
            .enumerate()
            .map(|(k, o)| self.target_encoders[k].feedforward(o))
            .collect::<Result<_>>()?;
        self.target_qnet.feedforward(&concat_feedbacks(&feedbacks))
    }

    /// Greedy joint action (argmax of the online Q-vector, lowest index on
    /// ties).
    pub fn greedy_action(&self, observations: &[Vec<f64>]) -> Result<usize> {
        Ok(argmax(&self.q_values_from_observations(observations)?))
    }

    /// Copy online parameters into the target copies, bit for bit.
    pub fn sync_target(&mut self) {
        self.target_encoders = self.encoders.clone();
        self.target_qnet = self.qnet.clone();
    }

    /// Every online parameter (encoders in pair order, then the Q-network)
    /// as one flat vector; the layout matches [`CompositeNet::set_flat_online_params`].
    pub fn flat_online_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.encoders {
            out.extend(e.flat_params());
        }
        out.extend(self.qnet.flat_params());
        out
    }

    /// Overwrite every online parameter from a flat vector laid out as in
    /// [`CompositeNet::flat_online_params`]. Target copies are untouched.
    pub fn set_flat_online_params(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize =
            self.encoders.iter().map(Network::param_count).sum::<usize>() + self.qnet.param_count();
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "flat composite parameter vector",
                expected,
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for e in &mut self.encoders {
            let n = e.param_count();
            e.set_flat_params(&params[offset..offset + n])?;
            offset += n;
        }
        self.qnet.set_flat_params(&params[offset..])
    }

    fn check_observation_count(&self, observations: &[Vec<f64>]) -> Result<()> {
        if observations.len() != self.num_d2d {
            return Err(Error::ShapeMismatch {
                context: "observation count",
                expected: self.num_d2d,
                actual: observations.len(),
            });
        }
        Ok(())
    }

    /// Write all parameters plus a manifest into `dir` (created if needed).
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            mode: self.mode,
            num_d2d: self.num_d2d,
            num_channels: self.num_channels,
            obs_dim: self.obs_dim,
            feedback_width: self.feedback_width,
        };
        let manifest_path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
        std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

        for (k, net) in self.encoders.iter().enumerate() {
            nn::io::save_network(net, &dir.join(format!("encoder_{k}.txt")))?;
        }
        for (k, net) in self.target_encoders.iter().enumerate() {
            nn::io::save_network(net, &dir.join(format!("target_encoder_{k}.txt")))?;
        }
        nn::io::save_network(&self.qnet, &dir.join("qnet.txt"))?;
        nn::io::save_network(&self.target_qnet, &dir.join("target_qnet.txt"))?;
        Ok(())
    }

    /// Rebuild a composite from [`CompositeNet::save_checkpoint`] output,
    /// validating that the stored networks fit together.
    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(&manifest_path, e.to_string()))?;

        let encoders: Vec<Network> = (0..manifest.num_d2d)
            .map(|k| nn::io::load_network(&dir.join(format!("encoder_{k}.txt"))))
            .collect::<Result<_>>()?;
        let target_encoders: Vec<Network> = (0..manifest.num_d2d)
            .map(|k| nn::io::load_network(&dir.join(format!("target_encoder_{k}.txt"))))
            .collect::<Result<_>>()?;
        let qnet = nn::io::load_network(&dir.join("qnet.txt"))?;
        let target_qnet = nn::io::load_network(&dir.join("target_qnet.txt"))?;

        let composite = CompositeNet {
            mode: manifest.mode,
            num_d2d: manifest.num_d2d,
            num_channels: manifest.num_channels,
            obs_dim: manifest.obs_dim,
            feedback_width: manifest.feedback_width,
            encoders,
            qnet,
            target_encoders,
            target_qnet,
        };
        composite.validate_shapes(&manifest_path)?;
        Ok(composite)
    }

    fn validate_shapes(&self, origin: &Path) -> Result<()> {
        let bad = |msg: String| Err(Error::parse(origin, msg));
        if self.encoders.len() != self.num_d2d || self.target_encoders.len() != self.num_d2d {
            return bad("encoder count does not match the manifest".into());
        }
        let expected_actions = action_count(self.num_d2d, self.num_channels)?;
        if self.qnet.output_dim() != expected_actions {
            return bad(format!(
                "Q-network has {} outputs, expected {}",
                self.qnet.output_dim(),
                expected_actions
            ));
        }
        if self.qnet.input_dim() != self.num_d2d * self.feedback_width {
            return bad(format!(
                "Q-network input {} does not match {} × feedback width {}",
                self.qnet.input_dim(),
                self.num_d2d,
                self.feedback_width
            ));
        }
        for (k, e) in self.encoders.iter().chain(&self.target_encoders).enumerate() {
            if e.input_dim() != self.obs_dim || e.output_dim() != self.feedback_width {
                return bad(format!(
                    "encoder {k} is {}→{}, expected {}→{}",
                    e.input_dim(),
                    e.output_dim(),
                    self.obs_dim,
                    self.feedback_width
                ));
            }
        }
        Ok(())
    }
}

/// Stack per-pair feedbacks into the Q-network input, pair 0 first.
pub fn concat_feedbacks(feedbacks: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(feedbacks.iter().map(Vec::len).sum());
    for f in feedbacks {
        out.extend_from_slice(f);
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    mode: FeedbackMode,
    num_d2d: usize,
    num_channels: usize,
    obs_dim: usize,
    feedback_width: usize,
}
