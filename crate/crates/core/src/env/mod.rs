//! The simulated world: vehicles on a street grid, per-step channel
//! realizations, SINR-based link rates, observations, and reward.
//!
//! `K` device-to-device (D2D) pairs share `N` orthogonal uplink channels,
//! each owned by one cellular user (CUE). Every step the allocator assigns
//! each pair one channel; the reward is the sum of the pairs' Shannon rates
//! under the resulting interference pattern. Powers are handled in linear
//! milliwatts internally; observations carry raw dB-domain values plus a
//! documented affine normalization for the learning stack.

pub mod mobility;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, pathloss_v2i, pathloss_v2v_at, sample_fast_fading, update_shadowing,
    LinkGain, ShadowState,
};
use crate::error::{Error, Result};
use mobility::{drop_vehicles, move_vehicles, DropConfig, LaneGrid, Topology};

/// Convert a dBm power to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Convert a linear (milliwatt or unitless) value to dB.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Additive shift applied to dB-domain observation entries before scaling.
pub const OBS_DB_SHIFT: f64 = 120.0;
/// Divisor applied to shifted dB-domain observation entries.
pub const OBS_DB_SCALE: f64 = 60.0;
/// Divisor applied to the dBm transmit-power observation entry.
pub const OBS_POWER_SCALE: f64 = 23.0;

/// Scenario parameters. The defaults reproduce the reference urban setup:
/// a 1299×750 m area with a 3×3 street grid, four D2D pairs sharing four
/// CUE uplink channels at 2 GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// K, the number of D2D transmitter/receiver pairs.
    pub num_d2d: usize,
    /// N, the number of orthogonal uplink channels (one per CUE).
    pub num_channels: usize,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub v2i_power_dbm: f64,
    pub v2v_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub bs_antenna_height_m: f64,
    pub bs_antenna_gain_dbi: f64,
    pub bs_noise_figure_db: f64,
    pub vehicle_antenna_height_m: f64,
    pub vehicle_antenna_gain_dbi: f64,
    pub vehicle_noise_figure_db: f64,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub v2i_shadow_std_db: f64,
    pub v2i_decorrelation_m: f64,
    pub v2v_shadow_std_db: f64,
    pub v2v_decorrelation_m: f64,
    pub dt_s: f64,
    pub pairing_radius_m: f64,
    pub turn_probability: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            area_width_m: 1299.0,
            area_height_m: 750.0,
            blocks_x: 3,
            blocks_y: 3,
            num_d2d: 4,
            num_channels: 4,
            carrier_ghz: 2.0,
            bandwidth_hz: 1e6,
            v2i_power_dbm: 23.0,
            v2v_power_dbm: 10.0,
            noise_power_dbm: -114.0,
            bs_antenna_height_m: 25.0,
            bs_antenna_gain_dbi: 8.0,
            bs_noise_figure_db: 5.0,
            vehicle_antenna_height_m: 1.5,
            vehicle_antenna_gain_dbi: 3.0,
            vehicle_noise_figure_db: 9.0,
            speed_min_kmh: 10.0,
            speed_max_kmh: 15.0,
            v2i_shadow_std_db: 8.0,
            v2i_decorrelation_m: 50.0,
            v2v_shadow_std_db: 3.0,
            v2v_decorrelation_m: 10.0,
            dt_s: 0.1,
            pairing_radius_m: 50.0,
            turn_probability: 0.4,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_d2d == 0 || self.num_channels == 0 {
            return fail(format!(
                "need at least one D2D pair and one channel, got K={} N={}",
                self.num_d2d, self.num_channels
            ));
        }
        if !(self.area_width_m > 0.0) || !(self.area_height_m > 0.0) {
            return fail("simulation area must have positive extent".into());
        }
        if self.blocks_x == 0 || self.blocks_y == 0 {
            return fail("the street grid needs at least one block per axis".into());
        }
        if !(self.bandwidth_hz > 0.0) {
            return fail(format!("bandwidth must be positive, got {}", self.bandwidth_hz));
        }
        if !(self.carrier_ghz > 0.0) {
            return fail(format!("carrier must be positive, got {} GHz", self.carrier_ghz));
        }
        if !(self.dt_s > 0.0) {
            return fail(format!("step duration must be positive, got {}", self.dt_s));
        }
        if !(self.speed_min_kmh > 0.0) || self.speed_max_kmh < self.speed_min_kmh {
            return fail(format!(
                "speed range [{}, {}] km/h is invalid",
                self.speed_min_kmh, self.speed_max_kmh
            ));
        }
        if !(self.pairing_radius_m > 0.0) {
            return fail("pairing radius must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return fail(format!(
                "turn probability must lie in [0, 1], got {}",
                self.turn_probability
            ));
        }
        if self.v2v_shadow_std_db < 0.0 || self.v2i_shadow_std_db < 0.0 {
            return fail("shadowing standard deviations must be non-negative".into());
        }
        if !(self.v2v_decorrelation_m > 0.0) || !(self.v2i_decorrelation_m > 0.0) {
            return fail("decorrelation distances must be positive".into());
        }
        if self.vehicle_antenna_height_m <= 1.0 {
            return fail(format!(
                "vehicle antenna height must exceed 1 m for the two-slope pathloss model, got {}",
                self.vehicle_antenna_height_m
            ));
        }
        if !(self.bs_antenna_height_m > 0.0) {
            return fail("base-station antenna height must be positive".into());
        }
        for (name, v) in [
            ("v2i_power_dbm", self.v2i_power_dbm),
            ("v2v_power_dbm", self.v2v_power_dbm),
            ("noise_power_dbm", self.noise_power_dbm),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }

    pub fn v2v_power_mw(&self) -> f64 {
        dbm_to_mw(self.v2v_power_dbm)
    }

    pub fn v2i_power_mw(&self) -> f64 {
        dbm_to_mw(self.v2i_power_dbm)
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }

    /// dB added to a vehicle→vehicle pathloss to fold in antenna gains and
    /// the receiver noise figure.
    fn v2v_budget_db(&self) -> f64 {
        self.vehicle_noise_figure_db - 2.0 * self.vehicle_antenna_gain_dbi
    }

    /// dB added to a vehicle→base-station pathloss, likewise.
    fn v2i_budget_db(&self) -> f64 {
        self.bs_noise_figure_db - self.vehicle_antenna_gain_dbi - self.bs_antenna_gain_dbi
    }

    fn lane_grid(&self) -> LaneGrid {
        LaneGrid::new(
            self.area_width_m,
            self.area_height_m,
            self.blocks_x,
            self.blocks_y,
        )
    }

    fn drop_config(&self) -> DropConfig {
        DropConfig {
            num_d2d: self.num_d2d,
            num_cues: self.num_channels,
            speed_min_kmh: self.speed_min_kmh,
            speed_max_kmh: self.speed_max_kmh,
            pairing_radius_m: self.pairing_radius_m,
        }
    }
}

/// A channel choice per D2D pair. Construction guarantees every pair sits
/// on exactly one valid channel, which is the row-sum-one invariant of the
/// underlying K×N indicator matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    channels: Vec<usize>,
    num_channels: usize,
}

impl Allocation {
    pub fn from_channels(channels: Vec<usize>, num_channels: usize) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidAllocation(
                "an allocation needs at least one D2D pair".into(),
            ));
        }
        if let Some(&bad) = channels.iter().find(|&&c| c >= num_channels) {
            return Err(Error::InvalidAllocation(format!(
                "channel index {bad} out of range for {num_channels} channels"
            )));
        }
        Ok(Allocation {
            channels,
            num_channels,
        })
    }

    /// The conventional starting allocation: pair k on channel k mod N.
    pub fn round_robin(num_d2d: usize, num_channels: usize) -> Self {
        Allocation {
            channels: (0..num_d2d).map(|k| k % num_channels).collect(),
            num_channels,
        }
    }

    pub fn channel_of(&self, k: usize) -> usize {
        self.channels[k]
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn num_d2d(&self) -> usize {
        self.channels.len()
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    /// Indicator ρ_k^n.
    pub fn rho(&self, k: usize, n: usize) -> bool {
        self.channels[k] == n
    }
}

/// Every link gain the rate equation needs for one step, all composed from
/// pathloss, shadowing, and fast fading by the `channel` module.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    num_d2d: usize,
    num_channels: usize,
    /// `[l][k][n]` flattened: transmitter of pair l → receiver of pair k on
    /// channel n. The diagonal l = k holds the direct links.
    v2v: Vec<LinkGain>,
    /// `[n][k]` flattened: CUE n → receiver of pair k. A CUE transmits only
    /// on its own channel, so one gain per (CUE, receiver) suffices.
    cue_to_rx: Vec<LinkGain>,
    /// `[n]`: CUE n → base station. Not part of the reward; kept for
    /// diagnostics of the uplink the CUEs experience.
    cue_to_bs: Vec<LinkGain>,
}

impl ChannelRealization {
    pub fn new(
        num_d2d: usize,
        num_channels: usize,
        v2v: Vec<LinkGain>,
        cue_to_rx: Vec<LinkGain>,
        cue_to_bs: Vec<LinkGain>,
    ) -> Result<Self> {
        let expect = |what: &'static str, expected: usize, actual: usize| -> Result<()> {
            if expected != actual {
                return Err(Error::ShapeMismatch {
                    context: what,
                    expected,
                    actual,
                });
            }
            Ok(())
        };
        expect("v2v gain table", num_d2d * num_d2d * num_channels, v2v.len())?;
        expect("cue-to-rx gain table", num_channels * num_d2d, cue_to_rx.len())?;
        expect("cue-to-bs gain table", num_channels, cue_to_bs.len())?;
        Ok(ChannelRealization {
            num_d2d,
            num_channels,
            v2v,
            cue_to_rx,
            cue_to_bs,
        })
    }

    pub fn num_d2d(&self) -> usize {
        self.num_d2d
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    /// Gain from the transmitter of pair `l` to the receiver of pair `k` on
    /// channel `n`; `l == k` is the direct link.
    pub fn gain_v2v(&self, l: usize, k: usize, n: usize) -> &LinkGain {
        &self.v2v[(l * self.num_d2d + k) * self.num_channels + n]
    }

    pub fn gain_v2v_mut(&mut self, l: usize, k: usize, n: usize) -> &mut LinkGain {
        &mut self.v2v[(l * self.num_d2d + k) * self.num_channels + n]
    }

    /// Gain from CUE `n` to the receiver of pair `k` (on channel `n`).
    pub fn gain_cue_at_rx(&self, n: usize, k: usize) -> &LinkGain {
        &self.cue_to_rx[n * self.num_d2d + k]
    }

    pub fn gain_cue_at_rx_mut(&mut self, n: usize, k: usize) -> &mut LinkGain {
        &mut self.cue_to_rx[n * self.num_d2d + k]
    }

    /// Gain from CUE `n` to the base station (diagnostic only).
    pub fn gain_cue_at_bs(&self, n: usize) -> &LinkGain {
        &self.cue_to_bs[n]
    }
}

/// What one D2D receiver can see locally: its own channel gain on every
/// channel, the interference it measured on every channel under the latest
/// allocation, and its transmit power. Values are raw dB/dBm; feed
/// [`Observation::normalized`] to a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub gains_db: Vec<f64>,
    pub interference_dbm: Vec<f64>,
    pub power_dbm: f64,
}

impl Observation {
    /// Total entry count, `2N + 1`.
    pub fn len(&self) -> usize {
        self.gains_db.len() + self.interference_dbm.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Affine squash of the dB-domain entries into a network-friendly range:
    /// `(x + 120)/60` for gains and interference, `x/23` for power.
    pub fn normalized(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(
            self.gains_db
                .iter()
                .map(|g| (g + OBS_DB_SHIFT) / OBS_DB_SCALE),
        );
        out.extend(
            self.interference_dbm
                .iter()
                .map(|i| (i + OBS_DB_SHIFT) / OBS_DB_SCALE),
        );
        out.push(self.power_dbm / OBS_POWER_SCALE);
        out
    }
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Rate of each D2D pair on its chosen channel, bits/s.
    pub per_link_rate: Vec<f64>,
    /// Sum of the per-link rates, bits/s.
    pub reward: f64,
    /// Next-step observations, one per D2D pair, built under the allocation
    /// just taken.
    pub observations: Vec<Observation>,
}

/// Interference power at the receiver of pair `k` on channel `n`, in mW:
/// co-channel D2D transmitters plus the CUE that owns the channel. Strictly
/// positive because the CUE term is always present.
pub fn interference(
    k: usize,
    n: usize,
    allocation: &Allocation,
    realization: &ChannelRealization,
    config: &EnvConfig,
) -> f64 {
    let p_d2d = config.v2v_power_mw();
    let mut acc = 0.0;
    for l in 0..realization.num_d2d() {
        if l != k && allocation.channel_of(l) == n {
            acc += p_d2d * realization.gain_v2v(l, k, n).composite_linear;
        }
    }
    acc + config.v2i_power_mw() * realization.gain_cue_at_rx(n, k).composite_linear
}

/// Shannon rate of pair `k` on channel `n` in bits/s:
/// `B·log2(1 + ρ_k^n·P·|h|²/(I + σ²))`; zero when the pair is not on `n`.
pub fn rate(
    k: usize,
    n: usize,
    allocation: &Allocation,
    realization: &ChannelRealization,
    config: &EnvConfig,
) -> f64 {
    if !allocation.rho(k, n) {
        return 0.0;
    }
    let signal = config.v2v_power_mw() * realization.gain_v2v(k, k, n).composite_linear;
    let denom = interference(k, n, allocation, realization, config) + config.noise_mw();
    config.bandwidth_hz * (1.0 + signal / denom).log2()
}

/// Sum of all pair rates under an allocation — the allocator's reward.
pub fn sum_rate(
    allocation: &Allocation,
    realization: &ChannelRealization,
    config: &EnvConfig,
) -> f64 {
    (0..realization.num_d2d())
        .map(|k| rate(k, allocation.channel_of(k), allocation, realization, config))
        .sum()
}

/// Local observation of pair `k` under a realization, with interference
/// measured as if `last_allocation` were still in force.
pub fn build_observation(
    k: usize,
    realization: &ChannelRealization,
    last_allocation: &Allocation,
    config: &EnvConfig,
) -> Observation {
    let n_ch = realization.num_channels();
    let gains_db = (0..n_ch)
        .map(|n| to_db(realization.gain_v2v(k, k, n).composite_linear))
        .collect();
    let interference_dbm = (0..n_ch)
        .map(|n| to_db(interference(k, n, last_allocation, realization, config)))
        .collect();
    Observation {
        gains_db,
        interference_dbm,
        power_dbm: config.v2v_power_dbm,
    }
}

/// Per-link shadowing states, owned by the environment between steps.
#[derive(Debug, Clone)]
struct ShadowBank {
    v2v: Vec<ShadowState>,
    cue_to_rx: Vec<ShadowState>,
    cue_to_bs: Vec<ShadowState>,
}

impl ShadowBank {
    fn stationary(config: &EnvConfig, rng: &mut ChaCha8Rng) -> Self {
        let (k, n) = (config.num_d2d, config.num_channels);
        let v2v_state =
            |rng: &mut ChaCha8Rng| ShadowState::new_stationary(config.v2v_decorrelation_m, config.v2v_shadow_std_db, rng);
        ShadowBank {
            v2v: (0..k * k).map(|_| v2v_state(rng)).collect(),
            cue_to_rx: (0..n * k).map(|_| v2v_state(rng)).collect(),
            cue_to_bs: (0..n)
                .map(|_| {
                    ShadowState::new_stationary(
                        config.v2i_decorrelation_m,
                        config.v2i_shadow_std_db,
                        rng,
                    )
                })
                .collect(),
        }
    }

    /// Advance every link's shadowing by the distance its endpoints moved.
    fn evolve(&mut self, topology: &Topology, dt_s: f64, rng: &mut ChaCha8Rng) {
        let k_count = topology.num_d2d();
        let n_count = topology.num_cues();
        let moved_tx: Vec<f64> = topology.pairs.iter().map(|p| p.tx.speed_mps() * dt_s).collect();
        let moved_rx: Vec<f64> = topology.pairs.iter().map(|p| p.rx.speed_mps() * dt_s).collect();
        let moved_cue: Vec<f64> = topology.cues.iter().map(|c| c.speed_mps() * dt_s).collect();
        for l in 0..k_count {
            for k in 0..k_count {
                let s = &mut self.v2v[l * k_count + k];
                *s = update_shadowing(*s, moved_tx[l] + moved_rx[k], rng);
            }
        }
        for n in 0..n_count {
            for k in 0..k_count {
                let s = &mut self.cue_to_rx[n * k_count + k];
                *s = update_shadowing(*s, moved_cue[n] + moved_rx[k], rng);
            }
        }
        for n in 0..n_count {
            let s = &mut self.cue_to_bs[n];
            *s = update_shadowing(*s, moved_cue[n], rng);
        }
    }
}

/// The stateful simulator: owns the topology, shadowing memory, the current
/// channel realization, and its RNG. Cloning yields an independent replica
/// that will produce the identical future, which the determinism tests use.
#[derive(Debug, Clone)]
pub struct V2xEnv {
    config: EnvConfig,
    grid: LaneGrid,
    topology: Topology,
    shadows: ShadowBank,
    realization: ChannelRealization,
    last_allocation: Allocation,
    rng: ChaCha8Rng,
}

impl V2xEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let grid = config.lane_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topology = drop_vehicles(&config.drop_config(), &grid, &mut rng)?;
        let mut shadows = ShadowBank::stationary(&config, &mut rng);
        let realization = realize_channels(&topology, &mut shadows, &config, &mut rng)?;
        let last_allocation = Allocation::round_robin(config.num_d2d, config.num_channels);
        Ok(V2xEnv {
            config,
            grid,
            topology,
            shadows,
            realization,
            last_allocation,
            rng,
        })
    }

    /// Fresh vehicle drop and channel state; the RNG stream continues, so a
    /// sequence of episodes from one seed is reproducible as a whole.
    pub fn reset(&mut self) -> Result<()> {
        self.topology = drop_vehicles(&self.config.drop_config(), &self.grid, &mut self.rng)?;
        self.shadows = ShadowBank::stationary(&self.config, &mut self.rng);
        self.realization =
            realize_channels(&self.topology, &mut self.shadows, &self.config, &mut self.rng)?;
        self.last_allocation =
            Allocation::round_robin(self.config.num_d2d, self.config.num_channels);
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn realization(&self) -> &ChannelRealization {
        &self.realization
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn last_allocation(&self) -> &Allocation {
        &self.last_allocation
    }

    /// Current observations, one per D2D pair.
    pub fn observations(&self) -> Vec<Observation> {
        (0..self.config.num_d2d)
            .map(|k| build_observation(k, &self.realization, &self.last_allocation, &self.config))
            .collect()
    }

    fn check_allocation(&self, allocation: &Allocation) -> Result<()> {
        if allocation.num_d2d() != self.config.num_d2d {
            return Err(Error::InvalidAllocation(format!(
                "allocation covers {} pairs, environment has {}",
                allocation.num_d2d(),
                self.config.num_d2d
            )));
        }
        if allocation.num_channels() != self.config.num_channels {
            return Err(Error::InvalidAllocation(format!(
                "allocation assumes {} channels, environment has {}",
                allocation.num_channels(),
                self.config.num_channels
            )));
        }
        Ok(())
    }

    /// Apply an allocation: score it on the current channels, then advance
    /// the world (mobility, shadowing, fading) and report the next
    /// observations as measured under this allocation.
    pub fn step(&mut self, allocation: &Allocation) -> Result<StepOutcome> {
        self.check_allocation(allocation)?;
        let per_link_rate: Vec<f64> = (0..self.config.num_d2d)
            .map(|k| {
                rate(
                    k,
                    allocation.channel_of(k),
                    allocation,
                    &self.realization,
                    &self.config,
                )
            })
            .collect();
        let reward = per_link_rate.iter().sum();

        move_vehicles(
            &mut self.topology,
            &self.grid,
            self.config.dt_s,
            self.config.turn_probability,
            &mut self.rng,
        );
        self.shadows.evolve(&self.topology, self.config.dt_s, &mut self.rng);
        self.realization =
            realize_channels(&self.topology, &mut self.shadows, &self.config, &mut self.rng)?;
        self.last_allocation = allocation.clone();

        Ok(StepOutcome {
            per_link_rate,
            reward,
            observations: self.observations(),
        })
    }
}

/// Compose pathloss, current shadowing, and fresh fast fading into the full
/// gain table for the current geometry.
fn realize_channels(
    topology: &Topology,
    shadows: &mut ShadowBank,
    config: &EnvConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelRealization> {
    let k_count = topology.num_d2d();
    let n_count = topology.num_cues();
    let h = config.vehicle_antenna_height_m;
    let v2v_budget = config.v2v_budget_db();
    let v2i_budget = config.v2i_budget_db();

    let mut v2v = Vec::with_capacity(k_count * k_count * n_count);
    for l in 0..k_count {
        for k in 0..k_count {
            let d = topology.pairs[l]
                .tx
                .position
                .distance_to(&topology.pairs[k].rx.position);
            let pl = pathloss_v2v_at(d, config.carrier_ghz, h, h)? + v2v_budget;
            let shadow = shadows.v2v[l * k_count + k].value_db;
            for _n in 0..n_count {
                v2v.push(LinkGain::new(pl, shadow, sample_fast_fading(rng)));
            }
        }
    }

    let mut cue_to_rx = Vec::with_capacity(n_count * k_count);
    for n in 0..n_count {
        for k in 0..k_count {
            let d = topology.cues[n]
                .position
                .distance_to(&topology.pairs[k].rx.position);
            let pl = pathloss_v2v_at(d, config.carrier_ghz, h, h)? + v2v_budget;
            let shadow = shadows.cue_to_rx[n * k_count + k].value_db;
            cue_to_rx.push(LinkGain::new(pl, shadow, sample_fast_fading(rng)));
        }
    }

    let mut cue_to_bs = Vec::with_capacity(n_count);
    for n in 0..n_count {
        let horizontal = topology.cues[n].position.distance_to(&topology.bs_position);
        let dz = config.bs_antenna_height_m - config.vehicle_antenna_height_m;
        let d = (horizontal * horizontal + dz * dz).sqrt().max(channel::MIN_LINK_DISTANCE_M);
        let pl = pathloss_v2i(d / 1000.0)? + v2i_budget;
        let shadow = shadows.cue_to_bs[n].value_db;
        cue_to_bs.push(LinkGain::new(pl, shadow, sample_fast_fading(rng)));
    }

    ChannelRealization::new(k_count, n_count, v2v, cue_to_rx, cue_to_bs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// A realization whose composite gains are exactly the given numbers
    /// (pathloss and shadowing zeroed, the gain carried by the fading slot).
    fn fixture_realization(
        num_d2d: usize,
        num_channels: usize,
        mut v2v: impl FnMut(usize, usize, usize) -> f64,
        mut cue: impl FnMut(usize, usize) -> f64,
    ) -> ChannelRealization {
        let mut v2v_gains = Vec::new();
        for l in 0..num_d2d {
            for k in 0..num_d2d {
                for n in 0..num_channels {
                    v2v_gains.push(LinkGain::new(0.0, 0.0, v2v(l, k, n)));
                }
            }
        }
        let mut cue_gains = Vec::new();
        for n in 0..num_channels {
            for k in 0..num_d2d {
                cue_gains.push(LinkGain::new(0.0, 0.0, cue(n, k)));
            }
        }
        let bs_gains = (0..num_channels)
            .map(|_| LinkGain::new(0.0, 0.0, 1.0))
            .collect();
        ChannelRealization::new(num_d2d, num_channels, v2v_gains, cue_gains, bs_gains).unwrap()
    }

    fn small_config(num_d2d: usize, num_channels: usize) -> EnvConfig {
        EnvConfig {
            num_d2d,
            num_channels,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn power_conversions_match_hand_values() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.v2v_power_mw(), 10.0);
        assert_relative_eq!(cfg.v2i_power_mw(), 199.52623149688787, max_relative = 1e-15);
        assert_relative_eq!(cfg.noise_mw(), 3.9810717055349695e-12, max_relative = 1e-15);
    }

    #[test]
    fn interference_sums_cochannel_terms_and_cue() {
        // receiver 0 on channel 1 with two co-channel interferers
        let cfg = small_config(3, 2);
        let real = fixture_realization(
            3,
            2,
            |l, k, n| match (l, k, n) {
                (1, 0, 1) => 3e-9,
                (2, 0, 1) => 7e-10,
                _ => 1.0,
            },
            |n, k| if (n, k) == (1, 0) { 2.5e-8 } else { 1.0 },
        );
        let alloc = Allocation::from_channels(vec![1, 1, 1], 2).unwrap();
        let i = interference(0, 1, &alloc, &real, &cfg);
        // 10·3e−9 + 10·7e−10 + 199.52623149688787·2.5e−8, composed by hand
        assert_relative_eq!(i, 5.025155787422196e-06, max_relative = 1e-14);
    }

    #[test]
    fn interference_without_cochannel_peers_is_cue_only() {
        let cfg = small_config(3, 3);
        let real = fixture_realization(3, 3, |_, _, _| 1e-9, |_, _| 2.5e-8);
        // everyone on a different channel
        let alloc = Allocation::from_channels(vec![0, 1, 2], 3).unwrap();
        let i = interference(0, 0, &alloc, &real, &cfg);
        assert_relative_eq!(
            i,
            cfg.v2i_power_mw() * 2.5e-8,
            max_relative = 1e-15
        );
    }

    #[test]
    fn single_pair_interference_is_cue_only() {
        let cfg = small_config(1, 2);
        let real = fixture_realization(1, 2, |_, _, _| 1e-7, |_, _| 4e-8);
        let alloc = Allocation::from_channels(vec![0], 2).unwrap();
        assert_relative_eq!(
            interference(0, 0, &alloc, &real, &cfg),
            cfg.v2i_power_mw() * 4e-8,
            max_relative = 1e-15
        );
    }

    #[test]
    fn rate_matches_hand_computed_shannon_value() {
        let cfg = small_config(3, 2);
        let real = fixture_realization(
            3,
            2,
            |l, k, n| match (l, k, n) {
                (0, 0, 1) => 4.2e-7,
                (1, 0, 1) => 3e-9,
                (2, 0, 1) => 7e-10,
                _ => 1.0,
            },
            |n, k| if (n, k) == (1, 0) { 2.5e-8 } else { 1.0 },
        );
        let alloc = Allocation::from_channels(vec![1, 1, 1], 2).unwrap();
        // 1e6·log2(1 + 10·4.2e−7/(5.025155787422196e−6 + 10^(−11.4)))
        assert_relative_eq!(
            rate(0, 1, &alloc, &real, &cfg),
            876404.4314498346,
            max_relative = 1e-13
        );
    }

    #[test]
    fn rate_off_channel_is_zero() {
        let cfg = small_config(2, 2);
        let real = fixture_realization(2, 2, |_, _, _| 1e-6, |_, _| 1e-9);
        let alloc = Allocation::from_channels(vec![0, 1], 2).unwrap();
        assert_eq!(rate(0, 1, &alloc, &real, &cfg), 0.0);
        assert!(rate(0, 0, &alloc, &real, &cfg) > 0.0);
    }

    #[test]
    fn unit_sinr_gives_exactly_bandwidth() {
        let cfg = small_config(1, 1);
        let g_cue = 4e-8;
        // choose the direct gain so signal power equals interference + noise
        let h = (cfg.v2i_power_mw() * g_cue + cfg.noise_mw()) / cfg.v2v_power_mw();
        let real = fixture_realization(1, 1, |_, _, _| h, |_, _| g_cue);
        let alloc = Allocation::from_channels(vec![0], 1).unwrap();
        assert_relative_eq!(
            rate(0, 0, &alloc, &real, &cfg),
            cfg.bandwidth_hz,
            max_relative = 1e-12
        );
    }

    #[test]
    fn cue_interferes_only_on_its_own_channel() {
        let cfg = small_config(2, 3);
        let mut real = fixture_realization(2, 3, |_, _, _| 1e-8, |_, _| 1e-8);
        let alloc = Allocation::from_channels(vec![0, 1], 3).unwrap();
        let before = rate(0, 0, &alloc, &real, &cfg);
        // cranking CUE 2's gain at receiver 0 must not affect channel 0
        real.gain_cue_at_rx_mut(2, 0).fast_fading_power = 1e6;
        real.gain_cue_at_rx_mut(2, 0).composite_linear = 1e6;
        assert_eq!(rate(0, 0, &alloc, &real, &cfg), before);
    }

    #[test]
    fn observation_entries_are_db_of_the_underlying_quantities() {
        let cfg = small_config(2, 2);
        let real = fixture_realization(
            2,
            2,
            |l, k, _n| if l == k { 1e-6 } else { 1e-9 },
            |_, _| 1e-8,
        );
        let alloc = Allocation::from_channels(vec![0, 0], 2).unwrap();
        let obs = build_observation(0, &real, &alloc, &cfg);
        assert_eq!(obs.len(), 5);
        assert_relative_eq!(obs.gains_db[0], -60.0, max_relative = 1e-12);
        assert_relative_eq!(obs.gains_db[1], -60.0, max_relative = 1e-12);
        let i0 = interference(0, 0, &alloc, &real, &cfg);
        assert_relative_eq!(obs.interference_dbm[0], 10.0 * i0.log10(), max_relative = 1e-12);
        assert_eq!(obs.power_dbm, 10.0);

        let norm = obs.normalized();
        assert_eq!(norm.len(), 5);
        assert_relative_eq!(norm[0], (-60.0 + 120.0) / 60.0, max_relative = 1e-12);
        assert_relative_eq!(norm[4], 10.0 / 23.0, max_relative = 1e-15);
        assert!(norm.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn allocation_enforces_channel_range() {
        assert!(Allocation::from_channels(vec![0, 2], 2).is_err());
        assert!(Allocation::from_channels(vec![], 2).is_err());
        let a = Allocation::from_channels(vec![0, 1, 1], 2).unwrap();
        assert!(a.rho(1, 1));
        assert!(!a.rho(1, 0));
        assert_eq!(a.num_d2d(), 3);
    }

    #[test]
    fn round_robin_spreads_pairs() {
        let a = Allocation::round_robin(4, 2);
        assert_eq!(a.channels(), &[0, 1, 0, 1]);
    }

    #[test]
    fn step_reward_is_sum_of_link_rates() {
        let mut env = V2xEnv::new(small_config(3, 2), 99).unwrap();
        let alloc = Allocation::from_channels(vec![0, 1, 0], 2).unwrap();
        let outcome = env.step(&alloc).unwrap();
        assert_eq!(outcome.per_link_rate.len(), 3);
        assert!(outcome.per_link_rate.iter().all(|&r| r >= 0.0));
        let sum: f64 = outcome.per_link_rate.iter().sum();
        assert_eq!(outcome.reward, sum);
        assert_eq!(outcome.observations.len(), 3);
        for obs in &outcome.observations {
            assert_eq!(obs.len(), 5);
        }
    }

    #[test]
    fn step_reward_equals_independent_rate_resummation() {
        let mut env = V2xEnv::new(small_config(3, 3), 5).unwrap();
        let alloc = Allocation::from_channels(vec![2, 2, 0], 3).unwrap();
        // recompute over the full (k, n) grid before stepping consumes the state
        let mut expected = 0.0;
        for k in 0..3 {
            for n in 0..3 {
                expected += rate(k, n, &alloc, env.realization(), env.config());
            }
        }
        let outcome = env.step(&alloc).unwrap();
        assert_relative_eq!(outcome.reward, expected, max_relative = 1e-12);
    }

    #[test]
    fn env_is_deterministic_and_clonable() {
        let config = small_config(2, 2);
        let mut a = V2xEnv::new(config.clone(), 12).unwrap();
        let mut b = a.clone();
        let alloc = Allocation::from_channels(vec![1, 0], 2).unwrap();
        for _ in 0..20 {
            let oa = a.step(&alloc).unwrap();
            let ob = b.step(&alloc).unwrap();
            assert_eq!(oa.reward, ob.reward);
            assert_eq!(oa.observations, ob.observations);
        }
        let mut c = V2xEnv::new(config, 12).unwrap();
        let oc = c.step(&alloc).unwrap();
        let mut d = V2xEnv::new(small_config(2, 2), 13).unwrap();
        let od = d.step(&alloc).unwrap();
        assert_ne!(oc.reward, od.reward, "different seeds, different worlds");
    }

    #[test]
    fn reset_rebuilds_the_scene() {
        let mut env = V2xEnv::new(small_config(2, 2), 3).unwrap();
        let before: Vec<_> = env
            .topology()
            .pairs
            .iter()
            .map(|p| (p.tx.position.x, p.tx.position.y))
            .collect();
        env.reset().unwrap();
        let after: Vec<_> = env
            .topology()
            .pairs
            .iter()
            .map(|p| (p.tx.position.x, p.tx.position.y))
            .collect();
        assert_ne!(before, after);
        assert_eq!(env.observations().len(), 2);
    }

    #[test]
    fn step_rejects_misshapen_allocations() {
        let mut env = V2xEnv::new(small_config(2, 2), 3).unwrap();
        let wrong_pairs = Allocation::from_channels(vec![0], 2).unwrap();
        assert!(env.step(&wrong_pairs).is_err());
        let wrong_channels = Allocation::from_channels(vec![0, 1], 3).unwrap();
        assert!(env.step(&wrong_channels).is_err());
    }

    #[test]
    fn realized_gains_are_positive_and_finite() {
        let env = V2xEnv::new(EnvConfig::default(), 77).unwrap();
        let real = env.realization();
        for l in 0..4 {
            for k in 0..4 {
                for n in 0..4 {
                    let g = real.gain_v2v(l, k, n).composite_linear;
                    assert!(g > 0.0 && g.is_finite());
                }
            }
        }
        for n in 0..4 {
            for k in 0..4 {
                let g = real.gain_cue_at_rx(n, k).composite_linear;
                assert!(g > 0.0 && g.is_finite());
            }
            let g = real.gain_cue_at_bs(n).composite_linear;
            assert!(g > 0.0 && g.is_finite());
        }
    }

    #[test]
    fn config_validation_catches_nonsense() {
        let mut cfg = EnvConfig::default();
        cfg.num_d2d = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.dt_s = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.bandwidth_hz = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.speed_min_kmh = 20.0;
        cfg.speed_max_kmh = 10.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.vehicle_antenna_height_m = 0.5;
        assert!(cfg.validate().is_err());
        assert!(EnvConfig::default().validate().is_ok());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = EnvConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: EnvConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.num_d2d, 4);
        assert_eq!(back.noise_power_dbm, -114.0);
        // partial files fall back to defaults for missing fields
        let partial: EnvConfig = toml::from_str("num_d2d = 2\nnum_channels = 2\n").unwrap();
        assert_eq!(partial.num_d2d, 2);
        assert_eq!(partial.bandwidth_hz, 1e6);
        // unknown keys are rejected rather than silently ignored
        assert!(toml::from_str::<EnvConfig>("nonexistent_knob = 1\n").is_err());
    }

    proptest! {
        #[test]
        fn stronger_interferer_never_raises_victim_rate(
            g_direct in 1e-9f64..1e-5,
            g_cross in 1e-10f64..1e-6,
            bump in 1.0f64..1e3,
            g_cue in 1e-10f64..1e-7,
        ) {
            let cfg = small_config(2, 1);
            let alloc = Allocation::from_channels(vec![0, 0], 1).unwrap();
            let make = |cross: f64| fixture_realization(
                2,
                1,
                move |l, k, _| match (l, k) {
                    (0, 0) => g_direct,
                    (1, 0) => cross,
                    _ => 1e-9,
                },
                move |_, _| g_cue,
            );
            let base = rate(0, 0, &alloc, &make(g_cross), &cfg);
            let worse = rate(0, 0, &alloc, &make(g_cross * bump), &cfg);
            prop_assert!(worse <= base);
        }

        #[test]
        fn rates_are_finite_and_nonnegative(
            g_direct in 1e-12f64..1e-3,
            g_cross in 1e-12f64..1e-3,
            g_cue in 1e-12f64..1e-3,
            ch in 0usize..2,
        ) {
            let cfg = small_config(2, 2);
            let real = fixture_realization(
                2,
                2,
                move |l, k, _| if l == k { g_direct } else { g_cross },
                move |_, _| g_cue,
            );
            let alloc = Allocation::from_channels(vec![ch, 1 - ch], 2).unwrap();
            for k in 0..2 {
                for n in 0..2 {
                    let r = rate(k, n, &alloc, &real, &cfg);
                    prop_assert!(r.is_finite() && r >= 0.0);
                }
            }
        }
    }
}
