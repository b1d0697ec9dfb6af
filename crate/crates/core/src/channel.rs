//! Stochastic link-gain generation.
//!
//! Every radio link in the simulation is the product of three effects:
//! deterministic pathloss from geometry, spatially correlated log-normal
//! shadowing, and per-step Rayleigh small-scale fading. Pathloss and
//! shadowing are kept in dB; fading and the composite gain are linear.
//!
//! Fixed model constants (documented here because they are folded into the
//! link budget rather than configured per call):
//!
//! * Cellular-link pathloss: `128.1 + 37.6·log10(d_km)`.
//! * Vehicle-to-vehicle pathloss: two-slope street-level LoS model with
//!   breakpoint `d_bp = 4·(h_tx−1)·(h_rx−1)·f_c/c`, `c = 3e8 m/s`;
//!   below the breakpoint `22.7·log10(d) + 41.0 + 20·log10(f_c/5 GHz)`,
//!   above it `40·log10(d) + 9.45 − 17.3·log10(h_tx−1) − 17.3·log10(h_rx−1)
//!   + 2.7·log10(f_c/5 GHz)`.
//! * Link distances are floored at [`MIN_LINK_DISTANCE_M`] = 3 m.
//! * Shadowing evolves as a first-order Gauss-Markov process keyed to the
//!   distance moved: `s' = a·s + sqrt(1−a²)·σ·z`, `a = exp(−Δd/d_corr)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Distance floor applied to every link; vehicles cannot physically overlap.
pub const MIN_LINK_DISTANCE_M: f64 = 3.0;

/// Speed of light used by the breakpoint-distance formula.
pub const SPEED_OF_LIGHT_M_S: f64 = 3.0e8;

/// Default antenna height for vehicles, meters.
pub const VEHICLE_ANTENNA_HEIGHT_M: f64 = 1.5;

/// A point in the simulation area, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    /// Euclidean distance to another position, meters.
    pub fn distance_to(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Per-link log-normal shadowing state.
///
/// `value_db` is the current shadowing realization; its stationary marginal
/// is `Normal(0, std_dev²)`.
#[derive(Debug, Clone, Copy)]
pub struct ShadowState {
    pub value_db: f64,
    pub decorrelation_distance: f64,
    pub std_dev: f64,
}

impl ShadowState {
    /// Draw a fresh state from the stationary marginal.
    pub fn new_stationary<R: Rng + ?Sized>(
        decorrelation_distance: f64,
        std_dev: f64,
        rng: &mut R,
    ) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        ShadowState {
            value_db: std_dev * z,
            decorrelation_distance,
            std_dev,
        }
    }
}

/// One realized link gain. `composite_linear` is always
/// `10^(−(pathloss_db + shadow_db)/10) · fast_fading_power`.
///
/// `pathloss_db` here is the full large-scale budget: raw pathloss minus
/// the antenna gains plus the receiver noise figure, all in dB.
#[derive(Debug, Clone, Copy)]
pub struct LinkGain {
    pub pathloss_db: f64,
    pub shadow_db: f64,
    pub fast_fading_power: f64,
    pub composite_linear: f64,
}

impl LinkGain {
    pub fn new(pathloss_db: f64, shadow_db: f64, fast_fading_power: f64) -> Self {
        LinkGain {
            pathloss_db,
            shadow_db,
            fast_fading_power,
            composite_linear: composite_gain(pathloss_db, shadow_db, fast_fading_power),
        }
    }
}

/// Cellular uplink pathloss in dB; `distance_km` is the vehicle-to-base
/// station distance in kilometers.
pub fn pathloss_v2i(distance_km: f64) -> Result<f64> {
    if !distance_km.is_finite() || distance_km <= 0.0 {
        return Err(Error::Domain(format!(
            "v2i pathloss needs a positive finite distance, got {distance_km} km"
        )));
    }
    Ok(128.1 + 37.6 * distance_km.log10())
}

/// Vehicle-to-vehicle pathloss in dB between two positions, using the
/// default antenna height for both ends. Distances below the floor are
/// clamped, not rejected.
pub fn pathloss_v2v(tx: Position, rx: Position, carrier_ghz: f64) -> Result<f64> {
    pathloss_v2v_at(
        tx.distance_to(&rx),
        carrier_ghz,
        VEHICLE_ANTENNA_HEIGHT_M,
        VEHICLE_ANTENNA_HEIGHT_M,
    )
}

/// Two-slope street-level LoS pathloss at an explicit distance, dB.
pub fn pathloss_v2v_at(
    distance_m: f64,
    carrier_ghz: f64,
    h_tx_m: f64,
    h_rx_m: f64,
) -> Result<f64> {
    if !carrier_ghz.is_finite() || carrier_ghz <= 0.0 {
        return Err(Error::Domain(format!(
            "carrier frequency must be positive, got {carrier_ghz} GHz"
        )));
    }
    if h_tx_m <= 1.0 || h_rx_m <= 1.0 {
        return Err(Error::Domain(format!(
            "effective antenna heights must exceed 1 m, got {h_tx_m} / {h_rx_m}"
        )));
    }
    let d = distance_m.max(MIN_LINK_DISTANCE_M);
    let h_tx = h_tx_m - 1.0;
    let h_rx = h_rx_m - 1.0;
    let breakpoint = 4.0 * h_tx * h_rx * carrier_ghz * 1e9 / SPEED_OF_LIGHT_M_S;
    let freq_ratio = (carrier_ghz / 5.0).log10();
    let pl = if d < breakpoint {
        22.7 * d.log10() + 41.0 + 20.0 * freq_ratio
    } else {
        40.0 * d.log10() + 9.45 - 17.3 * h_tx.log10() - 17.3 * h_rx.log10() + 2.7 * freq_ratio
    };
    Ok(pl)
}

/// Advance a shadowing state by the distance the link endpoints moved.
///
/// Gauss-Markov update: `s' = a·s + sqrt(1−a²)·σ·z` with
/// `a = exp(−Δd/d_corr)`, so the stationary marginal stays `N(0, σ²)`.
pub fn update_shadowing<R: Rng + ?Sized>(
    state: ShadowState,
    moved_distance: f64,
    rng: &mut R,
) -> ShadowState {
    debug_assert!(moved_distance >= 0.0);
    let a = (-moved_distance / state.decorrelation_distance).exp();
    let z: f64 = rng.sample(StandardNormal);
    ShadowState {
        value_db: a * state.value_db + (1.0 - a * a).sqrt() * state.std_dev * z,
        ..state
    }
}

/// Sample `|h|²` for `h` circularly-symmetric complex Gaussian with unit
/// power. The result is exponential with mean 1.
pub fn sample_fast_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    0.5 * (re * re + im * im)
}

/// Compose large-scale dB terms with a linear fast-fading power.
pub fn composite_gain(pathloss_db: f64, shadow_db: f64, fast_power: f64) -> f64 {
    10f64.powf(-(pathloss_db + shadow_db) / 10.0) * fast_power
}
