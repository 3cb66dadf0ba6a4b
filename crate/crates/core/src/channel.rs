//! Geometry, path loss, Rayleigh fading and position-observation noise.
//!
//! The base station sits at the origin. A user at distance `d` sees the
//! channel gain `|h|² d^{-α}` with `|h|² ~ Exp(1)`, so the gain itself is
//! exponential with rate `λ = d^α` ([`PathLossRate`]). Position reports are
//! the true coordinates plus independent `N(0, σ_ob²)` noise per axis.
//!
//! All randomness is drawn from caller-owned generators; [`substream`] gives
//! the per-trial streams used by the Monte Carlo engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Deployments closer than this to the base station are redrawn.
pub const DEFAULT_MIN_DISTANCE: f64 = 0.5;

/// Per-trial generator: the master seed selects the key, the stream index
/// (trial number, user number, ...) selects an independent ChaCha stream.
pub fn substream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// True position of a user in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserGeometry {
    pub x: f64,
    pub y: f64,
}

impl UserGeometry {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Reported (noisy or filtered) position of a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedGeometry {
    pub x_hat: f64,
    pub y_hat: f64,
}

impl ObservedGeometry {
    pub fn new(x_hat: f64, y_hat: f64) -> Self {
        Self { x_hat, y_hat }
    }

    pub fn distance(&self) -> f64 {
        self.x_hat.hypot(self.y_hat)
    }
}

/// Link-level parameters shared by the analysis and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Receiver noise power in dBm.
    pub noise_power_dbm: f64,
    /// Observation-noise variance per axis (m²).
    pub sigma_ob2: f64,
    /// Common target rate in bit/channel use.
    pub target_rate_bpcu: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            noise_power_dbm: -50.0,
            sigma_ob2: 0.0,
            target_rate_bpcu: 0.5,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("{} (must be positive)", self.alpha)));
        }
        if !(self.sigma_ob2 >= 0.0) || !self.sigma_ob2.is_finite() {
            return Err(invalid("sigma_ob2", format!("{} (must be >= 0)", self.sigma_ob2)));
        }
        if !(self.target_rate_bpcu > 0.0) || !self.target_rate_bpcu.is_finite() {
            return Err(invalid(
                "target_rate_bpcu",
                format!("{} (must be positive)", self.target_rate_bpcu),
            ));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(invalid("noise_power_dbm", "must be finite"));
        }
        Ok(())
    }

    /// `ε₀ = 2^{R₀} - 1`.
    pub fn target_snr(&self) -> f64 {
        target_snr(self.target_rate_bpcu)
    }

    /// `ε₀' = 2^{2R₀} - 1`: each user gets half of the resource under OMA.
    pub fn oma_target_snr(&self) -> f64 {
        target_snr(2.0 * self.target_rate_bpcu)
    }

    pub fn path_loss_rate(&self, distance: f64) -> PathLossRate {
        PathLossRate::new(distance, self.alpha)
    }
}

pub fn target_snr(rate_bpcu: f64) -> f64 {
    (rate_bpcu * std::f64::consts::LN_2).exp_m1()
}

/// Rate `λ = d^α` of the exponentially distributed channel gain.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PathLossRate(pub f64);

impl PathLossRate {
    pub fn new(distance: f64, alpha: f64) -> Self {
        Self(distance.powf(alpha))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Mean channel gain `d^{-α}`.
    pub fn mean_gain(self) -> f64 {
        1.0 / self.0
    }
}

/// Noncentrality `d²` of the squared estimated distance. Not to be confused
/// with [`PathLossRate`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoncentralityParam(pub f64);

impl NoncentralityParam {
    pub fn from_distance(distance: f64) -> Self {
        Self(distance * distance)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// One area-uniform draw in the disc, redrawn while closer than `min_distance`.
pub fn deploy_one<R: Rng + ?Sized>(rng: &mut R, disc_radius: f64, min_distance: f64) -> UserGeometry {
    loop {
        let r = disc_radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        if r >= min_distance {
            return UserGeometry::new(r * theta.cos(), r * theta.sin());
        }
    }
}

/// `count` users uniformly over the disc of radius `disc_radius`.
pub fn deploy_users(count: usize, disc_radius: f64, rng_seed: u64) -> Result<Vec<UserGeometry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    deploy_users_with(&mut rng, count, disc_radius, DEFAULT_MIN_DISTANCE)
}

pub fn deploy_users_with<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    disc_radius: f64,
    min_distance: f64,
) -> Result<Vec<UserGeometry>> {
    if !(disc_radius > 0.0) || !disc_radius.is_finite() {
        return Err(invalid("disc_radius", format!("{disc_radius} (must be positive)")));
    }
    if !(min_distance >= 0.0 && min_distance < disc_radius) {
        return Err(invalid(
            "min_distance",
            format!("{min_distance} (must lie in [0, disc_radius))"),
        ));
    }
    Ok((0..count).map(|_| deploy_one(rng, disc_radius, min_distance)).collect())
}

/// Noisy position report with independent `N(0, σ_ob²)` errors per axis.
pub fn observe_position<R: Rng + ?Sized>(truth: &UserGeometry, sigma_ob2: f64, rng: &mut R) -> ObservedGeometry {
    debug_assert!(sigma_ob2 >= 0.0);
    let sigma = sigma_ob2.sqrt();
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    ObservedGeometry::new(truth.x + sigma * nx, truth.y + sigma * ny)
}

/// One draw of the small-scale fading power `|h|² ~ Exp(1)`.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// dBm to milliwatts.
pub fn dbm_to_linear(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

/// Transmit SNR `ρ = P / σ_n²` from powers in dBm.
pub fn snr_of(power_dbm: f64, noise_dbm: f64) -> f64 {
    10f64.powf((power_dbm - noise_dbm) / 10.0)
}
