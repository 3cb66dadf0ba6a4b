//! User motion.
//!
//! Two things live here. [`StateSpaceModel`] is the constant-velocity
//! kinematic model the tracker assumes, with state `[x, vx, y, vy]`.
//! The trajectory generators (random walk, random waypoint, Gauss–Markov)
//! produce the ground truth the tracker is run against; they do not follow
//! the linear model.

use std::io::Write;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{deploy_one, DEFAULT_MIN_DISTANCE};
use crate::error::{invalid, Result};

/// Default sampling interval in seconds.
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 0.2;
/// Default number of samples per trajectory.
pub const DEFAULT_HORIZON: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MobileState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl MobileState {
    pub fn new(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self { x, vx, y, vy }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.vx, self.y, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn distance(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Discrete constant-velocity model with white acceleration on the position
/// entries and Gaussian position measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    /// Sampling interval `T` in seconds.
    pub sample_interval: f64,
    /// Process-noise intensity `σ_w²`.
    pub sigma_w2: f64,
    /// Measurement-noise variance per axis `σ_ob²`.
    pub sigma_ob2: f64,
}

impl StateSpaceModel {
    pub fn new(sample_interval: f64, sigma_w2: f64, sigma_ob2: f64) -> Result<Self> {
        let m = Self {
            sample_interval,
            sigma_w2,
            sigma_ob2,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_interval > 0.0) || !self.sample_interval.is_finite() {
            return Err(invalid(
                "sample_interval",
                format!("{} (must be positive)", self.sample_interval),
            ));
        }
        if !(self.sigma_w2 >= 0.0) || !self.sigma_w2.is_finite() {
            return Err(invalid("sigma_w2", format!("{} (must be nonnegative)", self.sigma_w2)));
        }
        if !(self.sigma_ob2 >= 0.0) || !self.sigma_ob2.is_finite() {
            return Err(invalid(
                "sigma_ob2",
                format!("{} (must be nonnegative)", self.sigma_ob2),
            ));
        }
        Ok(())
    }

    /// `A = exp(ÃT)`: a `[1 T; 0 1]` block per axis.
    pub fn transition(&self) -> Matrix4<f64> {
        let t = self.sample_interval;
        Matrix4::new(
            1.0, t, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, t, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    /// `Q = diag(Tσ_w², 0, Tσ_w², 0)`.
    pub fn process_covariance(&self) -> Matrix4<f64> {
        let q = self.sample_interval * self.sigma_w2;
        Matrix4::from_diagonal(&Vector4::new(q, 0.0, q, 0.0))
    }

    /// `H` selects the two position entries.
    pub fn observation(&self) -> Matrix2x4<f64> {
        Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        )
    }

    /// `R = σ_ob² I₂`.
    pub fn observation_covariance(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.sigma_ob2
    }
}

/// `s_{k+1} = A s_k + w_k` with `w_k ~ N(0, Q)`.
pub fn linear_step<R: Rng + ?Sized>(state: &MobileState, model: &StateSpaceModel, rng: &mut R) -> MobileState {
    let std = (model.sample_interval * model.sigma_w2).sqrt();
    let wx: f64 = StandardNormal.sample(rng);
    let wy: f64 = StandardNormal.sample(rng);
    let mut next = MobileState::from_vector(&(model.transition() * state.as_vector()));
    next.x += std * wx;
    next.y += std * wy;
    next
}

/// `z = H s + n` with `n ~ N(0, σ_ob² I₂)`.
pub fn observe_state<R: Rng + ?Sized>(state: &MobileState, model: &StateSpaceModel, rng: &mut R) -> Vector2<f64> {
    let std = model.sigma_ob2.sqrt();
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    model.observation() * state.as_vector() + Vector2::new(std * nx, std * ny)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MobilityModel {
    /// Speed and heading redrawn every `interval` samples.
    RandomWalk {
        min_speed: f64,
        max_speed: f64,
        interval: usize,
    },
    /// Straight legs to uniform waypoints with a pause on arrival.
    RandomWaypoint {
        min_speed: f64,
        max_speed: f64,
        max_pause: usize,
    },
    /// First-order autoregressive speed and heading.
    GaussMarkov {
        speed_variance: f64,
        tuning: f64,
        mean_speed: f64,
        direction_std: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    pub model: MobilityModel,
    pub disc_radius: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
}

fn default_sample_interval() -> f64 {
    DEFAULT_SAMPLE_INTERVAL
}

fn default_min_distance() -> f64 {
    DEFAULT_MIN_DISTANCE
}

/// Which of the three generators to use, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityKind {
    RandomWalk,
    RandomWaypoint,
    GaussMarkov,
}

impl MobilityKind {
    pub const ALL: [MobilityKind; 3] = [Self::RandomWalk, Self::RandomWaypoint, Self::GaussMarkov];

    pub fn name(self) -> &'static str {
        match self {
            Self::RandomWalk => "rw",
            Self::RandomWaypoint => "rwp",
            Self::GaussMarkov => "gm",
        }
    }

    pub fn default_params(self) -> MobilityParams {
        match self {
            Self::RandomWalk => MobilityParams::random_walk(),
            Self::RandomWaypoint => MobilityParams::random_waypoint(),
            Self::GaussMarkov => MobilityParams::gauss_markov(),
        }
    }
}

impl std::str::FromStr for MobilityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rw" | "random_walk" => Ok(Self::RandomWalk),
            "rwp" | "random_waypoint" => Ok(Self::RandomWaypoint),
            "gm" | "gauss_markov" => Ok(Self::GaussMarkov),
            other => Err(format!("unknown mobility model `{other}` (expected rw, rwp or gm)")),
        }
    }
}

impl MobilityParams {
    /// 0–2 m/s, heading redrawn every 30 samples, 30 m disc.
    pub fn random_walk() -> Self {
        Self {
            model: MobilityModel::RandomWalk {
                min_speed: 0.0,
                max_speed: 2.0,
                interval: 30,
            },
            disc_radius: 30.0,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            min_distance: DEFAULT_MIN_DISTANCE,
        }
    }

    /// 1–3 m/s legs, pauses of up to 5 samples, 50 m disc.
    pub fn random_waypoint() -> Self {
        Self {
            model: MobilityModel::RandomWaypoint {
                min_speed: 1.0,
                max_speed: 3.0,
                max_pause: 5,
            },
            disc_radius: 50.0,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            min_distance: DEFAULT_MIN_DISTANCE,
        }
    }

    /// Speed variance 2, memory 0.5, mean speed 1 m/s, 30 m disc.
    pub fn gauss_markov() -> Self {
        Self {
            model: MobilityModel::GaussMarkov {
                speed_variance: 2.0,
                tuning: 0.5,
                mean_speed: 1.0,
                direction_std: 0.5,
            },
            disc_radius: 30.0,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            min_distance: DEFAULT_MIN_DISTANCE,
        }
    }

    pub fn kind(&self) -> MobilityKind {
        match self.model {
            MobilityModel::RandomWalk { .. } => MobilityKind::RandomWalk,
            MobilityModel::RandomWaypoint { .. } => MobilityKind::RandomWaypoint,
            MobilityModel::GaussMarkov { .. } => MobilityKind::GaussMarkov,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.disc_radius > 0.0) || !self.disc_radius.is_finite() {
            return Err(invalid(
                "disc_radius",
                format!("{} (must be positive)", self.disc_radius),
            ));
        }
        if !(self.sample_interval > 0.0) || !self.sample_interval.is_finite() {
            return Err(invalid(
                "sample_interval",
                format!("{} (must be positive)", self.sample_interval),
            ));
        }
        if !(self.min_distance >= 0.0 && self.min_distance < self.disc_radius) {
            return Err(invalid(
                "min_distance",
                format!("{} (must lie in [0, disc_radius))", self.min_distance),
            ));
        }
        let speeds = |lo: f64, hi: f64| -> Result<()> {
            if !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() {
                return Err(invalid("speed", format!("[{lo}, {hi}] (need 0 <= min <= max)")));
            }
            Ok(())
        };
        match self.model {
            MobilityModel::RandomWalk {
                min_speed,
                max_speed,
                interval,
            } => {
                speeds(min_speed, max_speed)?;
                if interval == 0 {
                    return Err(invalid("interval", "0 (must be at least one sample)"));
                }
            }
            MobilityModel::RandomWaypoint {
                min_speed, max_speed, ..
            } => {
                speeds(min_speed, max_speed)?;
                if min_speed == 0.0 {
                    return Err(invalid("min_speed", "0 (a waypoint leg must make progress)"));
                }
            }
            MobilityModel::GaussMarkov {
                speed_variance,
                tuning,
                mean_speed,
                direction_std,
            } => {
                if !(0.0..=1.0).contains(&tuning) {
                    return Err(invalid("tuning", format!("{tuning} (must lie in [0, 1])")));
                }
                if !(speed_variance >= 0.0) || !speed_variance.is_finite() {
                    return Err(invalid(
                        "speed_variance",
                        format!("{speed_variance} (must be nonnegative)"),
                    ));
                }
                if !(mean_speed >= 0.0) || !mean_speed.is_finite() {
                    return Err(invalid("mean_speed", format!("{mean_speed} (must be nonnegative)")));
                }
                if !(direction_std >= 0.0) || !direction_std.is_finite() {
                    return Err(invalid(
                        "direction_std",
                        format!("{direction_std} (must be nonnegative)"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Samples of one user's motion at spacing `sample_interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_interval: f64,
    pub states: Vec<MobileState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Moves from `from` to `to`, reflecting specularly off the circle of radius
/// `radius`. Returns the end point and the outward normal at the hit point.
fn reflect_in_disc(from: Vector2<f64>, to: Vector2<f64>, radius: f64) -> (Vector2<f64>, Option<Vector2<f64>>) {
    if to.norm() <= radius {
        return (to, None);
    }
    let d = to - from;
    let a = d.dot(&d);
    let b = 2.0 * from.dot(&d);
    let c = from.dot(&from) - radius * radius;
    let s = ((-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)).clamp(0.0, 1.0);
    let hit = from + d * s;
    let normal = hit / hit.norm();
    let rest = d * (1.0 - s);
    let mut end = hit + rest - normal * (2.0 * rest.dot(&normal));
    let r = end.norm();
    if r > radius {
        end *= radius / r;
    }
    (end, Some(normal))
}

fn mirror(v: Vector2<f64>, normal: Vector2<f64>) -> Vector2<f64> {
    v - normal * (2.0 * v.dot(&normal))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn heading(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

fn state_of(p: Vector2<f64>, v: Vector2<f64>) -> MobileState {
    MobileState::new(p.x, v.x, p.y, v.y)
}

/// Generates `horizon` samples with whichever model `params` holds.
pub fn trajectory<R: Rng + ?Sized>(params: &MobilityParams, horizon: usize, rng: &mut R) -> Result<Trajectory> {
    match params.kind() {
        MobilityKind::RandomWalk => rw_trajectory(params, horizon, rng),
        MobilityKind::RandomWaypoint => rwp_trajectory(params, horizon, rng),
        MobilityKind::GaussMarkov => gm_trajectory(params, horizon, rng),
    }
}

fn start<R: Rng + ?Sized>(params: &MobilityParams, rng: &mut R) -> Vector2<f64> {
    let g = deploy_one(rng, params.disc_radius, params.min_distance);
    Vector2::new(g.x, g.y)
}

/// Random walk: piecewise-constant velocity redrawn every `interval` steps,
/// reflected at the disc edge.
pub fn rw_trajectory<R: Rng + ?Sized>(params: &MobilityParams, horizon: usize, rng: &mut R) -> Result<Trajectory> {
    params.validate()?;
    let MobilityModel::RandomWalk {
        min_speed,
        max_speed,
        interval,
    } = params.model
    else {
        return Err(invalid("model", "expected random_walk parameters"));
    };
    let t = params.sample_interval;
    let mut states = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(Trajectory {
            sample_interval: t,
            states,
        });
    }
    let mut p = start(params, rng);
    let mut v = Vector2::zeros();
    for step in 0..horizon {
        if step % interval == 0 {
            let speed = uniform(rng, min_speed, max_speed);
            let theta = uniform(rng, 0.0, std::f64::consts::TAU);
            v = heading(theta) * speed;
        }
        states.push(state_of(p, v));
        let (next, normal) = reflect_in_disc(p, p + v * t, params.disc_radius);
        if let Some(n) = normal {
            v = mirror(v, n);
        }
        p = next;
    }
    Ok(Trajectory {
        sample_interval: t,
        states,
    })
}

/// Random waypoint: straight legs at a uniform speed to uniform interior
/// waypoints, landing exactly on each one and pausing before the next leg.
pub fn rwp_trajectory<R: Rng + ?Sized>(params: &MobilityParams, horizon: usize, rng: &mut R) -> Result<Trajectory> {
    params.validate()?;
    let MobilityModel::RandomWaypoint {
        min_speed,
        max_speed,
        max_pause,
    } = params.model
    else {
        return Err(invalid("model", "expected random_waypoint parameters"));
    };
    let t = params.sample_interval;
    let mut states = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(Trajectory {
            sample_interval: t,
            states,
        });
    }
    let mut p = start(params, rng);
    let mut pause = 0usize;
    let mut leg: Option<(Vector2<f64>, f64)> = None;
    while states.len() < horizon {
        if pause > 0 {
            pause -= 1;
            states.push(state_of(p, Vector2::zeros()));
            continue;
        }
        let (target, speed) = *leg.get_or_insert_with(|| (start(params, rng), uniform(rng, min_speed, max_speed)));
        let gap = target - p;
        let dist = gap.norm();
        let v = if dist > 0.0 {
            gap * (speed / dist)
        } else {
            Vector2::zeros()
        };
        states.push(state_of(p, v));
        if dist <= speed * t {
            p = target;
            leg = None;
            pause = rng.random_range(0..=max_pause);
        } else {
            p += v * t;
        }
    }
    Ok(Trajectory {
        sample_interval: t,
        states,
    })
}

/// Gauss–Markov: `s ← a s + (1-a) s̄ + √(1-a²) σ_s N` and
/// `θ ← θ + √(1-a²) σ_θ N`, moving at `max(s, 0)` and reflecting at the edge.
pub fn gm_trajectory<R: Rng + ?Sized>(params: &MobilityParams, horizon: usize, rng: &mut R) -> Result<Trajectory> {
    params.validate()?;
    let MobilityModel::GaussMarkov {
        speed_variance,
        tuning,
        mean_speed,
        direction_std,
    } = params.model
    else {
        return Err(invalid("model", "expected gauss_markov parameters"));
    };
    let t = params.sample_interval;
    let mut states = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(Trajectory {
            sample_interval: t,
            states,
        });
    }
    let innovation = (1.0 - tuning * tuning).sqrt();
    let speed_std = speed_variance.sqrt();
    let mut p = start(params, rng);
    let mut speed = mean_speed;
    let mut theta = uniform(rng, 0.0, std::f64::consts::TAU);
    states.push(state_of(p, heading(theta) * speed.max(0.0)));
    for _ in 1..horizon {
        let ns: f64 = StandardNormal.sample(rng);
        let nt: f64 = StandardNormal.sample(rng);
        speed = tuning * speed + (1.0 - tuning) * mean_speed + innovation * speed_std * ns;
        theta += innovation * direction_std * nt;
        let mut v = heading(theta) * speed.max(0.0);
        let (next, normal) = reflect_in_disc(p, p + v * t, params.disc_radius);
        if let Some(n) = normal {
            v = mirror(v, n);
            theta = v.y.atan2(v.x);
        }
        p = next;
        states.push(state_of(p, v));
    }
    Ok(Trajectory {
        sample_interval: t,
        states,
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryRow {
    pub user_id: usize,
    pub k: usize,
    pub t_seconds: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Writes trajectories as CSV rows `(user_id, k, t_seconds, x, y, vx, vy)`.
pub fn write_trajectories_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (user_id, traj) in trajectories.iter().enumerate() {
        for (k, s) in traj.states.iter().enumerate() {
            w.serialize(TrajectoryRow {
                user_id,
                k,
                t_seconds: k as f64 * traj.sample_interval,
                x: s.x,
                y: s.y,
                vx: s.vx,
                vy: s.vy,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::substream;

    #[test]
    fn deterministic_kinematics() {
        let m = StateSpaceModel::new(0.2, 0.0, 1.0).unwrap();
        let mut rng = substream(1, 0);
        let next = linear_step(&MobileState::new(0.0, 1.0, 0.0, 0.0), &m, &mut rng);
        assert_eq!(next, MobileState::new(0.2, 1.0, 0.0, 0.0));
    }

    #[test]
    fn transition_is_matrix_exponential() {
        let t = 0.37;
        let m = StateSpaceModel::new(t, 1.0, 1.0).unwrap();
        let mut generator = Matrix4::zeros();
        generator[(0, 1)] = 1.0;
        generator[(2, 3)] = 1.0;
        let mut series = Matrix4::identity();
        let mut term = Matrix4::identity();
        for n in 1..20 {
            term = term * generator * t / n as f64;
            series += term;
        }
        assert!((series - m.transition()).norm() < 1e-15);
        assert_eq!(
            m.observation() * Vector4::new(1.0, 2.0, 3.0, 4.0),
            Vector2::new(1.0, 3.0)
        );
    }

    #[test]
    fn process_noise_covariance_recovered() {
        let m = StateSpaceModel::new(0.2, 3.0, 1.0).unwrap();
        let mut rng = substream(2, 0);
        let s0 = MobileState::new(1.0, 0.5, -2.0, 0.25);
        let mean = m.transition() * s0.as_vector();
        let n = 1_000_000;
        let mut cov = Matrix4::<f64>::zeros();
        for _ in 0..n {
            let w = linear_step(&s0, &m, &mut rng).as_vector() - mean;
            cov += w * w.transpose();
        }
        cov /= n as f64;
        let q = m.process_covariance();
        assert!((cov[(0, 0)] / q[(0, 0)] - 1.0).abs() < 0.02);
        assert!((cov[(2, 2)] / q[(2, 2)] - 1.0).abs() < 0.02);
        assert!(cov[(0, 2)].abs() < 0.01 * q[(0, 0)]);
        assert_eq!(cov[(1, 1)], 0.0);
        assert_eq!(cov[(3, 3)], 0.0);
    }

    #[test]
    fn observation_noise() {
        let s = MobileState::new(3.0, 9.0, -4.0, 9.0);
        let mut rng = substream(3, 0);
        let exact = StateSpaceModel::new(0.2, 1.0, 0.0).unwrap();
        assert_eq!(observe_state(&s, &exact, &mut rng), Vector2::new(3.0, -4.0));
        let noisy = StateSpaceModel::new(0.2, 1.0, 4.0).unwrap();
        let n = 200_000;
        let var = (0..n)
            .map(|_| (observe_state(&s, &noisy, &mut rng) - Vector2::new(3.0, -4.0)).norm_squared())
            .sum::<f64>()
            / (2 * n) as f64;
        assert!((var / 4.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn trajectories_are_contained_and_bounded() {
        for kind in MobilityKind::ALL {
            let params = kind.default_params();
            let max_speed = match params.model {
                MobilityModel::RandomWalk { max_speed, .. } | MobilityModel::RandomWaypoint { max_speed, .. } => {
                    max_speed
                }
                MobilityModel::GaussMarkov { .. } => f64::INFINITY,
            };
            for seed in 0..50 {
                let traj = trajectory(&params, DEFAULT_HORIZON, &mut substream(seed, 7)).unwrap();
                assert_eq!(traj.len(), DEFAULT_HORIZON);
                for w in traj.states.windows(2) {
                    let step = (w[1].position() - w[0].position()).norm();
                    assert!(step <= max_speed * params.sample_interval + 1e-12);
                }
                assert!(traj.states.iter().all(|s| s.distance() <= params.disc_radius + 1e-9));
            }
        }
    }

    #[test]
    fn random_walk_with_zero_speed_is_stationary() {
        let mut params = MobilityParams::random_walk();
        params.model = MobilityModel::RandomWalk {
            min_speed: 0.0,
            max_speed: 0.0,
            interval: 30,
        };
        let traj = rw_trajectory(&params, 100, &mut substream(4, 0)).unwrap();
        assert!(traj.states.iter().all(|s| s.position() == traj.states[0].position()));
    }

    #[test]
    fn waypoint_validation_and_leg_speeds() {
        let mut params = MobilityParams::random_waypoint();
        params.model = MobilityModel::RandomWaypoint {
            min_speed: 0.0,
            max_speed: 0.0,
            max_pause: 5,
        };
        assert!(rwp_trajectory(&params, 10, &mut substream(5, 0)).is_err());
        let params = MobilityParams::random_waypoint();
        let traj = rwp_trajectory(&params, 5000, &mut substream(5, 1)).unwrap();
        let moving: Vec<f64> = traj
            .states
            .iter()
            .map(|s| s.vx.hypot(s.vy))
            .filter(|v| *v > 0.0)
            .collect();
        assert!(!moving.is_empty());
        assert!(moving.iter().all(|v| (1.0 - 1e-12..=3.0 + 1e-12).contains(v)));
    }

    fn lag1_speed_autocorr(tuning: f64) -> (f64, Vec<f64>) {
        let mut params = MobilityParams::gauss_markov();
        params.disc_radius = 1e9;
        params.model = MobilityModel::GaussMarkov {
            speed_variance: 2.0,
            tuning,
            mean_speed: 8.0,
            direction_std: 0.5,
        };
        // speeds far from zero so the max(s, 0) clamp is inactive
        let traj = gm_trajectory(&params, 100_000, &mut substream(6, 0)).unwrap();
        let s: Vec<f64> = traj.states.iter().map(|s| s.vx.hypot(s.vy)).collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let cov = s.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>();
        (cov / var, s)
    }

    #[test]
    fn gauss_markov_memory() {
        let (rho0, _) = lag1_speed_autocorr(0.0);
        assert!(rho0.abs() < 0.02, "{rho0}");
        let (rho_half, _) = lag1_speed_autocorr(0.5);
        assert!((rho_half - 0.5).abs() < 0.03, "{rho_half}");
        let (_, speeds) = lag1_speed_autocorr(1.0);
        assert!(speeds.iter().all(|v| (v - 8.0).abs() < 1e-9));
    }

    #[test]
    fn reproducible_from_seed() {
        for kind in MobilityKind::ALL {
            let p = kind.default_params();
            let a = trajectory(&p, 300, &mut substream(9, 3)).unwrap();
            let b = trajectory(&p, 300, &mut substream(9, 3)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let traj = trajectory(&MobilityParams::gauss_markov(), 20, &mut substream(10, 0)).unwrap();
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, std::slice::from_ref(&traj)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("user_id,k,t_seconds,x,y,vx,vy\n"));
        let rows: Vec<TrajectoryRow> = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[7].x, traj.states[7].x);
        assert_eq!(rows[7].vy, traj.states[7].vy);
    }
}
