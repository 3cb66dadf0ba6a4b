//! Kalman tracking of reported positions.
//!
//! [`kalman_track`] runs predict/update on every slot. [`track_trajectory`]
//! takes a [`FeedbackSchedule`] and, on slots without a report, only
//! predicts, so the distance used for ordering comes from `ŝ_{k|k-1}`.

use std::io::Write;

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::substream;
use crate::error::{invalid, Result};
use crate::mobility::{observe_state, trajectory, MobileState, MobilityKind, MobilityParams, StateSpaceModel};

/// Slots dropped from the start of each run when scoring a filter.
pub const DEFAULT_WARMUP: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPhase {
    Predicted,
    Updated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub s_hat: Vector4<f64>,
    pub p: Matrix4<f64>,
    /// Gain of the most recent update, if any.
    pub gain: Option<Matrix4x2<f64>>,
    pub phase: FilterPhase,
}

/// Zero state and identity covariance, ready for the first update.
pub fn kf_init() -> FilterState {
    FilterState {
        s_hat: Vector4::zeros(),
        p: Matrix4::identity(),
        gain: None,
        phase: FilterPhase::Predicted,
    }
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Measurement update with `z = (x, y)`.
///
/// With `σ_ob² = 0` the position entries are set to `z` exactly.
pub fn kf_update(fs: &FilterState, z: &Vector2<f64>, model: &StateSpaceModel) -> Result<FilterState> {
    if fs.phase != FilterPhase::Predicted {
        return Err(invalid("phase", "update needs a predicted state"));
    }
    let h: Matrix2x4<f64> = model.observation();
    let innovation_cov = h * fs.p * h.transpose() + model.observation_covariance();
    let exact = model.sigma_ob2 == 0.0;
    let gain = match innovation_cov.try_inverse() {
        Some(inv) => fs.p * h.transpose() * inv,
        None if exact => {
            // position already known exactly; only the position entries move
            let mut k = Matrix4x2::zeros();
            k[(0, 0)] = 1.0;
            k[(2, 1)] = 1.0;
            k
        }
        None => return Err(invalid("P", "singular innovation covariance")),
    };
    let mut s_hat = fs.s_hat + gain * (z - h * fs.s_hat);
    if exact {
        s_hat[0] = z[0];
        s_hat[2] = z[1];
    }
    let p = symmetrize(&((Matrix4::identity() - gain * h) * fs.p));
    Ok(FilterState {
        s_hat,
        p,
        gain: Some(gain),
        phase: FilterPhase::Updated,
    })
}

/// Time update `ŝ ← Aŝ`, `P ← APAᵀ + Q`; valid from either phase.
pub fn kf_predict(fs: &FilterState, model: &StateSpaceModel) -> FilterState {
    let a = model.transition();
    FilterState {
        s_hat: a * fs.s_hat,
        p: symmetrize(&(a * fs.p * a.transpose() + model.process_covariance())),
        gain: fs.gain,
        phase: FilterPhase::Predicted,
    }
}

/// `√(x̂² + ŷ²)` from the current estimate.
pub fn estimated_distance(fs: &FilterState) -> f64 {
    fs.s_hat[0].hypot(fs.s_hat[2])
}

/// Which slots carry a position report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackSchedule {
    Full,
    /// Reports on slots `0, period, 2·period, ...`.
    Periodic {
        period: usize,
    },
    Pattern {
        available: Vec<bool>,
    },
}

impl FeedbackSchedule {
    /// Periodic schedule with the given fraction of slots reported,
    /// e.g. `0.25` for every fourth slot.
    pub fn from_rate(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(invalid("feedback_rate", format!("{rate} (must lie in (0, 1])")));
        }
        let period = (1.0 / rate).round().max(1.0) as usize;
        Ok(if period == 1 {
            Self::Full
        } else {
            Self::Periodic { period }
        })
    }

    pub fn is_available(&self, k: usize) -> bool {
        match self {
            Self::Full => true,
            Self::Periodic { period } => k.is_multiple_of(*period),
            Self::Pattern { available } => available.get(k).copied().unwrap_or(false),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if let Self::Periodic { period: 0 } = self {
            return Err(invalid("period", "0 (must be at least 1)"));
        }
        if horizon > 0 && !(0..horizon).any(|k| self.is_available(k)) {
            return Err(invalid("schedule", "no slot in the horizon carries a report"));
        }
        Ok(())
    }
}

/// Per-slot output of a tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackEstimate {
    pub x_hat: f64,
    pub y_hat: f64,
    pub d_hat: f64,
    pub trace_p: f64,
    /// Mean of the two position variances in `P`.
    pub position_variance: f64,
    pub measured: bool,
}

impl TrackEstimate {
    fn from_state(fs: &FilterState, measured: bool) -> Self {
        Self {
            x_hat: fs.s_hat[0],
            y_hat: fs.s_hat[2],
            d_hat: estimated_distance(fs),
            trace_p: fs.p.trace(),
            // covariance diagonals can round slightly below zero when R = 0
            position_variance: (0.5 * (fs.p[(0, 0)] + fs.p[(2, 2)])).max(0.0),
            measured,
        }
    }
}

/// Predict/update on every slot.
pub fn kalman_track(measurements: &[Vector2<f64>], model: &StateSpaceModel) -> Result<Vec<TrackEstimate>> {
    model.validate()?;
    let mut fs = kf_init();
    let mut out = Vec::with_capacity(measurements.len());
    for z in measurements {
        fs = kf_update(&fs, z, model)?;
        out.push(TrackEstimate::from_state(&fs, true));
        fs = kf_predict(&fs, model);
    }
    Ok(out)
}

/// Tracking with sparse reports: slots without a report only predict.
pub fn track_trajectory(
    measurements: &[Vector2<f64>],
    model: &StateSpaceModel,
    schedule: &FeedbackSchedule,
) -> Result<Vec<TrackEstimate>> {
    model.validate()?;
    schedule.validate(measurements.len())?;
    let mut fs = kf_init();
    let mut out = Vec::with_capacity(measurements.len());
    for (k, z) in measurements.iter().enumerate() {
        let measured = schedule.is_available(k);
        if measured {
            fs = kf_update(&fs, z, model)?;
        }
        out.push(TrackEstimate::from_state(&fs, measured));
        fs = kf_predict(&fs, model);
    }
    Ok(out)
}

/// Noisy position reports for every sample of a trajectory.
pub fn observe_trajectory<R: Rng + ?Sized>(states: &[MobileState], sigma_ob2: f64, rng: &mut R) -> Vec<Vector2<f64>> {
    let model = StateSpaceModel {
        sample_interval: 1.0,
        sigma_w2: 0.0,
        sigma_ob2,
    };
    states.iter().map(|s| observe_state(s, &model, rng)).collect()
}

/// Sum of squared 2-D position errors and the number of slots, skipping the
/// first `warmup` slots.
pub fn squared_position_error(truth: &[MobileState], est: &[TrackEstimate], warmup: usize) -> (f64, usize) {
    truth.iter().zip(est).skip(warmup).fold((0.0, 0), |(sum, n), (s, e)| {
        (sum + (s.x - e.x_hat).powi(2) + (s.y - e.y_hat).powi(2), n + 1)
    })
}

/// Position RMSE of raw reports and of the filter over a batch of runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingScore {
    pub raw_rmse: f64,
    pub filtered_rmse: f64,
    pub runs: usize,
}

/// Truth, position reports and estimates of one tracking run.
pub type Realization = (Vec<MobileState>, Vec<Vector2<f64>>, Vec<TrackEstimate>);

/// Setup of a batch of tracking runs against generated trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub mobility: MobilityParams,
    pub sigma_ob2: f64,
    pub sigma_w2: f64,
    pub horizon: usize,
    pub runs: usize,
    pub warmup: usize,
    pub schedule: FeedbackSchedule,
    pub seed: u64,
}

impl TrackingRun {
    pub fn new(kind: MobilityKind, sigma_ob2: f64, runs: usize, seed: u64) -> Self {
        Self {
            mobility: kind.default_params(),
            sigma_ob2,
            sigma_w2: default_sigma_w2(kind),
            horizon: crate::mobility::DEFAULT_HORIZON,
            runs,
            warmup: DEFAULT_WARMUP,
            schedule: FeedbackSchedule::Full,
            seed,
        }
    }

    fn model(&self) -> Result<StateSpaceModel> {
        StateSpaceModel::new(self.mobility.sample_interval, self.sigma_w2, self.sigma_ob2)
    }

    /// One run: truth, reports and estimates for run index `run`.
    pub fn realize(&self, run: usize) -> Result<Realization> {
        let mut rng = substream(self.seed, run as u64);
        let truth = trajectory(&self.mobility, self.horizon, &mut rng)?.states;
        let z = observe_trajectory(&truth, self.sigma_ob2, &mut rng);
        let est = track_trajectory(&z, &self.model()?, &self.schedule)?;
        Ok((truth, z, est))
    }

    /// Runs all trajectories in parallel and pools the squared errors in run
    /// order, so the result does not depend on the thread count.
    pub fn score(&self) -> Result<TrackingScore> {
        if self.runs == 0 {
            return Err(invalid("runs", "0 (need at least one run)"));
        }
        if self.warmup >= self.horizon {
            return Err(invalid(
                "warmup",
                format!("{} (must be below the horizon {})", self.warmup, self.horizon),
            ));
        }
        let parts: Vec<(f64, f64, usize)> = (0..self.runs)
            .into_par_iter()
            .map(|run| {
                let (truth, z, est) = self.realize(run)?;
                let (filtered, n) = squared_position_error(&truth, &est, self.warmup);
                let raw = truth
                    .iter()
                    .zip(&z)
                    .skip(self.warmup)
                    .map(|(s, z)| (s.x - z[0]).powi(2) + (s.y - z[1]).powi(2))
                    .sum::<f64>();
                Ok((raw, filtered, n))
            })
            .collect::<Result<_>>()?;
        let (raw, filtered, n) = parts
            .iter()
            .fold((0.0, 0.0, 0usize), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
        Ok(TrackingScore {
            raw_rmse: (raw / n as f64).sqrt(),
            filtered_rmse: (filtered / n as f64).sqrt(),
            runs: self.runs,
        })
    }
}

/// Process-noise intensity used by default for each mobility model, chosen by
/// [`calibrate_sigma_w2`] on seed [`CALIBRATION_SEED`].
pub fn default_sigma_w2(kind: MobilityKind) -> f64 {
    match kind {
        MobilityKind::RandomWalk => 4.25,
        MobilityKind::RandomWaypoint => 8.5,
        MobilityKind::GaussMarkov => 4.25,
    }
}

/// Seed reserved for calibrating the defaults; evaluation uses other seeds.
pub const CALIBRATION_SEED: u64 = 0x5eed_ca1b;

/// Grid value of `σ_w²` minimizing the mean filtered RMSE over the given
/// observation-noise levels.
pub fn calibrate_sigma_w2(
    kind: MobilityKind,
    sigma_ob2_values: &[f64],
    grid: &[f64],
    runs: usize,
    seed: u64,
) -> Result<f64> {
    let mut best = (f64::NAN, f64::INFINITY);
    for &sw2 in grid {
        let mut total = 0.0;
        for &s2 in sigma_ob2_values {
            let mut run = TrackingRun::new(kind, s2, runs, seed);
            run.sigma_w2 = sw2;
            total += run.score()?.filtered_rmse;
        }
        if total < best.1 {
            best = (sw2, total);
        }
    }
    if best.0.is_nan() {
        return Err(invalid("grid", "empty calibration grid"));
    }
    Ok(best.0)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EstimateRow {
    pub user_id: usize,
    pub k: usize,
    pub x_hat: f64,
    pub y_hat: f64,
    pub d_hat: f64,
    #[serde(rename = "trace_P")]
    pub trace_p: f64,
    pub measured_flag: u8,
}

/// Writes estimates as CSV rows
/// `(user_id, k, x_hat, y_hat, d_hat, trace_P, measured_flag)`.
pub fn write_estimates_csv<W: Write>(out: W, users: &[Vec<TrackEstimate>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (user_id, est) in users.iter().enumerate() {
        for (k, e) in est.iter().enumerate() {
            w.serialize(EstimateRow {
                user_id,
                k,
                x_hat: e.x_hat,
                y_hat: e.y_hat,
                d_hat: e.d_hat,
                trace_p: e.trace_p,
                measured_flag: u8::from(e.measured),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::linear_step;
    use nalgebra::SymmetricEigen;
    use rand_distr::{Distribution, StandardNormal};

    type M = [[f64; 4]; 4];

    fn mat_mul(a: &M, b: &M) -> M {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    fn transpose(a: &M) -> M {
        let mut t = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                t[i][j] = a[j][i];
            }
        }
        t
    }

    // Update then predict written out with plain arrays; H picks rows 0 and 2.
    fn oracle_cycle(s: [f64; 4], p: M, z: [f64; 2], t: f64, sw2: f64, r: f64) -> ([f64; 4], M) {
        let s11 = p[0][0] + r;
        let s12 = p[0][2];
        let s22 = p[2][2] + r;
        let det = s11 * s22 - s12 * s12;
        let inv = [[s22 / det, -s12 / det], [-s12 / det, s11 / det]];
        let mut k = [[0.0; 2]; 4];
        for i in 0..4 {
            let ph = [p[i][0], p[i][2]];
            for j in 0..2 {
                k[i][j] = ph[0] * inv[0][j] + ph[1] * inv[1][j];
            }
        }
        let innov = [z[0] - s[0], z[1] - s[2]];
        let mut su = s;
        for i in 0..4 {
            su[i] += k[i][0] * innov[0] + k[i][1] * innov[1];
        }
        let mut ikh = [[0.0; 4]; 4];
        for i in 0..4 {
            ikh[i][i] = 1.0;
            ikh[i][0] -= k[i][0];
            ikh[i][2] -= k[i][1];
        }
        let pu = mat_mul(&ikh, &p);
        let a = [
            [1.0, t, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, t],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let mut sp = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                sp[i] += a[i][j] * su[j];
            }
        }
        let mut pp = mat_mul(&mat_mul(&a, &pu), &transpose(&a));
        pp[0][0] += t * sw2;
        pp[2][2] += t * sw2;
        (sp, pp)
    }

    #[test]
    fn init_state() {
        let fs = kf_init();
        assert_eq!(fs.s_hat, Vector4::zeros());
        assert_eq!(fs.p, Matrix4::identity());
        assert_eq!(fs.phase, FilterPhase::Predicted);
        assert_eq!(estimated_distance(&fs), 0.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // symmetric (i, j) indexing
    fn cycle_matches_matrix_oracle() {
        let model = StateSpaceModel::new(0.2, 3.0, 2.5).unwrap();
        let p: M = [
            [2.0, 0.3, 0.1, 0.0],
            [0.3, 1.5, 0.0, 0.2],
            [0.1, 0.0, 3.0, 0.4],
            [0.0, 0.2, 0.4, 1.0],
        ];
        let s = [1.0, -0.5, 2.0, 0.25];
        let z = [1.7, 1.1];
        let fs = FilterState {
            s_hat: Vector4::from_row_slice(&s),
            p: Matrix4::from_fn(|i, j| p[i][j]),
            gain: None,
            phase: FilterPhase::Predicted,
        };
        let next = kf_predict(&kf_update(&fs, &Vector2::new(z[0], z[1]), &model).unwrap(), &model);
        let (so, po) = oracle_cycle(s, p, z, 0.2, 3.0, 2.5);
        for i in 0..4 {
            assert!((next.s_hat[i] - so[i]).abs() < 1e-12);
            for j in 0..4 {
                // the library symmetrizes, the oracle does not
                let sym = 0.5 * (po[i][j] + po[j][i]);
                assert!((next.p[(i, j)] - sym).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_shrinks_covariance_and_zero_noise_is_exact() {
        let model = StateSpaceModel::new(0.2, 1.0, 4.0).unwrap();
        let fs = kf_predict(&kf_predict(&kf_init(), &model), &model);
        let up = kf_update(&fs, &Vector2::new(3.0, 4.0), &model).unwrap();
        assert!(up.p.trace() <= fs.p.trace());
        assert!(kf_update(&up, &Vector2::new(3.0, 4.0), &model).is_err());
        let exact = StateSpaceModel::new(0.2, 1.0, 0.0).unwrap();
        let up = kf_update(&fs, &Vector2::new(3.0, 4.0), &exact).unwrap();
        assert_eq!((up.s_hat[0], up.s_hat[2]), (3.0, 4.0));
        assert_eq!(estimated_distance(&up), 5.0);
        // a second exact update sees a singular innovation covariance
        let again = kf_update(
            &FilterState {
                phase: FilterPhase::Predicted,
                ..up
            },
            &Vector2::new(6.0, 8.0),
            &exact,
        )
        .unwrap();
        assert_eq!(estimated_distance(&again), 10.0);
    }

    #[test]
    fn predict_degenerate_cases() {
        let still = StateSpaceModel::new(1e-300, 0.0, 1.0).unwrap();
        let fs = FilterState {
            s_hat: Vector4::new(1.0, 2.0, 3.0, 4.0),
            ..kf_init()
        };
        let p = kf_predict(&fs, &still);
        assert!((p.s_hat - fs.s_hat).norm() < 1e-250);
        let noisy = StateSpaceModel::new(1e-300, 1e300, 1.0).unwrap();
        let p = kf_predict(&fs, &noisy);
        assert!((p.p[(0, 0)] - 2.0).abs() < 1e-12 && (p.p[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedules() {
        let s = FeedbackSchedule::from_rate(0.25).unwrap();
        assert_eq!(s, FeedbackSchedule::Periodic { period: 4 });
        assert_eq!((0..300).filter(|&k| s.is_available(k)).count(), 75);
        assert_eq!(FeedbackSchedule::from_rate(1.0).unwrap(), FeedbackSchedule::Full);
        assert!(FeedbackSchedule::Pattern {
            available: vec![false; 10]
        }
        .validate(10)
        .is_err());
        assert!(FeedbackSchedule::from_rate(0.0).is_err());
    }

    #[test]
    fn full_schedule_matches_every_slot_tracker_bitwise() {
        let run = TrackingRun::new(MobilityKind::GaussMarkov, 25.0, 1, 11);
        let (_, z, _) = run.realize(0).unwrap();
        let model = run.model().unwrap();
        let a = kalman_track(&z, &model).unwrap();
        let b = track_trajectory(&z, &model, &FeedbackSchedule::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        for kind in MobilityKind::ALL {
            for schedule in [FeedbackSchedule::Full, FeedbackSchedule::Periodic { period: 4 }] {
                let mut run = TrackingRun::new(kind, 50.0, 1, 12);
                run.schedule = schedule.clone();
                let (_, z, _) = run.realize(0).unwrap();
                let model = run.model().unwrap();
                let mut fs = kf_init();
                for (k, zk) in z.iter().enumerate() {
                    if schedule.is_available(k) {
                        fs = kf_update(&fs, zk, &model).unwrap();
                    }
                    assert_eq!(fs.p, fs.p.transpose());
                    let min_eig = SymmetricEigen::new(fs.p).eigenvalues.min();
                    assert!(min_eig >= -1e-9, "{kind:?} k={k}: {min_eig}");
                    fs = kf_predict(&fs, &model);
                }
            }
        }
    }

    #[test]
    fn filter_beats_raw_reports() {
        for kind in MobilityKind::ALL {
            for s2 in [25.0, 50.0] {
                let score = TrackingRun::new(kind, s2, 40, 13).score().unwrap();
                assert!(score.filtered_rmse < score.raw_rmse, "{kind:?}: {score:?}");
                assert!((score.raw_rmse / (2.0 * s2).sqrt() - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn matched_model_is_consistent() {
        // truth from the filter's own model, initial state drawn from its prior
        let model = StateSpaceModel::new(0.2, 2.0, 4.0).unwrap();
        let (runs, steps) = (2000, 60);
        let mut nees = 0.0;
        let mut count = 0usize;
        for r in 0..runs {
            let mut rng = substream(14, r);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
            let mut truth = MobileState::new(draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let mut fs = kf_init();
            for k in 0..steps {
                let z = observe_state(&truth, &model, &mut rng);
                fs = kf_update(&fs, &z, &model).unwrap();
                if k >= 10 {
                    let e = Vector2::new(truth.x - fs.s_hat[0], truth.y - fs.s_hat[2]);
                    let pp = nalgebra::Matrix2::new(fs.p[(0, 0)], fs.p[(0, 2)], fs.p[(2, 0)], fs.p[(2, 2)]);
                    nees += (e.transpose() * pp.try_inverse().unwrap() * e)[0];
                    count += 1;
                }
                fs = kf_predict(&fs, &model);
                truth = linear_step(&truth, &model, &mut rng);
            }
        }
        let mean = nees / count as f64;
        assert!((mean - 2.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn estimates_csv_header_and_round_trip() {
        let run = TrackingRun::new(MobilityKind::RandomWalk, 25.0, 1, 15);
        let (_, _, est) = run.realize(0).unwrap();
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, std::slice::from_ref(&est)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("user_id,k,x_hat,y_hat,d_hat,trace_P,measured_flag\n"));
        let rows: Vec<EstimateRow> = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(rows[42].d_hat, est[42].d_hat);
        assert_eq!(rows[42].trace_p, est[42].trace_p);
    }

    #[test]
    fn default_process_noise_is_the_calibrated_value() {
        let grid: Vec<f64> = (1..=48).map(|k| 0.25 * k as f64).collect();
        for kind in MobilityKind::ALL {
            let best = calibrate_sigma_w2(kind, &[25.0, 50.0], &grid, 200, CALIBRATION_SEED).unwrap();
            assert_eq!(best, default_sigma_w2(kind), "{kind:?}");
        }
    }
}
