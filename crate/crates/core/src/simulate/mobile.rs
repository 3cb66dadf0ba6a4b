//! Mobile scenario: moving users, tracked positions, per-slot pairing.
//!
//! A trial is one realization of `users` trajectories over `horizon` slots.
//! Draw order inside the trial stream: all trajectories, then the position
//! reports (user by user), then the fading (slot by slot). Every position
//! scheme and access arm sees the same draws.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_fading, substream, LinkConfig, DEFAULT_MIN_DISTANCE};
use crate::error::{invalid, Result};
use crate::mobility::{trajectory, MobilityParams, StateSpaceModel, DEFAULT_HORIZON};
use crate::tracking::{kalman_track, observe_trajectory, track_trajectory, FeedbackSchedule, DEFAULT_WARMUP};

use super::stats::{MetricsReport, Tally};
use super::trial::{evaluate_pair, pair_users, Access, PairContext, PairState};

/// Trials per parallel work unit.
const BLOCK: u64 = 8;

/// Source of the distances used for pairing, ordering and power control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionScheme {
    /// True positions.
    Perfect,
    /// Latest raw report, every slot.
    Raw,
    /// Kalman filter with a report every slot.
    Tracking,
    /// Kalman filter on the sparse prediction schedule.
    Prediction,
}

impl PositionScheme {
    pub const ALL: [PositionScheme; 4] = [Self::Perfect, Self::Raw, Self::Tracking, Self::Prediction];

    pub fn name(self) -> &'static str {
        match self {
            Self::Perfect => "perfect",
            Self::Raw => "raw",
            Self::Tracking => "tracking",
            Self::Prediction => "prediction",
        }
    }
}

impl std::str::FromStr for PositionScheme {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            invalid(
                "position_scheme",
                format!("`{s}` (expected perfect, raw, tracking or prediction)"),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileExperiment {
    pub mobility: MobilityParams,
    /// Number of users; pairs are formed each slot and an odd user is left out.
    pub users: usize,
    pub horizon: usize,
    /// Slots excluded from the aggregate metrics while the filters settle.
    pub warmup: usize,
    /// Process-noise intensity of the filter.
    pub sigma_w2: f64,
    /// Report schedule of the prediction scheme.
    pub prediction: FeedbackSchedule,
    /// `sigma_ob2` is the observation noise of the position reports.
    pub link: LinkConfig,
    pub schemes: Vec<PositionScheme>,
    pub arms: Vec<Access>,
    pub trials: u64,
    pub seed: u64,
    /// Also report every slot separately.
    pub per_slot: bool,
}

impl MobileExperiment {
    /// Defaults for the slot structure: `K = 300`, warm-up of 25 slots, two
    /// users, all position schemes, 25% prediction feedback.
    pub fn new(
        mobility: MobilityParams,
        sigma_w2: f64,
        link: LinkConfig,
        arms: Vec<Access>,
        trials: u64,
        seed: u64,
    ) -> Self {
        Self {
            mobility,
            users: 2,
            horizon: DEFAULT_HORIZON,
            warmup: DEFAULT_WARMUP,
            sigma_w2,
            prediction: FeedbackSchedule::Periodic { period: 4 },
            link,
            schemes: PositionScheme::ALL.to_vec(),
            arms,
            trials,
            seed,
            per_slot: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mobility.validate()?;
        self.link.validate()?;
        if self.users < 2 {
            return Err(invalid("users", format!("{} (need at least two)", self.users)));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "0 (need at least one trial)"));
        }
        if self.warmup >= self.horizon {
            return Err(invalid(
                "warmup",
                format!("{} (must be below the horizon {})", self.warmup, self.horizon),
            ));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "empty"));
        }
        self.prediction.validate(self.horizon)?;
        self.model()?;
        self.arms.iter().try_for_each(Access::validate)
    }

    fn model(&self) -> Result<StateSpaceModel> {
        StateSpaceModel::new(self.mobility.sample_interval, self.sigma_w2, self.link.sigma_ob2)
    }

    fn slot_index(&self, scheme: usize, arm: usize, slot: usize) -> usize {
        (scheme * self.arms.len() + arm) * self.horizon + slot
    }

    fn run_trial(&self, trial: u64, model: &StateSpaceModel, tallies: &mut [Tally]) -> Result<()> {
        let (m, horizon) = (self.users, self.horizon);
        let mut rng = substream(self.seed, trial);
        let truth = (0..m)
            .map(|_| trajectory(&self.mobility, horizon, &mut rng).map(|t| t.states))
            .collect::<Result<Vec<_>>>()?;
        let reports: Vec<Vec<Vector2<f64>>> = truth
            .iter()
            .map(|s| observe_trajectory(s, self.link.sigma_ob2, &mut rng))
            .collect();
        let fading: Vec<Vec<f64>> = (0..horizon)
            .map(|_| (0..m).map(|_| sample_fading(&mut rng)).collect())
            .collect();

        // distances below the deployment minimum are clamped for the path loss
        let d_true: Vec<Vec<f64>> = truth
            .iter()
            .map(|s| s.iter().map(|st| st.distance()).collect())
            .collect();
        let gain = |k: usize, u: usize| fading[k][u] * d_true[u][k].max(DEFAULT_MIN_DISTANCE).powf(-self.link.alpha);

        for (si, scheme) in self.schemes.iter().enumerate() {
            // (distance estimate, per-axis variance) per user and slot
            let est: Vec<Vec<(f64, f64)>> = match scheme {
                PositionScheme::Perfect => d_true.iter().map(|d| d.iter().map(|&x| (x, 0.0)).collect()).collect(),
                PositionScheme::Raw => reports
                    .iter()
                    .map(|z| z.iter().map(|p| (p.norm(), self.link.sigma_ob2)).collect())
                    .collect(),
                PositionScheme::Tracking => reports
                    .iter()
                    .map(|z| {
                        Ok(kalman_track(z, model)?
                            .iter()
                            .map(|e| (e.d_hat, e.position_variance))
                            .collect())
                    })
                    .collect::<Result<_>>()?,
                PositionScheme::Prediction => reports
                    .iter()
                    .map(|z| {
                        Ok(track_trajectory(z, model, &self.prediction)?
                            .iter()
                            .map(|e| (e.d_hat, e.position_variance))
                            .collect())
                    })
                    .collect::<Result<_>>()?,
            };
            let mut d_hat = vec![0.0; m];
            for k in 0..horizon {
                if !self.per_slot && k < self.warmup {
                    continue;
                }
                for u in 0..m {
                    d_hat[u] = est[u][k].0;
                }
                for (a, b) in pair_users(&d_hat).pairs {
                    let state = PairState {
                        d: [d_true[a][k], d_true[b][k]],
                        d_hat: [d_hat[a], d_hat[b]],
                        gain: [gain(k, a), gain(k, b)],
                        var_hat: 0.5 * (est[a][k].1 + est[b][k].1),
                    };
                    let mut ctx = PairContext::new(&state, &self.link)?;
                    for (ai, access) in self.arms.iter().enumerate() {
                        let o = evaluate_pair(&state, &mut ctx, &self.link, access)?;
                        tallies[self.slot_index(si, ai, k)].push(&o);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Aggregate metrics of one position scheme and access arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileRow {
    pub scheme: PositionScheme,
    /// Index into [`MobileExperiment::arms`].
    pub arm: usize,
    pub metrics: MetricsReport,
}

/// One slot of one scheme and arm, present when `per_slot` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileSlotRow {
    pub scheme: PositionScheme,
    pub arm: usize,
    pub slot: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileReport {
    /// Pooled over trials, pairs and the slots after the warm-up.
    pub rows: Vec<MobileRow>,
    pub per_slot: Vec<MobileSlotRow>,
}

impl MobileReport {
    pub fn get(&self, scheme: PositionScheme, arm: usize) -> Option<&MetricsReport> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.arm == arm)
            .map(|r| &r.metrics)
    }
}

pub fn run_mobile_experiment(exp: &MobileExperiment) -> Result<MobileReport> {
    exp.validate()?;
    let model = exp.model()?;
    let size = exp.schemes.len() * exp.arms.len() * exp.horizon;
    let blocks = exp.trials.div_ceil(BLOCK);
    let parts: Vec<Vec<Tally>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut tallies = vec![Tally::default(); size];
            for trial in b * BLOCK..((b + 1) * BLOCK).min(exp.trials) {
                exp.run_trial(trial, &model, &mut tallies)?;
            }
            Ok(tallies)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Tally::default(); size];
    for part in &parts {
        for (acc, t) in total.iter_mut().zip(part) {
            acc.merge(t);
        }
    }

    let mut rows = Vec::new();
    let mut per_slot = Vec::new();
    for (si, &scheme) in exp.schemes.iter().enumerate() {
        for arm in 0..exp.arms.len() {
            let mut pooled = Tally::default();
            for k in 0..exp.horizon {
                let t = &total[exp.slot_index(si, arm, k)];
                if k >= exp.warmup {
                    pooled.merge(t);
                }
                if exp.per_slot {
                    per_slot.push(MobileSlotRow {
                        scheme,
                        arm,
                        slot: k,
                        metrics: t.report(),
                    });
                }
            }
            rows.push(MobileRow {
                scheme,
                arm,
                metrics: pooled.report(),
            });
        }
    }
    Ok(MobileReport { rows, per_slot })
}
