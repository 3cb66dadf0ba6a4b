//! Monte Carlo engine.
//!
//! Every trial draws from its own stream `substream(seed, trial)`, so results
//! do not depend on how trials are spread over threads. Trials run in
//! fixed-size blocks in parallel; block tallies are merged in block order.
//! All access arms of an experiment are evaluated on the same draws.

mod mobile;
mod stats;
mod trial;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{decoding_error_prob_fading_free, PairScenario};
use crate::channel::{observe_position, sample_fading, substream, LinkConfig, UserGeometry};
use crate::error::{invalid, Result};

pub use mobile::{run_mobile_experiment, MobileExperiment, MobileReport, MobileRow, MobileSlotRow, PositionScheme};
pub use stats::{AccessScheme, MetricsReport, Proportion, Tally, TrialOutcome};
pub use trial::{
    analytic_metrics, downlink_trial, evaluate_pair, hybrid_uplink_select, oma_trial, pair_users,
    uplink_sum_rate_mixture, uplink_trial, Access, AnalyticMetrics, DownlinkRule, HybridChoice, PairContext, PairState,
    Pairing, SignalTargets, UplinkRule,
};

/// Trials per parallel work unit.
const BLOCK: u64 = 4096;

/// Two users at fixed positions with fresh fading and observation noise on
/// every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticExperiment {
    pub users: [UserGeometry; 2],
    /// `sigma_ob2` is the observation noise of the position reports.
    pub link: LinkConfig,
    pub arms: Vec<Access>,
    pub trials: u64,
    pub seed: u64,
}

/// Results of a static experiment: one report per arm plus the ordering
/// statistics, which are common to all arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticReport {
    pub ordering: MetricsReport,
    pub arms: Vec<MetricsReport>,
}

impl StaticExperiment {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.trials == 0 {
            return Err(invalid("trials", "0 (need at least one trial)"));
        }
        for (k, u) in self.users.iter().enumerate() {
            let d = u.distance();
            if !(d > 0.0) || !d.is_finite() {
                return Err(invalid("users", format!("user {k} at distance {d} (must be positive)")));
            }
        }
        self.arms.iter().try_for_each(Access::validate)
    }

    /// The pair at its true distances.
    pub fn scenario(&self) -> Result<PairScenario> {
        let (s, _) = PairScenario::ordered(self.users[0].distance(), self.users[1].distance(), self.link)?;
        Ok(s)
    }

    /// Analytic order-error probability of the reports.
    pub fn pe1(&self) -> Result<f64> {
        decoding_error_prob_fading_free(&self.scenario()?)
    }

    /// One trial: two position reports, then two fading draws.
    fn draw(&self, trial: u64) -> PairState {
        let mut rng = substream(self.seed, trial);
        let obs = [
            observe_position(&self.users[0], self.link.sigma_ob2, &mut rng),
            observe_position(&self.users[1], self.link.sigma_ob2, &mut rng),
        ];
        let h = [sample_fading(&mut rng), sample_fading(&mut rng)];
        let d = [self.users[0].distance(), self.users[1].distance()];
        PairState {
            d,
            d_hat: [obs[0].distance(), obs[1].distance()],
            gain: [h[0] * d[0].powf(-self.link.alpha), h[1] * d[1].powf(-self.link.alpha)],
            var_hat: self.link.sigma_ob2,
        }
    }
}

/// Tally of the ordering events alone.
fn ordering_outcome(state: &PairState) -> TrialOutcome {
    let near = state.estimated_near();
    TrialOutcome {
        sum_rate: 0.0,
        outage: [false, false],
        order_error: near != state.true_near(),
        gain_order_error: state.gain[near] < state.gain[1 - near],
        scheme: AccessScheme::Noma,
    }
}

pub fn run_static_experiment(exp: &StaticExperiment) -> Result<StaticReport> {
    exp.validate()?;
    let blocks = exp.trials.div_ceil(BLOCK);
    let needs_ctx = !exp.arms.is_empty();
    let parts: Vec<(Tally, Vec<Tally>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut ordering = Tally::default();
            let mut arms = vec![Tally::default(); exp.arms.len()];
            for trial in b * BLOCK..((b + 1) * BLOCK).min(exp.trials) {
                let state = exp.draw(trial);
                ordering.push(&ordering_outcome(&state));
                if needs_ctx {
                    let mut ctx = PairContext::new(&state, &exp.link)?;
                    for (tally, access) in arms.iter_mut().zip(&exp.arms) {
                        tally.push(&evaluate_pair(&state, &mut ctx, &exp.link, access)?);
                    }
                }
            }
            Ok((ordering, arms))
        })
        .collect::<Result<_>>()?;
    let mut ordering = Tally::default();
    let mut arms = vec![Tally::default(); exp.arms.len()];
    for (o, a) in &parts {
        ordering.merge(o);
        for (acc, t) in arms.iter_mut().zip(a) {
            acc.merge(t);
        }
    }
    Ok(StaticReport {
        ordering: ordering.report(),
        arms: arms.iter().map(Tally::report).collect(),
    })
}

/// One row of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub value: f64,
    pub metric: String,
    /// `NaN` where no closed form exists.
    pub analytic_value: f64,
    pub empirical_value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

pub fn write_results_csv<W: std::io::Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
