//! One pair, one channel realization: power rule, SIC decoding and outage.
//!
//! Users are labelled by true distance only when results are recorded; all
//! decisions (power split, decoding order) use the estimated distances.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    decoding_error_prob_fading_free, downlink_avg_sum_rate_with_pe, downlink_cop, oma_avg_sum_rate, oma_cop,
    uplink_avg_sum_rate_rates, uplink_cop, DownlinkPower, PairScenario, UplinkPower,
};
use crate::channel::{target_snr, LinkConfig, DEFAULT_MIN_DISTANCE};
use crate::error::{invalid, Result};
use crate::power::{dpa_optimal_beta, dpc_optimal_power};

use super::stats::{AccessScheme, TrialOutcome};

/// Downlink power split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DownlinkRule {
    /// The estimated-far user always gets `beta`.
    Fixed { beta: f64 },
    /// `β*` from the estimated distances.
    Dpa,
}

/// Uplink transmit SNRs. `rho1`/`omega1` belong to the estimated-near user,
/// which the base station decodes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UplinkRule {
    Fixed {
        rho1: f64,
        rho2: f64,
    },
    /// Power control from the estimated distances under the caps.
    Dpc {
        omega1: f64,
        omega2: f64,
    },
}

/// Per-signal target rates for the downlink, overriding the common target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalTargets {
    /// Target of the signal for the estimated-far user, decoded by both.
    pub far_rate: f64,
    /// Target of the signal for the estimated-near user.
    pub near_rate: f64,
}

/// One access configuration evaluated on every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "access", rename_all = "snake_case")]
pub enum Access {
    Downlink {
        rho: f64,
        rule: DownlinkRule,
        targets: Option<SignalTargets>,
    },
    Uplink {
        rule: UplinkRule,
    },
    /// Two orthogonal half-resource links at SNR `rho` each.
    Oma {
        rho: f64,
    },
    /// Per-trial choice between uplink NOMA under `rule` and OMA at `rho_oma`,
    /// whichever has the smaller predicted outage.
    Hybrid {
        rule: UplinkRule,
        rho_oma: f64,
    },
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(name, format!("{v} (must be positive and finite)")));
    }
    Ok(())
}

impl UplinkRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed { rho1, rho2 } => {
                positive("rho1", rho1)?;
                positive("rho2", rho2)
            }
            Self::Dpc { omega1, omega2 } => {
                positive("omega1", omega1)?;
                positive("omega2", omega2)
            }
        }
    }

    /// SNRs of the first-decoded and second-decoded user for the estimated
    /// scenario.
    pub fn power(&self, est: &PairScenario) -> Result<UplinkPower> {
        match *self {
            Self::Fixed { rho1, rho2 } => UplinkPower::at(rho1, rho2),
            Self::Dpc { omega1, omega2 } => {
                dpc_optimal_power(est, omega1, omega2, est.target_snr())?.power(omega1, omega2)
            }
        }
    }
}

impl Access {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Downlink { rho, rule, targets } => {
                positive("rho", rho)?;
                if let DownlinkRule::Fixed { beta } = rule {
                    DownlinkPower::new(rho, beta)?;
                }
                if let Some(t) = targets {
                    positive("far_rate", t.far_rate)?;
                    positive("near_rate", t.near_rate)?;
                }
                Ok(())
            }
            Self::Uplink { rule } => rule.validate(),
            Self::Oma { rho } => positive("rho", rho),
            Self::Hybrid { rule, rho_oma } => {
                rule.validate()?;
                positive("rho_oma", rho_oma)
            }
        }
    }
}

/// Geometry and channel of one pair on one trial, in arbitrary user order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub d: [f64; 2],
    pub d_hat: [f64; 2],
    /// Channel gains `|h_k|² d_k^{-α}`.
    pub gain: [f64; 2],
    /// Per-axis variance of the position estimates, for the predicted order error.
    pub var_hat: f64,
}

impl PairState {
    /// Index of the estimated-near user; ties go to index 0.
    pub fn estimated_near(&self) -> usize {
        usize::from(self.d_hat[1] < self.d_hat[0])
    }

    /// Index of the truly nearer user; ties go to index 0.
    pub fn true_near(&self) -> usize {
        usize::from(self.d[1] < self.d[0])
    }

    /// The pair as seen by the base station: estimated distances, clamped
    /// to the minimum deployment distance.
    pub fn estimated_scenario(&self, link: &LinkConfig) -> Result<PairScenario> {
        let ne = self.estimated_near();
        let near = self.d_hat[ne].max(DEFAULT_MIN_DISTANCE);
        let far = self.d_hat[1 - ne].max(DEFAULT_MIN_DISTANCE);
        PairScenario::new(
            near,
            far,
            LinkConfig {
                sigma_ob2: self.var_hat,
                ..*link
            },
        )
    }
}

/// Decisions derived from the estimated pair, shared by all access arms.
pub struct PairContext {
    pub near: usize,
    pub est: PairScenario,
    pe1_est: Option<f64>,
}

impl PairContext {
    pub fn new(state: &PairState, link: &LinkConfig) -> Result<Self> {
        Ok(Self {
            near: state.estimated_near(),
            est: state.estimated_scenario(link)?,
            pe1_est: None,
        })
    }

    /// Predicted order error at the estimated distances, computed on first use.
    pub fn pe1_est(&mut self) -> Result<f64> {
        if let Some(p) = self.pe1_est {
            return Ok(p);
        }
        let p = decoding_error_prob_fading_free(&self.est)?;
        self.pe1_est = Some(p);
        Ok(p)
    }
}

/// SINR of the far signal at a receiver with gain `x`.
fn far_signal_sinr(x: f64, rho: f64, beta: f64) -> f64 {
    rho * x * beta / (rho * x * (1.0 - beta) + 1.0)
}

/// Downlink superposition with the far signal decoded first by both users.
/// `x_far`, `x_near` are the gains of the estimated-far and estimated-near
/// user. Returns outage of (far, near) and the sum rate.
pub fn downlink_trial(x_far: f64, x_near: f64, rho: f64, beta: f64, eps_far: f64, eps_near: f64) -> ([bool; 2], f64) {
    let sinr_far_at_far = far_signal_sinr(x_far, rho, beta);
    let sinr_far_at_near = far_signal_sinr(x_near, rho, beta);
    let snr_near = rho * (1.0 - beta) * x_near;
    let far_fail = sinr_far_at_far < eps_far;
    let near_fail = sinr_far_at_near < eps_far || snr_near < eps_near;
    // the far signal must be decodable by both receivers
    let far_rate = (1.0 + sinr_far_at_far.min(sinr_far_at_near)).log2();
    ([far_fail, near_fail], far_rate + (1.0 + snr_near).log2())
}

/// Uplink SIC at the base station, decoding the estimated-near user `a`
/// first. Returns outage of (a, b) and the sum rate.
pub fn uplink_trial(x_a: f64, x_b: f64, rho1: f64, rho2: f64, eps: f64) -> ([bool; 2], f64) {
    let a_fail = rho1 * x_a < eps * (rho2 * x_b + 1.0);
    // a failed first stage leaves interference that the second stage cannot remove
    let b_fail = a_fail || rho2 * x_b < eps;
    ([a_fail, b_fail], (1.0 + rho1 * x_a + rho2 * x_b).log2())
}

/// Two orthogonal half-resource links. Returns outage of (a, b) and the sum rate.
pub fn oma_trial(x_a: f64, x_b: f64, rho: f64, eps_oma: f64) -> ([bool; 2], f64) {
    let (sa, sb) = (rho * x_a, rho * x_b);
    (
        [sa < eps_oma, sb < eps_oma],
        0.5 * ((1.0 + sa).log2() + (1.0 + sb).log2()),
    )
}

/// Result of the per-trial hybrid decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridChoice {
    pub scheme: AccessScheme,
    pub noma_cop: f64,
    pub oma_cop: f64,
    /// `min(noma_cop, oma_cop)`.
    pub predicted_cop: f64,
}

/// Picks uplink NOMA or OMA by predicted common outage on the estimated
/// pair. Ties go to NOMA.
pub fn hybrid_uplink_select(
    est: &PairScenario,
    power: UplinkPower,
    rho_oma: f64,
    pe1_est: f64,
) -> Result<HybridChoice> {
    let noma_cop = uplink_cop(est, power, pe1_est);
    let oma = oma_cop(est, rho_oma)?;
    let scheme = if noma_cop <= oma {
        AccessScheme::Noma
    } else {
        AccessScheme::Oma
    };
    Ok(HybridChoice {
        scheme,
        noma_cop,
        oma_cop: oma,
        predicted_cop: noma_cop.min(oma),
    })
}

/// Evaluates one access arm on one pair realization.
pub fn evaluate_pair(
    state: &PairState,
    ctx: &mut PairContext,
    link: &LinkConfig,
    access: &Access,
) -> Result<TrialOutcome> {
    let near = ctx.near;
    let far = 1 - near;
    let (x_near, x_far) = (state.gain[near], state.gain[far]);
    let eps0 = link.target_snr();
    // outcomes are produced in (estimated-near, estimated-far) order
    let (by_estimate, sum_rate, scheme) = match *access {
        Access::Downlink { rho, rule, targets } => {
            let beta = match rule {
                DownlinkRule::Fixed { beta } => beta,
                DownlinkRule::Dpa => dpa_optimal_beta(&ctx.est, rho, eps0)?.beta_star,
            };
            let (eps_far, eps_near) = match targets {
                Some(t) => (target_snr(t.far_rate), target_snr(t.near_rate)),
                None => (eps0, eps0),
            };
            let ([far_fail, near_fail], rate) = downlink_trial(x_far, x_near, rho, beta, eps_far, eps_near);
            ([near_fail, far_fail], rate, AccessScheme::Noma)
        }
        Access::Uplink { rule } => {
            let p = rule.power(&ctx.est)?;
            let (out, rate) = uplink_trial(x_near, x_far, p.rho1, p.rho2, eps0);
            (out, rate, AccessScheme::Noma)
        }
        Access::Oma { rho } => {
            let (out, rate) = oma_trial(x_near, x_far, rho, link.oma_target_snr());
            (out, rate, AccessScheme::Oma)
        }
        Access::Hybrid { rule, rho_oma } => {
            let p = rule.power(&ctx.est)?;
            let pe1 = ctx.pe1_est()?;
            match hybrid_uplink_select(&ctx.est, p, rho_oma, pe1)?.scheme {
                AccessScheme::Noma => {
                    let (out, rate) = uplink_trial(x_near, x_far, p.rho1, p.rho2, eps0);
                    (out, rate, AccessScheme::Noma)
                }
                AccessScheme::Oma => {
                    let (out, rate) = oma_trial(x_near, x_far, rho_oma, link.oma_target_snr());
                    (out, rate, AccessScheme::Oma)
                }
            }
        }
    };
    let tn = state.true_near();
    let outage = if tn == near {
        by_estimate
    } else {
        [by_estimate[1], by_estimate[0]]
    };
    Ok(TrialOutcome {
        sum_rate,
        outage,
        order_error: tn != near,
        gain_order_error: x_near < x_far,
        scheme,
    })
}

/// Closed-form counterparts of one access arm at fixed true distances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalyticMetrics {
    pub sum_rate: Option<f64>,
    pub cop: Option<f64>,
}

/// Closed forms for a static pair with order-error probability `pe1`.
///
/// Power rules that depend on the estimate (DPA, DPC) are evaluated with the
/// powers computed from the true distances; per-signal targets have no
/// common-outage closed form.
pub fn analytic_metrics(truth: &PairScenario, access: &Access, pe1: f64) -> Result<AnalyticMetrics> {
    let eps0 = truth.target_snr();
    match *access {
        Access::Downlink { rho, rule, targets } => {
            let beta = match rule {
                DownlinkRule::Fixed { beta } => beta,
                DownlinkRule::Dpa => dpa_optimal_beta(truth, rho, eps0)?.beta_star,
            };
            let power = DownlinkPower::new(rho, beta)?;
            Ok(AnalyticMetrics {
                sum_rate: Some(downlink_avg_sum_rate_with_pe(truth, power, pe1)?),
                cop: targets.is_none().then(|| downlink_cop(truth, power, pe1)),
            })
        }
        Access::Uplink { rule } => {
            let p = rule.power(truth)?;
            Ok(AnalyticMetrics {
                sum_rate: Some(uplink_sum_rate_mixture(truth, p, pe1)?),
                cop: Some(uplink_cop(truth, p, pe1)),
            })
        }
        Access::Oma { rho } => Ok(AnalyticMetrics {
            sum_rate: Some(oma_avg_sum_rate(truth, rho)?),
            cop: Some(oma_cop(truth, rho)?),
        }),
        Access::Hybrid { rule, rho_oma } => {
            let p = rule.power(truth)?;
            let choice = hybrid_uplink_select(truth, p, rho_oma, pe1)?;
            Ok(AnalyticMetrics {
                sum_rate: None,
                cop: Some(choice.predicted_cop),
            })
        }
    }
}

/// Uplink average sum rate when the powers follow the estimated order:
/// the correct-order value with weight `1 - pe1` and the swapped one with
/// weight `pe1`. Equal powers make both terms equal.
pub fn uplink_sum_rate_mixture(truth: &PairScenario, p: UplinkPower, pe1: f64) -> Result<f64> {
    let (l1, l2) = (truth.lambda1(), truth.lambda2());
    let ok = uplink_avg_sum_rate_rates(l1 / p.rho1, l2 / p.rho2)?;
    if pe1 == 0.0 {
        return Ok(ok);
    }
    let swapped = uplink_avg_sum_rate_rates(l2 / p.rho1, l1 / p.rho2)?;
    Ok((1.0 - pe1) * ok + pe1 * swapped)
}

/// Users split into NOMA pairs by estimated distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    /// `(estimated-near, estimated-far)` user indices.
    pub pairs: Vec<(usize, usize)>,
    /// Median user of an odd population, served by OMA and left out of the
    /// NOMA statistics.
    pub leftover: Option<usize>,
}

/// Sorts by estimated distance (ties by index) and pairs the i-th nearest
/// with the i-th farthest.
pub fn pair_users(d_hat: &[f64]) -> Pairing {
    let mut idx: Vec<usize> = (0..d_hat.len()).collect();
    idx.sort_by(|&a, &b| d_hat[a].total_cmp(&d_hat[b]).then(a.cmp(&b)));
    let m = idx.len();
    let pairs = (0..m / 2).map(|i| (idx[i], idx[m - 1 - i])).collect();
    let leftover = (m % 2 == 1).then(|| idx[m / 2]);
    Pairing { pairs, leftover }
}
