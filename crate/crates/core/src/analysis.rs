//! Closed-form performance of a two-user pair ordered by estimated distance.
//!
//! Notation: `U1` is the user that is truly nearer (`d1 < d2`), channel
//! gains are `X_k ~ Exp(λ_k)` with `λ_k = d_k^α`, and `P_e¹` is the
//! probability that the noisy position reports put the pair in the wrong
//! distance order. Every sum-rate and outage expression below is written in
//! terms of `P_e¹`; the outage functions take it as an argument so callers
//! can substitute zero, the analytic value, or an empirical estimate.

use std::f64::consts::LN_2;

use crate::channel::{LinkConfig, NoncentralityParam, PathLossRate};
use crate::error::{invalid, Result};
use crate::specfun::{
    binomial_half_upper_tail, exp_e1_scaled, ln_binomial, PoissonWindow, SeriesTolerance, EULER_GAMMA,
};

/// Relative gap below which `λ1/ρ1` and `λ2/ρ2` are treated as equal in the
/// uplink sum rate.
pub const EQUAL_RATE_TOL: f64 = 1e-9;

/// Poisson mean `d1²/(2σ_ob²)` above which the order error uses the
/// Gaussian limit of the report distances instead of the double series,
/// whose cost grows linearly in the mean.
pub const LARGE_NONCENTRALITY: f64 = 1e6;

/// One of the two paired users, by true distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairUser {
    /// The truly nearer user.
    U1,
    /// The truly farther user.
    U2,
}

/// Two users at fixed true distances `d1 <= d2` plus the link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScenario {
    d1: f64,
    d2: f64,
    link: LinkConfig,
    lambda1: f64,
    lambda2: f64,
}

impl PairScenario {
    pub fn new(d1: f64, d2: f64, link: LinkConfig) -> Result<Self> {
        link.validate()?;
        if !(d1 > 0.0) || !d1.is_finite() {
            return Err(invalid("d1", format!("{d1} (must be positive)")));
        }
        if !(d2 >= d1) || !d2.is_finite() {
            return Err(invalid("d2", format!("{d2} (must satisfy d2 >= d1 = {d1})")));
        }
        Ok(Self {
            d1,
            d2,
            link,
            lambda1: PathLossRate::new(d1, link.alpha).get(),
            lambda2: PathLossRate::new(d2, link.alpha).get(),
        })
    }

    /// Builds the scenario from two distances in either order. The returned
    /// flag is `true` when the arguments were swapped.
    pub fn ordered(da: f64, db: f64, link: LinkConfig) -> Result<(Self, bool)> {
        if db < da {
            Ok((Self::new(db, da, link)?, true))
        } else {
            Ok((Self::new(da, db, link)?, false))
        }
    }

    pub fn with_sigma_ob2(self, sigma_ob2: f64) -> Result<Self> {
        Self::new(self.d1, self.d2, LinkConfig { sigma_ob2, ..self.link })
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn d2(&self) -> f64 {
        self.d2
    }
    pub fn link(&self) -> &LinkConfig {
        &self.link
    }
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
    /// `λ = λ1 + λ2`, the rate of `min(X1, X2)`.
    pub fn lambda_sum(&self) -> f64 {
        self.lambda1 + self.lambda2
    }
    /// `D = λ2 / λ1`.
    pub fn path_loss_ratio(&self) -> f64 {
        self.lambda2 / self.lambda1
    }
    pub fn rate(&self, k: PairUser) -> f64 {
        match k {
            PairUser::U1 => self.lambda1,
            PairUser::U2 => self.lambda2,
        }
    }
    pub fn noncentrality(&self, k: PairUser) -> NoncentralityParam {
        match k {
            PairUser::U1 => NoncentralityParam::from_distance(self.d1),
            PairUser::U2 => NoncentralityParam::from_distance(self.d2),
        }
    }
    pub fn target_snr(&self) -> f64 {
        self.link.target_snr()
    }
}

/// Downlink superposition: the estimated-far user gets `β`, the other `1 - β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkPower {
    pub rho: f64,
    pub beta: f64,
}

impl DownlinkPower {
    pub fn new(rho: f64, beta: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(invalid("rho", format!("{rho} (must be positive)")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("beta", format!("{beta} (must lie in (0, 1))")));
        }
        Ok(Self { rho, beta })
    }
}

/// Uplink transmit SNRs. `rho1` belongs to the user the base station decodes
/// first (estimated nearer), `rho2` to the other one; each is capped by its
/// `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkPower {
    pub rho1: f64,
    pub rho2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl UplinkPower {
    pub fn new(rho1: f64, rho2: f64, omega1: f64, omega2: f64) -> Result<Self> {
        for (name, rho, omega) in [("rho1", rho1, omega1), ("rho2", rho2, omega2)] {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(invalid(name, format!("{rho} (must be positive)")));
            }
            if !(rho <= omega) {
                return Err(invalid(name, format!("{rho} exceeds its cap {omega}")));
            }
        }
        Ok(Self {
            rho1,
            rho2,
            omega1,
            omega2,
        })
    }

    /// Both users at exactly the given SNRs (caps equal to the SNRs).
    pub fn at(rho1: f64, rho2: f64) -> Result<Self> {
        Self::new(rho1, rho2, rho1, rho2)
    }
}

pub(crate) fn clamp_probability(p: f64) -> f64 {
    debug_assert!(
        p > -1e-12 && p < 1.0 + 1e-12,
        "probability excursion beyond rounding: {p}"
    );
    p.clamp(0.0, 1.0)
}

fn check_snr(name: &'static str, snr: f64) -> Result<()> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(invalid(name, format!("{snr} (must be positive and finite)")));
    }
    Ok(())
}

/// `E[log2(1 + snr·X)]` for `X ~ Exp(rate)`, i.e. `-(1/ln2) e^{r/s} Ei(-r/s)`.
pub fn mean_log2_rate(rate: f64, snr: f64) -> Result<f64> {
    check_snr("snr", snr)?;
    if !(rate > 0.0) {
        return Err(invalid("rate", format!("{rate} (must be positive)")));
    }
    Ok(exp_e1_scaled(rate / snr)? / LN_2)
}

/// `φ(k, φ) = -(λ_k / (λ ln2)) e^{λ/φ} Ei(-λ/φ)`.
pub fn phi(k: PairUser, phiarg: f64, s: &PairScenario) -> Result<f64> {
    Ok(s.rate(k) / s.lambda_sum() * mean_log2_rate(s.lambda_sum(), phiarg)?)
}

/// `φ'(k, φ) = -(1/ln2) e^{λ_k/φ} Ei(-λ_k/φ)`.
pub fn phi_prime(k: PairUser, phiarg: f64, s: &PairScenario) -> Result<f64> {
    mean_log2_rate(s.rate(k), phiarg)
}

/// Large-`φ` form of [`phi`], from `Ei(x) ≈ ln(-x) + γ`.
pub fn phi_high_snr(k: PairUser, phiarg: f64, s: &PairScenario) -> Result<f64> {
    check_snr("phi", phiarg)?;
    Ok(-s.rate(k) / (s.lambda_sum() * LN_2) * (EULER_GAMMA + (s.lambda_sum() / phiarg).ln()))
}

/// Large-`φ` form of [`phi_prime`].
pub fn phi_prime_high_snr(k: PairUser, phiarg: f64, s: &PairScenario) -> Result<f64> {
    check_snr("phi", phiarg)?;
    Ok(-(EULER_GAMMA + (s.rate(k) / phiarg).ln()) / LN_2)
}

/// `P_e¹ = Pr{d̂1 > d̂2}` without fading, with the default series tolerance.
pub fn decoding_error_prob_fading_free(s: &PairScenario) -> Result<f64> {
    decoding_error_prob_fading_free_with(s, &SeriesTolerance::default())
}

/// `P_e¹ = Σ_i Σ_j P_{λ1β}(i) P_{λ2β}(j) I_{i,j}` with `λ_k = d_k²` and
/// `β = 1/(2σ_ob²)`.
///
/// `I_{i,j} = Pr{Bin(i+j+1, 1/2) >= j+1}`, so along `i` it obeys
/// `I_{i+1,j} = I_{i,j} + ½ C(i+j+1, j) 2^{-(i+j+1)}`. Each row is seeded with
/// one binomial tail at the left edge of the `i` window and then advanced
/// with positive increments only.
pub fn decoding_error_prob_fading_free_with(s: &PairScenario, tol: &SeriesTolerance) -> Result<f64> {
    tol.validate()?;
    let (d1, d2) = (s.d1(), s.d2());
    if d1 == d2 {
        return Ok(0.5);
    }
    let sigma_ob2 = s.link().sigma_ob2;
    if sigma_ob2 == 0.0 {
        return Ok(0.0);
    }
    let rate = 0.5 / sigma_ob2;
    if d1 * d1 * rate > LARGE_NONCENTRALITY {
        return Ok(decoding_error_prob_gaussian_limit(d1, d2, sigma_ob2));
    }
    let w1 = PoissonWindow::new(d1 * d1 * rate, tol.tail_mass)?;
    let w2 = PoissonWindow::new(d2 * d2 * rate, tol.tail_mass)?;

    let mut total = 0.0;
    for (j, pj) in w2.iter() {
        let jf = j as f64;
        let n0 = w1.lo + j + 1;
        let mut order_prob = binomial_half_upper_tail(n0, j + 1);
        // ln[C(n, j) 2^{-n}] with n = i + j + 1
        let mut ln_point = ln_binomial(n0, j) - n0 as f64 * LN_2;
        let mut inner = 0.0;
        for (i, pi) in w1.iter() {
            inner += pi * order_prob;
            order_prob += 0.5 * ln_point.exp();
            let n = (i + j + 1) as f64;
            ln_point += ((n + 1.0) / (n + 1.0 - jf)).ln() - LN_2;
        }
        total += pj * inner;
    }
    Ok(clamp_probability(total))
}

/// Order error when `σ_ob ≪ d`: `d̂_k ≈ d_k + σ²/(2d_k) + N(0, σ²)`, so
/// `Pr{d̂1 > d̂2} ≈ Φ(m/(σ√2))` with `m = d1 - d2 + σ²/(2d1) - σ²/(2d2)`.
/// The neglected skew is of relative order `σ/d`.
pub fn decoding_error_prob_gaussian_limit(d1: f64, d2: f64, sigma_ob2: f64) -> f64 {
    let m = d1 - d2 + 0.5 * sigma_ob2 * (1.0 / d1 - 1.0 / d2);
    0.5 * statrs::function::erf::erfc(-m / (2.0 * sigma_ob2.sqrt()))
}

/// `P_e² = ((D-1)/(D+1)) P_e¹ + 1/(D+1)` with `D = λ2/λ1`.
pub fn decoding_error_prob_rayleigh_from(pe1: f64, path_loss_ratio: f64) -> f64 {
    let d = path_loss_ratio;
    clamp_probability((d - 1.0) / (d + 1.0) * pe1 + 1.0 / (d + 1.0))
}

/// Decoding-order error under Rayleigh fading.
pub fn decoding_error_prob_rayleigh(s: &PairScenario) -> Result<f64> {
    let pe1 = decoding_error_prob_fading_free(s)?;
    Ok(decoding_error_prob_rayleigh_from(pe1, s.path_loss_ratio()))
}

/// Downlink average sum rate with `P_e¹` computed from the scenario.
pub fn downlink_avg_sum_rate(s: &PairScenario, power: DownlinkPower) -> Result<f64> {
    let pe1 = decoding_error_prob_fading_free(s)?;
    downlink_avg_sum_rate_with_pe(s, power, pe1)
}

/// Downlink average sum rate for a given order-error probability.
pub fn downlink_avg_sum_rate_with_pe(s: &PairScenario, power: DownlinkPower, pe1: f64) -> Result<f64> {
    let rho = power.rho;
    let rho_near = rho * (1.0 - power.beta);
    let near_term = (1.0 - pe1) * phi_prime(PairUser::U1, rho_near, s)? + pe1 * phi_prime(PairUser::U2, rho_near, s)?;
    let far_full = phi(PairUser::U1, rho, s)? + phi(PairUser::U2, rho, s)?;
    let far_interf = phi(PairUser::U1, rho_near, s)? + phi(PairUser::U2, rho_near, s)?;
    Ok(near_term + far_full - far_interf)
}

/// `R ≈ log2(ρ/λ1) - P_e¹ log2(λ2/λ1) - γ/ln2`.
pub fn downlink_sum_rate_high_snr(s: &PairScenario, power: DownlinkPower) -> Result<f64> {
    let pe1 = decoding_error_prob_fading_free(s)?;
    Ok(downlink_sum_rate_high_snr_with_pe(s, power, pe1))
}

pub fn downlink_sum_rate_high_snr_with_pe(s: &PairScenario, power: DownlinkPower, pe1: f64) -> f64 {
    (power.rho / s.lambda1()).log2() - pe1 * s.path_loss_ratio().log2() - EULER_GAMMA / LN_2
}

/// Thresholds of the downlink outage events: the far signal needs
/// `min(X) > A`, the near user additionally `X_near > B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkThresholds {
    /// `None` when `β <= (1-β)ε₀`: the far signal can never be decoded.
    pub a: Option<f64>,
    pub b: f64,
}

impl DownlinkThresholds {
    pub fn new(power: DownlinkPower, eps0: f64) -> Self {
        let DownlinkPower { rho, beta } = power;
        let margin = beta - (1.0 - beta) * eps0;
        Self {
            a: (margin > 0.0).then(|| eps0 / (rho * margin)),
            b: eps0 / (rho * (1.0 - beta)),
        }
    }
}

/// Downlink common outage probability:
/// `1 - (1-P_e¹) e^{-(λ2 A + λ1 ζ)} - P_e¹ e^{-(λ1 A + λ2 ζ)}`, `ζ = max(A, B)`.
/// Exactly 1 when `β <= ε₀/(1+ε₀)`.
pub fn downlink_cop(s: &PairScenario, power: DownlinkPower, pe1: f64) -> f64 {
    downlink_cop_rates(s.lambda1(), s.lambda2(), power, s.target_snr(), pe1)
}

pub(crate) fn downlink_cop_rates(lambda1: f64, lambda2: f64, power: DownlinkPower, eps0: f64, pe1: f64) -> f64 {
    let th = DownlinkThresholds::new(power, eps0);
    let Some(a) = th.a else {
        return 1.0;
    };
    let zeta = a.max(th.b);
    let ok_order = -(-(lambda2 * a + lambda1 * zeta)).exp_m1();
    let swapped = -(-(lambda1 * a + lambda2 * zeta)).exp_m1();
    clamp_probability((1.0 - pe1) * ok_order + pe1 * swapped)
}

/// Uplink average sum rate
/// `[(λ2/ρ2) φ'(1, ρ1) - (λ1/ρ1) φ'(2, ρ2)] / (λ2/ρ2 - λ1/ρ1)`.
///
/// The expression is `0/0` when `λ1/ρ1 = λ2/ρ2`; there the limit
/// `(1/ln2)[(1 - μ) e^μ E1(μ) + 1]` with `μ = λ/ρ` is used.
pub fn uplink_avg_sum_rate(s: &PairScenario, power: UplinkPower) -> Result<f64> {
    uplink_avg_sum_rate_rates(s.lambda1() / power.rho1, s.lambda2() / power.rho2)
}

/// Uplink sum rate in terms of the normalized rates `μ_k = λ_k / ρ_k`.
pub fn uplink_avg_sum_rate_rates(mu1: f64, mu2: f64) -> Result<f64> {
    if !(mu1 > 0.0 && mu2 > 0.0) || !mu1.is_finite() || !mu2.is_finite() {
        return Err(invalid("lambda/rho", format!("({mu1}, {mu2}) must be positive")));
    }
    if (mu2 - mu1).abs() <= EQUAL_RATE_TOL * mu1.max(mu2) {
        let mu = 0.5 * (mu1 + mu2);
        return Ok(((1.0 - mu) * exp_e1_scaled(mu)? + 1.0) / LN_2);
    }
    let g1 = exp_e1_scaled(mu1)? / LN_2;
    let g2 = exp_e1_scaled(mu2)? / LN_2;
    Ok((mu2 * g1 - mu1 * g2) / (mu2 - mu1))
}

/// High-SNR form of [`uplink_avg_sum_rate`].
pub fn uplink_sum_rate_high_snr(s: &PairScenario, power: UplinkPower) -> Result<f64> {
    let mu1 = s.lambda1() / power.rho1;
    let mu2 = s.lambda2() / power.rho2;
    if (mu2 - mu1).abs() <= EQUAL_RATE_TOL * mu1.max(mu2) {
        let mu = 0.5 * (mu1 + mu2);
        return Ok((1.0 - EULER_GAMMA) / LN_2 - mu.log2());
    }
    Ok((mu1 * mu2.log2() - mu2 * mu1.log2()) / (mu2 - mu1) - EULER_GAMMA / LN_2)
}

/// Parameters `B = ε₀/ρ2`, `C = ε₀/ρ1`, `k = ε₀ρ2/ρ1` of the uplink outage events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkThresholds {
    pub b: f64,
    pub c_up: f64,
    pub k: f64,
}

impl UplinkThresholds {
    pub fn new(rho1: f64, rho2: f64, eps0: f64) -> Self {
        Self {
            b: eps0 / rho2,
            c_up: eps0 / rho1,
            k: eps0 * rho2 / rho1,
        }
    }
}

/// Success probability `Pr{X_a > k X_b + C, X_b > B}` for `X_a ~ Exp(la)`
/// decoded first and `X_b ~ Exp(lb)`, returned as its complement to keep
/// precision when it is close to one.
fn uplink_outage_given_order(la: f64, lb: f64, th: &UplinkThresholds) -> f64 {
    let weight = lb / (lb + th.k * la);
    let miss = th.k * la / (lb + th.k * la);
    let exponent = la * th.c_up + (lb + th.k * la) * th.b;
    miss - weight * (-exponent).exp_m1()
}

/// Uplink common outage probability.
pub fn uplink_cop(s: &PairScenario, power: UplinkPower, pe1: f64) -> f64 {
    uplink_cop_rates(s.lambda1(), s.lambda2(), power.rho1, power.rho2, s.target_snr(), pe1)
}

pub(crate) fn uplink_cop_rates(lambda1: f64, lambda2: f64, rho1: f64, rho2: f64, eps0: f64, pe1: f64) -> f64 {
    let th = UplinkThresholds::new(rho1, rho2, eps0);
    let ok_order = uplink_outage_given_order(lambda1, lambda2, &th);
    let swapped = uplink_outage_given_order(lambda2, lambda1, &th);
    clamp_probability((1.0 - pe1) * ok_order + pe1 * swapped)
}

/// Limit of [`uplink_cop`] as both SNRs grow at the fixed ratio of `power`:
/// `1 - (1-P_e¹) λ2/(λ2 + kλ1) - P_e¹ λ1/(λ1 + kλ2)`.
pub fn uplink_cop_floor(s: &PairScenario, power: UplinkPower, pe1: f64) -> f64 {
    let k = s.target_snr() * power.rho2 / power.rho1;
    let (l1, l2) = (s.lambda1(), s.lambda2());
    clamp_probability((1.0 - pe1) * k * l1 / (l2 + k * l1) + pe1 * k * l2 / (l1 + k * l2))
}

/// OMA common outage with each user on half the resource:
/// `1 - exp(-ε₀'(λ1 + λ2)/ρ)`.
pub fn oma_cop(s: &PairScenario, rho: f64) -> Result<f64> {
    check_snr("rho", rho)?;
    Ok(clamp_probability(
        -(-s.link().oma_target_snr() * s.lambda_sum() / rho).exp_m1(),
    ))
}

/// OMA average sum rate, two orthogonal half-resource links:
/// `½ Σ_k E[log2(1 + ρ X_k)]`.
pub fn oma_avg_sum_rate(s: &PairScenario, rho: f64) -> Result<f64> {
    Ok(0.5 * (mean_log2_rate(s.lambda1(), rho)? + mean_log2_rate(s.lambda2(), rho)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gamma_order_prob;
    use crate::testkit::integrate_to_infinity;

    fn link(alpha: f64, sigma_ob2: f64, rate: f64) -> LinkConfig {
        LinkConfig {
            alpha,
            noise_power_dbm: -50.0,
            sigma_ob2,
            target_rate_bpcu: rate,
        }
    }

    fn scenario(p1: (f64, f64), p2: (f64, f64), alpha: f64, sigma_ob2: f64, rate: f64) -> PairScenario {
        PairScenario::new(
            f64::hypot(p1.0, p1.1),
            f64::hypot(p2.0, p2.1),
            link(alpha, sigma_ob2, rate),
        )
        .unwrap()
    }

    #[test]
    fn scenario_validation() {
        assert!(PairScenario::new(5.0, 4.0, link(2.0, 1.0, 1.0)).is_err());
        assert!(PairScenario::new(0.0, 4.0, link(2.0, 1.0, 1.0)).is_err());
        let (s, swapped) = PairScenario::ordered(7.0, 3.0, link(2.0, 1.0, 1.0)).unwrap();
        assert!(swapped);
        assert_eq!(s.lambda1(), 9.0);
        assert_eq!(s.path_loss_ratio(), 49.0 / 9.0);
    }

    #[test]
    fn phi_weights_sum() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 1.0, 1.0);
        let total = phi(PairUser::U1, 100.0, &s).unwrap() + phi(PairUser::U2, 100.0, &s).unwrap();
        let lam = s.lambda_sum();
        let direct = -(lam / 100.0f64).exp() * crate::specfun::exp_integral_ei(-lam / 100.0).unwrap() / LN_2;
        assert!((total - direct).abs() < 1e-12);
        // vanishes as λ/φ grows
        assert!(phi(PairUser::U1, 1e-3, &s).unwrap() < 1e-4);
    }

    #[test]
    fn phi_functions_match_quadrature() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 1.0, 1.0);
        let p = 100.0;
        for k in [PairUser::U1, PairUser::U2] {
            let lam = s.lambda_sum();
            let oracle =
                s.rate(k) / lam * p / LN_2 * integrate_to_infinity(|t| (-lam * t).exp() / (1.0 + t * p), 0.0, 1e-14);
            assert!((phi(k, p, &s).unwrap() - oracle).abs() < 1e-11);
            let lk = s.rate(k);
            let oracle = p / LN_2 * integrate_to_infinity(|t| (-lk * t).exp() / (1.0 + t * p), 0.0, 1e-14);
            assert!((phi_prime(k, p, &s).unwrap() - oracle).abs() < 1e-11);
        }
    }

    #[test]
    fn phi_prime_ordering_and_high_snr() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 1.0, 1.0);
        for &p in &[1.0, 10.0, 1e3, 1e6] {
            assert!(phi_prime(PairUser::U1, p, &s).unwrap() > phi_prime(PairUser::U2, p, &s).unwrap());
        }
        let p = s.lambda1() / 1e-4;
        let exact = phi_prime(PairUser::U1, p, &s).unwrap();
        let approx = phi_prime_high_snr(PairUser::U1, p, &s).unwrap();
        assert!((exact - approx).abs() < 0.01);
        let limit = (p / s.lambda1()).log2() - EULER_GAMMA / LN_2;
        assert!((exact - limit).abs() < 0.01);
    }

    // Route 2: direct double sum with the hypergeometric I_{i,j}.
    fn pe1_naive(s: &PairScenario) -> f64 {
        let tol = SeriesTolerance::default();
        let rate = 0.5 / s.link().sigma_ob2;
        let w1 = PoissonWindow::new(s.d1().powi(2) * rate, tol.tail_mass).unwrap();
        let w2 = PoissonWindow::new(s.d2().powi(2) * rate, tol.tail_mass).unwrap();
        let mut total = 0.0;
        for (i, pi) in w1.iter() {
            for (j, pj) in w2.iter() {
                total += pi * pj * gamma_order_prob(i, j).unwrap();
            }
        }
        total
    }

    #[test]
    fn pe1_recurrence_matches_hypergeometric_sum() {
        for &(p1, p2, s2) in &[
            ((3.0, 3.0), (5.0, 5.0), 9.0),
            ((1.0, 2.0), (2.0, 2.0), 0.5),
            ((3.0, 3.0), (10.0, 10.0), 4.0),
            ((4.0, 0.0), (0.0, 6.0), 25.0),
        ] {
            let s = scenario(p1, p2, 2.0, s2, 1.0);
            let a = decoding_error_prob_fading_free(&s).unwrap();
            let b = pe1_naive(&s);
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn pe1_degenerate_and_monotone() {
        let s = PairScenario::new(5.0, 5.0, link(2.0, 4.0, 1.0)).unwrap();
        assert_eq!(decoding_error_prob_fading_free(&s).unwrap(), 0.5);
        let mut prev = 0.0;
        for k in 1..=12 {
            let sigma = 0.25 * k as f64;
            let s = scenario((3.0, 3.0), (5.0, 5.0), 3.0, sigma * sigma, 1.0);
            let pe = decoding_error_prob_fading_free(&s).unwrap();
            assert!(pe > prev && pe < 0.5, "sigma={sigma}: {pe}");
            prev = pe;
        }
        let s = scenario((3.0, 3.0), (5.0, 5.0), 3.0, 0.0025, 1.0);
        assert!(decoding_error_prob_fading_free(&s).unwrap() < 1e-20);
    }

    #[test]
    fn pe1_handles_large_poisson_means() {
        // d up to 100 m with sigma_ob = 1 m
        let s = PairScenario::new(99.0, 100.0, link(2.0, 1.0, 1.0)).unwrap();
        let pe = decoding_error_prob_fading_free(&s).unwrap();
        // d̂ is close to Gaussian with std ~ sigma here; Pr{N(0, 2) > 1}
        let approx = 0.5 * statrs_erfc(1.0 / 2.0);
        assert!((pe - approx).abs() < 5e-3, "{pe} vs {approx}");
    }

    #[test]
    fn pe1_gaussian_limit_continues_the_series() {
        // just below the switch the series is still exact
        for (d1, gap) in [(50.0, 0.02), (200.0, 0.4)] {
            let sigma_ob2 = d1 * d1 / (2.0 * 0.9 * LARGE_NONCENTRALITY);
            let s = PairScenario::new(d1, d1 + gap, link(2.0, sigma_ob2, 1.0)).unwrap();
            let series = decoding_error_prob_fading_free(&s).unwrap();
            let limit = decoding_error_prob_gaussian_limit(d1, d1 + gap, sigma_ob2);
            assert!((series - limit).abs() < 1e-4, "d1={d1} gap={gap}: {series} vs {limit}");
        }
        // far above it the series would not fit in memory
        let s = PairScenario::new(40.0, 40.0 + 1e-6, link(2.0, 1e-20, 1.0)).unwrap();
        assert_eq!(decoding_error_prob_fading_free(&s).unwrap(), 0.0);
    }

    fn statrs_erfc(x: f64) -> f64 {
        statrs::function::erf::erfc(x)
    }

    #[test]
    fn rayleigh_order_error_spot_values() {
        // U1(3,3), alpha = 3, sigma_ob = 3
        let near = scenario((3.0, 3.0), (5.0, 5.0), 3.0, 9.0, 1.0);
        let far = scenario((3.0, 3.0), (10.0, 10.0), 3.0, 9.0, 1.0);
        assert!((decoding_error_prob_rayleigh(&near).unwrap() - 0.35).abs() < 0.02);
        assert!((decoding_error_prob_rayleigh(&far).unwrap() - 0.04).abs() < 0.02);
        assert_eq!(decoding_error_prob_rayleigh_from(0.13, 1.0), 0.5);
        // floor 1/(D+1) as sigma -> 0
        let clean = near.with_sigma_ob2(1e-4).unwrap();
        let floor = 1.0 / (near.path_loss_ratio() + 1.0);
        assert!((decoding_error_prob_rayleigh(&clean).unwrap() - floor).abs() < 1e-12);
    }

    #[test]
    fn downlink_sum_rate_limits() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 10.0, 1.0);
        let p = DownlinkPower::new(1e3, 0.8).unwrap();
        let r0 = downlink_avg_sum_rate_with_pe(&s, p, 0.0).unwrap();
        let rho_near = p.rho * (1.0 - p.beta);
        let manual = phi_prime(PairUser::U1, rho_near, &s).unwrap() + mean_log2_rate(s.lambda_sum(), p.rho).unwrap()
            - mean_log2_rate(s.lambda_sum(), rho_near).unwrap();
        assert!((r0 - manual).abs() < 1e-12);
        // degradation monotonicity in pe1
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let r = downlink_avg_sum_rate_with_pe(&s, p, 0.05 * k as f64).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn downlink_sum_rate_nonincreasing_in_observation_noise() {
        let p = DownlinkPower::new(1e5, 0.8).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 0.5 + 5.0 * k as f64, 1.0);
            let r = downlink_avg_sum_rate(&s, p).unwrap();
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn downlink_high_snr_approximation() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 10.0, 1.0);
        let at = |db: f64| DownlinkPower::new(10f64.powf(db / 10.0), 0.8).unwrap();
        // gaps at ρ = 1e4 from an independent arbitrary-precision evaluation
        for (pe1, gap) in [
            (0.0, 0.13380662381300468),
            (0.1, 0.11550144478789015),
            (0.3, 0.07889108673766287),
        ] {
            let exact = downlink_avg_sum_rate_with_pe(&s, at(40.0), pe1).unwrap();
            let approx = downlink_sum_rate_high_snr_with_pe(&s, at(40.0), pe1);
            assert!((approx - exact - gap).abs() < 1e-9, "{pe1}: {}", approx - exact);
        }
        // and the gap closes as ρ grows
        let mut prev = f64::INFINITY;
        for db in [40.0, 50.0, 60.0, 70.0] {
            let gap = downlink_sum_rate_high_snr(&s, at(db)).unwrap() - downlink_avg_sum_rate(&s, at(db)).unwrap();
            assert!(gap.abs() < prev);
            prev = gap.abs();
        }
        assert!(prev < 1e-3);
        let slope =
            downlink_sum_rate_high_snr(&s, at(40.0)).unwrap() - downlink_sum_rate_high_snr(&s, at(30.0)).unwrap();
        assert!((slope - 10f64.log2()).abs() < 0.05);
        let pe0 = downlink_sum_rate_high_snr_with_pe(&s, at(40.0), 0.0);
        assert!((pe0 - ((1e4 / s.lambda1()).log2() - EULER_GAMMA / LN_2)).abs() < 1e-12);
    }

    #[test]
    fn downlink_cop_regions() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 10.0, 1.5);
        let eps0 = s.target_snr();
        let rho = 1e5;
        // infeasible far signal
        let beta_dead = eps0 / (1.0 + eps0);
        assert_eq!(downlink_cop(&s, DownlinkPower::new(rho, beta_dead).unwrap(), 0.2), 1.0);
        assert_eq!(
            downlink_cop(&s, DownlinkPower::new(rho, beta_dead * 0.9).unwrap(), 0.0),
            1.0
        );
        // A > B: independent of pe1 and equal to 1 - e^{-λA}
        let beta = 0.5 * (eps0 / (1.0 + eps0) + (eps0 + 1.0) / (eps0 + 2.0));
        let p = DownlinkPower::new(rho, beta).unwrap();
        let a = DownlinkThresholds::new(p, eps0).a.unwrap();
        let expect = 1.0 - (-s.lambda_sum() * a).exp();
        for &pe in &[0.0, 0.1, 0.4] {
            assert!((downlink_cop(&s, p, pe) - expect).abs() < 1e-12);
        }
        // A < B: convex combination of the pe1 = 0 and pe1 = 1 branches
        let p = DownlinkPower::new(rho, 0.9).unwrap();
        let lo = downlink_cop(&s, p, 0.0);
        let hi = downlink_cop(&s, p, 1.0);
        let mid = downlink_cop(&s, p, 0.3);
        assert!(lo < mid && mid < hi);
        assert!((mid - (0.7 * lo + 0.3 * hi)).abs() < 1e-14);
    }

    #[test]
    fn uplink_sum_rate_singularity_and_symmetry() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 10.0, 1.0);
        let rho1 = 1e3;
        let rho2 = rho1 * s.lambda2() / s.lambda1();
        let at_limit = uplink_avg_sum_rate(&s, UplinkPower::at(rho1, rho2).unwrap()).unwrap();
        let nudged = uplink_avg_sum_rate(&s, UplinkPower::at(rho1 * (1.0 + 1e-8), rho2).unwrap()).unwrap();
        assert!((at_limit - nudged).abs() < 1e-6, "{at_limit} {nudged}");
        // Gamma(2, μ) oracle for the limit
        let mu = s.lambda1() / rho1;
        let oracle = integrate_to_infinity(|t| mu * mu * t * (-mu * t).exp() * (1.0 + t).log2(), 0.0, 1e-13);
        assert!((at_limit - oracle).abs() < 1e-9);
        // swapping (ρ, λ) pairs
        let a = uplink_avg_sum_rate_rates(0.01, 0.3).unwrap();
        let b = uplink_avg_sum_rate_rates(0.3, 0.01).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn uplink_sum_rate_matches_convolution_quadrature() {
        let (mu1, mu2) = (0.02, 0.15);
        let density = |t: f64| mu1 * mu2 / (mu2 - mu1) * ((-mu1 * t).exp() - (-mu2 * t).exp());
        let oracle = integrate_to_infinity(|t| density(t) * (1.0 + t).log2(), 0.0, 1e-13);
        assert!((uplink_avg_sum_rate_rates(mu1, mu2).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn uplink_cop_floor_and_zero_target() {
        let s = scenario((3.0, 3.0), (15.0, 15.0), 3.5, 9.0, 0.1);
        let pe1 = decoding_error_prob_fading_free(&s).unwrap();
        let base = UplinkPower::at(1e5, 1e7).unwrap();
        let floor = uplink_cop_floor(&s, base, pe1);
        let big = UplinkPower::at(1e5 * 1e6, 1e7 * 1e6).unwrap();
        assert!((uplink_cop(&s, big, pe1) - floor).abs() < 1e-6);
        let tiny = scenario((3.0, 3.0), (15.0, 15.0), 3.5, 9.0, 1e-12);
        assert!(uplink_cop(&tiny, base, pe1) < 1e-6);
    }

    #[test]
    fn uplink_cop_nonincreasing_in_first_power() {
        let s = scenario((3.0, 3.0), (15.0, 15.0), 3.5, 9.0, 0.1);
        let mut prev = 1.0;
        for k in 0..40 {
            let rho1 = 10f64.powf(3.0 + 0.2 * k as f64);
            let cop = uplink_cop(&s, UplinkPower::at(rho1, 1e7).unwrap(), 0.0);
            assert!(cop <= prev + 1e-15);
            prev = cop;
        }
    }

    #[test]
    fn oma_cop_behaviour() {
        let s = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 10.0, 0.5);
        let mut prev = 1.0;
        for k in 0..20 {
            let c = oma_cop(&s, 10f64.powf(1.0 + 0.25 * k as f64)).unwrap();
            assert!(c < prev);
            prev = c;
        }
        let tiny = scenario((3.0, 3.0), (7.0, 7.0), 2.0, 10.0, 1e-14);
        assert!(oma_cop(&tiny, 1e3).unwrap() < 1e-12);
    }
}
