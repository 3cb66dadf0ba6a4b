//! Closed-form power choices that minimize the predicted common outage.
//!
//! Both optimizers work on a [`PairScenario`] built from *estimated*
//! distances and minimize the correct-order branch of the outage formula,
//! since the transmitter cannot know the order-error probability. The
//! simulator then scores the chosen powers against the true channel.

use crate::analysis::{downlink_cop_rates, uplink_cop_rates, DownlinkPower, PairScenario, UplinkPower};
use crate::error::{invalid, Result};

/// Relative tolerance on `λ1(1+ε₀) - λ2` below which the closed-form DPA
/// denominator is treated as zero.
pub const DPA_DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpaSolution {
    pub beta_star: f64,
    /// Correct-order outage at `beta_star`.
    pub predicted_cop: f64,
    /// `true` when the numerical fallback was used.
    pub fallback: bool,
}

impl DpaSolution {
    pub fn power(&self, rho: f64) -> Result<DownlinkPower> {
        DownlinkPower::new(rho, self.beta_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpcSolution {
    pub rho1_star: f64,
    pub rho2_star: f64,
    /// Unconstrained stationary point `ρ₂⁺`.
    pub rho2_plus: f64,
    pub predicted_cop: f64,
}

impl DpcSolution {
    pub fn power(&self, omega1: f64, omega2: f64) -> Result<UplinkPower> {
        UplinkPower::new(self.rho1_star, self.rho2_star, omega1, omega2)
    }
}

/// Coefficients `(a, b, c)` of the stationarity condition `aβ² + bβ + c = 0`
/// of the correct-order downlink outage.
pub fn dpa_quadratic(lambda1: f64, lambda2: f64, eps0: f64) -> (f64, f64, f64) {
    let e1 = 1.0 + eps0;
    (
        e1 * (lambda1 * e1 - lambda2),
        2.0 * e1 * (lambda2 - eps0 * lambda1),
        eps0 * eps0 * lambda1 - lambda2 - eps0 * lambda2,
    )
}

/// Both roots `(β⁺, β⁻)` of [`dpa_quadratic`], or `None` when `a = 0`.
pub fn dpa_roots(lambda1: f64, lambda2: f64, eps0: f64) -> Option<(f64, f64)> {
    let (a, b, c) = dpa_quadratic(lambda1, lambda2, eps0);
    if a == 0.0 {
        return None;
    }
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    Some(((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)))
}

/// Correct-order downlink outage as a function of `β`.
pub fn dpa_objective(lambda1: f64, lambda2: f64, rho: f64, eps0: f64, beta: f64) -> f64 {
    downlink_cop_rates(lambda1, lambda2, DownlinkPower { rho, beta }, eps0, 0.0)
}

/// Downlink power-allocation factor minimizing the predicted outage.
///
/// `β* = [√(1+ε₀)(ε₀λ1 - λ2) + √(λ1λ2)] / [√(1+ε₀)(λ1(1+ε₀) - λ2)]`.
/// When the denominator vanishes (to [`DPA_DEGENERATE_TOL`]) the objective is
/// minimized numerically instead.
pub fn dpa_optimal_beta(scenario_est: &PairScenario, rho: f64, eps0: f64) -> Result<DpaSolution> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid("rho", format!("{rho} (must be positive)")));
    }
    if !(eps0 > 0.0) || !eps0.is_finite() {
        return Err(invalid("eps0", format!("{eps0} (must be positive)")));
    }
    let (l1, l2) = (scenario_est.lambda1(), scenario_est.lambda2());
    let sq = (1.0 + eps0).sqrt();
    let den = sq * (l1 * (1.0 + eps0) - l2);
    let degenerate = (l1 * (1.0 + eps0) - l2).abs() <= DPA_DEGENERATE_TOL * l2;
    let beta_star = if degenerate {
        let lo = (eps0 + 1.0) / (eps0 + 2.0);
        golden_section_min(|b| dpa_objective(l1, l2, rho, eps0, b), lo, 1.0, 1e-13)
    } else {
        (sq * (eps0 * l1 - l2) + (l1 * l2).sqrt()) / den
    };
    Ok(DpaSolution {
        beta_star,
        predicted_cop: dpa_objective(l1, l2, rho, eps0, beta_star),
        fallback: degenerate,
    })
}

/// Golden-section search for a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Positive root `ρ₂⁺ = [ε₀λ1λ2 + λ2√(4Ω1λ1 + ε₀²λ1²)] / (2λ1)` of
/// `λ1ρ₂² - ε₀λ1λ2ρ₂ - Ω1λ2² = 0`.
pub fn dpc_rho2_plus(lambda1: f64, lambda2: f64, omega1: f64, eps0: f64) -> f64 {
    (eps0 * lambda1 * lambda2 + lambda2 * (4.0 * omega1 * lambda1 + eps0 * eps0 * lambda1 * lambda1).sqrt())
        / (2.0 * lambda1)
}

/// Correct-order uplink outage for the given SNR pair.
pub fn dpc_objective(lambda1: f64, lambda2: f64, rho1: f64, rho2: f64, eps0: f64) -> f64 {
    uplink_cop_rates(lambda1, lambda2, rho1, rho2, eps0, 0.0)
}

/// Uplink power control: the first-decoded user at full power and
/// `ρ₂ = min(Ω₂, ρ₂⁺)`.
pub fn dpc_optimal_power(scenario_est: &PairScenario, omega1: f64, omega2: f64, eps0: f64) -> Result<DpcSolution> {
    for (name, v) in [("omega1", omega1), ("omega2", omega2)] {
        if !(v > 0.0) || v.is_nan() {
            return Err(invalid(name, format!("{v} (must be positive)")));
        }
    }
    if !(eps0 >= 0.0) || !eps0.is_finite() {
        return Err(invalid("eps0", format!("{eps0} (must be nonnegative)")));
    }
    let (l1, l2) = (scenario_est.lambda1(), scenario_est.lambda2());
    let rho2_plus = dpc_rho2_plus(l1, l2, omega1, eps0);
    let rho2_star = omega2.min(rho2_plus);
    Ok(DpcSolution {
        rho1_star: omega1,
        rho2_star,
        rho2_plus,
        predicted_cop: dpc_objective(l1, l2, omega1, rho2_star, eps0),
    })
}

/// Fixed downlink allocation; the far user must get the larger share.
pub fn fixed_downlink_beta(rho: f64, beta: f64) -> Result<DownlinkPower> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(invalid(
            "beta",
            format!("{beta} (fixed allocation requires 0.5 < beta < 1)"),
        ));
    }
    DownlinkPower::new(rho, beta)
}

/// Fixed uplink power: both users at their caps.
pub fn fixed_uplink_power(omega1: f64, omega2: f64) -> Result<UplinkPower> {
    UplinkPower::new(omega1, omega2, omega1, omega2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkConfig;
    use proptest::prelude::*;

    fn est(l1: f64, l2: f64) -> PairScenario {
        // α = 1 makes λ_k equal to the distances
        let link = LinkConfig {
            alpha: 1.0,
            ..LinkConfig::default()
        };
        PairScenario::new(l1, l2, link).unwrap()
    }

    fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .map(|x| (x, f(x)))
            .fold(
                (f64::NAN, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            )
    }

    #[test]
    fn dpa_generic_matches_grid() {
        let (l1, l2, eps0, rho) = (18.0, 98.0, 1.0, 1e4);
        let sol = dpa_optimal_beta(&est(l1, l2), rho, eps0).unwrap();
        let lo = eps0 / (1.0 + eps0);
        let (b, c) = grid_argmin(|b| dpa_objective(l1, l2, rho, eps0, b), lo, 1.0, 100_000);
        assert!((sol.beta_star - b).abs() < 1e-4, "{} vs {b}", sol.beta_star);
        assert!(sol.predicted_cop <= c + 1e-12);
        // rationalized stationarity form
        let alt =
            ((l2 * (1.0 + eps0)).sqrt() + eps0 * l1.sqrt()) / (l1.sqrt() * (1.0 + eps0) + (l2 * (1.0 + eps0)).sqrt());
        assert!((sol.beta_star - alt).abs() < 1e-12);
    }

    #[test]
    fn dpa_small_target_limit() {
        let (l1, l2) = (18.0, 98.0);
        let eps0 = 1e-6;
        let sol = dpa_optimal_beta(&est(l1, l2), 1e3, eps0).unwrap();
        let limit = l2.sqrt() / (l1.sqrt() + l2.sqrt());
        assert!((sol.beta_star - limit).abs() < 1e-5);
        let lo = (eps0 + 1.0) / (eps0 + 2.0);
        let g = golden_section_min(|b| dpa_objective(l1, l2, 1e3, eps0, b), lo, 1.0, 1e-12);
        assert!((g - sol.beta_star).abs() < 1e-5);
    }

    #[test]
    fn dpa_degenerate_denominator_uses_fallback() {
        let eps0 = 1.0;
        let sol = dpa_optimal_beta(&est(10.0, 20.0), 1e3, eps0).unwrap();
        assert!(sol.fallback);
        let alt = ((20.0f64 * 2.0).sqrt() + 10f64.sqrt()) / (10f64.sqrt() * 2.0 + 40f64.sqrt());
        assert!((sol.beta_star - alt).abs() < 1e-6);
    }

    #[test]
    fn dpc_equal_rates_match_grid() {
        let (lam, eps0, omega1) = (5.0, 1.0, 100.0);
        let sol = dpc_optimal_power(&est(lam, lam), omega1, f64::INFINITY, eps0).unwrap();
        let closed = (lam + (400.0 * lam + lam * lam).sqrt()) / 2.0;
        assert!((sol.rho2_star - closed).abs() < 1e-12 * closed);
        let (_, best) = grid_argmin(
            |r2| dpc_objective(lam, lam, omega1, r2, eps0),
            1e-3,
            10.0 * closed,
            200_000,
        );
        assert!(sol.predicted_cop <= best * (1.0 + 1e-3));
    }

    #[test]
    fn dpc_cap_binds() {
        let sol = dpc_optimal_power(&est(5.0, 50.0), 100.0, 1e-6, 0.5).unwrap();
        assert_eq!(sol.rho2_star, 1e-6);
        assert_eq!(sol.rho1_star, 100.0);
    }

    #[test]
    fn fixed_schemes() {
        assert!(fixed_downlink_beta(10.0, 0.75).is_ok());
        assert!(fixed_downlink_beta(10.0, 0.4).is_err());
        let p = fixed_uplink_power(3.0, 7.0).unwrap();
        assert_eq!((p.rho1, p.rho2), (3.0, 7.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn dpa_root_classification(l1 in 1.0f64..1e3, ratio in 1.0f64..50.0, eps0 in 0.01f64..5.0) {
            let l2 = l1 * ratio;
            let sol = dpa_optimal_beta(&est(l1, l2), 1e4, eps0).unwrap();
            let lo = (eps0 + 1.0) / (eps0 + 2.0);
            prop_assert!(sol.beta_star > lo && sol.beta_star < 1.0);
            if let Some((plus, minus)) = dpa_roots(l1, l2, eps0) {
                let (a, _, _) = dpa_quadratic(l1, l2, eps0);
                if a.abs() > 1e-6 * l2 {
                    prop_assert!((plus - sol.beta_star).abs() < 1e-6);
                }
                if a > 0.0 {
                    prop_assert!(minus < lo);
                } else {
                    prop_assert!(minus > 1.0);
                }
            }
        }

        #[test]
        fn dpc_root_residual(l1 in 1.0f64..1e4, ratio in 1.0f64..100.0, omega1 in 1.0f64..1e9, eps0 in 0.01f64..5.0) {
            let l2 = l1 * ratio;
            let r = dpc_rho2_plus(l1, l2, omega1, eps0);
            let residual = l1 * r * r - eps0 * l1 * l2 * r - omega1 * l2 * l2;
            let scale = l1 * r * r + eps0 * l1 * l2 * r + omega1 * l2 * l2;
            prop_assert!(r > 0.0);
            prop_assert!(residual.abs() < 1e-9 * scale);
        }

        #[test]
        fn scale_consistency(d1 in 1.0f64..20.0, ratio in 1.01f64..5.0, s in 0.2f64..5.0, eps0 in 0.05f64..3.0) {
            let alpha = 3.0;
            let link = LinkConfig { alpha, ..LinkConfig::default() };
            let base = PairScenario::new(d1, d1 * ratio, link).unwrap();
            let scaled = PairScenario::new(d1 * s, d1 * ratio * s, link).unwrap();
            let f = s.powf(alpha);
            // β* depends only on λ2/λ1
            let b0 = dpa_optimal_beta(&base, 1e5, eps0).unwrap().beta_star;
            let b1 = dpa_optimal_beta(&scaled, 1e5, eps0).unwrap().beta_star;
            prop_assert!((b0 - b1).abs() < 1e-9);
            // ρ2⁺ scales by f when Ω1 scales by f
            let r0 = dpc_optimal_power(&base, 1e6, f64::INFINITY, eps0).unwrap().rho2_star;
            let r1 = dpc_optimal_power(&scaled, 1e6 * f, f64::INFINITY, eps0).unwrap().rho2_star;
            prop_assert!((r1 / (r0 * f) - 1.0).abs() < 1e-9);
        }
    }
}
