//! Special functions behind the closed-form expressions.
//!
//! Everything here is a pure function of its arguments. The infinite series
//! (Poisson-weighted mixtures, the Gauss hypergeometric series at `z = 1/2`)
//! are truncated according to a [`SeriesTolerance`].
//!
//! Only the pieces the analysis needs are provided: `Ei` on the negative
//! axis, the regularized lower incomplete gamma function, `2F1(1, b; c; 1/2)`
//! for integer parameters, Poisson weights and the density of the squared
//! distance estimate under Gaussian position noise.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const FPMIN: f64 = 1e-300;
const EPS: f64 = 1e-16;
const CF_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("{op}: argument out of domain ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: series did not converge within {terms} terms")]
    NoConvergence { op: &'static str, terms: usize },
}

fn domain(op: &'static str, detail: impl Into<String>) -> SpecfunError {
    SpecfunError::Domain {
        op,
        detail: detail.into(),
    }
}

/// Truncation controls for the infinite sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTolerance {
    /// Relative size of the last retained term.
    pub rel_tol: f64,
    /// Hard cap on the number of series terms.
    pub max_terms: usize,
    /// Probability mass allowed outside a truncated Poisson window.
    pub tail_mass: f64,
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_terms: 10_000,
            tail_mass: 1e-12,
        }
    }
}

impl SeriesTolerance {
    pub fn validate(&self) -> Result<(), SpecfunError> {
        if !(self.rel_tol > 0.0) {
            return Err(domain("SeriesTolerance", "rel_tol must be positive"));
        }
        if self.max_terms == 0 {
            return Err(domain("SeriesTolerance", "max_terms must be at least 1"));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass < 1.0) {
            return Err(domain("SeriesTolerance", "tail_mass must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `e^t E1(t)` for `t > 0`.
///
/// This is the combination that appears in every rate expression
/// (`-e^{l/φ} Ei(-l/φ)`), and evaluating it directly avoids the overflow of
/// `e^t` and the underflow of `E1(t)` for large `t`.
pub fn exp_e1_scaled(t: f64) -> Result<f64, SpecfunError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain("exp_e1_scaled", format!("t = {t}, need t > 0")));
    }
    if t <= 1.0 {
        Ok(t.exp() * e1_series(t))
    } else {
        e1_continued_fraction(t)
    }
}

// Power series E1(t) = -γ - ln t - Σ (-t)^k / (k k!), used for t <= 1.
fn e1_series(t: f64) -> f64 {
    let mut sum = -t.ln() - EULER_GAMMA;
    let mut fact = 1.0;
    for k in 1..CF_MAX_ITER {
        let kf = k as f64;
        fact *= -t / kf;
        let del = -fact / kf;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum
}

// Modified Lentz evaluation of the continued fraction for e^t E1(t), t > 1.
fn e1_continued_fraction(t: f64) -> Result<f64, SpecfunError> {
    let mut b = t + 1.0;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..CF_MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(SpecfunError::NoConvergence {
        op: "exp_e1_scaled",
        terms: CF_MAX_ITER,
    })
}

/// Exponential integral `Ei(x)` for `x < 0`, i.e. `-E1(-x)`.
///
/// Values for `x < -700` underflow to zero.
pub fn exp_integral_ei(x: f64) -> Result<f64, SpecfunError> {
    if !(x < 0.0) || !x.is_finite() {
        return Err(domain("exp_integral_ei", format!("x = {x}, need x < 0")));
    }
    let t = -x;
    if t <= 1.0 {
        return Ok(-e1_series(t));
    }
    if t > 700.0 {
        return Ok(0.0);
    }
    Ok(-e1_continued_fraction(t)? * (-t).exp())
}

/// Small-argument form `Ei(x) ≈ ln(-x) + γ` for `x → 0⁻`.
pub fn exp_integral_ei_small(x: f64) -> Result<f64, SpecfunError> {
    if !(x < 0.0) {
        return Err(domain("exp_integral_ei_small", format!("x = {x}, need x < 0")));
    }
    Ok((-x).ln() + EULER_GAMMA)
}

/// Regularized lower incomplete gamma function `P(shape, x) = γ(shape, x) / Γ(shape)`.
pub fn regularized_gamma_p(shape: f64, x: f64) -> Result<f64, SpecfunError> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(domain("regularized_gamma_p", format!("shape = {shape}")));
    }
    if !(x >= 0.0) {
        return Err(domain("regularized_gamma_p", format!("x = {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let ln_prefactor = -x + shape * x.ln() - ln_gamma(shape);
    let p = if x < shape + 1.0 {
        let mut ap = shape;
        let mut del = 1.0 / shape;
        let mut sum = del;
        let mut converged = false;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SpecfunError::NoConvergence {
                op: "regularized_gamma_p",
                terms: CF_MAX_ITER,
            });
        }
        sum * ln_prefactor.exp()
    } else {
        // Continued fraction for the upper function Q.
        let mut b = x + 1.0 - shape;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut converged = false;
        for i in 1..CF_MAX_ITER {
            let fi = i as f64;
            let an = -fi * (fi - shape);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SpecfunError::NoConvergence {
                op: "regularized_gamma_p",
                terms: CF_MAX_ITER,
            });
        }
        1.0 - ln_prefactor.exp() * h
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Natural log of `2F1(1, b; c; 1/2)` for integer `b, c >= 1`.
///
/// The forward series `Σ (b)_n / (c)_n 2^{-n}` is summed with a running
/// rescale so that large `b` (terms grow until `n ≈ b - 2c`) cannot overflow.
pub fn ln_hyp2f1_at_half(b: u64, c: u64, tol: &SeriesTolerance) -> Result<f64, SpecfunError> {
    if b < 1 || c < 1 {
        return Err(domain("hyp2f1_at_half", format!("b = {b}, c = {c}")));
    }
    const RESCALE: f64 = 1e280;
    let (bf, cf) = (b as f64, c as f64);
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut ln_scale = 0.0_f64;
    // The terms cannot start shrinking before n > b - 2c, so the cap grows with b.
    let cap = tol.max_terms.saturating_add(8 * b as usize);
    for n in 0..cap {
        let nf = n as f64;
        let ratio = 0.5 * (bf + nf) / (cf + nf);
        term *= ratio;
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            ln_scale += RESCALE.ln();
        }
        let next = 0.5 * (bf + nf + 1.0) / (cf + nf + 1.0);
        if next < 1.0 {
            // Ratios decrease monotonically when b >= c and stay below 1/2 otherwise.
            let bound_ratio = if b >= c { next } else { 0.5 };
            let tail = term * bound_ratio / (1.0 - bound_ratio);
            if tail <= tol.rel_tol * 1e-4 * sum {
                return Ok(sum.ln() + ln_scale);
            }
        }
    }
    Err(SpecfunError::NoConvergence {
        op: "hyp2f1_at_half",
        terms: cap,
    })
}

/// `2F1(1, b; c; 1/2)` for integer `b, c >= 1`.
pub fn hyp2f1_at_half(b: u64, c: u64) -> Result<f64, SpecfunError> {
    ln_hyp2f1_at_half(b, c, &SeriesTolerance::default()).map(f64::exp)
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Probability that a `Gamma(i + 1, β)` variable exceeds an independent
/// `Gamma(j + 1, β)` variable (the rate cancels):
///
/// `I_{i,j} = 2^{-(a_i + a_j)} C(a_i + a_j - 1, a_j) 2F1(1, a_i + a_j; a_j + 1; 1/2)`
/// with `a_i = i + 1`.
pub fn gamma_order_prob(i: u64, j: u64) -> Result<f64, SpecfunError> {
    gamma_order_prob_with(i, j, &SeriesTolerance::default())
}

pub fn gamma_order_prob_with(i: u64, j: u64, tol: &SeriesTolerance) -> Result<f64, SpecfunError> {
    if i == j {
        return Ok(0.5);
    }
    if i > j {
        // evaluate the small side and complement so values near 1 keep their digits
        return Ok(1.0 - gamma_order_prob_with(j, i, tol)?);
    }
    let (ai, aj) = (i + 1, j + 1);
    let ln_value = -((ai + aj) as f64) * std::f64::consts::LN_2
        + ln_binomial(ai + aj - 1, aj)
        + ln_hyp2f1_at_half(ai + aj, aj + 1, tol)?;
    Ok(ln_value.exp().clamp(0.0, 1.0))
}

/// `Pr{Bin(n, 1/2) >= m}`, summed outward from `m` so the cost grows like
/// `√n` rather than `n`.
pub fn binomial_half_upper_tail(n: u64, m: u64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m > n {
        return 0.0;
    }
    let nf = n as f64;
    let ln_half_n = -nf * std::f64::consts::LN_2;
    if 2 * m >= n {
        let mut term = (ln_binomial(n, m) + ln_half_n).exp();
        let mut sum = 0.0;
        let mut k = m;
        loop {
            sum += term;
            if k == n || term <= f64::EPSILON * 1e-3 * sum {
                break;
            }
            term *= (nf - k as f64) / (k as f64 + 1.0);
            k += 1;
        }
        sum.min(1.0)
    } else {
        let mut k = m - 1;
        let mut term = (ln_binomial(n, k) + ln_half_n).exp();
        let mut sum = 0.0;
        loop {
            sum += term;
            if k == 0 || term <= f64::EPSILON * 1e-3 * sum {
                break;
            }
            term *= k as f64 / (nf - k as f64 + 1.0);
            k -= 1;
        }
        (1.0 - sum).max(0.0)
    }
}

/// `ln P_λ(k)` for the Poisson distribution; `λ = 0` is the point mass at 0.
pub fn ln_poisson_pmf(k: u64, lam: f64) -> Result<f64, SpecfunError> {
    if !(lam >= 0.0) || !lam.is_finite() {
        return Err(domain("poisson_pmf", format!("lam = {lam}")));
    }
    if lam == 0.0 {
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if k == 0 {
        return Ok(-lam);
    }
    let kf = k as f64;
    // saddle-point form: avoids cancelling terms of size k ln k at large rates
    Ok(-0.5 * (2.0 * std::f64::consts::PI * kf).ln() - stirling_error(kf) - deviance(kf, lam))
}

/// `ln Γ(n+1) - [(n+½) ln n - n + ½ ln 2π]` for `n >= 1`.
fn stirling_error(n: f64) -> f64 {
    if n < 16.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let n2 = 1.0 / (n * n);
    (1.0 / 12.0 - n2 * (1.0 / 360.0 - n2 * (1.0 / 1260.0 - n2 * (1.0 / 1680.0 - n2 / 1188.0)))) / n
}

/// `k ln(k/λ) + λ - k`, computed without cancellation when `k ≈ λ`.
fn deviance(k: f64, lam: f64) -> f64 {
    if (k - lam).abs() < 0.1 * (k + lam) {
        let v = (k - lam) / (k + lam);
        let mut s = (k - lam) * v;
        let mut ej = 2.0 * k * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        k * (k / lam).ln() + lam - k
    }
}

/// Poisson PMF `e^{-λ} λ^k / k!`, evaluated in log space.
pub fn poisson_pmf(k: u64, lam: f64) -> Result<f64, SpecfunError> {
    ln_poisson_pmf(k, lam).map(f64::exp)
}

/// Index window `[lo, hi]` of a Poisson distribution and its PMF values.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWindow {
    pub lo: u64,
    pub hi: u64,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    /// Smallest contiguous window around the mode holding at least
    /// `1 - tail_mass` of the probability, grown greedily towards the larger
    /// neighbouring weight.
    pub fn new(lam: f64, tail_mass: f64) -> Result<Self, SpecfunError> {
        if !(tail_mass > 0.0 && tail_mass < 1.0) {
            return Err(domain("PoissonWindow", format!("tail_mass = {tail_mass}")));
        }
        let mode = lam.floor() as u64;
        let p_mode = poisson_pmf(mode, lam)?;
        let mut lo = mode;
        let mut hi = mode;
        let mut p_lo = p_mode;
        let mut p_hi = p_mode;
        let mut mass = p_mode;
        let mut below = Vec::new();
        let mut above = Vec::new();
        while mass < 1.0 - tail_mass {
            let next_lo = if lo > 0 { p_lo * lo as f64 / lam } else { 0.0 };
            let next_hi = p_hi * lam / (hi + 1) as f64;
            if next_lo <= 0.0 && next_hi <= 0.0 {
                break;
            }
            if next_lo >= next_hi {
                lo -= 1;
                p_lo = next_lo;
                mass += next_lo;
                below.push(next_lo);
            } else {
                hi += 1;
                p_hi = next_hi;
                mass += next_hi;
                above.push(next_hi);
            }
        }
        below.reverse();
        below.push(p_mode);
        below.extend(above);
        Ok(Self { lo, hi, weights: below })
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (self.lo..=self.hi).zip(self.weights.iter().copied())
    }
}

fn check_chisq_args(op: &'static str, x: f64, noncentrality: f64, sigma2: f64) -> Result<(), SpecfunError> {
    if !(x >= 0.0) {
        return Err(domain(op, format!("x = {x}")));
    }
    if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
        return Err(domain(op, format!("noncentrality = {noncentrality}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(domain(op, format!("sigma2 = {sigma2}")));
    }
    Ok(())
}

/// Density of `X̂² + Ŷ²` with `X̂ ~ N(x, σ²)`, `Ŷ ~ N(y, σ²)` and
/// `x² + y² = noncentrality`.
///
/// Evaluated as the Poisson-weighted Gamma mixture
/// `Σ_i P_{λβ}(i) f_{Gamma(i+1, β)}(x)` with `β = 1 / (2σ²)`. The summation
/// starts at the dominant index `≈ β√(λx)` and walks outwards.
pub fn noncentral_chisq2_pdf(x: f64, noncentrality: f64, sigma2: f64) -> Result<f64, SpecfunError> {
    check_chisq_args("noncentral_chisq2_pdf", x, noncentrality, sigma2)?;
    let rate = 0.5 / sigma2;
    let base = -noncentrality * rate - rate * x + rate.ln();
    if x == 0.0 || noncentrality == 0.0 {
        return Ok(base.exp());
    }
    // term_i = exp(base) c^i / (i!)^2 with c = β² λ x
    let c = rate * rate * noncentrality * x;
    let ln_c = c.ln();
    let peak = c.sqrt().floor();
    let ln_term = |i: f64| base + i * ln_c - 2.0 * ln_gamma(i + 1.0);
    let t_peak = ln_term(peak).exp();
    let mut sum = t_peak;
    let mut t = t_peak;
    let mut i = peak;
    while i > 0.0 {
        t *= i * i / c;
        i -= 1.0;
        sum += t;
        if t <= EPS * sum {
            break;
        }
    }
    let mut t = t_peak;
    let mut i = peak;
    loop {
        i += 1.0;
        t *= c / (i * i);
        sum += t;
        if t <= EPS * sum {
            break;
        }
    }
    Ok(sum)
}

/// CDF companion of [`noncentral_chisq2_pdf`]: `Σ_i P_{λβ}(i) P(i + 1, βx)`.
pub fn noncentral_chisq2_cdf(
    x: f64,
    noncentrality: f64,
    sigma2: f64,
    tol: &SeriesTolerance,
) -> Result<f64, SpecfunError> {
    check_chisq_args("noncentral_chisq2_cdf", x, noncentrality, sigma2)?;
    let rate = 0.5 / sigma2;
    let window = PoissonWindow::new(noncentrality * rate, tol.tail_mass)?;
    let mut acc = 0.0;
    for (i, w) in window.iter() {
        acc += w * regularized_gamma_p((i + 1) as f64, rate * x)?;
    }
    Ok(acc.clamp(0.0, 1.0))
}
