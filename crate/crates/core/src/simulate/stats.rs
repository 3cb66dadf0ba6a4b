//! Per-trial outcomes and their aggregation.

use serde::{Deserialize, Serialize};

/// How a pair was served on one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessScheme {
    Noma,
    Oma,
}

/// Result of one trial for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// Sum rate of the pair in bit/channel use.
    pub sum_rate: f64,
    /// Outage of the truly nearer user and of the truly farther user.
    pub outage: [bool; 2],
    /// The estimated distances put the pair in the wrong order.
    pub order_error: bool,
    /// The estimated-near user has the smaller instantaneous channel gain.
    pub gain_order_error: bool,
    pub scheme: AccessScheme,
}

impl TrialOutcome {
    /// Common outage: any user of the pair fails.
    pub fn common_outage(&self) -> bool {
        self.outage[0] || self.outage[1]
    }
}

/// Running sums over trial outcomes. Merging is exact for the counters and
/// order-dependent only in the floating-point rate sums, which callers merge
/// in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub n: u64,
    pub rate_sum: f64,
    pub rate_sq: f64,
    pub cop: u64,
    pub outage: [u64; 2],
    pub order_err: u64,
    pub gain_err: u64,
    pub noma: u64,
}

impl Tally {
    pub fn push(&mut self, o: &TrialOutcome) {
        self.n += 1;
        self.rate_sum += o.sum_rate;
        self.rate_sq += o.sum_rate * o.sum_rate;
        self.cop += o.common_outage() as u64;
        self.outage[0] += o.outage[0] as u64;
        self.outage[1] += o.outage[1] as u64;
        self.order_err += o.order_error as u64;
        self.gain_err += o.gain_order_error as u64;
        self.noma += (o.scheme == AccessScheme::Noma) as u64;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.n += other.n;
        self.rate_sum += other.rate_sum;
        self.rate_sq += other.rate_sq;
        self.cop += other.cop;
        self.outage[0] += other.outage[0];
        self.outage[1] += other.outage[1];
        self.order_err += other.order_err;
        self.gain_err += other.gain_err;
        self.noma += other.noma;
    }

    pub fn report(&self) -> MetricsReport {
        let n = self.n;
        let mean = if n > 0 { self.rate_sum / n as f64 } else { f64::NAN };
        let rate_stderr = if n > 1 {
            let var = (self.rate_sq - self.rate_sum * mean) / (n - 1) as f64;
            (var.max(0.0) / n as f64).sqrt()
        } else {
            f64::NAN
        };
        MetricsReport {
            trials: n,
            mean_sum_rate: mean,
            sum_rate_stderr: rate_stderr,
            cop: Proportion::new(self.cop, n),
            outage: [Proportion::new(self.outage[0], n), Proportion::new(self.outage[1], n)],
            order_error: Proportion::new(self.order_err, n),
            gain_order_error: Proportion::new(self.gain_err, n),
            noma_fraction: Proportion::new(self.noma, n),
        }
    }
}

/// Empirical probability with its binomial standard error `√(p(1-p)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub p: f64,
    pub stderr: f64,
}

impl Proportion {
    pub fn new(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Self {
                p: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let p = hits as f64 / n as f64;
        Self {
            p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    /// Confidence half-width `z·√(p(1-p)/n)`.
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.stderr
    }

    /// Whether `value` lies within `z` standard errors. A zero standard error
    /// (all or no hits) is widened to the one-hit resolution `1/n`.
    pub fn agrees_with(&self, value: f64, z: f64, n: u64) -> bool {
        let width = self.half_width(z).max(z / n as f64);
        (self.p - value).abs() <= width
    }
}

/// Aggregated Monte Carlo metrics of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trials: u64,
    pub mean_sum_rate: f64,
    pub sum_rate_stderr: f64,
    pub cop: Proportion,
    /// Outage of the truly nearer and the truly farther user.
    pub outage: [Proportion; 2],
    pub order_error: Proportion,
    pub gain_order_error: Proportion,
    /// Share of trials served by NOMA (below one only for hybrid access).
    pub noma_fraction: Proportion,
}
