//! Subcommand bodies. Each returns the bytes it would write, so callers and
//! tests can compare outputs directly.

use pinoma_core::analysis::{
    decoding_error_prob_fading_free, decoding_error_prob_rayleigh_from, downlink_avg_sum_rate_with_pe, downlink_cop,
    downlink_sum_rate_high_snr_with_pe, oma_avg_sum_rate, oma_cop, uplink_avg_sum_rate, uplink_cop, uplink_cop_floor,
    uplink_sum_rate_high_snr, DownlinkPower, UplinkPower,
};
use pinoma_core::mobility::{write_trajectories_csv, MobilityKind, Trajectory};
use pinoma_core::power::{dpa_optimal_beta, dpc_optimal_power};
use pinoma_core::simulate::{
    analytic_metrics, hybrid_uplink_select, run_mobile_experiment, run_static_experiment, write_results_csv, Access,
    MetricsReport, MobileReport, ResultRow, StaticReport,
};
use pinoma_core::tracking::{default_sigma_w2, write_estimates_csv, FeedbackSchedule, TrackingRun};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Serializes records as CSV with a header row.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(pinoma_core::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_results_csv(&mut buf, rows)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub quantity: &'static str,
    pub value: f64,
}

/// Closed-form values for the static pair of the configuration.
pub fn analyze(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, CliError> {
    let s = cfg.scenario()?;
    let (rho, rho2) = (cfg.rho(), cfg.rho2());
    let eps0 = s.target_snr();
    let pe1 = decoding_error_prob_fading_free(&s)?;
    let down = DownlinkPower::new(rho, cfg.link.beta)?;
    let up = UplinkPower::at(rho, rho2)?;
    let dpa = dpa_optimal_beta(&s, rho, eps0)?;
    let dpa_power = dpa.power(rho)?;
    let dpc = dpc_optimal_power(&s, rho, rho2, eps0)?;
    let dpc_power = dpc.power(rho, rho2)?;
    let hybrid = hybrid_uplink_select(&s, dpc_power, rho, pe1)?;
    let q = |quantity, value| Quantity { quantity, value };
    Ok(vec![
        q("d1", s.d1()),
        q("d2", s.d2()),
        q("rho", rho),
        q("pe1", pe1),
        q("pe2", decoding_error_prob_rayleigh_from(pe1, s.path_loss_ratio())),
        q("downlink_sum_rate", downlink_avg_sum_rate_with_pe(&s, down, pe1)?),
        q(
            "downlink_sum_rate_high_snr",
            downlink_sum_rate_high_snr_with_pe(&s, down, pe1),
        ),
        q("downlink_cop", downlink_cop(&s, down, pe1)),
        q("dpa_beta", dpa.beta_star),
        q("dpa_cop", downlink_cop(&s, dpa_power, pe1)),
        q("uplink_sum_rate", uplink_avg_sum_rate(&s, up)?),
        q("uplink_sum_rate_high_snr", uplink_sum_rate_high_snr(&s, up)?),
        q("uplink_cop", uplink_cop(&s, up, pe1)),
        q("uplink_cop_floor", uplink_cop_floor(&s, up, pe1)),
        q("dpc_rho1", dpc.rho1_star),
        q("dpc_rho2", dpc.rho2_star),
        q("dpc_cop", uplink_cop(&s, dpc_power, pe1)),
        q("oma_cop", oma_cop(&s, rho)?),
        q("oma_sum_rate", oma_avg_sum_rate(&s, rho)?),
        q("hybrid_cop", hybrid.predicted_cop),
    ])
}

/// Location of one result in a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint<'a> {
    pub var: &'a str,
    pub value: f64,
    pub seed: u64,
}

fn row(at: SweepPoint<'_>, metric: String, analytic: f64, empirical: f64, stderr: f64, trials: u64) -> ResultRow {
    ResultRow {
        sweep_var: at.var.to_string(),
        value: at.value,
        metric,
        analytic_value: analytic,
        empirical_value: empirical,
        stderr,
        trials,
        seed: at.seed,
    }
}

/// Rows for one arm: sum rate, common outage, per-user outage and, for
/// hybrid access, the NOMA share.
pub fn metric_rows(
    at: SweepPoint<'_>,
    label: &str,
    m: &MetricsReport,
    analytic_rate: Option<f64>,
    analytic_cop: Option<f64>,
    hybrid: bool,
) -> Vec<ResultRow> {
    let nan = f64::NAN;
    let name = |metric: &str| {
        if label.is_empty() {
            metric.to_string()
        } else {
            format!("{label}:{metric}")
        }
    };
    let mut rows = vec![
        row(
            at,
            name("sum_rate"),
            analytic_rate.unwrap_or(nan),
            m.mean_sum_rate,
            m.sum_rate_stderr,
            m.trials,
        ),
        row(
            at,
            name("cop"),
            analytic_cop.unwrap_or(nan),
            m.cop.p,
            m.cop.stderr,
            m.trials,
        ),
        row(at, name("outage_u1"), nan, m.outage[0].p, m.outage[0].stderr, m.trials),
        row(at, name("outage_u2"), nan, m.outage[1].p, m.outage[1].stderr, m.trials),
    ];
    if hybrid {
        rows.push(row(
            at,
            name("noma_fraction"),
            nan,
            m.noma_fraction.p,
            m.noma_fraction.stderr,
            m.trials,
        ));
    }
    rows
}

/// Rows of a static run, including the ordering statistics.
pub fn static_rows(
    cfg: &ExperimentConfig,
    at: SweepPoint<'_>,
    arms: &[(String, Access)],
    report: &StaticReport,
) -> Result<Vec<ResultRow>, CliError> {
    let s = cfg.scenario()?;
    let pe1 = decoding_error_prob_fading_free(&s)?;
    let pe2 = decoding_error_prob_rayleigh_from(pe1, s.path_loss_ratio());
    let o = &report.ordering;
    let mut rows = vec![
        row(
            at,
            "order_error".into(),
            pe1,
            o.order_error.p,
            o.order_error.stderr,
            o.trials,
        ),
        row(
            at,
            "gain_order_error".into(),
            pe2,
            o.gain_order_error.p,
            o.gain_order_error.stderr,
            o.trials,
        ),
    ];
    for ((label, access), m) in arms.iter().zip(&report.arms) {
        let a = analytic_metrics(&s, access, pe1)?;
        let hybrid = matches!(access, Access::Hybrid { .. });
        rows.extend(metric_rows(at, label, m, a.sum_rate, a.cop, hybrid));
    }
    Ok(rows)
}

/// Rows of a mobile run, labelled `scheme` or `label/scheme`.
pub fn mobile_rows(at: SweepPoint<'_>, arms: &[(String, Access)], report: &MobileReport) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in &report.rows {
        let (label, access) = &arms[r.arm];
        let scheme = r.scheme.name();
        let full = if label.is_empty() {
            scheme.to_string()
        } else {
            format!("{label}/{scheme}")
        };
        let hybrid = matches!(access, Access::Hybrid { .. });
        rows.extend(metric_rows(at, &full, &r.metrics, None, None, hybrid));
    }
    rows
}

/// One simulation of the configured access arm.
pub fn simulate_rows(cfg: &ExperimentConfig, at: SweepPoint<'_>) -> Result<Vec<ResultRow>, CliError> {
    let arms = vec![(String::new(), cfg.access()?)];
    let accesses: Vec<Access> = arms.iter().map(|a| a.1).collect();
    match cfg.mobility_kind()? {
        Some(kind) => {
            let report = run_mobile_experiment(&cfg.mobile_experiment(kind, accesses)?)?;
            Ok(mobile_rows(at, &arms, &report))
        }
        None => {
            let report = run_static_experiment(&cfg.static_experiment(accesses)?)?;
            static_rows(cfg, at, &arms, &report)
        }
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let seed = cfg.seed()?;
    simulate_rows(
        cfg,
        SweepPoint {
            var: "none",
            value: f64::NAN,
            seed,
        },
    )
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepVar {
    PowerDbm,
    SigmaOb,
    SigmaOb2,
    Beta,
    TargetRate,
    Alpha,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            Self::PowerDbm => "power_dbm",
            Self::SigmaOb => "sigma_ob",
            Self::SigmaOb2 => "sigma_ob2",
            Self::Beta => "beta",
            Self::TargetRate => "target_rate",
            Self::Alpha => "alpha",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, v: f64) {
        match self {
            Self::PowerDbm => cfg.link.power_dbm = v,
            Self::SigmaOb => cfg.link.sigma_ob2 = v * v,
            Self::SigmaOb2 => cfg.link.sigma_ob2 = v,
            Self::Beta => cfg.link.beta = v,
            Self::TargetRate => cfg.link.target_rate = v,
            Self::Alpha => cfg.link.alpha = v,
        }
    }
}

/// `points` evenly spaced values from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![from],
        n => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One simulation per value, all with the same seed.
pub fn sweep(cfg: &ExperimentConfig, var: SweepVar, values: &[f64]) -> Result<Vec<ResultRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let seed = cfg.seed()?;
    let mut rows = Vec::new();
    for &v in values {
        let mut point = cfg.clone();
        var.apply(&mut point, v);
        rows.extend(simulate_rows(
            &point,
            SweepPoint {
                var: var.name(),
                value: v,
                seed,
            },
        )?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSummary {
    pub mobility: &'static str,
    pub sigma_ob2: f64,
    pub sigma_w2: f64,
    pub feedback_rate: f64,
    pub runs: usize,
    pub raw_rmse: f64,
    pub filtered_rmse: f64,
}

/// Settings of the `track` subcommand.
#[derive(Debug, Clone)]
pub struct TrackSpec {
    pub kind: MobilityKind,
    pub sigma_ob2: f64,
    pub sigma_w2: Option<f64>,
    pub runs: usize,
    pub horizon: usize,
    pub feedback_rate: f64,
    pub seed: u64,
}

impl TrackSpec {
    pub fn run(&self) -> Result<TrackingRun, CliError> {
        let mut run = TrackingRun::new(self.kind, self.sigma_ob2, self.runs, self.seed);
        run.sigma_w2 = self.sigma_w2.unwrap_or_else(|| default_sigma_w2(self.kind));
        run.horizon = self.horizon;
        run.schedule = FeedbackSchedule::from_rate(self.feedback_rate)?;
        Ok(run)
    }
}

/// Tracking accuracy summary plus, optionally, the estimates and the true
/// trajectory of the first run.
pub fn track(spec: &TrackSpec) -> Result<(TrackSummary, Vec<u8>, Vec<u8>), CliError> {
    let run = spec.run()?;
    let score = run.score()?;
    let (truth, _, est) = run.realize(0)?;
    let mut estimates = Vec::new();
    write_estimates_csv(&mut estimates, &[est])?;
    let mut trajectories = Vec::new();
    let tr = Trajectory {
        sample_interval: run.mobility.sample_interval,
        states: truth,
    };
    write_trajectories_csv(&mut trajectories, &[tr])?;
    Ok((
        TrackSummary {
            mobility: spec.kind.name(),
            sigma_ob2: spec.sigma_ob2,
            sigma_w2: run.sigma_w2,
            feedback_rate: spec.feedback_rate,
            runs: score.runs,
            raw_rmse: score.raw_rmse,
            filtered_rmse: score.filtered_rmse,
        },
        estimates,
        trajectories,
    ))
}
