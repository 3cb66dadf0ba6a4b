//! Experiment configuration: a TOML file with three tables, `[scenario]`,
//! `[link]` and `[run]`, every key optional. Command-line flags override the
//! file.
//!
//! ```toml
//! [scenario]
//! u1 = [3.0, 3.0]          # static positions in meters
//! u2 = [7.0, 7.0]
//! mobility = "gm"          # rw | rwp | gm; switches to the mobile scenario
//! users = 2
//!
//! [link]
//! direction = "downlink"   # downlink | uplink | oma | hybrid
//! allocation = "fixed"     # fixed | dpa | dpc
//! power_dbm = 10.0
//! beta = 0.8
//! target_rate = 0.5
//! sigma_ob2 = 9.0
//!
//! [run]
//! trials = 1000000
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pinoma_core::analysis::PairScenario;
use pinoma_core::channel::{snr_of, LinkConfig, UserGeometry};
use pinoma_core::mobility::{MobilityKind, DEFAULT_HORIZON, DEFAULT_SAMPLE_INTERVAL};
use pinoma_core::simulate::{
    Access, DownlinkRule, MobileExperiment, PositionScheme, SignalTargets, StaticExperiment, UplinkRule,
};
use pinoma_core::tracking::{default_sigma_w2, FeedbackSchedule, DEFAULT_WARMUP};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Downlink,
    Uplink,
    Oma,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    Fixed,
    Dpa,
    Dpc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub u1: [f64; 2],
    pub u2: [f64; 2],
    /// Mobility model of the mobile scenario; absent for fixed positions.
    pub mobility: Option<String>,
    pub users: usize,
    pub horizon: usize,
    pub warmup: usize,
    pub sample_interval: f64,
    /// Filter process noise; the calibrated default of the model when absent.
    pub sigma_w2: Option<f64>,
    /// Share of slots with a position report for the prediction scheme.
    pub feedback_rate: f64,
    pub schemes: Vec<PositionScheme>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            u1: [3.0, 3.0],
            u2: [7.0, 7.0],
            mobility: None,
            users: 2,
            horizon: DEFAULT_HORIZON,
            warmup: DEFAULT_WARMUP,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            sigma_w2: None,
            feedback_rate: 0.25,
            schemes: PositionScheme::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub direction: Direction,
    pub allocation: Allocation,
    pub alpha: f64,
    pub noise_dbm: f64,
    /// Downlink transmit power, or the power (cap) of the first-decoded
    /// uplink user.
    pub power_dbm: f64,
    /// Power (cap) of the second-decoded uplink user; `power_dbm` when absent.
    pub power2_dbm: Option<f64>,
    pub beta: f64,
    pub target_rate: f64,
    /// Per-signal downlink targets; both or neither.
    pub far_rate: Option<f64>,
    pub near_rate: Option<f64>,
    pub sigma_ob2: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            direction: Direction::Downlink,
            allocation: Allocation::Fixed,
            alpha: 2.0,
            noise_dbm: -50.0,
            power_dbm: 0.0,
            power2_dbm: None,
            beta: 0.8,
            target_rate: 0.5,
            far_rate: None,
            near_rate: None,
            sigma_ob2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            seed: None,
            threads: None,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub link: LinkSection,
    pub run: RunConfig,
}

/// Flags shared by the experiment subcommands; each one overrides the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_point)]
    pub u1: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_point)]
    pub u2: Option<[f64; 2]>,
    /// rw, rwp or gm: run the mobile scenario.
    #[arg(long)]
    pub mobility: Option<String>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long, value_enum)]
    pub direction: Option<Direction>,
    #[arg(long, value_enum)]
    pub allocation: Option<Allocation>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub noise_dbm: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub power2_dbm: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub target_rate: Option<f64>,
    #[arg(long)]
    pub sigma_ob2: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("`{s}`: expected x,y"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([parse(x)?, parse(y)?])
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let s = &mut cfg.scenario;
        let l = &mut cfg.link;
        let r = &mut cfg.run;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(s.u1, self.u1);
        set!(s.u2, self.u2);
        set!(s.users, self.users);
        set!(l.direction, self.direction);
        set!(l.allocation, self.allocation);
        set!(l.alpha, self.alpha);
        set!(l.noise_dbm, self.noise_dbm);
        set!(l.power_dbm, self.power_dbm);
        set!(l.beta, self.beta);
        set!(l.target_rate, self.target_rate);
        set!(l.sigma_ob2, self.sigma_ob2);
        set!(r.trials, self.trials);
        if self.mobility.is_some() {
            s.mobility = self.mobility.clone();
        }
        if self.power2_dbm.is_some() {
            l.power2_dbm = self.power2_dbm;
        }
        if self.seed.is_some() {
            r.seed = self.seed;
        }
        if self.threads.is_some() {
            r.threads = self.threads;
        }
        if self.output.is_some() {
            r.output = self.output.clone();
        }
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.run
            .seed
            .ok_or_else(|| CliError::Config("`seed` is required (flag --seed or [run] seed)".into()))
    }

    pub fn core_link(&self) -> LinkConfig {
        LinkConfig {
            alpha: self.link.alpha,
            noise_power_dbm: self.link.noise_dbm,
            sigma_ob2: self.link.sigma_ob2,
            target_rate_bpcu: self.link.target_rate,
        }
    }

    pub fn rho(&self) -> f64 {
        snr_of(self.link.power_dbm, self.link.noise_dbm)
    }

    pub fn rho2(&self) -> f64 {
        snr_of(self.link.power2_dbm.unwrap_or(self.link.power_dbm), self.link.noise_dbm)
    }

    pub fn mobility_kind(&self) -> Result<Option<MobilityKind>, CliError> {
        self.scenario
            .mobility
            .as_deref()
            .map(|m| m.parse::<MobilityKind>().map_err(CliError::Config))
            .transpose()
    }

    pub fn users(&self) -> [UserGeometry; 2] {
        let [a, b] = [self.scenario.u1, self.scenario.u2];
        [UserGeometry::new(a[0], a[1]), UserGeometry::new(b[0], b[1])]
    }

    /// Static pair at its true distances.
    pub fn scenario(&self) -> Result<PairScenario, CliError> {
        let [a, b] = self.users();
        Ok(PairScenario::ordered(a.distance(), b.distance(), self.core_link())?.0)
    }

    /// The access arm described by the `[link]` table.
    pub fn access(&self) -> Result<Access, CliError> {
        let l = &self.link;
        let (rho, rho2) = (self.rho(), self.rho2());
        let uplink_rule = || match l.allocation {
            Allocation::Fixed => Ok(UplinkRule::Fixed { rho1: rho, rho2 }),
            Allocation::Dpc => Ok(UplinkRule::Dpc {
                omega1: rho,
                omega2: rho2,
            }),
            Allocation::Dpa => Err(CliError::Config("allocation `dpa` applies to the downlink only".into())),
        };
        let targets = match (l.far_rate, l.near_rate) {
            (Some(far_rate), Some(near_rate)) => Some(SignalTargets { far_rate, near_rate }),
            (None, None) => None,
            _ => {
                return Err(CliError::Config(
                    "`far_rate` and `near_rate` must be given together".into(),
                ))
            }
        };
        let access = match l.direction {
            Direction::Downlink => Access::Downlink {
                rho,
                rule: match l.allocation {
                    Allocation::Fixed => DownlinkRule::Fixed { beta: l.beta },
                    Allocation::Dpa => DownlinkRule::Dpa,
                    Allocation::Dpc => {
                        return Err(CliError::Config("allocation `dpc` applies to the uplink only".into()))
                    }
                },
                targets,
            },
            Direction::Uplink => Access::Uplink { rule: uplink_rule()? },
            Direction::Oma => Access::Oma { rho },
            Direction::Hybrid => Access::Hybrid {
                rule: uplink_rule()?,
                rho_oma: rho,
            },
        };
        access.validate()?;
        Ok(access)
    }

    pub fn static_experiment(&self, arms: Vec<Access>) -> Result<StaticExperiment, CliError> {
        let exp = StaticExperiment {
            users: self.users(),
            link: self.core_link(),
            arms,
            trials: self.run.trials,
            seed: self.seed()?,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn mobile_experiment(&self, kind: MobilityKind, arms: Vec<Access>) -> Result<MobileExperiment, CliError> {
        let s = &self.scenario;
        let mut mobility = kind.default_params();
        mobility.sample_interval = s.sample_interval;
        let exp = MobileExperiment {
            mobility,
            users: s.users,
            horizon: s.horizon,
            warmup: s.warmup,
            sigma_w2: s.sigma_w2.unwrap_or_else(|| default_sigma_w2(kind)),
            prediction: FeedbackSchedule::from_rate(s.feedback_rate)?,
            link: self.core_link(),
            schemes: s.schemes.clone(),
            arms,
            trials: self.run.trials,
            seed: self.seed()?,
            per_slot: false,
        };
        exp.validate()?;
        Ok(exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_simulation_setup() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.link.noise_dbm, -50.0);
        assert_eq!(cfg.run.trials, 1_000_000);
        assert_eq!(cfg.scenario.horizon, 300);
        assert_eq!(cfg.scenario.sample_interval, 0.2);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.seed = Some(9);
        cfg.scenario.mobility = Some("gm".into());
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml("[link]\nbeta = 0.7\n").unwrap();
        assert_eq!(partial.link.beta, 0.7);
        assert_eq!(partial.link.alpha, 2.0);
        assert!(ExperimentConfig::from_toml("[link]\nbogus = 1\n").is_err());
    }

    #[test]
    fn access_rules() {
        let mut cfg = ExperimentConfig::default();
        cfg.link.beta = 1.5;
        assert!(cfg.access().is_err());
        cfg.link.beta = 0.8;
        cfg.link.allocation = Allocation::Dpa;
        assert!(matches!(
            cfg.access().unwrap(),
            Access::Downlink {
                rule: DownlinkRule::Dpa,
                ..
            }
        ));
        cfg.link.direction = Direction::Uplink;
        cfg.link.allocation = Allocation::Dpa;
        assert!(cfg.access().is_err());
        cfg.link.allocation = Allocation::Dpc;
        cfg.link.power2_dbm = Some(20.0);
        match cfg.access().unwrap() {
            Access::Uplink {
                rule: UplinkRule::Dpc { omega1, omega2 },
            } => {
                assert!((omega1 - 1e5).abs() < 1e-6);
                assert!((omega2 - 1e7).abs() < 1e-3);
            }
            other => panic!("{other:?}"),
        }
        assert!(cfg.seed().is_err());
    }

    #[test]
    fn point_parser() {
        assert_eq!(parse_point("3,-4.5").unwrap(), [3.0, -4.5]);
        assert!(parse_point("3").is_err());
    }
}
