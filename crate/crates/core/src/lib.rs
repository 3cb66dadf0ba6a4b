//! Position-information NOMA: closed-form analysis of a two-user pair whose
//! decoding order comes from noisy position reports, the matching power
//! optimizations, Kalman tracking of mobile users and a seeded Monte Carlo
//! engine that checks all of it.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod mobility;
pub mod power;
pub mod simulate;
pub mod specfun;
#[cfg(test)]
pub(crate) mod testkit;
pub mod tracking;

pub use analysis::{DownlinkPower, PairScenario, PairUser, UplinkPower};
pub use channel::{LinkConfig, UserGeometry};
pub use error::{Error, Result};
pub use mobility::{MobilityKind, MobilityParams, StateSpaceModel, Trajectory};
pub use power::{DpaSolution, DpcSolution};
pub use simulate::{
    Access, DownlinkRule, MetricsReport, MobileExperiment, MobileReport, PositionScheme, ResultRow, StaticExperiment,
    StaticReport, UplinkRule,
};
pub use tracking::{FeedbackSchedule, TrackEstimate, TrackingRun};
