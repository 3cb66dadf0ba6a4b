//! Fixtures shared by the benchmarks.

use nalgebra::Vector2;
use pinoma_core::channel::substream;
use pinoma_core::mobility::{trajectory, MobilityKind, StateSpaceModel};
use pinoma_core::tracking::{default_sigma_w2, observe_trajectory};
use pinoma_core::{LinkConfig, PairScenario, UserGeometry};

/// U1(3,3), U2(7,7), α = 2 with observation noise `sigma_ob2`.
pub fn reference_pair(sigma_ob2: f64) -> PairScenario {
    let link = LinkConfig {
        sigma_ob2,
        ..LinkConfig::default()
    };
    let d = |x: f64| UserGeometry::new(x, x).distance();
    PairScenario::new(d(3.0), d(7.0), link).expect("valid pair")
}

/// Position reports of one Gauss-Markov trajectory and the matching filter
/// model.
pub fn gm_reports(horizon: usize, sigma_ob2: f64, seed: u64) -> (Vec<Vector2<f64>>, StateSpaceModel) {
    let kind = MobilityKind::GaussMarkov;
    let params = kind.default_params();
    let mut rng = substream(seed, 0);
    let truth = trajectory(&params, horizon, &mut rng).expect("valid parameters").states;
    let z = observe_trajectory(&truth, sigma_ob2, &mut rng);
    let model = StateSpaceModel::new(params.sample_interval, default_sigma_w2(kind), sigma_ob2).expect("valid model");
    (z, model)
}
