use criterion::{Criterion, Throughput};
use pinoma_core::channel::snr_of;
use pinoma_core::simulate::run_static_experiment;
use pinoma_core::{Access, DownlinkRule, LinkConfig, StaticExperiment, UplinkRule, UserGeometry};

const TRIALS: u64 = 100_000;

fn experiment(arms: Vec<Access>) -> StaticExperiment {
    StaticExperiment {
        users: [UserGeometry::new(3.0, 3.0), UserGeometry::new(7.0, 7.0)],
        link: LinkConfig {
            sigma_ob2: 9.0,
            ..LinkConfig::default()
        },
        arms,
        trials: TRIALS,
        seed: 1,
    }
}

pub fn bench(c: &mut Criterion) {
    let rho = snr_of(0.0, -50.0);
    let mut g = c.benchmark_group("static_trials");
    g.throughput(Throughput::Elements(TRIALS));
    g.sample_size(10);
    let cases = [
        ("ordering_only", vec![]),
        (
            "downlink_fixed",
            vec![Access::Downlink {
                rho,
                rule: DownlinkRule::Fixed { beta: 0.8 },
                targets: None,
            }],
        ),
        (
            "downlink_dpa",
            vec![Access::Downlink {
                rho,
                rule: DownlinkRule::Dpa,
                targets: None,
            }],
        ),
        (
            "uplink_dpc",
            vec![Access::Uplink {
                rule: UplinkRule::Dpc {
                    omega1: rho,
                    omega2: rho,
                },
            }],
        ),
        (
            "hybrid",
            vec![Access::Hybrid {
                rule: UplinkRule::Dpc {
                    omega1: rho,
                    omega2: rho,
                },
                rho_oma: rho,
            }],
        ),
    ];
    for (name, arms) in cases {
        let exp = experiment(arms);
        g.bench_function(name, |b| b.iter(|| run_static_experiment(&exp).unwrap()));
    }
    g.finish();
}
