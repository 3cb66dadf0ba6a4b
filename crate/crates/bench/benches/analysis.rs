use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use pinoma_bench::reference_pair;
use pinoma_core::analysis::{decoding_error_prob_fading_free, downlink_avg_sum_rate_with_pe, downlink_cop};
use pinoma_core::power::{dpa_optimal_beta, dpc_optimal_power};
use pinoma_core::specfun::exp_integral_ei;
use pinoma_core::DownlinkPower;

pub fn bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("order_error");
    // the series cost grows with d²/σ_ob²
    for sigma in [1.0, 3.0, 0.3] {
        let s = reference_pair(sigma * sigma);
        g.bench_with_input(BenchmarkId::from_parameter(sigma), &s, |b, s| {
            b.iter(|| decoding_error_prob_fading_free(black_box(s)).unwrap())
        });
    }
    g.finish();

    c.bench_function("exp_integral_ei", |b| {
        b.iter(|| {
            [-1e-3, -0.5, -3.0, -40.0, -700.0]
                .iter()
                .map(|&x| exp_integral_ei(black_box(x)).unwrap())
                .sum::<f64>()
        })
    });

    let s = reference_pair(9.0);
    let pe1 = decoding_error_prob_fading_free(&s).unwrap();
    let power = DownlinkPower::new(1e4, 0.8).unwrap();
    c.bench_function("downlink_sum_rate", |b| {
        b.iter(|| downlink_avg_sum_rate_with_pe(black_box(&s), power, pe1).unwrap())
    });
    c.bench_function("downlink_cop", |b| b.iter(|| downlink_cop(black_box(&s), power, pe1)));
    let eps0 = s.target_snr();
    c.bench_function("dpa_optimal_beta", |b| {
        b.iter(|| dpa_optimal_beta(black_box(&s), 1e4, eps0).unwrap())
    });
    c.bench_function("dpc_optimal_power", |b| {
        b.iter(|| dpc_optimal_power(black_box(&s), 1e5, 1e7, eps0).unwrap())
    });
}
