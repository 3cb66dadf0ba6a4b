mod analysis;
mod simulate;

use criterion::{criterion_group, criterion_main};

criterion_group!(benches, analysis::bench, simulate::bench, tracking::bench);
criterion_main!(benches);
