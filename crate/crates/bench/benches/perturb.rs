use capscale::perturb::{inject, measure_snr, Dtype, WeightVector};
use capscale::wvec;
use criterion::{criterion_group, criterion_main, Criterion, Throughput};

fn weights(count: usize) -> WeightVector {
    let values = (0..count).map(|i| ((i as f64) * 0.618).sin() * 0.05).collect();
    WeightVector::new(values, Dtype::F32).unwrap()
}

fn perturbation(c: &mut Criterion) {
    let count = 1 << 20;
    let w = weights(count);
    let mut group = c.benchmark_group("perturb");
    group.throughput(Throughput::Elements(count as u64));
    group.bench_function("inject/f32/1M", |b| b.iter(|| inject(&w, 20.0, 7)));

    let (noisy, _) = inject(&w, 20.0, 7).unwrap();
    group.bench_function("measure_snr/1M", |b| b.iter(|| measure_snr(&w, &noisy)));

    let bytes = wvec::encode(&noisy);
    group.bench_function("wvec/encode/1M", |b| b.iter(|| wvec::encode(&noisy)));
    group.bench_function("wvec/decode/1M", |b| b.iter(|| wvec::decode(&bytes)));
    group.finish();
}

criterion_group!(benches, perturbation);
criterion_main!(benches);
