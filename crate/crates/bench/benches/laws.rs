use capscale::landscape::Spacing;
use capscale::laws::jacobian_fd;
use capscale::{grid_eval, predict_loss, GridSpec, LawId, LawSpec, Normalization};
use capscale_bench::{shannon_params, synthetic_set};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn evaluation(c: &mut Criterion) {
    let spec = LawSpec::get(LawId::ShannonFull);
    let params = shannon_params();
    c.bench_function("predict_loss/shannon_full", |b| {
        b.iter(|| predict_loss(&spec, &params, black_box(2.5), black_box(40.0), None))
    });

    let set = synthetic_set(LawId::ShannonFull, &params, 6, 8);
    c.bench_function("jacobian_fd/shannon_full/48", |b| b.iter(|| jacobian_fd(&spec, &params, &set, 1e-6)));

    let grid = GridSpec {
        n_min: 1e-2,
        n_max: 1e3,
        d_min: 1e-1,
        d_max: 1e4,
        n_steps: 100,
        d_steps: 100,
        spacing: Spacing::Log,
    };
    c.bench_function("grid_eval/shannon_full/100x100", |b| {
        b.iter(|| grid_eval(&spec, &params, Normalization::identity(), &grid, None))
    });
}

criterion_group!(benches, evaluation);
criterion_main!(benches);
