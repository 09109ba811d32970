use criterion::{criterion_group, criterion_main, Criterion};
use uotnet::residuals::loss_and_grad;
use uotnet_bench::Fixture;

fn loss(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss");
    group.sample_size(10);
    for id in ["A", "C-eta1", "Sphere"] {
        let f = Fixture::preset(id);
        group.bench_function(format!("{id} loss only"), |b| {
            b.iter(|| loss_and_grad(&f.nets, &f.col, &f.spec, &f.plan, false).unwrap().0.total)
        });
        group.bench_function(format!("{id} loss and gradient"), |b| {
            b.iter(|| loss_and_grad(&f.nets, &f.col, &f.spec, &f.plan, true).unwrap().0.total)
        });
    }
    group.finish();
}

criterion_group!(benches, loss);
criterion_main!(benches);
