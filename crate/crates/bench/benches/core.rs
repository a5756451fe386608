use criterion::{black_box, criterion_group, criterion_main, Criterion};

use reasonplan_core::annotation::AnnotationConfig;
use reasonplan_core::closed_loop::plan_step;
use reasonplan_core::model::{LossWeights, TargetKind};
use reasonplan_core::scene::{expert_policy, render_pseudo_cameras, DT};
use reasonplan_core::tensor::Group;

fn sim(c: &mut Criterion) {
    let world = reasonplan_bench::world();
    c.bench_function("sim_step", |b| {
        b.iter_batched(
            || world.clone(),
            |mut w| {
                let a = expert_policy(&w);
                w.step_mut(a, DT);
                w
            },
            criterion::BatchSize::SmallInput,
        )
    });
    let camera = AnnotationConfig::default().camera;
    c.bench_function("render_six_views", |b| b.iter(|| render_pseudo_cameras(black_box(&world), &camera)));
}

fn model(c: &mut Criterion) {
    let rec = reasonplan_bench::record();
    let m = reasonplan_bench::model();
    let ex = m.prepare(&rec, TargetKind::Full).expect("prepare");
    let mut g = c.benchmark_group("model");
    g.sample_size(10);
    g.bench_function("forward", |b| b.iter(|| m.transformer.forward(&m.params, black_box(&ex.seq)).expect("forward")));
    g.bench_function("loss_and_grads", |b| {
        b.iter(|| m.loss_and_grads(&[&rec], TargetKind::Full, LossWeights::default(), &Group::ALL).expect("grads"))
    });
    let world = reasonplan_bench::world();
    let camera = AnnotationConfig::default().camera;
    g.bench_function("plan_step", |b| b.iter(|| plan_step(&m, &camera, black_box(&world), 120)));
    g.finish();
}

criterion_group!(benches, sim, model);
criterion_main!(benches);
