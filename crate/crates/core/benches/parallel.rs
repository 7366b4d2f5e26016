use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use spinereg_core::compositing::alpha_blend_with;
use spinereg_core::image::resample_nearest_into;
use spinereg_core::registration::{estimate_batch, Method};
use spinereg_core::segmentation::{band_threshold_with, bands};
use spinereg_core::synth::{rgb_exam_from_seed, xray_exam_from_seed};
use spinereg_core::{Execution, LandmarkSet, Point, RigidTransform};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pixel_ops(c: &mut Criterion) {
    let exam = rgb_exam_from_seed(1);
    let xray = xray_exam_from_seed(1).xray;
    let (w, h) = exam.sfsl.dimensions();
    let t = RigidTransform::new(0.3, 0.05, Point::new(570.0, 300.0), Point::new(247.0, 80.0)).unwrap();
    let other = rgb_exam_from_seed(2).sfsl;

    let mut group = c.benchmark_group("pixel");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("resample_xray_to_sfsl", name), &exec, |b, &exec| {
            b.iter(|| resample_nearest_into(black_box(&xray), &t, w, h, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("alpha_blend", name), &exec, |b, &exec| {
            b.iter(|| alpha_blend_with(black_box(&exam.sfsl), &other, 0.4, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hsv_threshold", name), &exec, |b, &exec| {
            b.iter(|| band_threshold_with(black_box(&exam.sfsl), &bands::SFSL_SPINE, exec))
        });
    }
    group.finish();
}

fn batch_registration(c: &mut Criterion) {
    let base = LandmarkSet::new(
        "b",
        Point::new(247.0, 60.0),
        Point::new(200.0, 520.0),
        Point::new(294.0, 522.0),
        Point::new(250.0, 700.0),
    );
    let pairs: Vec<_> = (0..20_000)
        .map(|i| {
            let t = RigidTransform::new(0.5 + (i % 17) as f64 * 0.1, (i % 29) as f64 * 0.2 - 2.8, base.c7, base.c7).unwrap();
            (base.transformed(&t, "s"), base.clone())
        })
        .collect();
    let mut group = c.benchmark_group("registration");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("estimate_batch_20k", name), &exec, |b, &exec| {
            b.iter(|| estimate_batch(black_box(&pairs), Method::Angle, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, pixel_ops, batch_registration);
criterion_main!(benches);
