use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use lidarsim_bench::{ray_fan, room, trajectory_pair};
use lidarsim_core::eval::{ape, rpe, Delta, DEFAULT_MAX_DT};
use lidarsim_core::sensors::{simulate_lidar_frame, FrameRequest, LidarModel, MoverSampling};
use lidarsim_core::{Alignment, Pose};

fn raycast(c: &mut Criterion) {
    let scene = room();
    let rays = ray_fan(10_000);
    let snap = scene.at(0.0);
    let mut g = c.benchmark_group("raycast");
    g.bench_function("bvh_10k", |b| {
        b.iter(|| rays.iter().filter(|(o, d)| snap.raycast(o, d, 100.0).is_some()).count())
    });
    g.bench_function("exhaustive_10k", |b| {
        b.iter(|| rays.iter().filter(|(o, d)| snap.raycast_exhaustive(o, d, 100.0).is_some()).count())
    });
    g.finish();
}

fn frame(c: &mut Criterion) {
    let scene = room();
    let mut g = c.benchmark_group("frame");
    g.sample_size(20);
    for name in ["avia", "velodyne32"] {
        let model = LidarModel::builtin(name).unwrap();
        g.bench_function(name, |b| {
            let mut index = 0;
            b.iter(|| {
                let req = FrameRequest {
                    scene: &scene,
                    model: &model,
                    frame_index: index,
                    t0: index as f64 * 0.1,
                    seed: 1,
                    mover_sampling: MoverSampling::PerPoint,
                };
                index += 1;
                simulate_lidar_frame(&req, |t| Pose::planar(0.2 * t, 0.0, 0.0, 0.1 * t)).unwrap()
            })
        });
    }
    g.finish();
}

fn evaluate(c: &mut Criterion) {
    let (est, reference) = trajectory_pair(20_000);
    let mut g = c.benchmark_group("eval");
    g.bench_function("ape_se3_20k", |b| {
        b.iter(|| ape(black_box(&est), &reference, Alignment::Se3, DEFAULT_MAX_DT).unwrap().stats)
    });
    g.bench_function("rpe_1s_20k", |b| {
        b.iter(|| rpe(black_box(&est), &reference, Delta::Seconds(1.0), DEFAULT_MAX_DT).unwrap().stats)
    });
    g.finish();
}

criterion_group!(benches, raycast, frame, evaluate);
criterion_main!(benches);
