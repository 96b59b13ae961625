//! Clustering throughput on blob-shaped scenes like the grounder produces.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ground3d_core::grounder::dbscan;
use ground3d_core::Point3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn blob_scene(n_blobs: usize, points_per_blob: usize) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points = Vec::with_capacity(n_blobs * points_per_blob);
    for _ in 0..n_blobs {
        let cx = rng.gen_range(-4.0..4.0);
        let cy = rng.gen_range(-4.0..4.0);
        let cz = rng.gen_range(0.2..2.0);
        for _ in 0..points_per_blob {
            points.push(Point3::new(
                cx + rng.gen_range(-0.3..0.3),
                cy + rng.gen_range(-0.3..0.3),
                cz + rng.gen_range(-0.3..0.3),
            ));
        }
    }
    points
}

fn bench_dbscan(c: &mut Criterion) {
    let mut group = c.benchmark_group("dbscan");
    for &n_blobs in &[4usize, 16, 64] {
        let points = blob_scene(n_blobs, 250);
        group.bench_with_input(
            BenchmarkId::from_parameter(points.len()),
            &points,
            |bench, points| bench.iter(|| dbscan(black_box(points), 0.15, 10)),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_dbscan);
criterion_main!(benches);
