use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use obstacle_monge::kantorovich::{cost_matrix, cost_matrix_seq};
use obstacle_monge::measure::{sample_density, DensitySpec, Profile, Region};
use obstacle_monge::pipeline::{solve, Options, Scene};
use obstacle_monge::rays::{build_relation, build_relation_seq};
use obstacle_monge::{ConvexObstacle, Point};

fn scene(n: usize) -> Scene {
    let obs = ConvexObstacle::disk(Point::new(0.0, 0.0), 1.0).unwrap();
    let spec = |x0: f64, x1: f64, seed: u64| DensitySpec {
        region: Region::Rectangle {
            min: Point::new(x0, -2.0),
            max: Point::new(x1, 2.0),
        },
        profile: Profile::Uniform,
        n,
        seed,
    };
    let mu = sample_density(&spec(-4.0, -1.2, 0), &obs).unwrap();
    let nu = sample_density(&spec(1.2, 4.0, 1), &obs).unwrap();
    Scene::new(obs, mu, nu)
}

fn cost(c: &mut Criterion) {
    let mut g = c.benchmark_group("cost_matrix");
    for n in [100, 400] {
        let s = scene(n);
        g.bench_with_input(BenchmarkId::new("parallel", n), &s, |b, s| {
            b.iter(|| cost_matrix(black_box(&s.mu), &s.nu, &s.obstacle).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &s, |b, s| {
            b.iter(|| cost_matrix_seq(black_box(&s.mu), &s.nu, &s.obstacle).unwrap())
        });
    }
    g.finish();
}

fn relation(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_relation");
    g.sample_size(10);
    for n in [50, 200] {
        let s = scene(n);
        let sol = solve(&s, &Options::default()).unwrap();
        let nodes = &sol.rays.nodes;
        let tol = Options::default().tol;
        g.bench_with_input(BenchmarkId::new("parallel", n), nodes, |b, nodes| {
            b.iter(|| build_relation(black_box(nodes), &s.obstacle, tol))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), nodes, |b, nodes| {
            b.iter(|| build_relation_seq(black_box(nodes), &s.obstacle, tol))
        });
    }
    g.finish();
}

criterion_group!(benches, cost, relation);
criterion_main!(benches);
