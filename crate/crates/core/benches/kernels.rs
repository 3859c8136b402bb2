use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ffpe::fem::assemble_stiffness;
use ffpe::mesh::Mesh;
use ffpe::multigrid::{MeshHierarchy, Multigrid};
use ffpe::par;

fn vector(n: usize, seed: f64) -> Vec<f64> {
    (0..n).map(|i| (seed * i as f64).sin()).collect()
}

fn matvec(c: &mut Criterion) {
    let mut group = c.benchmark_group("matvec");
    for n in [64, 256] {
        let s = assemble_stiffness(&Mesh::unit_square(n).unwrap());
        let x = vector(s.n_cols(), 0.3);
        let mut y = vec![0.0; s.n_rows()];
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |b, _| b.iter(|| s.mul_vec_seq(black_box(&x), &mut y)));
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &n, |b, _| b.iter(|| s.mul_vec_par(black_box(&x), &mut y)));
    }
    group.finish();
}

fn weighted_sum(c: &mut Criterion) {
    let mut group = c.benchmark_group("weighted_sum");
    let n = 65_025;
    for k in [16, 256] {
        let vecs: Vec<Vec<f64>> = (0..k).map(|j| vector(n, 0.1 + j as f64)).collect();
        let refs: Vec<&[f64]> = vecs.iter().map(Vec::as_slice).collect();
        let coeffs = vector(k, 0.7);
        let mut out = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("seq", k), &k, |b, _| {
            b.iter(|| par::weighted_sum_seq(&mut out, black_box(&coeffs), &refs))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", k), &k, |b, _| {
            b.iter(|| par::weighted_sum_par(&mut out, black_box(&coeffs), &refs))
        });
    }
    group.finish();
}

fn dot(c: &mut Criterion) {
    let mut group = c.benchmark_group("dot");
    for n in [4_225, 263_169] {
        let (x, y) = (vector(n, 0.2), vector(n, 0.9));
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |b, _| b.iter(|| par::dot_seq(black_box(&x), &y)));
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &n, |b, _| b.iter(|| par::dot_par(black_box(&x), &y)));
    }
    group.finish();
}

fn vcycle(c: &mut Criterion) {
    let mesh = Mesh::unit_square(256).unwrap();
    let h = MeshHierarchy::new(&mesh).unwrap();
    let mg = Multigrid::new(&h, 400.0, 200.0).unwrap().unwrap();
    let b = vector(mesh.n_interior(), 0.4);
    let mut x = vec![0.0; b.len()];
    c.bench_function("vcycle_256", |bench| bench.iter(|| mg.apply(black_box(&b), &mut x)));
}

criterion_group!(benches, matvec, weighted_sum, dot, vcycle);
criterion_main!(benches);
