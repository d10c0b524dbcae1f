use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geopriv::apps::{euclidean_agents, QUERY_COMPONENT};
use geopriv::elimination::{pie_ni, PieNiParams};
use geopriv::filter::{approx_gp_eps_min, filter_check, FilterSpec, FilterState};
use geopriv::mechanism::{lambda_bound, sample_gaussian_mech, sample_laplace_gp, ValidTriple};
use geopriv::metric::Point;
use geopriv::protocol::{split_budget, SplitScheme};
use geopriv::Rectangle;

fn bench_mechanisms(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let value = [1.0, -2.0, 0.5, 3.0];
    c.bench_function("gaussian_mech_d4", |b| {
        b.iter(|| sample_gaussian_mech(black_box(&value), 1.0, 0.5, &mut rng).unwrap())
    });
    c.bench_function("laplace_gp_d4", |b| {
        b.iter(|| sample_laplace_gp(black_box(&value), 1.0, 0.5, &mut rng).unwrap())
    });
    c.bench_function("lambda_bound_d10", |b| {
        b.iter(|| lambda_bound(black_box(10), black_box(0.01)).unwrap())
    });
}

fn bench_filters(c: &mut Criterion) {
    let spec = FilterSpec::approx_gp(4.0, 1e-6, 1.0).unwrap();
    let mut state = FilterState::new();
    state.record(0.3).unwrap();
    state.record(0.1).unwrap();
    c.bench_function("approx_gp_filter_check", |b| {
        b.iter(|| filter_check(black_box(&spec), black_box(&state), black_box(0.2)).unwrap())
    });
    c.bench_function("approx_gp_eps_min", |b| {
        b.iter(|| approx_gp_eps_min(black_box(0.6), 1e-6, 1.0).unwrap())
    });
}

fn bench_geometry(c: &mut Criterion) {
    let rect = Rectangle::axis_aligned([0.0, 0.0], 3.0, 2.0).unwrap();
    c.bench_function("rect_proj", |b| {
        b.iter(|| rect.proj(black_box([1.7, -0.4])))
    });
}

fn bench_elimination(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100;
    let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-5.0..5.0)]).collect();
    let budgets = vec![1.0; n];
    let params = vec![split_budget(1.0, 4, SplitScheme::Even).unwrap(); n];
    let initial: BTreeSet<usize> = (0..n).collect();
    c.bench_function("pie_ni_n100_c4", |b| {
        b.iter(|| {
            let mut agents = euclidean_agents(&points, &budgets, 3).unwrap();
            let triple = ValidTriple::scalar(|p: &Point| p.as_real().unwrap()[0]);
            pie_ni(
                &mut agents,
                &initial,
                QUERY_COMPONENT,
                &triple,
                &params,
                &PieNiParams {
                    rounds: 4,
                    beta0: 0.1,
                    nu_low: 0.0,
                    nu_high: 0.0,
                },
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_mechanisms,
    bench_filters,
    bench_geometry,
    bench_elimination
);
criterion_main!(benches);
