use criterion::{black_box, criterion_group, criterion_main, Criterion};

use rps_core::analysis::empirical_w1;
use rps_core::coupling::{BuildOptions, CouplingMetric};
use rps_core::noise::NoiseGrid;
use rps_core::presets;
use rps_core::rates::{PeriodicRate, RateForm, SignClass, TrigTerm};
use rps_core::sde::{simulate_endpoint, simulate_reflection_coupled};

fn wavy_alpha() -> PeriodicRate {
    PeriodicRate::new(
        1.0,
        RateForm::Trig { constant: 1.0, terms: vec![TrigTerm { k: 1, cos_coef: 0.0, sin_coef: 0.5 }] },
        SignClass::StrictlyPositive,
    )
    .unwrap()
}

fn bench_rates(c: &mut Criterion) {
    let f = PeriodicRate::new(
        1.0,
        RateForm::Trig {
            constant: 0.3,
            terms: vec![
                TrigTerm { k: 1, cos_coef: 1.0, sin_coef: -0.4 },
                TrigTerm { k: 3, cos_coef: 0.2, sin_coef: 0.7 },
            ],
        },
        SignClass::Signed,
    )
    .unwrap();
    c.bench_function("rates/integrate_20_periods", |b| {
        b.iter(|| f.integrate(black_box(-3.21), black_box(17.04)).unwrap())
    });
}

fn bench_phi_build(c: &mut Criterion) {
    c.bench_function("coupling/build_phi_unit", |b| {
        b.iter(|| CouplingMetric::build(1.0, 1.0, 1.0, BuildOptions::default()).unwrap())
    });
}

fn bench_engine(c: &mut Criterion) {
    let model = presets::double_well(wavy_alpha()).unwrap();
    let h = 1e-3;
    let w = NoiseGrid::new(1, 0, 0.0, h, 1001, 1).unwrap();
    c.bench_function("engine/double_well_1000_steps", |b| {
        b.iter(|| simulate_endpoint(&model, 0.0, 1.0, black_box(&[2.0]), &w).unwrap())
    });
    c.bench_function("engine/reflection_coupled_1000_steps", |b| {
        b.iter(|| {
            simulate_reflection_coupled(&model, 0.0, 1.0, &[2.0], &[-2.0], &w, 0.0316, 1000, None)
                .unwrap()
        })
    });
}

fn bench_w1(c: &mut Criterion) {
    let n = 200;
    let a: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
    let b1: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.61).cos()]).collect();
    c.bench_function("w1/sorted_1d_n200", |bch| {
        bch.iter(|| empirical_w1(black_box(&a), black_box(&b1)).unwrap())
    });
    let a2: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
    let b2: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.61).cos(), (i as f64 * 0.23).sin()]).collect();
    c.bench_function("w1/assignment_2d_n200", |bch| {
        bch.iter(|| empirical_w1(black_box(&a2), black_box(&b2)).unwrap())
    });
}

criterion_group!(benches, bench_rates, bench_phi_build, bench_engine, bench_w1);
criterion_main!(benches);
