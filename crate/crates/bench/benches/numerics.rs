use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use saskit_bench::{params, sphere_problem};
use saskit_core::agent::Toolbox;
use saskit_core::fit::{fit_lm, FitOptions};
use saskit_core::models::{ModelRegistry, QGrid};
use saskit_core::sld::sld_report;

fn models(c: &mut Criterion) {
    let reg = ModelRegistry::standard();
    let q = QGrid::log_spaced(1e-3, 1.0, 200).unwrap();
    for (name, p) in [
        ("sphere", params(&[("radius", 50.0)])),
        ("cylinder", params(&[("radius", 20.0), ("length", 400.0)])),
        (
            "ellipsoid",
            params(&[("radius_polar", 20.0), ("radius_equatorial", 60.0)]),
        ),
        ("lamellar", params(&[("thickness", 50.0)])),
    ] {
        c.bench_function(&format!("evaluate {name} 200 q"), |b| {
            b.iter(|| reg.evaluate(black_box(name), black_box(&p), &q).unwrap())
        });
    }
}

fn sld(c: &mut Criterion) {
    c.bench_function("sld D2O", |b| {
        b.iter(|| sld_report(black_box("D2O"), 1.1044).unwrap())
    });
    c.bench_function("sld Ca10(PO4)6(OH)2", |b| {
        b.iter(|| sld_report(black_box("Ca10(PO4)6(OH)2"), 3.16).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let problem = sphere_problem(Arc::new(ModelRegistry::standard()));
    let mut group = c.benchmark_group("fit");
    group.sample_size(20);
    group.bench_function("sphere round-trip", |b| {
        b.iter(|| fit_lm(black_box(&problem), &FitOptions::default()).unwrap())
    });
    let plain = FitOptions {
        continuation: false,
        ..FitOptions::default()
    };
    group.bench_function("sphere plain LM", |b| {
        b.iter(|| fit_lm(black_box(&problem), &plain).unwrap())
    });
    group.finish();
}

fn retrieval(c: &mut Criterion) {
    let tb = Toolbox::standard();
    c.bench_function("bm25 search", |b| {
        b.iter(|| {
            tb.docs
                .search(black_box("cylinder radius length"), 3)
                .unwrap()
        })
    });
}

criterion_group!(benches, models, sld, fitting, retrieval);
criterion_main!(benches);
