use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use tlinf_core::analyzers::{default_profile, SpectralProfile};
use tlinf_core::field::{scale_bank, FrequencyGrid, GridSpec, SampledField};
use tlinf_core::group::GroupPoint;
use tlinf_core::norms::{NormContext, NormParams};
use tlinf_core::peetre::PeetreStack;
use tlinf_core::suite::AtomField;
use tlinf_core::{ExpansiveMatrix, QuasiNormStructure};

struct Fixture {
    fgrid: FrequencyGrid,
    qn: QuasiNormStructure,
    field: SampledField,
}

fn fixture() -> Fixture {
    let a = ExpansiveMatrix::from_rows(2, &[2.0, 1.0, 0.0, 2.0]).unwrap();
    let fgrid = FrequencyGrid::for_matrix(GridSpec::new(2, 8.0, 64).unwrap(), &a).unwrap();
    let g = SpectralProfile::bump(0.0, 1.0).unwrap();
    let field = AtomField::single(g, GroupPoint::new(vec![0.2, -0.4], 0.5)).sample(&fgrid).unwrap();
    Fixture { fgrid, qn: QuasiNormStructure::new(&a).unwrap(), field }
}

fn quasi_norm(c: &mut Criterion) {
    let f = fixture();
    let pts: Vec<[f64; 2]> = (0..1024).map(|i| [(i as f64 * 0.37).sin() * 5.0, (i as f64 * 0.11).cos() * 3.0]).collect();
    c.bench_function("quasi_norm/1024", |b| b.iter(|| pts.iter().map(|p| f.qn.quasi_norm(black_box(p))).sum::<f64>()));
}

fn bank(c: &mut Criterion) {
    let f = fixture();
    let scales: Vec<f64> = (-2..=4).map(f64::from).collect();
    c.bench_function("scale_bank/64x64", |b| {
        b.iter(|| scale_bank(&f.fgrid, black_box(&f.field), &default_profile(), &scales).unwrap())
    });
}

fn peetre(c: &mut Criterion) {
    let f = fixture();
    let band = tlinf_core::field::convolve_scale(&f.fgrid, &f.field, &default_profile(), 1.0).unwrap();
    c.bench_function("peetre/build", |b| {
        b.iter(|| PeetreStack::new(f.fgrid.spec(), &f.qn, band.magnitudes(), 1.0, 3).unwrap())
    });
    let stack = PeetreStack::new(f.fgrid.spec(), &f.qn, band.magnitudes(), 1.0, 3).unwrap();
    c.bench_function("peetre/evaluate", |b| b.iter(|| stack.evaluate(black_box(1.5))));
}

fn tl_norm(c: &mut Criterion) {
    let f = fixture();
    let ctx = NormContext::new(&f.fgrid, &f.qn, default_profile(), NormParams::default()).unwrap();
    let bank = ctx.bank(&f.field).unwrap();
    c.bench_function("tl_norm/q=2", |b| b.iter(|| ctx.tl(black_box(&bank), 0.0, 2.0)));
    c.bench_function("tl_norm/q=inf", |b| b.iter(|| ctx.tl(black_box(&bank), 0.0, f64::INFINITY)));
}

criterion_group!(benches, quasi_norm, bank, peetre, tl_norm);
criterion_main!(benches);
