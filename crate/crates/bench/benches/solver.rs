use criterion::{criterion_group, criterion_main, Criterion};

use holestokes::fem::Discretization;
use holestokes::norms::norm_report;
use holestokes::{Dirichlet, DivData, LebesgueExponent, Source, StokesSolver};
use holestokes_bench::{hole_mesh, source};

fn assembly(c: &mut Criterion) {
    let mesh = hole_mesh(1.0 / 16.0, 32);
    let src = Source::div_form(source());
    c.bench_function("assemble eps=1/16", |b| {
        b.iter(|| {
            let d = Discretization::new(mesh.clone()).unwrap();
            d.system(&src, &DivData::Zero, &Dirichlet::Zero).unwrap()
        })
    });
}

fn factorization(c: &mut Criterion) {
    let mesh = hole_mesh(1.0 / 16.0, 32);
    c.bench_function("factor eps=1/16", |b| b.iter(|| StokesSolver::new(mesh.clone()).unwrap()));
    let solver = StokesSolver::new(mesh.clone()).unwrap();
    let src = Source::div_form(source());
    c.bench_function("solve eps=1/16", |b| {
        b.iter(|| solver.solve(&src, &DivData::Zero, &Dirichlet::Zero).unwrap())
    });
}

fn norms(c: &mut Criterion) {
    let mesh = hole_mesh(1.0 / 16.0, 32);
    let g = source();
    let sol = StokesSolver::new(mesh).unwrap().solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero).unwrap();
    for p in [2.0, 4.0] {
        let p = LebesgueExponent::new(p).unwrap();
        c.bench_function(&format!("norm report p={}", p.value()), |b| b.iter(|| norm_report(&sol, &g, p).unwrap()));
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = assembly, factorization, norms
}
criterion_main!(benches);
