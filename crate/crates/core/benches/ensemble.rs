use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pairwell::observables::{number_series, ColumnStats};
use pairwell::potential::WellParams;
use pairwell::propagator::{evolve_ensemble, shared_basis, EnsembleOptions, Execution, Reduction, StepPolicy};
use pairwell::units::Grid;

fn ensemble(c: &mut Criterion) {
    let params = WellParams::reference();
    let mut stepping = StepPolicy::default().stepping_for(&params);
    stepping.t_final = 200.0 * stepping.dt;

    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for n in [128usize, 512] {
        let basis = shared_basis(Grid::new(2.5, n).unwrap());
        let mut executions = vec![("sequential", Execution::Sequential)];
        if cfg!(feature = "parallel") {
            executions.push(("parallel", Execution::default()));
        }
        for (name, execution) in executions {
            let opts = EnsembleOptions {
                execution,
                reduction: Reduction::Parity,
                ..EnsembleOptions::default()
            };
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| {
                    let run = evolve_ensemble(&basis, &params, &stepping, &opts, ColumnStats::observe).unwrap();
                    number_series(&run).final_number()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
