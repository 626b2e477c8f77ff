//! One estimate per iteration on a single-thread pool versus the full pool.
//! Built without the `parallel` feature both arms run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ifest::{estimate, AnalyticDensity, EstimatorConfig, FunctionalSpec, Method, SampleSet};
use rayon::ThreadPoolBuilder;

struct Case {
    name: &'static str,
    spec: FunctionalSpec,
    method: Method,
    x: SampleSet,
    y: Option<SampleSet>,
    cfg: EstimatorConfig,
}

fn cases() -> Vec<Case> {
    let draw = |d: &str, n, seed| AnalyticDensity::parse(d).unwrap().sample(n, seed);
    vec![
        Case {
            name: "kl_loo_1d",
            spec: FunctionalSpec::kl(),
            method: Method::Loo,
            x: draw("f2", 2000, 1),
            y: Some(draw("uniform", 2000, 2)),
            cfg: EstimatorConfig::default(),
        },
        Case {
            name: "hellinger_ds_2d",
            spec: FunctionalSpec::hellinger(),
            method: Method::Ds,
            x: draw("f2xuniform", 1000, 3),
            y: Some(draw("uniformx2", 1000, 4)),
            cfg: EstimatorConfig::default().with_bandwidths(&[0.2, 0.4]),
        },
    ]
}

fn bench(c: &mut Criterion) {
    let full = rayon::current_num_threads();
    let mut group = c.benchmark_group("estimate");
    group.sample_size(10);
    for case in cases() {
        for threads in [1, full] {
            let pool = ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            group.bench_with_input(BenchmarkId::new(case.name, threads), &case, |b, case| {
                b.iter(|| {
                    pool.install(|| {
                        let e = estimate(&case.spec, case.method, &case.x, case.y.as_ref(), &case.cfg);
                        black_box(e.unwrap().value)
                    })
                })
            });
            if full == 1 {
                break;
            }
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
