//! Benchmarks for the hot paths: full suite execution under both guardrail
//! configurations, greedy scenario selection, and outcome evaluation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use haaf_core::agent::{ReferenceProvider, VulnerabilitySwitches};
use haaf_core::attribution::evaluate;
use haaf_core::fixtures;
use haaf_core::guardrails::GuardrailSettings;
use haaf_core::harness::run_suite;
use haaf_core::sampling::{Manifold, SamplerConfig};
use haaf_core::scenario::{partition, AxisBins, AxisName};

fn bench_suite_runs(c: &mut Criterion) {
    let suite = fixtures::reference_suite();
    let library = fixtures::reference_library();
    let provider = ReferenceProvider { switches: VulnerabilitySwitches::all_on() };
    let mut group = c.benchmark_group("suite_run");
    group.bench_function("baseline", |b| {
        b.iter(|| run_suite(&suite, &library, &provider, &GuardrailSettings::none()).unwrap())
    });
    group.bench_function("hardened", |b| {
        b.iter(|| run_suite(&suite, &library, &provider, &GuardrailSettings::hardened()).unwrap())
    });
    group.finish();
}

fn bench_greedy_selection(c: &mut Criterion) {
    let suite = fixtures::reference_suite();
    let bins = AxisBins::keeping(&[AxisName::Category, AxisName::EnvironmentalStress]);
    let regions = partition(&suite.scenarios, &bins, Some(&fixtures::reference_prior())).unwrap();
    let manifold = Manifold::new(&suite, &regions).unwrap();
    let config = SamplerConfig { budget: Some(12), ..SamplerConfig::default() };
    c.bench_function("greedy_select_12_of_24", |b| {
        b.iter(|| manifold.select_greedy(&config).unwrap())
    });
}

fn bench_evaluation(c: &mut Criterion) {
    let suite = fixtures::reference_suite();
    let library = fixtures::reference_library();
    let provider = ReferenceProvider { switches: VulnerabilitySwitches::all_on() };
    let run = run_suite(&suite, &library, &provider, &GuardrailSettings::none()).unwrap();
    c.bench_function("evaluate_24_trajectories", |b| {
        b.iter_batched(
            || run.trajectories.clone(),
            |trajectories| {
                for (scenario, trajectory) in suite.scenarios.iter().zip(&trajectories) {
                    let fixture = library.resolve(&scenario.world_fixture).unwrap();
                    criterion::black_box(evaluate(scenario, fixture, trajectory));
                }
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_suite_runs, bench_greedy_selection, bench_evaluation);
criterion_main!(benches);
