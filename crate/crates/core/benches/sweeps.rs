use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use harvest_core::analysis::{bifurcation_scan_with, linspace};
use harvest_core::scenarios::{run_scenario, RunSettings};
use harvest_core::{Control, Execution, HarvestSystem, IntegrationConfig, ModelParams, Strategy};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn scan(c: &mut Criterion) {
    let system = HarvestSystem::new(
        ModelParams::new(0.5, 1.0, 0.8, 1.0, 1.0).unwrap(),
        Strategy::Proportional { lambda: 0.5 },
    )
    .unwrap();
    let grid = linspace(0.3, 0.7, 32);
    let config = IntegrationConfig::new(0.01, 500.0);
    let mut group = c.benchmark_group("bifurcation_scan");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                bifurcation_scan_with(
                    &system,
                    Control::HarvestIntensity,
                    black_box(&grid),
                    0.5,
                    &config,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn scenario(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario_fig12");
    group.sample_size(10);
    for (name, exec) in MODES {
        let settings = RunSettings {
            dt: 1e-2,
            execution: exec,
            ..RunSettings::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_scenario(black_box("fig12_pulse_data3_long"), &settings).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scan, scenario);
criterion_main!(benches);
