//! Parallel against sequential execution for every fan-out in the lab, plus
//! surrogate inference against the RC plant over one 120-hour window.
//!
//! Build with `--no-default-features` to time the pure sequential fallback.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dhlab::control::{pso_minimize, water_curve_cost, PsoConfig, WaterCurve, WaterCurvePolicy, ALPHA_BOUNDS, BETA_BOUNDS};
use dhlab::mdp::{rollout, EpisodeSetup, GroundTruth, TargetSchedule, ThermalModel};
use dhlab::nn::{LstmDims, LstmNet, SeqLoss};
use dhlab::rng::rng_from;
use dhlab::surrogate::{generate_dataset, init_model, DatasetConfig, TrainConfig, N_INPUTS, WINDOW};
use dhlab::thermal::{default_building, single_apartment, SubstationCommand};
use dhlab::weather::{CityTable, SEASON_HOURS};
use dhlab::Exec;
use rand::Rng;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn pso(c: &mut Criterion) {
    let w = vec![CityTable::default().synthesize("Harbin", 600, 1).unwrap()];
    let model = GroundTruth::new(single_apartment());
    let schedule = TargetSchedule::default();
    let mut cfg = PsoConfig::new(vec![ALPHA_BOUNDS, BETA_BOUNDS], 3);
    cfg.swarm_size = 8;
    cfg.iterations = 3;
    let mut g = c.benchmark_group("pso_water_curve");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                pso_minimize(|x| water_curve_cost(&model, &w, &schedule, WaterCurve::new(x[0], x[1])), &cfg, exec).unwrap()
            })
        });
    }
    g.finish();
}

fn dataset(c: &mut Criterion) {
    let cfg = DatasetConfig {
        n_series: 10,
        series_len: 400,
        spin_up_hours: 48,
        ..DatasetConfig::default()
    };
    let building = default_building(0);
    let cities = CityTable::default();
    let mut g = c.benchmark_group("dataset_generation");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| generate_dataset(&building, &cities, &cfg, 5, exec).unwrap()));
    }
    g.finish();
}

fn minibatch(c: &mut Criterion) {
    let mut rng = rng_from(2);
    let dims = LstmDims {
        input: N_INPUTS,
        hidden: 32,
        layers: 2,
        output: 12,
    };
    let net = LstmNet::new(dims, &mut rng);
    let steps = WINDOW;
    let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..32)
        .map(|_| {
            (
                (0..steps * N_INPUTS).map(|_| rng.random_range(-1.0..1.0)).collect(),
                (0..steps * 12).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    let mut g = c.benchmark_group("minibatch_gradients");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                exec.map(&batch, |(x, y)| {
                    let mut grad = vec![0.0; net.n_params()];
                    let l = net.loss_and_grad(x, y, steps, steps - 24, SeqLoss::Mae, &mut grad);
                    (l, grad)
                })
            })
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let w = CityTable::default().synthesize("Yuncheng", SEASON_HOURS, 4).unwrap();
    let curves: Vec<WaterCurve> = [(30.0, -0.8), (32.0, -1.0), (28.0, -0.6), (34.0, -1.2)]
        .iter()
        .map(|&(a, b)| WaterCurve::new(a, b))
        .collect();
    let building = std::sync::Arc::new(default_building(0));
    let mut g = c.benchmark_group("policy_evaluation");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                exec.map(&curves, |&curve| {
                    rollout(
                        &mut GroundTruth::shared(building.clone()),
                        &mut WaterCurvePolicy::new(curve),
                        &w,
                        &EpisodeSetup::new(TargetSchedule::default(), curve),
                    )
                    .unwrap()
                })
            })
        });
    }
    g.finish();
}

/// One 120-hour horizon: the surrogate answers one window, the plant steps
/// through 120 hours.
fn surrogate_vs_plant(c: &mut Criterion) {
    let cfg = DatasetConfig {
        n_series: 10,
        series_len: 200,
        spin_up_hours: 24,
        ..DatasetConfig::default()
    };
    let building = default_building(0);
    let ds = generate_dataset(&building, &CityTable::default(), &cfg, 1, Exec::Parallel).unwrap();
    let model = init_model(&ds, &TrainConfig::default()).unwrap();
    let win = ds.series[0].inputs[..WINDOW * N_INPUTS].to_vec();
    let records = &ds.series[0].weather.records[..WINDOW];
    let mut g = c.benchmark_group("horizon_120h");
    g.bench_with_input(BenchmarkId::new("surrogate", "one window"), &win, |b, w| {
        b.iter(|| model.predict(black_box(w)).unwrap())
    });
    g.bench_with_input(BenchmarkId::new("surrogate", "hourly rollout"), &win, |b, w| {
        b.iter(|| {
            for _ in 0..WINDOW {
                black_box(model.predict(black_box(w)).unwrap());
            }
        })
    });
    let mut plant = GroundTruth::new(building);
    plant.spin_up_hours = 0;
    g.bench_function(BenchmarkId::new("plant", "hourly rollout"), |b| {
        b.iter(|| {
            plant.reset(&records[0], 35.0).unwrap();
            for r in records {
                black_box(plant.step(r, &SubstationCommand::nominal(35.0)).unwrap());
            }
        })
    });
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = pso, dataset, minibatch, evaluation, surrogate_vs_plant
}
criterion_main!(benches);
