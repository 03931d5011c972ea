//! Likelihood construction and evaluation on the linearized ball-on-beam,
//! with a single worker thread versus the full rayon pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use invgame_core::dynamics::{ball_on_beam_lq_game, benchmark_parameters, BallOnBeamParams};
use invgame_core::forward::solve_open_loop_nash_lq;
use invgame_core::game::{DemonstrationSet, GameDefinition};
use invgame_core::likelihood::{DVariant, LikelihoodModel, Scope};
use nalgebra::DVector;

fn setup() -> (GameDefinition, DemonstrationSet, Vec<f64>) {
    let (game, lin) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 251, 0.02).unwrap();
    let theta = benchmark_parameters();
    let demos = [0.5, -0.3, 0.2, 0.4]
        .iter()
        .map(|&p| solve_open_loop_nash_lq(&lin, &theta, &DVector::from_vec(vec![p, 0.0, 0.1, 0.0]), 251).unwrap().0)
        .collect();
    let demos = DemonstrationSet::new(&game, demos).unwrap();
    let weights: Vec<f64> = theta.theta[1].iter().map(|w| 1000.0 * w).collect();
    (game, demos, weights)
}

#[cfg(feature = "parallel")]
type Pool = rayon::ThreadPool;
#[cfg(not(feature = "parallel"))]
type Pool = ();

/// Run `f` on `pool` when given, otherwise on the global pool.
fn within<R: Send>(pool: Option<&Pool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        #[cfg(feature = "parallel")]
        Some(p) => p.install(f),
        _ => f(),
    }
}

fn run(c: &mut Criterion, label: &str, pool: Option<&Pool>, game: &GameDefinition, demos: &DemonstrationSet, weights: &[f64]) {
    let mut group = c.benchmark_group(format!("likelihood/{label}"));
    group.sample_size(10);
    group.bench_function("build", |b| {
        b.iter(|| within(pool, || LikelihoodModel::build(game, demos, Scope::Player(1), DVariant::Plain).unwrap()))
    });
    let model = LikelihoodModel::build(game, demos, Scope::Player(1), DVariant::Plain).unwrap();
    group.bench_function("value_and_gradient", |b| {
        b.iter(|| within(pool, || model.value_and_gradient(black_box(weights)).unwrap()))
    });
    group.finish();
}

fn bench(c: &mut Criterion) {
    let (game, demos, weights) = setup();
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        run(c, "sequential", Some(&single), &game, &demos, &weights);
        let label = format!("parallel-{}", invgame_core::par::worker_count());
        run(c, &label, None, &game, &demos, &weights);
    }
    #[cfg(not(feature = "parallel"))]
    run(c, "sequential", None, &game, &demos, &weights);
}

criterion_group!(benches, bench);
criterion_main!(benches);
