use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{feature_count, rollout, CostParameters, DemonstrationSet, GameDefinition};
use crate::likelihood::{control_jacobian, cost_terms, DVariant, Scope};
use crate::par::*;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingOptions {
    pub scope: Scope,
    pub variant: DVariant,
    pub inverse_temperature: f64,
    pub sample_count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatchingReport {
    /// One-based players of the scope, aligned with the per-player vectors.
    pub players: Vec<usize>,
    pub demonstrated: Vec<Vec<f64>>,
    pub sampled: Vec<Vec<f64>>,
    /// `|sampled - demonstrated| / |demonstrated|` per feature.
    pub mismatch: Vec<Vec<f64>>,
    pub sample_count: usize,
}

const CHUNK: usize = 256;

/// Compare the demonstrations' mean feature counts with those of trajectories
/// drawn from the approximate density at `theta`: controls in the scope are
/// perturbed by `δ ~ N(-G⁻¹g, (βG)⁻¹)` around each demonstration and rolled
/// out.
pub fn feature_matching_report(
    theta: &CostParameters,
    demos: &DemonstrationSet,
    game: &GameDefinition,
    opts: &MatchingOptions,
) -> Result<FeatureMatchingReport> {
    theta.check_against(game)?;
    let players = opts.scope.players(game)?;
    if opts.sample_count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let dims: Vec<usize> = players.iter().map(|&i| game.feature_dim(i)).collect();
    let total: usize = dims.iter().sum();
    let mut sums = DVector::zeros(total);

    for (l, traj) in demos.trajectories().iter().enumerate() {
        let jac = control_jacobian(game, traj, opts.scope, opts.variant)?;
        let (g, hess) = cost_terms(game, traj, &jac, theta, &players)?;
        let scaled = &hess * opts.inverse_temperature;
        let chol = scaled
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Hessian of the cost at the estimate".into()))?;
        let mean = -hess.cholesky().expect("βG is positive definite").solve(&g);
        let lt = chol.l().transpose();
        let x1 = traj.initial_state();

        let chunks = opts.sample_count.div_ceil(CHUNK);
        let partial: Vec<Result<DVector<f64>>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(((l as u64) << 32) | c as u64);
                let count = CHUNK.min(opts.sample_count - c * CHUNK);
                let mut acc = DVector::zeros(total);
                let mut controls = traj.controls.clone();
                for _ in 0..count {
                    let z = DVector::from_fn(jac.dim(), |_, _| StandardNormal.sample(&mut rng));
                    let delta = &mean + lt.solve_upper_triangular(&z).expect("Cholesky factor is nonsingular");
                    apply(&mut controls, &traj.controls, &delta, &jac, &players);
                    let sample = rollout(game, &controls, &x1)?;
                    let mut offset = 0;
                    for (&i, &p) in players.iter().zip(&dims) {
                        let mu = feature_count(&sample, game, i)?;
                        let mut rows = acc.rows_mut(offset, p);
                        rows += &mu;
                        offset += p;
                    }
                }
                Ok(acc)
            })
            .collect();
        for p in partial {
            sums += p?;
        }
    }
    sums /= (opts.sample_count * demos.len()) as f64;

    let mut report = FeatureMatchingReport {
        players: players.iter().map(|i| i + 1).collect(),
        demonstrated: Vec::new(),
        sampled: Vec::new(),
        mismatch: Vec::new(),
        sample_count: opts.sample_count,
    };
    let mut offset = 0;
    for (&i, &p) in players.iter().zip(&dims) {
        let demo = demos.mean_feature_count(i);
        let sampled: Vec<f64> = sums.rows(offset, p).iter().copied().collect();
        report.mismatch.push(
            sampled
                .iter()
                .zip(demo.iter())
                .map(|(s, d)| (s - d).abs() / d.abs())
                .collect(),
        );
        report.demonstrated.push(demo.iter().copied().collect());
        report.sampled.push(sampled);
        offset += p;
    }
    Ok(report)
}

fn apply(
    controls: &mut [DMatrix<f64>],
    base: &[DMatrix<f64>],
    delta: &DVector<f64>,
    jac: &crate::likelihood::ControlJacobian,
    players: &[usize],
) {
    for (pos, &i) in players.iter().enumerate() {
        let (m, horizon) = base[i].shape();
        for k in 0..horizon {
            for c in 0..m {
                controls[i][(c, k)] = base[i][(c, k)] + delta[jac.control_index(pos, k, c)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ball_on_beam_lq_game, benchmark_initial_state, benchmark_parameters, BallOnBeamParams};
    use crate::forward::solve_open_loop_nash_lq;

    fn setup() -> (GameDefinition, DemonstrationSet) {
        let (game, lin) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 60, 0.02).unwrap();
        let (traj, _) = solve_open_loop_nash_lq(&lin, &benchmark_parameters(), &benchmark_initial_state(), 60).unwrap();
        let demos = DemonstrationSet::single(&game, traj).unwrap();
        (game, demos)
    }

    fn opts(samples: usize, seed: u64) -> MatchingOptions {
        MatchingOptions {
            scope: Scope::Player(1),
            variant: DVariant::Plain,
            inverse_temperature: 1.0,
            sample_count: samples,
            seed,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (game, demos) = setup();
        let theta = benchmark_parameters();
        let a = feature_matching_report(&theta, &demos, &game, &opts(300, 4)).unwrap();
        let b = feature_matching_report(&theta, &demos, &game, &opts(300, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swapped_players_mismatch() {
        let (game, demos) = setup();
        let truth = benchmark_parameters();
        let swapped = CostParameters {
            theta: vec![truth.theta[1].clone(), truth.theta[0].clone()],
        };
        let r = feature_matching_report(&swapped, &demos, &game, &opts(2000, 1)).unwrap();
        assert!(r.mismatch[0].iter().any(|&m| m > 0.05), "{:?}", r.mismatch);
    }

    #[test]
    fn error_shrinks_with_samples() {
        // Monte-Carlo error of the sampled mean against its own large-sample limit.
        let (game, demos) = setup();
        let theta = benchmark_parameters();
        let reference = feature_matching_report(&theta, &demos, &game, &opts(100_000, 99)).unwrap();
        let spread = |n: usize| {
            (0..4)
                .map(|s| {
                    let r = feature_matching_report(&theta, &demos, &game, &opts(n, s)).unwrap();
                    r.sampled[0]
                        .iter()
                        .zip(&reference.sampled[0])
                        .map(|(a, b)| ((a - b) / b).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                .sqrt()
        };
        let (small, large) = (spread(1_000), spread(10_000));
        // Expected ratio √10 ≈ 3.2; allow generous Monte-Carlo slack.
        assert!(small / large > 1.8, "{small} vs {large}");
    }
}
