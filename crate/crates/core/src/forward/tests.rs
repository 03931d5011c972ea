use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dynamics::{
    ball_on_beam_game, ball_on_beam_lq_game, benchmark_initial_state, benchmark_parameters, lq_game, BallOnBeamParams,
    LinearGameMatrices,
};
use crate::game::{global_cost, rollout, trajectory_cost};

fn rms(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let game = ball_on_beam_game(&BallOnBeamParams::default(), 10, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let controls: Vec<DMatrix<f64>> = (0..2).map(|_| DMatrix::from_fn(1, 10, |_, _| rng.random_range(-1.0..1.0))).collect();
        let x1 = DVector::from_fn(4, |_, _| rng.random_range(-0.5..0.5));
        let theta = CostParameters {
            theta: (0..2).map(|_| (0..5).map(|_| rng.random_range(0.5..5.0)).collect()).collect(),
        };
        let traj = rollout(&game, &controls, &x1).unwrap();
        for i in 0..2 {
            let grads = adjoint_gradient(&game, &traj, &theta, i).unwrap();
            let h = 1e-6;
            let mut an = Vec::new();
            let mut fd = Vec::new();
            for k in 0..10 {
                let mut plus = controls.clone();
                plus[i][(0, k)] += h;
                let mut minus = controls.clone();
                minus[i][(0, k)] -= h;
                let jp = trajectory_cost(&rollout(&game, &plus, &x1).unwrap(), &theta, &game, i).unwrap();
                let jm = trajectory_cost(&rollout(&game, &minus, &x1).unwrap(), &theta, &game, i).unwrap();
                fd.push((jp - jm) / (2.0 * h));
                an.push(grads[i][(0, k)]);
            }
            let (an, fd) = (DVector::from_vec(an), DVector::from_vec(fd));
            assert!((&an - &fd).norm() <= 1e-5 * fd.norm(), "{}", (&an - &fd).norm() / fd.norm());
        }
    }
}

#[test]
fn cooperative_from_origin_stays_at_rest() {
    let game = ball_on_beam_game(&BallOnBeamParams::default(), 30, 0.02).unwrap();
    let (traj, report) = solve_cooperative(&game, &benchmark_parameters(), &DVector::zeros(4), &SolverOptions::default()).unwrap();
    assert!(report.converged);
    assert!(traj.controls.iter().all(|c| c.amax() == 0.0));
    assert_eq!(global_cost(&traj, &benchmark_parameters(), &game).unwrap(), 0.0);
}

#[test]
fn scalar_two_step_open_loop_nash() {
    // Ā = 1, B̄_i = 1, Q_i = R_i = 1: stationarity gives u_i = -x/3.
    let lin = LinearGameMatrices::new(
        DMatrix::zeros(1, 1),
        vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
        1.0,
    )
    .unwrap();
    let theta = CostParameters {
        theta: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
    };
    let (traj, _) = solve_open_loop_nash_lq(&lin, &theta, &DVector::from_element(1, 1.0), 2).unwrap();
    for i in 0..2 {
        assert!((traj.controls[i][(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(traj.controls[i][(0, 1)], 0.0);
    }
    // Brute force over a grid around the candidate: no unilateral improvement.
    let game = lq_game("scalar", &lin, 2).unwrap();
    let x1 = DVector::from_element(1, 1.0);
    let j1 = trajectory_cost(&traj, &theta, &game, 0).unwrap();
    for step in -50..=50 {
        let mut c = traj.controls.clone();
        c[0][(0, 0)] += step as f64 * 1e-3;
        let alt = trajectory_cost(&rollout(&game, &c, &x1).unwrap(), &theta, &game, 0).unwrap();
        assert!(alt >= j1 - 1e-15);
    }
}

#[test]
fn lq_open_loop_nash_solves_the_stationarity_system() {
    let (game, lin) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 60, 0.02).unwrap();
    let theta = benchmark_parameters();
    let x1 = benchmark_initial_state();
    let (traj, _) = solve_open_loop_nash_lq(&lin, &theta, &x1, 60).unwrap();
    let residual = nash_residual(&game, &traj, &theta).unwrap();
    assert!(residual.norm() < 1e-10, "{}", residual.norm());
}

#[test]
fn generic_open_loop_nash_matches_lq_recursion() {
    let (game, lin) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 80, 0.02).unwrap();
    let theta = benchmark_parameters();
    let x1 = benchmark_initial_state();
    let (lq, _) = solve_open_loop_nash_lq(&lin, &theta, &x1, 80).unwrap();
    let (generic, report) = solve_open_loop_nash(&game, &theta, &x1, &SolverOptions::default()).unwrap();
    assert!(report.converged, "{report:?}");
    for i in 0..2 {
        assert!(rms(&lq.controls[i], &generic.controls[i]) < 1e-6);
    }
}

#[test]
fn single_player_nash_is_optimal_control() {
    let lin = LinearGameMatrices::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -0.5]),
        vec![DMatrix::from_column_slice(2, 1, &[0.0, 1.0])],
        0.05,
    )
    .unwrap();
    let game = lq_game("single", &lin, 40).unwrap();
    let theta = CostParameters {
        theta: vec![vec![3.0, 1.0, 0.5]],
    };
    let x1 = DVector::from_vec(vec![1.0, 0.0]);
    let (nash, _) = solve_open_loop_nash_lq(&lin, &theta, &x1, 40).unwrap();
    let (coop, _) = solve_cooperative(&game, &theta, &x1, &SolverOptions::default()).unwrap();
    let (_, fb, _) = solve_feedback_nash_lq(&lin, &theta, 40, FeedbackHorizon::Finite, &x1, &SolverOptions::default()).unwrap();
    assert!(rms(&nash.controls[0], &coop.controls[0]) < 1e-9);
    assert!(rms(&fb.controls[0], &coop.controls[0]) < 1e-9);
}

/// Stationary LQR gain by plain Riccati iteration.
fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = q.clone();
    for _ in 0..20_000 {
        let m = r + b.transpose() * &p * b;
        let k = -m.clone().try_inverse().unwrap() * b.transpose() * &p * a;
        let f = a + b * &k;
        p = q + k.transpose() * r * &k + f.transpose() * &p * &f;
    }
    let m = r + b.transpose() * &p * b;
    -m.try_inverse().unwrap() * b.transpose() * &p * a
}

#[test]
fn feedback_with_inert_second_player_is_lqr() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.5, 0.0]);
    let b1 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let lin = LinearGameMatrices::new(a, vec![b1, DMatrix::zeros(2, 1)], 0.1).unwrap();
    let theta = CostParameters {
        theta: vec![vec![2.0, 1.0, 0.5], vec![1.0, 1.0, 1.0]],
    };
    let (gains, _, _) = solve_feedback_nash_lq(
        &lin,
        &theta,
        50,
        FeedbackHorizon::Stationary,
        &DVector::from_vec(vec![1.0, 0.0]),
        &SolverOptions::default(),
    )
    .unwrap();
    let weights = LqWeights::from_parameters(&lin, &theta).unwrap();
    let expected = lqr_gain(&lin.a_d, &lin.b_d[0], &weights.q[0], &weights.r[0]);
    assert!((gains.gain(0, 0) - &expected).amax() < 1e-8);
    assert!(gains.gain(1, 0).amax() < 1e-12);
}

#[test]
fn scalar_symmetric_feedback_game_matches_fixed_point() {
    // x⁺ = a x + b(u1 + u2), both players weight q x² + r u_i².
    let (a, b, q, r) = (1.1_f64, 0.5_f64, 1.0_f64, 2.0_f64);
    let lin = LinearGameMatrices::new(
        DMatrix::from_element(1, 1, a.ln()),
        vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
        1.0,
    )
    .unwrap();
    let bd = lin.b_d[0][(0, 0)];
    assert!((lin.a_d[(0, 0)] - a).abs() < 1e-14);
    let _ = b;
    let theta = CostParameters {
        theta: vec![vec![q, r], vec![q, r]],
    };
    let (gains, _, _) = solve_feedback_nash_lq(
        &lin,
        &theta,
        10,
        FeedbackHorizon::Stationary,
        &DVector::from_element(1, 1.0),
        &SolverOptions::default(),
    )
    .unwrap();
    // Symmetric stationary point: k = -b p a / (r + 2b²p), p = q + r k² + (a + 2bk)² p.
    let residual = |p: f64| {
        let k = -bd * p * a / (r + 2.0 * bd * bd * p);
        q + r * k * k + (a + 2.0 * bd * k).powi(2) * p - p
    };
    let (mut lo, mut hi) = (q, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(lo) * residual(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let k = -bd * p * a / (r + 2.0 * bd * bd * p);
    assert!((gains.gain(0, 0)[(0, 0)] - k).abs() < 1e-9);
    assert!((gains.gain(1, 0)[(0, 0)] - k).abs() < 1e-9);
}

#[test]
fn unstabilizable_game_reports_divergence_or_instability() {
    // Unstable mode the inputs cannot reach.
    let lin = LinearGameMatrices::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        vec![DMatrix::from_column_slice(2, 1, &[0.0, 1.0])],
        0.1,
    )
    .unwrap();
    let theta = CostParameters {
        theta: vec![vec![1.0, 1.0, 1.0]],
    };
    let opts = SolverOptions {
        riccati_max_iterations: 500,
        ..SolverOptions::default()
    };
    let err = solve_feedback_nash_lq(&lin, &theta, 10, FeedbackHorizon::Stationary, &DVector::from_vec(vec![1.0, 1.0]), &opts)
        .unwrap_err();
    assert!(
        matches!(err, Error::RiccatiDivergence { .. } | Error::Unstable(_)),
        "{err:?}"
    );
}

#[test]
fn feedback_rollout_through_closed_loop_reproduces_joint_trajectory() {
    let (game, lin) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 100, 0.02).unwrap();
    let theta = benchmark_parameters();
    let x1 = benchmark_initial_state();
    let (gains, traj, _) =
        solve_feedback_nash_lq(&lin, &theta, 100, FeedbackHorizon::Stationary, &x1, &SolverOptions::default()).unwrap();
    for i in 0..2 {
        let closed = crate::dynamics::closed_loop_dynamics(&game, &gains.laws(), i).unwrap();
        let own = rollout(&closed, &[traj.controls[i].clone()], &x1).unwrap();
        assert!((&own.states - &traj.states).amax() < 1e-14);
    }
}

#[test]
fn lq_nash_solutions_are_certified_and_cooperation_is_not() {
    let (game, lin) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 120, 0.02).unwrap();
    let theta = benchmark_parameters();
    let x1 = benchmark_initial_state();
    let opts = SolverOptions::default();
    let (ol, _) = solve_open_loop_nash_lq(&lin, &theta, &x1, 120).unwrap();
    assert!(check_nash(&ol, &game, &theta, NashConcept::OpenLoop, 1e-6, &opts).unwrap().certified);
    let (gains, fb, _) = solve_feedback_nash_lq(&lin, &theta, 120, FeedbackHorizon::Finite, &x1, &opts).unwrap();
    assert!(check_nash(&fb, &game, &theta, NashConcept::Feedback(&gains), 1e-6, &opts).unwrap().certified);
    let (coop, _) = solve_cooperative(&game, &theta, &x1, &opts).unwrap();
    let report = check_nash(&coop, &game, &theta, NashConcept::OpenLoop, 1e-6, &opts).unwrap();
    assert!(!report.certified);
    assert!(report.players.iter().any(|p| p.improvement > 1e-3));
}

#[test]
fn cooperative_solution_is_scale_invariant_and_locally_optimal() {
    let game = ball_on_beam_game(&BallOnBeamParams::default(), 60, 0.02).unwrap();
    let theta = benchmark_parameters();
    let x1 = benchmark_initial_state();
    let opts = SolverOptions::default();
    let (base, report) = solve_cooperative(&game, &theta, &x1, &opts).unwrap();
    assert!(report.converged, "{report:?}");
    for c in [0.5, 3.0] {
        let (scaled, r) = solve_cooperative(&game, &theta.scaled(c), &x1, &opts).unwrap();
        assert!(r.converged);
        for i in 0..2 {
            assert!(rms(&base.controls[i], &scaled.controls[i]) < 1e-7);
        }
    }
    let j0 = global_cost(&base, &theta, &game).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let mut delta: Vec<DMatrix<f64>> = (0..2).map(|_| DMatrix::from_fn(1, 60, |_, _| rng.random_range(-1.0..1.0))).collect();
        let norm = delta.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
        for d in &mut delta {
            *d *= 1e-3 / norm;
        }
        let moved: Vec<DMatrix<f64>> = base.controls.iter().zip(&delta).map(|(u, d)| u + d).collect();
        let j = global_cost(&rollout(&game, &moved, &x1).unwrap(), &theta, &game).unwrap();
        assert!(j >= j0 - 1e-8);
    }
}

#[test]
fn concept_names() {
    for c in [Concept::Cooperative, Concept::OpenLoopNash, Concept::FeedbackNash] {
        assert_eq!(c.to_string().parse::<Concept>().unwrap(), c);
    }
}
