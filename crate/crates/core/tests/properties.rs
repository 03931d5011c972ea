use invgame_core::dynamics::{ball_on_beam_game, ball_on_beam_lq_game, BallOnBeamParams};
use invgame_core::estimators::{minimize, BfgsOptions, FixedWeight};
use invgame_core::evaluation::{add_noise, nmae, NoiseSpec, Snr};
use invgame_core::game::{
    global_cost, global_feature_count, rollout, split_parameters, stack_global, CostParameters, GameDefinition,
    Trajectory,
};
use invgame_core::io::{trajectory_from_csv, trajectory_to_csv};
use invgame_core::likelihood::{control_jacobian, cost_gradient_g, cost_hessian, DVariant, Scope};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const HORIZON: usize = 8;

fn game() -> GameDefinition {
    ball_on_beam_game(&BallOnBeamParams::default(), HORIZON, 0.02).unwrap()
}

fn weights() -> impl Strategy<Value = CostParameters> {
    (
        prop::collection::vec(-5.0..5.0f64, 5),
        prop::collection::vec(-5.0..5.0f64, 5),
    )
        .prop_map(|(a, b)| CostParameters::new(vec![a, b]).unwrap())
}

/// A feasible trajectory from bounded random controls.
fn trajectory() -> impl Strategy<Value = Trajectory> {
    (
        prop::collection::vec(-1.0..1.0f64, 2 * HORIZON),
        prop::collection::vec(-0.3..0.3f64, 4),
    )
        .prop_map(|(u, x1)| {
            let g = game();
            let controls = vec![
                DMatrix::from_row_slice(1, HORIZON, &u[..HORIZON]),
                DMatrix::from_row_slice(1, HORIZON, &u[HORIZON..]),
            ];
            rollout(&g, &controls, &DVector::from_vec(x1)).unwrap()
        })
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * (1.0 + a.amax().max(b.amax()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stack_then_split_is_identity(theta in weights()) {
        let g = game();
        let (stacked, _) = stack_global(&theta);
        prop_assert_eq!(stacked.len(), 10);
        prop_assert_eq!(split_parameters(&stacked, &g).unwrap(), theta);
    }

    #[test]
    fn cost_is_linear_in_weights(theta in weights(), traj in trajectory(), c in -3.0..3.0f64) {
        let g = game();
        let (stacked, _) = stack_global(&theta);
        let mu = global_feature_count(&traj, &g).unwrap();
        let j = global_cost(&traj, &theta, &g).unwrap();
        prop_assert!((j + stacked.dot(&mu)).abs() <= 1e-10 * (1.0 + j.abs()));
        let jc = global_cost(&traj, &theta.scaled(c), &g).unwrap();
        prop_assert!((jc - c * j).abs() <= 1e-10 * (1.0 + jc.abs()));
    }

    #[test]
    fn gradient_and_hessian_are_linear_in_weights(a in weights(), b in weights(), traj in trajectory()) {
        let g = game();
        let sum = CostParameters::new(
            a.theta.iter().zip(&b.theta).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect(),
        ).unwrap();
        for scope in [Scope::Joint, Scope::Player(0), Scope::Player(1)] {
            let jac = control_jacobian(&g, &traj, scope, DVariant::Plain).unwrap();
            let h = |t: &CostParameters| cost_hessian(&traj, t, &g, &jac).unwrap();
            let gr = |t: &CostParameters| DMatrix::from_column_slice(jac.dim(), 1, cost_gradient_g(&traj, t, &g, &jac).unwrap().as_slice());
            prop_assert!(rel_close(&h(&sum), &(h(&a) + h(&b)), 1e-11));
            prop_assert!(rel_close(&gr(&sum), &(gr(&a) + gr(&b)), 1e-11));
            let hs = h(&sum);
            prop_assert_eq!(&hs, &hs.transpose());
        }
    }

    #[test]
    fn sensitivities_are_causal(traj in trajectory()) {
        let g = game();
        for (variant, strict) in [(DVariant::Plain, false), (DVariant::Trapezoid, true)] {
            let jac = control_jacobian(&g, &traj, Scope::Joint, variant).unwrap();
            for pos in 0..2 {
                for k1 in 0..HORIZON {
                    for k2 in 0..HORIZON {
                        let anticausal = if strict { k2 < k1 } else { k2 <= k1 };
                        if anticausal {
                            prop_assert!(jac.block(pos, k1, k2).iter().all(|&v| v == 0.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nmae_is_scale_invariant(traj in trajectory(), shift in -0.5..0.5f64, c in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64]) {
        let mut other = traj.clone();
        other.states.add_scalar_mut(shift);
        for u in &mut other.controls {
            u.add_scalar_mut(-shift);
        }
        let scale = |t: &Trajectory| Trajectory::new(&t.states * c, t.controls.iter().map(|u| u * c).collect()).unwrap();
        let base = nmae(&other, &traj).unwrap();
        let scaled = nmae(&scale(&other), &scale(&traj)).unwrap();
        prop_assert!((base.e_x - scaled.e_x).abs() <= 1e-12 * (1.0 + base.e_x));
        prop_assert!((base.e_u - scaled.e_u).abs() <= 1e-12 * (1.0 + base.e_u));
        let same = nmae(&traj, &traj).unwrap();
        prop_assert_eq!((same.e_x, same.e_u), (0.0, 0.0));
    }

    #[test]
    fn noise_is_scale_equivariant(traj in trajectory(), db in 5.0..60.0f64, seed in any::<u64>(), c in 0.01..100.0f64) {
        let spec = NoiseSpec { snr: Snr::Db(db), seed };
        let scale = |t: &Trajectory| Trajectory::new(&t.states * c, t.controls.iter().map(|u| u * c).collect()).unwrap();
        let a = scale(&add_noise(&traj, &spec));
        let b = add_noise(&scale(&traj), &spec);
        prop_assert!(rel_close(&a.states, &b.states, 1e-12));
        prop_assert_eq!(add_noise(&traj, &spec), add_noise(&traj, &spec));
    }

    #[test]
    fn csv_round_trip_is_bit_exact(
        values in prop::collection::vec(finite(), 3 * 7),
        dt in 1e-4..1.0f64,
    ) {
        let states = DMatrix::from_row_slice(3, 7, &values[..]);
        let traj = Trajectory::new(states.rows(0, 2).into_owned(), vec![states.rows(2, 1).into_owned()]).unwrap();
        let back = trajectory_from_csv(&trajectory_to_csv(&traj, dt), 2, &[1]).unwrap();
        let bits = |t: &Trajectory| t.states.iter().chain(t.controls[0].iter()).map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&traj));
    }

    #[test]
    fn snr_display_round_trips(db in -50.0..120.0f64) {
        for snr in [Snr::Db(db), Snr::Infinite] {
            prop_assert_eq!(snr.to_string().parse::<Snr>().unwrap(), snr);
        }
    }

    #[test]
    fn fixed_weight_spec_round_trips(player in 1usize..5, index in 1usize..9, value in -1e6..1e6f64) {
        let text = format!("player={player},index={index},value={value}");
        prop_assert_eq!(text.parse::<FixedWeight>().unwrap(), FixedWeight { player, index, value });
    }

    #[test]
    fn bfgs_finds_the_minimum_of_convex_quadratics(
        entries in prop::collection::vec(-1.0..1.0f64, 16),
        target in prop::collection::vec(-10.0..10.0f64, 4),
    ) {
        let m = DMatrix::from_row_slice(4, 4, &entries);
        let a = &m * m.transpose() + DMatrix::identity(4, 4) * 0.5;
        let x_star = DVector::from_vec(target);
        let f = |x: &DVector<f64>| -> invgame_core::Result<(f64, Option<DVector<f64>>)> {
            let r = x - &x_star;
            let ar = &a * &r;
            Ok((0.5 * r.dot(&ar), Some(ar)))
        };
        let out = minimize(f, DVector::zeros(4), &BfgsOptions { tol: 1e-10, max_iterations: 200 }).unwrap();
        prop_assert!(out.converged, "{:?}", out.message);
        prop_assert!((&out.x - &x_star).amax() < 1e-8);
    }
}

#[test]
fn linear_model_has_state_independent_sensitivities() {
    // For the LQ game, D does not depend on the trajectory it is evaluated on.
    let (g, _) = ball_on_beam_lq_game(&BallOnBeamParams::default(), HORIZON, 0.02).unwrap();
    let mk = |s: f64| {
        let controls = vec![DMatrix::from_element(1, HORIZON, s), DMatrix::from_element(1, HORIZON, -s)];
        rollout(&g, &controls, &DVector::from_element(4, s)).unwrap()
    };
    let a = control_jacobian(&g, &mk(0.1), Scope::Joint, DVariant::Plain).unwrap();
    let b = control_jacobian(&g, &mk(2.0), Scope::Joint, DVariant::Plain).unwrap();
    assert_eq!(a.matrix(), b.matrix());
}
