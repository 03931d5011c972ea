use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{Dynamics, Feature, FeatureDerivatives, GameDefinition, StepJacobian, StepLayout};

/// A state-feedback control law `u = γ^(k)(x)`.
pub trait FeedbackLaw: Send + Sync + fmt::Debug {
    fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;

    /// `∂γ^(k)/∂x`.
    fn jacobian(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64>;

    fn is_time_invariant(&self) -> bool {
        true
    }
}

/// Time-invariant `u = K x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedback {
    pub gain: DMatrix<f64>,
}

impl LinearFeedback {
    pub fn new(gain: DMatrix<f64>) -> Self {
        Self { gain }
    }
}

impl FeedbackLaw for LinearFeedback {
    fn control(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x
    }

    fn jacobian(&self, _k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.gain.clone()
    }
}

/// `u^(k) = K^(k) x^(k)`; the last gain is held past the end of the schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledFeedback {
    pub gains: Vec<DMatrix<f64>>,
}

impl ScheduledFeedback {
    pub fn new(gains: Vec<DMatrix<f64>>) -> Self {
        assert!(!gains.is_empty(), "a gain schedule needs at least one gain");
        Self { gains }
    }

    fn gain(&self, k: usize) -> &DMatrix<f64> {
        &self.gains[k.min(self.gains.len() - 1)]
    }
}

impl FeedbackLaw for ScheduledFeedback {
    fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.gain(k) * x
    }

    fn jacobian(&self, k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.gain(k).clone()
    }

    fn is_time_invariant(&self) -> bool {
        self.gains.windows(2).all(|w| w[0] == w[1])
    }
}

type Laws = Arc<Vec<Option<Arc<dyn FeedbackLaw>>>>;

fn full_controls(laws: &Laws, player: usize, k: usize, x: &DVector<f64>, own: &DVector<f64>) -> Vec<DVector<f64>> {
    laws.iter()
        .enumerate()
        .map(|(j, law)| match law {
            _ if j == player => own.clone(),
            Some(law) => law.control(k, x),
            None => unreachable!("checked on construction"),
        })
        .collect()
}

#[derive(Debug)]
struct ClosedLoopDynamics {
    inner: Arc<dyn Dynamics>,
    laws: Laws,
    player: usize,
}

impl Dynamics for ClosedLoopDynamics {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn control_dims(&self) -> Vec<usize> {
        vec![self.inner.control_dims()[self.player]]
    }

    fn step(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        self.inner.step(k, x, &full_controls(&self.laws, self.player, k, x, &u[0]))
    }

    fn step_jacobian(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> StepJacobian {
        let full = full_controls(&self.laws, self.player, k, x, &u[0]);
        let inner = self.inner.step_jacobian(k, x, &full);
        let mut wrt_state = inner.wrt_state;
        for (j, law) in self.laws.iter().enumerate() {
            if j != self.player {
                let gamma = law.as_ref().expect("checked on construction").jacobian(k, x);
                wrt_state += &inner.wrt_controls[j] * gamma;
            }
        }
        StepJacobian {
            next: inner.next,
            wrt_state,
            wrt_controls: vec![inner.wrt_controls[self.player].clone()],
        }
    }
}

/// `η(x, u_i) = η_orig(x, γ_1(x), …, u_i, …, γ_N(x))`.
#[derive(Debug)]
struct ClosedLoopFeature {
    inner: Arc<dyn Feature>,
    laws: Laws,
    player: usize,
    inner_layout: StepLayout,
    outer_layout: StepLayout,
}

impl Feature for ClosedLoopFeature {
    fn label(&self) -> String {
        self.inner.label()
    }

    fn value(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        self.inner.value(x, &full_controls(&self.laws, self.player, 0, x, &u[0]))
    }

    fn derivatives(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> FeatureDerivatives {
        // Features carry no time index, so laws are read at k = 0. Time-varying
        // laws are only admitted when the features ignore the other controls.
        let full = full_controls(&self.laws, self.player, 0, x, &u[0]);
        let d = self.inner.derivatives(x, &full);
        let n = self.inner_layout.state_dim;
        // T = ∂z_inner/∂z_outer
        let mut t = DMatrix::zeros(self.inner_layout.len(), self.outer_layout.len());
        t.view_mut((0, 0), (n, n)).fill_with_identity();
        for (j, law) in self.laws.iter().enumerate() {
            let off = self.inner_layout.control_offset(j);
            let mj = self.inner_layout.control_dims[j];
            if j == self.player {
                let out_off = self.outer_layout.control_offset(0);
                t.view_mut((off, out_off), (mj, mj)).fill_with_identity();
            } else {
                let gamma = law.as_ref().expect("checked on construction").jacobian(0, x);
                t.view_mut((off, 0), (mj, n)).copy_from(&gamma);
            }
        }
        FeatureDerivatives {
            gradient: t.transpose() * d.gradient,
            hessian: t.transpose() * d.hessian * &t,
        }
    }
}

/// Rewrite an N-player game as the single-player problem of `player` with all
/// other players following the supplied feedback laws. `laws[player]` is
/// ignored; every other entry must be present.
pub fn closed_loop_dynamics(
    game: &GameDefinition,
    laws: &[Option<Arc<dyn FeedbackLaw>>],
    player: usize,
) -> Result<GameDefinition> {
    game.check_player(player)?;
    if laws.len() != game.player_count() {
        return Err(Error::Dimension {
            what: "feedback laws".into(),
            expected: game.player_count(),
            actual: laws.len(),
        });
    }
    let n = game.state_dim();
    let probe = DVector::zeros(n);
    for (j, law) in laws.iter().enumerate() {
        if j == player {
            continue;
        }
        let law = law.as_ref().ok_or(Error::MissingLaw { player: j + 1 })?;
        let gamma = law.jacobian(0, &probe);
        if gamma.nrows() != game.control_dim(j) || gamma.ncols() != n {
            return Err(Error::Dimension {
                what: format!("feedback gain rows of player {}", j + 1),
                expected: game.control_dim(j),
                actual: gamma.nrows(),
            });
        }
    }
    if laws.iter().flatten().any(|l| !l.is_time_invariant()) {
        let probe_x = DVector::from_element(n, 0.5);
        let probe_u: Vec<DVector<f64>> = game.control_dims().iter().map(|&m| DVector::from_element(m, 0.5)).collect();
        let layout = game.layout();
        let coupled = game.features(player).iter().any(|f| {
            let d = f.derivatives(&probe_x, &probe_u);
            (0..game.player_count())
                .filter(|&j| j != player)
                .any(|j| (0..game.control_dim(j)).any(|c| d.gradient[layout.control_offset(j) + c] != 0.0))
        });
        if coupled {
            return Err(Error::Unsupported(
                "time-varying feedback laws with features that depend on other players' controls".into(),
            ));
        }
    }
    let laws: Laws = Arc::new(laws.to_vec());
    let dynamics = Arc::new(ClosedLoopDynamics {
        inner: game.dynamics().clone(),
        laws: laws.clone(),
        player,
    });
    let inner_layout = game.layout();
    let outer_layout = StepLayout::new(n, &[game.control_dim(player)]);
    let features: Vec<Arc<dyn Feature>> = game
        .features(player)
        .iter()
        .map(|f| {
            Arc::new(ClosedLoopFeature {
                inner: f.clone(),
                laws: laws.clone(),
                player,
                inner_layout: inner_layout.clone(),
                outer_layout: outer_layout.clone(),
            }) as Arc<dyn Feature>
        })
        .collect();
    GameDefinition::new(
        format!("{} (closed loop, player {})", game.name(), player + 1),
        dynamics,
        vec![features],
        game.horizon(),
        game.dt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ball_on_beam_lq_game, BallOnBeamParams};

    #[test]
    fn missing_law_is_named() {
        let (game, _) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 10, 0.02).unwrap();
        let err = closed_loop_dynamics(&game, &[None, None], 0).unwrap_err();
        assert!(matches!(err, Error::MissingLaw { player: 2 }));
    }

    #[test]
    fn closed_loop_step_matches_substitution() {
        let (game, _) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 10, 0.02).unwrap();
        let k2 = DMatrix::from_row_slice(1, 4, &[0.3, -0.1, 0.5, 0.2]);
        let laws: Vec<Option<Arc<dyn FeedbackLaw>>> = vec![None, Some(Arc::new(LinearFeedback::new(k2.clone())))];
        let cl = closed_loop_dynamics(&game, &laws, 0).unwrap();
        let x = DVector::from_vec(vec![0.5, 0.1, -0.2, 0.3]);
        let u1 = DVector::from_element(1, 0.7);
        let direct = game.dynamics().step(0, &x, &[u1.clone(), &k2 * &x]);
        assert_eq!(cl.dynamics().step(0, &x, std::slice::from_ref(&u1)), direct);

        let jac = cl.dynamics().step_jacobian(0, &x, std::slice::from_ref(&u1));
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = x.clone();
            xp[c] += h;
            let mut xm = x.clone();
            xm[c] -= h;
            let fd = (cl.dynamics().step(0, &xp, std::slice::from_ref(&u1)) - cl.dynamics().step(0, &xm, std::slice::from_ref(&u1))) / (2.0 * h);
            assert!((jac.wrt_state.column(c) - fd).amax() < 1e-8);
        }

        // -x1² does not depend on the other player.
        let f = &cl.features(0)[0];
        assert_eq!(f.value(&x, std::slice::from_ref(&u1)), -0.25);
    }

    #[test]
    fn closed_loop_feature_chain_rule() {
        let (game, _) = ball_on_beam_lq_game(&BallOnBeamParams::default(), 10, 0.02).unwrap();
        // Player 2's features, with player 1 in feedback.
        let k1 = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, -0.5, 0.25]);
        let laws: Vec<Option<Arc<dyn FeedbackLaw>>> = vec![Some(Arc::new(LinearFeedback::new(k1))), None];
        let cl = closed_loop_dynamics(&game, &laws, 1).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.4, 0.1, 0.3]);
        let u = [DVector::from_element(1, -0.6)];
        for f in cl.features(0) {
            let d = f.derivatives(&x, &u);
            let h = 1e-5;
            for c in 0..5 {
                let (mut xp, mut up) = (x.clone(), u[0].clone());
                let (mut xm, mut um) = (x.clone(), u[0].clone());
                if c < 4 {
                    xp[c] += h;
                    xm[c] -= h;
                } else {
                    up[0] += h;
                    um[0] -= h;
                }
                let fd = (f.value(&xp, &[up]) - f.value(&xm, &[um])) / (2.0 * h);
                assert!((d.gradient[c] - fd).abs() < 1e-7, "{} {c}", f.label());
            }
        }
    }
}
