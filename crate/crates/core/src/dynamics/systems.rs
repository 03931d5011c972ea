use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{linearize_ball_on_beam, BallOnBeam, BallOnBeamParams, LinearGameMatrices, Rk4Dynamics};
use crate::error::{Error, Result};
use crate::game::{regulation_features, CostParameters, Feature, GameDefinition};

/// 5 s at 50 Hz, both ends included.
pub const DEFAULT_HORIZON: usize = 251;
pub const DEFAULT_DT: f64 = 0.02;

/// Ball displaced by half a metre, everything else at rest.
pub fn benchmark_initial_state() -> DVector<f64> {
    DVector::from_vec(vec![0.5, 0.0, 0.0, 0.0])
}

/// `θ_1* = [20, 1, 1, 1, 2]`, `θ_2* = [1, 1, 10, 1, 1]`.
pub fn benchmark_parameters() -> CostParameters {
    CostParameters {
        theta: vec![vec![20.0, 1.0, 1.0, 1.0, 2.0], vec![1.0, 1.0, 10.0, 1.0, 1.0]],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "ball-on-beam")]
    BallOnBeam,
    #[serde(rename = "ball-on-beam-lq")]
    BallOnBeamLq,
}

impl SystemKind {
    pub fn is_linear(self) -> bool {
        matches!(self, Self::BallOnBeamLq)
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ball-on-beam" => Ok(Self::BallOnBeam),
            "ball-on-beam-lq" => Ok(Self::BallOnBeamLq),
            other => Err(Error::UnknownSystem(other.to_string())),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BallOnBeam => "ball-on-beam",
            Self::BallOnBeamLq => "ball-on-beam-lq",
        })
    }
}

fn regulation_sets(game_layout: &crate::game::StepLayout, players: usize) -> Vec<Vec<Arc<dyn Feature>>> {
    (0..players)
        .map(|i| {
            regulation_features(game_layout, i)
                .into_iter()
                .map(|f| Arc::new(f) as Arc<dyn Feature>)
                .collect()
        })
        .collect()
}

/// Nonlinear ball-on-beam game, RK4-discretized, with regulation features
/// `-[x1², x2², x3², x4², u_i²]` for each player.
pub fn ball_on_beam_game(params: &BallOnBeamParams, horizon: usize, dt: f64) -> Result<GameDefinition> {
    params.validate()?;
    let dynamics = Arc::new(Rk4Dynamics::new(Arc::new(BallOnBeam::new(*params)), dt));
    let layout = crate::game::StepLayout::new(4, &[1, 1]);
    GameDefinition::new("ball-on-beam", dynamics, regulation_sets(&layout, 2), horizon, dt)
}

/// LQ game on exactly discretized matrices with regulation features.
pub fn lq_game(name: &str, lin: &LinearGameMatrices, horizon: usize) -> Result<GameDefinition> {
    let dims = lin.control_dims();
    let layout = crate::game::StepLayout::new(lin.state_dim(), &dims);
    GameDefinition::new(
        name,
        Arc::new(lin.discrete_dynamics()),
        regulation_sets(&layout, dims.len()),
        horizon,
        lin.dt,
    )
}

/// Linearized ball-on-beam game plus its matrices.
pub fn ball_on_beam_lq_game(
    params: &BallOnBeamParams,
    horizon: usize,
    dt: f64,
) -> Result<(GameDefinition, LinearGameMatrices)> {
    let lin = linearize_ball_on_beam(params, dt)?;
    let game = lq_game("ball-on-beam-lq", &lin, horizon)?;
    Ok((game, lin))
}

/// Look up a built-in system; the matrices are returned for linear systems.
pub fn builtin_game(
    kind: SystemKind,
    params: &BallOnBeamParams,
    horizon: usize,
    dt: f64,
) -> Result<(GameDefinition, Option<LinearGameMatrices>)> {
    match kind {
        SystemKind::BallOnBeam => Ok((ball_on_beam_game(params, horizon, dt)?, None)),
        SystemKind::BallOnBeamLq => {
            let (game, lin) = ball_on_beam_lq_game(params, horizon, dt)?;
            Ok((game, Some(lin)))
        }
    }
}
