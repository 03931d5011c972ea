//! Dynamic games, trajectories, feature counts and parameter stacking.
//!
//! Time indices are zero-based throughout: column `k` of a trajectory holds
//! `x^(k+1)` and `u_i^(k+1)` in one-based notation. The per-step cost of a
//! player is `-θ_iᵀη_i(x, u_1, …, u_N)`, so `J_i = -θ_iᵀμ_i`.

mod cost;
mod extended;
mod feature;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use cost::{
    block_dot, feature_count, feature_count_range, global_cost, global_feature_count, split_parameters,
    stack_global, trajectory_cost, CostParameters, FeatureOrder,
};
pub use extended::{build_extended_features, ExtendedFeatureMap, FeatureEquality, FeatureRef, PairingTable};
pub use feature::{regulation_features, Feature, FeatureDerivatives, SquaredTerm, StepLayout, Var};
pub use trajectory::{DemonstrationSet, Trajectory};

/// Next state and first-order sensitivities of one discrete step.
#[derive(Clone, Debug)]
pub struct StepJacobian {
    pub next: DVector<f64>,
    /// `∂x^(k+1)/∂x^(k)`, n × n.
    pub wrt_state: DMatrix<f64>,
    /// `∂x^(k+1)/∂u_i^(k)`, n × m_i per player.
    pub wrt_controls: Vec<DMatrix<f64>>,
}

/// Discrete-time dynamics `x^(k+1) = f^(k)(x^(k), u_1^(k), …, u_N^(k))`.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;

    fn control_dims(&self) -> Vec<usize>;

    fn step(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64>;

    fn step_jacobian(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> StepJacobian;
}

/// An N-player dynamic game with feature-linear costs.
#[derive(Clone)]
pub struct GameDefinition {
    name: String,
    dynamics: Arc<dyn Dynamics>,
    features: Vec<Vec<Arc<dyn Feature>>>,
    horizon: usize,
    dt: f64,
}

impl fmt::Debug for GameDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameDefinition")
            .field("name", &self.name)
            .field("players", &self.player_count())
            .field("state_dim", &self.state_dim())
            .field("control_dims", &self.control_dims())
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .finish()
    }
}

impl GameDefinition {
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        features: Vec<Vec<Arc<dyn Feature>>>,
        horizon: usize,
        dt: f64,
    ) -> Result<Self> {
        let n = dynamics.state_dim();
        let m = dynamics.control_dims();
        if m.is_empty() {
            return Err(Error::InvalidGame("at least one player is required".into()));
        }
        if n == 0 {
            return Err(Error::InvalidGame("state dimension must be positive".into()));
        }
        if let Some(i) = m.iter().position(|&mi| mi == 0) {
            return Err(Error::InvalidGame(format!("player {} has no controls", i + 1)));
        }
        if horizon < 2 {
            return Err(Error::InvalidGame(format!("horizon must be at least 2, got {horizon}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGame(format!("sampling time must be positive, got {dt}")));
        }
        if features.len() != m.len() {
            return Err(Error::Dimension {
                what: "feature sets".into(),
                expected: m.len(),
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|f| f.is_empty()) {
            return Err(Error::InvalidGame(format!("player {} has no features", i + 1)));
        }
        let x0 = DVector::zeros(n);
        let u0: Vec<_> = m.iter().map(|&mi| DVector::zeros(mi)).collect();
        if dynamics.step(0, &x0, &u0).iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGame("dynamics are not finite at the origin".into()));
        }
        for (i, set) in features.iter().enumerate() {
            if set.iter().any(|f| !f.value(&x0, &u0).is_finite()) {
                return Err(Error::InvalidGame(format!(
                    "a feature of player {} is not finite at the origin",
                    i + 1
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            dynamics,
            features,
            horizon,
            dt,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn player_count(&self) -> usize {
        self.features.len()
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dims(&self) -> Vec<usize> {
        self.dynamics.control_dims()
    }

    pub fn control_dim(&self, player: usize) -> usize {
        self.dynamics.control_dims()[player]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn features(&self, player: usize) -> &[Arc<dyn Feature>] {
        &self.features[player]
    }

    /// `p_i`, the number of features of `player`.
    pub fn feature_dim(&self, player: usize) -> usize {
        self.features[player].len()
    }

    pub fn feature_dims(&self) -> Vec<usize> {
        self.features.iter().map(Vec::len).collect()
    }

    pub fn layout(&self) -> StepLayout {
        StepLayout::new(self.state_dim(), &self.control_dims())
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.dynamics.clone(),
            self.features.clone(),
            horizon,
            self.dt,
        )
    }

    pub(crate) fn check_player(&self, player: usize) -> Result<()> {
        if player >= self.player_count() {
            return Err(Error::Dimension {
                what: "player index".into(),
                expected: self.player_count(),
                actual: player,
            });
        }
        Ok(())
    }
}

/// Iterate the dynamics from `x1` under the given per-player control arrays
/// (`m_i × k_E` each). The control in the last column does not influence any
/// state inside the horizon.
pub fn rollout(game: &GameDefinition, controls: &[DMatrix<f64>], x1: &DVector<f64>) -> Result<Trajectory> {
    let n = game.state_dim();
    let horizon = game.horizon();
    if x1.len() != n {
        return Err(Error::Dimension {
            what: "initial state".into(),
            expected: n,
            actual: x1.len(),
        });
    }
    if controls.len() != game.player_count() {
        return Err(Error::Dimension {
            what: "control arrays".into(),
            expected: game.player_count(),
            actual: controls.len(),
        });
    }
    for (i, c) in controls.iter().enumerate() {
        if c.nrows() != game.control_dim(i) || c.ncols() != horizon {
            return Err(Error::TrajectoryShape(format!(
                "controls of player {} are {}x{}, expected {}x{}",
                i + 1,
                c.nrows(),
                c.ncols(),
                game.control_dim(i),
                horizon
            )));
        }
    }
    let mut states = DMatrix::zeros(n, horizon);
    states.set_column(0, x1);
    let dynamics = game.dynamics();
    for k in 0..horizon - 1 {
        let x = states.column(k).into_owned();
        let u: Vec<DVector<f64>> = controls.iter().map(|c| c.column(k).into_owned()).collect();
        let next = dynamics.step(k, &x, &u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        states.set_column(k + 1, &next);
    }
    Trajectory::new(states, controls.to_vec())
}

/// Sensitivities of every transition along a trajectory, `k = 0..k_E-1`.
pub fn step_sensitivities(game: &GameDefinition, traj: &Trajectory) -> Vec<StepJacobian> {
    let dynamics = game.dynamics();
    (0..traj.horizon() - 1)
        .map(|k| dynamics.step_jacobian(k, &traj.state(k), &traj.controls_at(k)))
        .collect()
}
