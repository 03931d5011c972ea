use nalgebra::{DMatrix, DVector};

use super::{feature_count, GameDefinition};
use crate::error::{Error, Result};

/// States (`n × k_E`) and per-player controls (`m_i × k_E`) over a horizon.
///
/// Feasibility with respect to a game is not enforced on construction:
/// measured (noisy) trajectories are valid values of this type.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub controls: Vec<DMatrix<f64>>,
}

impl Trajectory {
    pub fn new(states: DMatrix<f64>, controls: Vec<DMatrix<f64>>) -> Result<Self> {
        let horizon = states.ncols();
        for (i, c) in controls.iter().enumerate() {
            if c.ncols() != horizon {
                return Err(Error::TrajectoryShape(format!(
                    "controls of player {} span {} steps, states span {}",
                    i + 1,
                    c.ncols(),
                    horizon
                )));
            }
        }
        Ok(Self { states, controls })
    }

    pub fn zeros(game: &GameDefinition) -> Self {
        let h = game.horizon();
        Self {
            states: DMatrix::zeros(game.state_dim(), h),
            controls: game.control_dims().iter().map(|&m| DMatrix::zeros(m, h)).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.states.ncols()
    }

    pub fn player_count(&self) -> usize {
        self.controls.len()
    }

    pub fn initial_state(&self) -> DVector<f64> {
        self.states.column(0).into_owned()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.column(k).into_owned()
    }

    pub fn controls_at(&self, k: usize) -> Vec<DVector<f64>> {
        self.controls.iter().map(|c| c.column(k).into_owned()).collect()
    }

    /// Check the array shapes against a game, naming the first mismatch.
    pub fn check_shape(&self, game: &GameDefinition) -> Result<()> {
        if self.states.nrows() != game.state_dim() {
            return Err(Error::TrajectoryShape(format!(
                "state dimension {} differs from game's {}",
                self.states.nrows(),
                game.state_dim()
            )));
        }
        if self.horizon() != game.horizon() {
            return Err(Error::TrajectoryShape(format!(
                "horizon {} differs from game's {}",
                self.horizon(),
                game.horizon()
            )));
        }
        if self.player_count() != game.player_count() {
            return Err(Error::TrajectoryShape(format!(
                "{} control arrays for a {}-player game",
                self.player_count(),
                game.player_count()
            )));
        }
        for (i, c) in self.controls.iter().enumerate() {
            if c.nrows() != game.control_dim(i) {
                return Err(Error::TrajectoryShape(format!(
                    "player {} has {} control channels, game expects {}",
                    i + 1,
                    c.nrows(),
                    game.control_dim(i)
                )));
            }
        }
        Ok(())
    }

    /// Largest one-step defect `max_k ‖x^(k+1) - f(x^(k), u^(k))‖_∞`.
    pub fn feasibility_residual(&self, game: &GameDefinition) -> Result<f64> {
        self.check_shape(game)?;
        let dynamics = game.dynamics();
        let mut worst: f64 = 0.0;
        for k in 0..self.horizon() - 1 {
            let next = dynamics.step(k, &self.state(k), &self.controls_at(k));
            let defect = (self.states.column(k + 1) - next).amax();
            worst = worst.max(defect);
        }
        Ok(worst)
    }

    /// Feasibility within `1e-9·(1 + ‖x‖_∞)`.
    pub fn is_feasible(&self, game: &GameDefinition) -> Result<bool> {
        let tol = 1e-9 * (1.0 + self.states.amax());
        Ok(self.feasibility_residual(game)? <= tol)
    }

    /// Keep the states and only `player`'s controls.
    pub fn restrict_to_player(&self, player: usize) -> Trajectory {
        Trajectory {
            states: self.states.clone(),
            controls: vec![self.controls[player].clone()],
        }
    }
}

/// Observed trajectories together with each player's mean feature count.
#[derive(Clone, Debug)]
pub struct DemonstrationSet {
    trajectories: Vec<Trajectory>,
    mean_feature_counts: Vec<DVector<f64>>,
}

impl DemonstrationSet {
    pub fn new(game: &GameDefinition, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidGame("a demonstration set needs at least one trajectory".into()));
        }
        let mut sums: Vec<DVector<f64>> = (0..game.player_count())
            .map(|i| DVector::zeros(game.feature_dim(i)))
            .collect();
        for traj in &trajectories {
            for (i, sum) in sums.iter_mut().enumerate() {
                *sum += feature_count(traj, game, i)?;
            }
        }
        let count = trajectories.len() as f64;
        let mean_feature_counts = sums.into_iter().map(|s| s / count).collect();
        Ok(Self {
            trajectories,
            mean_feature_counts,
        })
    }

    pub fn single(game: &GameDefinition, trajectory: Trajectory) -> Result<Self> {
        Self::new(game, vec![trajectory])
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// `μ̃_i`.
    pub fn mean_feature_count(&self, player: usize) -> &DVector<f64> {
        &self.mean_feature_counts[player]
    }
}
