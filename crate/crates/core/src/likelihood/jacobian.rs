use nalgebra::DMatrix;

use super::{DVariant, Scope};
use crate::error::{Error, Result};
use crate::game::{GameDefinition, StepJacobian, Trajectory};

/// Control-to-state sensitivity matrix `D`, `d × (n·k_E)`.
///
/// Rows follow the scope's stacked controls (player-major, then time, then
/// channel); column `k·n + j` is state component `j` at step `k`. Block
/// `(k1, k2)` holds `(∂x^(k2)/∂u^(k1))ᵀ`.
#[derive(Clone, Debug)]
pub struct ControlJacobian {
    players: Vec<usize>,
    control_dims: Vec<usize>,
    offsets: Vec<usize>,
    state_dim: usize,
    horizon: usize,
    variant: DVariant,
    matrix: DMatrix<f64>,
}

impl ControlJacobian {
    /// Assemble `D` from per-step sensitivities evaluated along `traj`.
    pub fn build(
        game: &GameDefinition,
        traj: &Trajectory,
        sensitivities: &[StepJacobian],
        scope: Scope,
        variant: DVariant,
    ) -> Result<Self> {
        traj.check_shape(game)?;
        let players = scope.players(game)?;
        let horizon = traj.horizon();
        let n = game.state_dim();
        if sensitivities.len() != horizon - 1 {
            return Err(Error::Dimension {
                what: "step sensitivities".into(),
                expected: horizon - 1,
                actual: sensitivities.len(),
            });
        }
        let control_dims: Vec<usize> = players.iter().map(|&i| game.control_dim(i)).collect();
        let mut offsets = Vec::with_capacity(players.len());
        let mut d = 0;
        for &m in &control_dims {
            offsets.push(d);
            d += m * horizon;
        }

        let mut matrix = DMatrix::zeros(d, n * horizon);
        for (pos, &player) in players.iter().enumerate() {
            let m = control_dims[pos];
            for k1 in 0..horizon - 1 {
                let mut block = sensitivities[k1].wrt_controls[player].clone();
                for k2 in k1 + 1..horizon {
                    for c in 0..m {
                        let row = offsets[pos] + k1 * m + c;
                        for j in 0..n {
                            matrix[(row, k2 * n + j)] = block[(j, c)];
                        }
                    }
                    if k2 + 1 < horizon {
                        block = &sensitivities[k2].wrt_state * block;
                    }
                }
            }
        }

        if variant == DVariant::Trapezoid {
            // Ascending k2 reads column k2+1 before it is overwritten.
            for k2 in 0..horizon - 1 {
                for j in 0..n {
                    let next = matrix.column(n * (k2 + 1) + j).into_owned();
                    let mut col = matrix.column_mut(n * k2 + j);
                    col += next;
                    col *= 0.5;
                }
            }
        }

        Ok(Self {
            players,
            control_dims,
            offsets,
            state_dim: n,
            horizon,
            variant,
            matrix,
        })
    }

    /// Stacked control dimension `d`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn players(&self) -> &[usize] {
        &self.players
    }

    pub fn variant(&self) -> DVariant {
        self.variant
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Position of `player` inside the scope, if present.
    pub fn position_of(&self, player: usize) -> Option<usize> {
        self.players.iter().position(|&p| p == player)
    }

    /// Row of control channel `c` of the scope's `pos`-th player at step `k`.
    pub fn control_index(&self, pos: usize, k: usize, c: usize) -> usize {
        self.offsets[pos] + k * self.control_dims[pos] + c
    }

    /// `D_{k1,k2}` for the scope's `pos`-th player, `m × n`.
    pub fn block(&self, pos: usize, k1: usize, k2: usize) -> DMatrix<f64> {
        let m = self.control_dims[pos];
        self.matrix
            .view((self.control_index(pos, k1, 0), k2 * self.state_dim), (m, self.state_dim))
            .into_owned()
    }
}
