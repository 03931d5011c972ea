use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SolverOptions, SolverReport};
use crate::dynamics::{lq_game, FeedbackLaw, LinearFeedback, LinearGameMatrices, ScheduledFeedback};
use crate::error::{Error, Result};
use crate::game::{rollout, CostParameters, Trajectory};

/// Per-player `Q_i = diag(θ_i[..n])`, `R_i = diag(θ_i[n..])` for the
/// regulation features `-[x_1², …, x_n², u_i²…]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqWeights {
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
}

impl LqWeights {
    pub fn from_parameters(lin: &LinearGameMatrices, theta: &CostParameters) -> Result<Self> {
        let n = lin.state_dim();
        let dims = lin.control_dims();
        if theta.player_count() != dims.len() {
            return Err(Error::Dimension {
                what: "parameter vectors".into(),
                expected: dims.len(),
                actual: theta.player_count(),
            });
        }
        let mut q = Vec::new();
        let mut r = Vec::new();
        for (i, &m) in dims.iter().enumerate() {
            let t = &theta.theta[i];
            if t.len() != n + m {
                return Err(Error::Dimension {
                    what: format!("θ of player {}", i + 1),
                    expected: n + m,
                    actual: t.len(),
                });
            }
            if t[n..].iter().any(|v| *v <= 0.0) {
                return Err(Error::InvalidGame(format!(
                    "player {} needs a positive weight on every own control",
                    i + 1
                )));
            }
            q.push(DMatrix::from_diagonal(&DVector::from_column_slice(&t[..n])));
            r.push(DMatrix::from_diagonal(&DVector::from_column_slice(&t[n..])));
        }
        Ok(Self { q, r })
    }
}

/// Per-player feedback gains `u_i^(k) = K_i^(k) x^(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackGains {
    /// `gains[i][k]`; a single entry per player when stationary.
    pub gains: Vec<Vec<DMatrix<f64>>>,
    pub stationary: bool,
}

impl FeedbackGains {
    pub fn stationary(gains: Vec<DMatrix<f64>>) -> Self {
        Self {
            gains: gains.into_iter().map(|k| vec![k]).collect(),
            stationary: true,
        }
    }

    pub fn player_count(&self) -> usize {
        self.gains.len()
    }

    pub fn gain(&self, player: usize, k: usize) -> &DMatrix<f64> {
        let schedule = &self.gains[player];
        &schedule[k.min(schedule.len() - 1)]
    }

    pub fn law(&self, player: usize) -> Arc<dyn FeedbackLaw> {
        if self.stationary {
            Arc::new(LinearFeedback::new(self.gains[player][0].clone()))
        } else {
            Arc::new(ScheduledFeedback::new(self.gains[player].clone()))
        }
    }

    pub fn laws(&self) -> Vec<Option<Arc<dyn FeedbackLaw>>> {
        (0..self.player_count()).map(|i| Some(self.law(i))).collect()
    }

    /// `Ā + Σ B̄_i K_i^(k)`.
    pub fn closed_loop_matrix(&self, lin: &LinearGameMatrices, k: usize) -> DMatrix<f64> {
        let mut f = lin.a_d.clone();
        for (i, b) in lin.b_d.iter().enumerate() {
            f += b * self.gain(i, k);
        }
        f
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_initial_state(lin: &LinearGameMatrices, x1: &DVector<f64>) -> Result<()> {
    if x1.len() != lin.state_dim() {
        return Err(Error::Dimension {
            what: "initial state".into(),
            expected: lin.state_dim(),
            actual: x1.len(),
        });
    }
    Ok(())
}

/// Open-loop Nash controls from the coupled backward recursion
/// `Λ_k = I + Σ_j B̄_j R_j⁻¹ B̄_jᵀ P_j^(k+1)`, `P_i^(k) = Q_i + Āᵀ P_i^(k+1) Λ_k⁻¹ Ā`,
/// `u_i^(k) = -R_i⁻¹ B̄_iᵀ P_i^(k+1) Λ_k⁻¹ Ā x^(k)`, starting from `P_i = Q_i` at
/// the last step. The last control does not influence the horizon and is zero.
pub fn solve_open_loop_nash_lq(
    lin: &LinearGameMatrices,
    theta: &CostParameters,
    x1: &DVector<f64>,
    horizon: usize,
) -> Result<(Trajectory, SolverReport)> {
    check_initial_state(lin, x1)?;
    let weights = LqWeights::from_parameters(lin, theta)?;
    let game = lq_game("lq", lin, horizon)?;
    let n = lin.state_dim();
    let (a, b) = (&lin.a_d, &lin.b_d);
    let r_inv: Vec<DMatrix<f64>> = weights
        .r
        .iter()
        .map(|r| DMatrix::from_diagonal(&r.diagonal().map(|v| 1.0 / v)))
        .collect();

    let mut p: Vec<DMatrix<f64>> = weights.q.clone();
    // For each step k < k_E-1: (Λ_k⁻¹, P^(k+1) per player).
    let mut schedule: Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)> = Vec::with_capacity(horizon - 1);
    for k in (0..horizon - 1).rev() {
        let mut lambda = DMatrix::identity(n, n);
        for (j, bj) in b.iter().enumerate() {
            lambda += bj * &r_inv[j] * bj.transpose() * &p[j];
        }
        let lambda_inv = lambda
            .clone()
            .lu()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularStep { step: k + 1 })?;
        let next_p = p.clone();
        p = weights
            .q
            .iter()
            .zip(&next_p)
            .map(|(q, pi)| q + a.transpose() * pi * &lambda_inv * a)
            .collect();
        schedule.push((lambda_inv, next_p));
    }
    schedule.reverse();

    let mut controls: Vec<DMatrix<f64>> = lin.control_dims().iter().map(|&m| DMatrix::zeros(m, horizon)).collect();
    let mut x = x1.clone();
    for (k, (lambda_inv, next_p)) in schedule.iter().enumerate() {
        let ax = lambda_inv * a * &x;
        for (i, bi) in b.iter().enumerate() {
            let u = -(&r_inv[i] * bi.transpose() * &next_p[i] * &ax);
            controls[i].set_column(k, &u);
        }
        x = ax;
    }
    let traj = rollout(&game, &controls, x1)?;
    let report = SolverReport {
        converged: true,
        iterations: 1,
        residual: 0.0,
        objective: crate::game::global_cost(&traj, theta, &game)?,
        message: None,
    };
    Ok((traj, report))
}

/// One backward step of the feedback-Nash recursion. Returns the gains and
/// `P_i^(k)` given `P_i^(k+1)`.
fn feedback_step(
    lin: &LinearGameMatrices,
    weights: &LqWeights,
    p: &[DMatrix<f64>],
    step: usize,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let n = lin.state_dim();
    let dims = lin.control_dims();
    let total: usize = dims.iter().sum();
    let mut offsets = Vec::new();
    let mut at = 0;
    for &m in &dims {
        offsets.push(at);
        at += m;
    }
    let (a, b) = (&lin.a_d, &lin.b_d);
    let mut lhs = DMatrix::zeros(total, total);
    let mut rhs = DMatrix::zeros(total, n);
    for i in 0..dims.len() {
        let btp = b[i].transpose() * &p[i];
        for j in 0..dims.len() {
            let mut block = &btp * &b[j];
            if i == j {
                block += &weights.r[i];
            }
            lhs.view_mut((offsets[i], offsets[j]), (dims[i], dims[j])).copy_from(&block);
        }
        rhs.view_mut((offsets[i], 0), (dims[i], n)).copy_from(&(-(&btp * a)));
    }
    let k_all = lhs.lu().solve(&rhs).ok_or(Error::SingularStep { step: step + 1 })?;
    if k_all.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularStep { step: step + 1 });
    }
    let gains: Vec<DMatrix<f64>> = (0..dims.len())
        .map(|i| k_all.view((offsets[i], 0), (dims[i], n)).into_owned())
        .collect();
    let mut f = a.clone();
    for (bi, ki) in b.iter().zip(&gains) {
        f += bi * ki;
    }
    let next: Vec<DMatrix<f64>> = (0..dims.len())
        .map(|i| {
            let pi = &weights.q[i] + gains[i].transpose() * &weights.r[i] * &gains[i] + f.transpose() * &p[i] * &f;
            (&pi + pi.transpose()) * 0.5
        })
        .collect();
    Ok((gains, next))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackHorizon {
    /// Time-varying gains of the finite-horizon game.
    Finite,
    /// Limit of the backward recursion, checked for closed-loop stability.
    Stationary,
}

/// Feedback Nash equilibrium of an LQ game via the coupled Riccati recursion,
/// and the trajectory generated under `u_i = K_i x`.
pub fn solve_feedback_nash_lq(
    lin: &LinearGameMatrices,
    theta: &CostParameters,
    horizon: usize,
    mode: FeedbackHorizon,
    x1: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(FeedbackGains, Trajectory, SolverReport)> {
    check_initial_state(lin, x1)?;
    let weights = LqWeights::from_parameters(lin, theta)?;
    let game = lq_game("lq", lin, horizon)?;
    let n = lin.state_dim();
    let players = lin.control_dims().len();

    let (gains, iterations, residual) = match mode {
        FeedbackHorizon::Finite => {
            let mut p = weights.q.clone();
            let mut schedule: Vec<Vec<DMatrix<f64>>> = lin
                .control_dims()
                .iter()
                .map(|&m| vec![DMatrix::zeros(m, n); horizon])
                .collect();
            for k in (0..horizon - 1).rev() {
                let (gk, next) = feedback_step(lin, &weights, &p, k)?;
                for (i, g) in gk.into_iter().enumerate() {
                    schedule[i][k] = g;
                }
                p = next;
            }
            (
                FeedbackGains {
                    gains: schedule,
                    stationary: false,
                },
                horizon - 1,
                0.0,
            )
        }
        FeedbackHorizon::Stationary => {
            let mut p = weights.q.clone();
            let mut previous: Option<Vec<DMatrix<f64>>> = None;
            let mut history: Vec<f64> = Vec::new();
            let mut result = None;
            for iteration in 0..opts.riccati_max_iterations {
                let (gk, next) = feedback_step(lin, &weights, &p, 0)?;
                if let Some(prev) = &previous {
                    let change = gk
                        .iter()
                        .zip(prev)
                        .map(|(a, b)| (a - b).amax())
                        .fold(0.0, f64::max);
                    history.push(change);
                    if !change.is_finite() {
                        break;
                    }
                    if change <= opts.riccati_tol {
                        result = Some((gk.clone(), iteration + 1, change));
                        break;
                    }
                }
                previous = Some(gk);
                p = next;
            }
            let Some((gk, iterations, change)) = result else {
                let last_change = history.last().copied().unwrap_or(f64::NAN);
                let keep = history.len().saturating_sub(20);
                return Err(Error::RiccatiDivergence {
                    iterations: opts.riccati_max_iterations,
                    last_change,
                    residual_history: history[keep..].to_vec(),
                });
            };
            let gains = FeedbackGains::stationary(gk);
            let rho = spectral_radius(&gains.closed_loop_matrix(lin, 0));
            if rho >= 1.0 {
                return Err(Error::Unstable(rho));
            }
            (gains, iterations, change)
        }
    };

    let mut controls: Vec<DMatrix<f64>> = lin.control_dims().iter().map(|&m| DMatrix::zeros(m, horizon)).collect();
    let mut x = x1.clone();
    for k in 0..horizon {
        let mut us = Vec::with_capacity(players);
        for (i, c) in controls.iter_mut().enumerate() {
            let u = gains.gain(i, k) * &x;
            c.set_column(k, &u);
            us.push(u);
        }
        if k + 1 < horizon {
            x = game.dynamics().step(k, &x, &us);
        }
    }
    let traj = rollout(&game, &controls, x1)?;
    let report = SolverReport {
        converged: true,
        iterations,
        residual,
        objective: crate::game::global_cost(&traj, theta, &game)?,
        message: None,
    };
    Ok((gains, traj, report))
}
