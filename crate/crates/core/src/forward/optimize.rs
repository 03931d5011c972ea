use nalgebra::{DMatrix, DVector};

use super::{SolverOptions, SolverReport};
use crate::error::{Error, Result};
use crate::game::{rollout, trajectory_cost, CostParameters, GameDefinition, Trajectory};
use crate::likelihood::{control_jacobian, cost_terms, DVariant, Scope};

/// `Σ_{i ∈ players} J_i` along `traj`.
pub fn players_cost(traj: &Trajectory, theta: &CostParameters, game: &GameDefinition, players: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in players {
        total += trajectory_cost(traj, theta, game, i)?;
    }
    Ok(total)
}

/// `∂J_i/∂u̲_j` for every player `j` by the discrete adjoint recursion
/// `λ_k = ∂ℓ_k/∂x + A_kᵀλ_{k+1}`, `∂J_i/∂u_j^(k) = ∂ℓ_k/∂u_j + B_{j,k}ᵀλ_{k+1}`.
pub fn adjoint_gradient(
    game: &GameDefinition,
    traj: &Trajectory,
    theta: &CostParameters,
    player: usize,
) -> Result<Vec<DMatrix<f64>>> {
    theta.check_against(game)?;
    traj.check_shape(game)?;
    game.check_player(player)?;
    let n = game.state_dim();
    let layout = game.layout();
    let horizon = traj.horizon();
    let dynamics = game.dynamics();
    let weights = &theta.theta[player];
    let mut grads: Vec<DMatrix<f64>> = game.control_dims().iter().map(|&m| DMatrix::zeros(m, horizon)).collect();
    let mut lambda = DVector::<f64>::zeros(n);
    for k in (0..horizon).rev() {
        let x = traj.state(k);
        let u = traj.controls_at(k);
        let mut dl = DVector::zeros(layout.len());
        for (f, w) in game.features(player).iter().zip(weights) {
            dl.axpy(-*w, &f.derivatives(&x, &u).gradient, 1.0);
        }
        let mut lam_next_terms: Option<crate::game::StepJacobian> = None;
        if k + 1 < horizon {
            lam_next_terms = Some(dynamics.step_jacobian(k, &x, &u));
        }
        for (j, grad) in grads.iter_mut().enumerate() {
            let off = layout.control_offset(j);
            let m = game.control_dim(j);
            let mut gk = dl.rows(off, m).into_owned();
            if let Some(sj) = &lam_next_terms {
                gk += sj.wrt_controls[j].transpose() * &lambda;
            }
            grad.set_column(k, &gk);
        }
        let mut lam = dl.rows(0, n).into_owned();
        if let Some(sj) = &lam_next_terms {
            lam += sj.wrt_state.transpose() * &lambda;
        }
        lambda = lam;
    }
    Ok(grads)
}

/// Offsets of each scope player's stacked controls.
fn scope_offsets(game: &GameDefinition, players: &[usize]) -> Vec<usize> {
    let mut at = 0;
    players
        .iter()
        .map(|&i| {
            let off = at;
            at += game.control_dim(i) * game.horizon();
            off
        })
        .collect()
}

/// `u + t·δ` with `δ` in scope order (player-major, then time, then channel).
pub(crate) fn shifted_controls(
    game: &GameDefinition,
    controls: &[DMatrix<f64>],
    players: &[usize],
    delta: &DVector<f64>,
    t: f64,
) -> Vec<DMatrix<f64>> {
    let offsets = scope_offsets(game, players);
    let mut out = controls.to_vec();
    for (pos, &i) in players.iter().enumerate() {
        let m = game.control_dim(i);
        for k in 0..game.horizon() {
            for c in 0..m {
                out[i][(c, k)] += t * delta[offsets[pos] + k * m + c];
            }
        }
    }
    out
}

/// Solve `H δ = -g` by Cholesky, adding Levenberg damping if `H` is not
/// positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut damping = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for j in 0..m.nrows() {
            m[(j, j)] += damping;
        }
        if let Some(chol) = m.cholesky() {
            return Some(-chol.solve(g));
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
    }
    None
}

/// Minimize `Σ_{i ∈ cost_players} J_i` over the controls of `scope`, all
/// other controls held fixed, by Gauss–Newton steps with Armijo backtracking.
pub fn minimize_cost(
    game: &GameDefinition,
    theta: &CostParameters,
    cost_players: &[usize],
    scope: Scope,
    init: &Trajectory,
    opts: &SolverOptions,
) -> Result<(Trajectory, SolverReport)> {
    let players = scope.players(game)?;
    let x1 = init.initial_state();
    let mut traj = init.clone();
    let mut cost = players_cost(&traj, theta, game, cost_players)?;
    let mut report = SolverReport::start(cost);
    for iteration in 0..=opts.max_iterations {
        let jac = control_jacobian(game, &traj, scope, DVariant::Plain)?;
        let (g, h) = cost_terms(game, &traj, &jac, theta, cost_players)?;
        let gnorm = g.norm();
        report.iterations = iteration;
        report.residual = gnorm;
        report.objective = cost;
        if gnorm <= opts.tol {
            report.converged = true;
            return Ok((traj, report));
        }
        if iteration == opts.max_iterations {
            break;
        }
        let Some(delta) = newton_direction(&h, &g) else {
            report.message = Some("Hessian could not be regularized".into());
            return Ok((traj, report));
        };
        let slope = g.dot(&delta);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand_controls = shifted_controls(game, &traj.controls, &players, &delta, t);
            if let Ok(cand) = rollout(game, &cand_controls, &x1) {
                let c = players_cost(&cand, theta, game, cost_players)?;
                let roundoff = 1e-13 * cost.abs().max(1.0);
                if c <= cost + 1e-4 * t * slope || (c - cost).abs() <= roundoff && t == 1.0 {
                    accepted = Some((cand, c));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, c)) => {
                traj = cand;
                cost = c;
            }
            None => {
                report.message = Some(format!("line search failed at gradient norm {gnorm:.3e}"));
                return Ok((traj, report));
            }
        }
    }
    report.message = Some("iteration limit reached".into());
    Ok((traj, report))
}

/// Stacked open-loop Nash stationarity residual `[∂J_1/∂u̲_1; …; ∂J_N/∂u̲_N]`.
pub fn nash_residual(game: &GameDefinition, traj: &Trajectory, theta: &CostParameters) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for i in 0..game.player_count() {
        let grads = adjoint_gradient(game, traj, theta, i)?;
        let gi = &grads[i];
        for k in 0..gi.ncols() {
            out.extend(gi.column(k).iter().copied());
        }
    }
    Ok(DVector::from_vec(out))
}

/// Newton iteration on the stacked stationarity system, using each player's
/// Gauss–Newton Hessian rows as the block Jacobian.
pub(crate) fn nash_polish(
    game: &GameDefinition,
    theta: &CostParameters,
    init: &Trajectory,
    opts: &SolverOptions,
    report: &mut SolverReport,
) -> Result<Trajectory> {
    let players: Vec<usize> = (0..game.player_count()).collect();
    let offsets = scope_offsets(game, &players);
    let x1 = init.initial_state();
    let mut traj = init.clone();
    let mut f = nash_residual(game, &traj, theta)?;
    let start_iterations = report.iterations;
    for iteration in 0..=opts.max_iterations {
        report.iterations = start_iterations + iteration;
        report.residual = f.norm();
        if report.residual <= opts.tol {
            report.converged = true;
            report.message = None;
            break;
        }
        if iteration == opts.max_iterations {
            report.message = Some("iteration limit reached".into());
            break;
        }
        let jac = control_jacobian(game, &traj, Scope::Joint, DVariant::Plain)?;
        let d = jac.dim();
        let mut jm = DMatrix::zeros(d, d);
        for &i in &players {
            let (_, h) = cost_terms(game, &traj, &jac, theta, &[i])?;
            let rows = game.control_dim(i) * game.horizon();
            jm.rows_mut(offsets[i], rows).copy_from(&h.rows(offsets[i], rows));
        }
        let delta = match jm.lu().solve(&(-&f)) {
            Some(delta) => delta,
            None => {
                report.message = Some("singular Nash Jacobian".into());
                break;
            }
        };
        let merit = 0.5 * f.norm_squared();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand_controls = shifted_controls(game, &traj.controls, &players, &delta, t);
            if let Ok(cand) = rollout(game, &cand_controls, &x1) {
                let fc = nash_residual(game, &cand, theta)?;
                if 0.5 * fc.norm_squared() <= (1.0 - 1e-4 * t) * merit {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                traj = cand;
                f = fc;
            }
            None => {
                report.message = Some(format!("Nash line search failed at residual {:.3e}", f.norm()));
                break;
            }
        }
    }
    report.objective = players_cost(&traj, theta, game, &players)?;
    Ok(traj)
}

/// Finite-horizon LQR on the linearization at the origin, used as a warm start
/// for nonlinear solves. Falls back to zero controls when the local model is
/// not well posed.
pub(crate) fn warm_start(
    game: &GameDefinition,
    theta: &CostParameters,
    cost_players: &[usize],
    x1: &DVector<f64>,
) -> Result<Trajectory> {
    let horizon = game.horizon();
    let zeros: Vec<DMatrix<f64>> = game.control_dims().iter().map(|&m| DMatrix::zeros(m, horizon)).collect();
    let fallback = || rollout(game, &zeros, x1);
    let n = game.state_dim();
    let layout = game.layout();
    let x0 = DVector::zeros(n);
    let u0: Vec<DVector<f64>> = game.control_dims().iter().map(|&m| DVector::zeros(m)).collect();
    let lin = game.dynamics().step_jacobian(0, &x0, &u0);
    let mut hess = DMatrix::zeros(layout.len(), layout.len());
    for &i in cost_players {
        for (f, w) in game.features(i).iter().zip(&theta.theta[i]) {
            hess -= f.derivatives(&x0, &u0).hessian * *w;
        }
    }
    let mtot = layout.len() - n;
    let q = hess.view((0, 0), (n, n)).into_owned();
    let r = hess.view((n, n), (mtot, mtot)).into_owned();
    let mut b = DMatrix::zeros(n, mtot);
    for (j, bj) in lin.wrt_controls.iter().enumerate() {
        b.view_mut((0, layout.control_offset(j) - n), (n, bj.ncols())).copy_from(bj);
    }
    let a = lin.wrt_state;
    let mut p = q.clone();
    let mut gains = vec![DMatrix::zeros(mtot, n); horizon];
    for k in (0..horizon - 1).rev() {
        let m = &r + b.transpose() * &p * &b;
        let Some(chol) = m.cholesky() else {
            return fallback();
        };
        let gain = -chol.solve(&(b.transpose() * &p * &a));
        let f = &a + &b * &gain;
        p = &q + gain.transpose() * &r * &gain + f.transpose() * &p * &f;
        p = (&p + p.transpose()) * 0.5;
        gains[k] = gain;
    }
    let mut controls = zeros.clone();
    let mut x = x1.clone();
    for (k, gain) in gains.iter().enumerate() {
        let u = gain * &x;
        let mut parts = Vec::with_capacity(game.player_count());
        for j in 0..game.player_count() {
            let off = layout.control_offset(j) - n;
            let uj = u.rows(off, game.control_dim(j)).into_owned();
            controls[j].set_column(k, &uj);
            parts.push(uj);
        }
        if k + 1 < horizon {
            x = game.dynamics().step(k, &x, &parts);
            if x.iter().any(|v| !v.is_finite()) {
                return fallback();
            }
        }
    }
    match rollout(game, &controls, x1) {
        Ok(t) => Ok(t),
        Err(Error::Divergence { .. }) => fallback(),
        Err(e) => Err(e),
    }
}
