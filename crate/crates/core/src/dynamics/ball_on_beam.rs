use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ContinuousSystem, LinearGameMatrices};
use crate::error::{Error, Result};

/// Physical constants of the two-player ball-on-beam system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallOnBeamParams {
    /// Gravity, m/s².
    pub g: f64,
    /// Ball mass, kg.
    pub m_b: f64,
    /// Ball radius, m.
    pub r_b: f64,
    /// Ball inertia, kg·m².
    pub theta_b: f64,
    /// Beam inertia, kg·m².
    pub theta_p: f64,
}

impl Default for BallOnBeamParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            m_b: 0.02,
            r_b: 0.025,
            theta_b: 5e-6,
            theta_p: 0.667,
        }
    }
}

impl BallOnBeamParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.g, self.m_b, self.r_b, self.theta_b, self.theta_p];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!(
                "ball-on-beam parameters must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `m_b r_b² / (Θ_b + m_b r_b²)`.
    fn rolling_factor(&self) -> f64 {
        let mr2 = self.m_b * self.r_b * self.r_b;
        mr2 / (self.theta_b + mr2)
    }
}

/// State `[s, ṡ, α, α̇]`; both players apply a torque to the beam axis.
pub fn ball_on_beam_deriv(x: &DVector<f64>, u1: f64, u2: f64, p: &BallOnBeamParams) -> DVector<f64> {
    let c = p.rolling_factor();
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let denom = p.m_b * x1 * x1 + p.theta_p;
    DVector::from_vec(vec![
        x2,
        c * (x1 * x4 * x4 - p.g * x3.sin()),
        x4,
        (-2.0 * p.m_b * x1 * x2 * x4 - p.m_b * p.g * x1 * x3.cos() + u1 + u2) / denom,
    ])
}

/// Linearization at the origin as a continuous-time LQ model with sampling
/// time `dt` for its discretized counterpart.
pub fn linearize_ball_on_beam(p: &BallOnBeamParams, dt: f64) -> Result<LinearGameMatrices> {
    p.validate()?;
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 1)] = 1.0;
    a[(1, 2)] = -p.rolling_factor() * p.g;
    a[(2, 3)] = 1.0;
    a[(3, 0)] = -p.m_b * p.g / p.theta_p;
    let mut b = DMatrix::zeros(4, 1);
    b[(3, 0)] = 1.0 / p.theta_p;
    LinearGameMatrices::new(a, vec![b.clone(), b], dt)
}

#[derive(Clone, Debug)]
pub struct BallOnBeam {
    pub params: BallOnBeamParams,
}

impl BallOnBeam {
    pub fn new(params: BallOnBeamParams) -> Self {
        Self { params }
    }
}

impl ContinuousSystem for BallOnBeam {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dims(&self) -> Vec<usize> {
        vec![1, 1]
    }

    fn deriv(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        ball_on_beam_deriv(x, u[0][0], u[1][0], &self.params)
    }

    fn jacobians(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let p = &self.params;
        let c = p.rolling_factor();
        let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
        let torque = u[0][0] + u[1][0];
        let denom = p.m_b * x1 * x1 + p.theta_p;
        let num = -2.0 * p.m_b * x1 * x2 * x4 - p.m_b * p.g * x1 * x3.cos() + torque;

        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = c * x4 * x4;
        a[(1, 2)] = -c * p.g * x3.cos();
        a[(1, 3)] = 2.0 * c * x1 * x4;
        a[(2, 3)] = 1.0;
        let dnum_dx1 = -2.0 * p.m_b * x2 * x4 - p.m_b * p.g * x3.cos();
        a[(3, 0)] = (dnum_dx1 * denom - num * 2.0 * p.m_b * x1) / (denom * denom);
        a[(3, 1)] = -2.0 * p.m_b * x1 * x4 / denom;
        a[(3, 2)] = p.m_b * p.g * x1 * x3.sin() / denom;
        a[(3, 3)] = -2.0 * p.m_b * x1 * x2 / denom;

        let mut b = DMatrix::zeros(4, 1);
        b[(3, 0)] = 1.0 / denom;
        (a, vec![b.clone(), b])
    }
}
