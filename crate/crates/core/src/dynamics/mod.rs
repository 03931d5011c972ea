//! Continuous-time systems, their discretization, and the benchmark games.

mod ball_on_beam;
mod closed_loop;
mod systems;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Dynamics, StepJacobian};

pub use ball_on_beam::{ball_on_beam_deriv, linearize_ball_on_beam, BallOnBeam, BallOnBeamParams};
pub use closed_loop::{closed_loop_dynamics, FeedbackLaw, LinearFeedback, ScheduledFeedback};
pub use systems::{
    ball_on_beam_game, ball_on_beam_lq_game, benchmark_initial_state, benchmark_parameters, builtin_game, lq_game,
    SystemKind, DEFAULT_DT, DEFAULT_HORIZON,
};

/// `ẋ = F(x, u_1, …, u_N)` with analytic Jacobians.
pub trait ContinuousSystem: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;

    fn control_dims(&self) -> Vec<usize>;

    fn deriv(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64>;

    /// `(∂F/∂x, [∂F/∂u_i])`.
    fn jacobians(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>);

    /// Continuous `(A, [B_i])` if the system is linear.
    fn linear_matrices(&self) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizationMethod {
    Rk4,
    ExactLinear,
}

impl FromStr for DiscretizationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Self::Rk4),
            "exact-linear" => Ok(Self::ExactLinear),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// Turn a continuous system into a one-step map with sensitivities.
pub fn discretize(
    system: Arc<dyn ContinuousSystem>,
    dt: f64,
    method: DiscretizationMethod,
) -> Result<Arc<dyn Dynamics>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidGame(format!("sampling time must be positive, got {dt}")));
    }
    match method {
        DiscretizationMethod::Rk4 => Ok(Arc::new(Rk4Dynamics { system, dt })),
        DiscretizationMethod::ExactLinear => {
            let (a, b) = system.linear_matrices().ok_or_else(|| {
                Error::Unsupported("exact-linear discretization needs a linear system".into())
            })?;
            let lin = LinearGameMatrices::new(a, b, dt)?;
            Ok(Arc::new(lin.discrete_dynamics()))
        }
    }
}

/// Classical fourth-order Runge–Kutta step under zero-order-hold controls.
/// Sensitivities are obtained by differentiating the four stages.
#[derive(Debug, Clone)]
pub struct Rk4Dynamics {
    system: Arc<dyn ContinuousSystem>,
    dt: f64,
}

impl Rk4Dynamics {
    pub fn new(system: Arc<dyn ContinuousSystem>, dt: f64) -> Self {
        Self { system, dt }
    }
}

impl Dynamics for Rk4Dynamics {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn control_dims(&self) -> Vec<usize> {
        self.system.control_dims()
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let h = self.dt;
        let f = |z: &DVector<f64>| self.system.deriv(z, u);
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (0.5 * h)));
        let k3 = f(&(x + &k2 * (0.5 * h)));
        let k4 = f(&(x + &k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn step_jacobian(&self, _k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> StepJacobian {
        let h = self.dt;
        let n = x.len();
        let players = u.len();
        let eye = DMatrix::<f64>::identity(n, n);

        let x1 = x.clone();
        let k1 = self.system.deriv(&x1, u);
        let (a1, b1) = self.system.jacobians(&x1, u);
        let x2 = x + &k1 * (0.5 * h);
        let k2 = self.system.deriv(&x2, u);
        let (a2, b2) = self.system.jacobians(&x2, u);
        let x3 = x + &k2 * (0.5 * h);
        let k3 = self.system.deriv(&x3, u);
        let (a3, b3) = self.system.jacobians(&x3, u);
        let x4 = x + &k3 * h;
        let k4 = self.system.deriv(&x4, u);
        let (a4, b4) = self.system.jacobians(&x4, u);

        // d k_s / d x
        let dk1 = a1.clone();
        let dk2 = &a2 * (&eye + &dk1 * (0.5 * h));
        let dk3 = &a3 * (&eye + &dk2 * (0.5 * h));
        let dk4 = &a4 * (&eye + &dk3 * h);
        let wrt_state = &eye + (&dk1 + &dk2 * 2.0 + &dk3 * 2.0 + &dk4) * (h / 6.0);

        let wrt_controls = (0..players)
            .map(|i| {
                let du1 = b1[i].clone();
                let du2 = &b2[i] + &a2 * &du1 * (0.5 * h);
                let du3 = &b3[i] + &a3 * &du2 * (0.5 * h);
                let du4 = &b4[i] + &a4 * &du3 * h;
                (du1 + du2 * 2.0 + du3 * 2.0 + du4) * (h / 6.0)
            })
            .collect();

        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        StepJacobian {
            next,
            wrt_state,
            wrt_controls,
        }
    }
}

/// Continuous `(A, B_i)` and their exact zero-order-hold discretization
/// `Ā = exp(AΔT)`, `B̄_i = ∫₀^ΔT exp(Aτ)dτ·B_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGameMatrices {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub dt: f64,
    pub a_d: DMatrix<f64>,
    pub b_d: Vec<DMatrix<f64>>,
}

impl LinearGameMatrices {
    pub fn new(a: DMatrix<f64>, b: Vec<DMatrix<f64>>, dt: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::Dimension {
                what: "state matrix columns".into(),
                expected: n,
                actual: a.ncols(),
            });
        }
        if b.is_empty() {
            return Err(Error::InvalidGame("at least one input matrix is required".into()));
        }
        for bi in &b {
            if bi.nrows() != n {
                return Err(Error::Dimension {
                    what: "input matrix rows".into(),
                    expected: n,
                    actual: bi.nrows(),
                });
            }
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGame(format!("sampling time must be positive, got {dt}")));
        }
        let m_total: usize = b.iter().map(|bi| bi.ncols()).sum();
        // exp([[A, B], [0, 0]]·ΔT) = [[Ā, B̄], [0, I]]
        let mut aug = DMatrix::zeros(n + m_total, n + m_total);
        aug.view_mut((0, 0), (n, n)).copy_from(&a);
        let mut col = n;
        for bi in &b {
            aug.view_mut((0, col), (n, bi.ncols())).copy_from(bi);
            col += bi.ncols();
        }
        let phi = (aug * dt).exp();
        let a_d = phi.view((0, 0), (n, n)).into_owned();
        let mut col = n;
        let b_d: Vec<DMatrix<f64>> = b
            .iter()
            .map(|bi| {
                let block = phi.view((0, col), (n, bi.ncols())).into_owned();
                col += bi.ncols();
                block
            })
            .collect();
        if a_d.iter().chain(b_d.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGame("discretized matrices are not finite".into()));
        }
        Ok(Self { a, b, dt, a_d, b_d })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dims(&self) -> Vec<usize> {
        self.b.iter().map(|bi| bi.ncols()).collect()
    }

    pub fn discrete_dynamics(&self) -> LinearDynamics {
        LinearDynamics::new(self.a_d.clone(), self.b_d.clone())
    }
}

impl ContinuousSystem for LinearGameMatrices {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dims(&self) -> Vec<usize> {
        LinearGameMatrices::control_dims(self)
    }

    fn deriv(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let mut dx = &self.a * x;
        for (bi, ui) in self.b.iter().zip(u) {
            dx += bi * ui;
        }
        dx
    }

    fn jacobians(&self, _x: &DVector<f64>, _u: &[DVector<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        (self.a.clone(), self.b.clone())
    }

    fn linear_matrices(&self) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        Some((self.a.clone(), self.b.clone()))
    }
}

/// `x⁺ = Āx + Σ B̄_i u_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: Vec<DMatrix<f64>>) -> Self {
        Self { a, b }
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dims(&self) -> Vec<usize> {
        self.b.iter().map(|bi| bi.ncols()).collect()
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let mut next = &self.a * x;
        for (bi, ui) in self.b.iter().zip(u) {
            next += bi * ui;
        }
        next
    }

    fn step_jacobian(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> StepJacobian {
        StepJacobian {
            next: self.step(k, x, u),
            wrt_state: self.a.clone(),
            wrt_controls: self.b.clone(),
        }
    }
}
