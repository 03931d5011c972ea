use std::fmt;

use nalgebra::{DMatrix, DVector};

/// Gradient and Hessian of a scalar feature with respect to the stacked
/// per-step vector `z = [x; u_1; …; u_N]`.
#[derive(Clone, Debug)]
pub struct FeatureDerivatives {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A scalar, twice continuously differentiable per-step feature
/// `η(x, u_1, …, u_N)`.
pub trait Feature: Send + Sync + fmt::Debug {
    fn label(&self) -> String;

    fn value(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> f64;

    fn derivatives(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> FeatureDerivatives;
}

/// Offsets of the state and each player's control inside `z = [x; u_1; …; u_N]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepLayout {
    pub state_dim: usize,
    pub control_dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl StepLayout {
    pub fn new(state_dim: usize, control_dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(control_dims.len());
        let mut at = state_dim;
        for &m in control_dims {
            offsets.push(at);
            at += m;
        }
        Self {
            state_dim,
            control_dims: control_dims.to_vec(),
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.state_dim + self.control_dims.iter().sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn control_offset(&self, player: usize) -> usize {
        self.offsets[player]
    }

    pub fn index_of(&self, var: Var) -> usize {
        match var {
            Var::State(j) => j,
            Var::Control { player, index } => self.offsets[player] + index,
        }
    }
}

/// A scalar coordinate of the per-step vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    State(usize),
    Control { player: usize, index: usize },
}

impl Var {
    fn read(self, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        match self {
            Var::State(j) => x[j],
            Var::Control { player, index } => u[player][index],
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(j) => write!(f, "x{}", j + 1),
            Var::Control { player, index } => write!(f, "u{}_{}", player + 1, index + 1),
        }
    }
}

/// `η = -c·v²` for a single coordinate `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SquaredTerm {
    pub var: Var,
    pub coefficient: f64,
    layout: StepLayout,
}

impl SquaredTerm {
    pub fn new(var: Var, coefficient: f64, layout: StepLayout) -> Self {
        Self {
            var,
            coefficient,
            layout,
        }
    }

    /// `η = -v²`.
    pub fn negated_square(var: Var, layout: StepLayout) -> Self {
        Self::new(var, 1.0, layout)
    }
}

impl Feature for SquaredTerm {
    fn label(&self) -> String {
        if self.coefficient == 1.0 {
            format!("-{}^2", self.var)
        } else {
            format!("-{}*{}^2", self.coefficient, self.var)
        }
    }

    fn value(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        let v = self.var.read(x, u);
        -self.coefficient * v * v
    }

    fn derivatives(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> FeatureDerivatives {
        let nz = self.layout.len();
        let idx = self.layout.index_of(self.var);
        let v = self.var.read(x, u);
        let mut gradient = DVector::zeros(nz);
        gradient[idx] = -2.0 * self.coefficient * v;
        let mut hessian = DMatrix::zeros(nz, nz);
        hessian[(idx, idx)] = -2.0 * self.coefficient;
        FeatureDerivatives { gradient, hessian }
    }
}

/// The standard quadratic-regulation feature set for player `player`:
/// `-[x_1², …, x_n², u_{i,1}², …, u_{i,m_i}²]`.
pub fn regulation_features(layout: &StepLayout, player: usize) -> Vec<SquaredTerm> {
    let mut out: Vec<SquaredTerm> = (0..layout.state_dim)
        .map(|j| SquaredTerm::negated_square(Var::State(j), layout.clone()))
        .collect();
    for index in 0..layout.control_dims[player] {
        out.push(SquaredTerm::negated_square(
            Var::Control { player, index },
            layout.clone(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_term_derivatives_match_finite_differences() {
        let layout = StepLayout::new(2, &[1, 1]);
        let f = SquaredTerm::new(Var::Control { player: 1, index: 0 }, 3.0, layout);
        let x = DVector::from_vec(vec![0.3, -0.2]);
        let u = vec![DVector::from_vec(vec![0.7]), DVector::from_vec(vec![-1.1])];
        let d = f.derivatives(&x, &u);
        let h = 1e-6;
        let mut up = u.clone();
        up[1][0] += h;
        let mut um = u.clone();
        um[1][0] -= h;
        let fd = (f.value(&x, &up) - f.value(&x, &um)) / (2.0 * h);
        assert!((d.gradient[3] - fd).abs() < 1e-8);
        assert_eq!(d.hessian[(3, 3)], -6.0);
        assert_eq!(d.gradient[0], 0.0);
    }

    #[test]
    fn layout_offsets() {
        let layout = StepLayout::new(4, &[1, 2]);
        assert_eq!(layout.len(), 7);
        assert_eq!(layout.index_of(Var::Control { player: 1, index: 1 }), 6);
        assert_eq!(regulation_features(&layout, 1).len(), 6);
    }
}
