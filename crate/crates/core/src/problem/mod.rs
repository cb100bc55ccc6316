//! Control problem data and the Hamiltonian.
//!
//! A problem supplies drift `b(t,x,a)`, diffusion `sigma(t,x)`, running cost
//! `f(t,x,a)`, boundary/terminal cost `g(x)`, the regularisation weight
//! `tau`, a reference control `u0(t,x)` and the mirror geometry of the action
//! set. The pre-minimisation Hamiltonian is
//! `H(t,x,z,a) = b.z + f + tau * D_psi(a | u0)` and the minimised one is its
//! infimum over the action set.

mod custom;
mod finite_action;
mod lq_ball;

pub use custom::{CustomProblem, CustomProblemBuilder};
pub use finite_action::FiniteAction;
pub use lq_ball::{epsilon_root, first_order_residual, LqBall};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{min_eigenvalue_sym, Matrix};
use crate::mirror::{dot, norm_sq, MirrorMap};

/// Output of a pointwise Hamiltonian minimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimizer {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// Set when the minimiser came from the iterative fallback rather than a
    /// closed form.
    pub approximate: bool,
}

/// Iterations of the projected-gradient fallback minimiser.
pub const FALLBACK_ITERATIONS: usize = 200;
/// Step-length tolerance of the fallback minimiser.
pub const FALLBACK_TOLERANCE: f64 = 1e-10;

pub trait ControlProblem: Send + Sync {
    fn state_dim(&self) -> usize;
    /// Number of driving Brownian motions `d'`.
    fn noise_dim(&self) -> usize;
    fn mirror(&self) -> &MirrorMap;
    fn tau(&self) -> f64;
    /// Lower bound on the eigenvalues of `sigma sigma^T`.
    fn ellipticity(&self) -> f64;

    fn drift(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]);
    /// `d b_k / d a_j`, row-major `d x p`.
    fn drift_jacobian(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]);
    /// `sigma(t,x)`, row-major `d x d'`.
    fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn running_cost(&self, t: f64, x: &[f64], a: &[f64]) -> f64;
    fn running_cost_grad(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]);
    fn terminal_cost(&self, x: &[f64]) -> f64;
    fn reference_control(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `sigma sigma^T`, row-major `d x d`.
    fn covariance(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let (d, dp) = (self.state_dim(), self.noise_dim());
        let mut s = vec![0.0; d * dp];
        self.sigma(t, x, &mut s);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                out[i * d + k] = (0..dp).map(|j| s[i * dp + j] * s[k * dp + j]).sum();
            }
        }
        out
    }

    /// `rho^a(t,x) = D_psi(a | u0(t,x))`.
    fn regularizer(&self, t: f64, x: &[f64], a: &[f64]) -> Result<f64> {
        let mut u0 = vec![0.0; self.mirror().dim()];
        self.reference_control(t, x, &mut u0);
        self.mirror().bregman_psi(a, &u0)
    }

    /// `H(t,x,z,a)`.
    fn hamiltonian(&self, t: f64, x: &[f64], z: &[f64], a: &[f64]) -> Result<f64> {
        if !self.mirror().contains(a) {
            return Err(Error::Domain(format!("{a:?} outside the action set")));
        }
        let mut b = vec![0.0; self.state_dim()];
        self.drift(t, x, a, &mut b);
        let mut value = dot(&b, z) + self.running_cost(t, x, a);
        if self.tau() > 0.0 {
            value += self.tau() * self.regularizer(t, x, a)?;
        }
        Ok(value)
    }

    /// `grad_a H(t,x,z,a) = (d_a b)^T z + grad_a f + tau (grad psi(a) - grad psi(u0))`.
    fn grad_a_hamiltonian(&self, t: f64, x: &[f64], z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let (d, p) = (self.state_dim(), self.mirror().dim());
        if !self.mirror().contains(a) {
            return Err(Error::Domain(format!("{a:?} outside the action set")));
        }
        let mut jac = vec![0.0; d * p];
        self.drift_jacobian(t, x, a, &mut jac);
        let mut grad = vec![0.0; p];
        self.running_cost_grad(t, x, a, &mut grad);
        for (j, g) in grad.iter_mut().enumerate() {
            *g += (0..d).map(|k| jac[k * p + j] * z[k]).sum::<f64>();
        }
        if self.tau() > 0.0 {
            let mut u0 = vec![0.0; p];
            self.reference_control(t, x, &mut u0);
            let gp = self.mirror().grad_psi(a)?;
            let g0 = self.mirror().grad_psi(&u0)?;
            for j in 0..p {
                grad[j] += self.tau() * (gp[j] - g0[j]);
            }
        }
        Ok(grad)
    }

    /// Pointwise infimum of `H` over the action set and a minimiser.
    /// The default is the projected-gradient fallback, flagged approximate.
    fn min_hamiltonian(&self, t: f64, x: &[f64], z: &[f64]) -> Result<Minimizer> {
        projected_gradient_min(self, t, x, z)
    }
}

fn center(map: &MirrorMap) -> Vec<f64> {
    match *map {
        MirrorMap::Ball { dim, .. } => vec![0.0; dim],
        MirrorMap::Simplex { actions } => vec![1.0 / actions as f64; actions],
    }
}

/// Euclidean projection onto the action set, pulled towards its centre by a
/// relative margin so that the result is interior.
pub fn project_interior(map: &MirrorMap, a: &[f64], margin: f64) -> Vec<f64> {
    let projected = match *map {
        MirrorMap::Ball { radius, .. } => {
            let n = norm_sq(a).sqrt();
            if n > radius {
                a.iter().map(|v| v * radius / n).collect()
            } else {
                a.to_vec()
            }
        }
        MirrorMap::Simplex { .. } => project_simplex(a),
    };
    let c = center(map);
    projected
        .iter()
        .zip(&c)
        .map(|(v, m)| (1.0 - margin) * v + margin * m)
        .collect()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(a: &[f64]) -> Vec<f64> {
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    a.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Projected gradient descent with backtracking, started from the reference
/// control.
pub fn projected_gradient_min<P: ControlProblem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    z: &[f64],
) -> Result<Minimizer> {
    let map = problem.mirror();
    let margin = 1e-9;
    let mut a = vec![0.0; map.dim()];
    problem.reference_control(t, x, &mut a);
    let mut value = problem.hamiltonian(t, x, z, &a)?;
    let mut step = 1.0;
    for _ in 0..FALLBACK_ITERATIONS {
        let grad = problem.grad_a_hamiltonian(t, x, z, &a)?;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = a.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
            let trial = project_interior(map, &trial, margin);
            let diff: Vec<f64> = trial.iter().zip(&a).map(|(u, v)| u - v).collect();
            let model = value + dot(&grad, &diff) + norm_sq(&diff) / (2.0 * step);
            match problem.hamiltonian(t, x, z, &trial) {
                Ok(h) if h.is_finite() && h <= model + 1e-14 * value.abs().max(1.0) => {
                    accepted = Some((trial, h, norm_sq(&diff).sqrt()));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((trial, h, moved)) = accepted else {
            break;
        };
        a = trial;
        value = h;
        if moved <= FALLBACK_TOLERANCE {
            break;
        }
        step *= 2.0;
    }
    Ok(Minimizer {
        value,
        argmin: a,
        approximate: true,
    })
}

/// Smallest eigenvalue of `sigma sigma^T` over all grid nodes and levels.
pub fn min_covariance_eigenvalue<P: ControlProblem + ?Sized>(problem: &P, grid: &Grid) -> f64 {
    let d = problem.state_dim();
    let mut lowest = f64::INFINITY;
    for level in 0..grid.levels() {
        let t = grid.time(level);
        for node in 0..grid.n_interior() {
            let c = problem.covariance(t, &grid.coords(node));
            lowest = lowest.min(min_eigenvalue_sym(&c, d));
        }
    }
    lowest
}

/// Checks the problem against a grid: matching dimensions, uniform
/// ellipticity at every node and an interior reference control.
pub fn validate_problem<P: ControlProblem + ?Sized>(problem: &P, grid: &Grid) -> Result<()> {
    if problem.state_dim() != grid.dim() {
        return Err(Error::InvalidParameter {
            name: "state_dim",
            reason: format!(
                "problem has dimension {}, grid has {}",
                problem.state_dim(),
                grid.dim()
            ),
        });
    }
    if !(problem.tau() >= 0.0 && problem.tau().is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be finite and non-negative, got {}", problem.tau()),
        });
    }
    let kappa = problem.ellipticity();
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: "ellipticity constant must be positive".into(),
        });
    }
    let lowest = min_covariance_eigenvalue(problem, grid);
    if lowest < kappa * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("sigma sigma^T has eigenvalue {lowest} below kappa = {kappa}"),
        });
    }
    let mut u0 = vec![0.0; problem.mirror().dim()];
    for level in 0..grid.levels() {
        let t = grid.time(level);
        for node in 0..grid.n_interior() {
            problem.reference_control(t, &grid.coords(node), &mut u0);
            if !problem.mirror().is_interior(&u0) {
                return Err(Error::Domain(format!(
                    "reference control {u0:?} is not interior"
                )));
            }
        }
    }
    Ok(())
}

/// `g(x) = x^T M x + c.x + c0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub quadratic: Matrix,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticCost {
    pub fn pure(quadratic: Matrix) -> Self {
        let d = quadratic.rows();
        Self {
            quadratic,
            linear: vec![0.0; d],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.quadratic.quadratic_form(x) + dot(&self.linear, x) + self.constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[2.0, 0.0, -1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!((p[2] - 0.5).abs() < 1e-15);
    }
}
