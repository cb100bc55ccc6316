use serde::{Deserialize, Serialize};

use super::{ControlProblem, Minimizer, QuadraticCost};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mirror::{dot, log_sum_exp, softmax, MirrorMap};

/// Randomised choice among `p` actions with entropic geometry:
/// `b = sum_i a_i beta_i`, `f = sum_i a_i phi_i(x)` with
/// `phi_i(x) = phi_i + phi_slope_i . x`, and `rho = KL(a | a0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteAction {
    pub beta: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub phi_slope: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub tau: f64,
    pub sigma: Matrix,
    pub terminal: QuadraticCost,
    pub kappa: f64,
    mirror: MirrorMap,
}

impl FiniteAction {
    pub fn new(
        beta: Vec<Vec<f64>>,
        phi: Vec<f64>,
        reference: Vec<f64>,
        tau: f64,
        sigma: Matrix,
        terminal: QuadraticCost,
    ) -> Result<Self> {
        let p = beta.len();
        let d = sigma.rows();
        let mirror = MirrorMap::simplex(p)?;
        let bad = |name: &'static str, reason: String| Error::InvalidParameter { name, reason };
        if beta.iter().any(|b| b.len() != d) {
            return Err(bad("beta", format!("each row must have length {d}")));
        }
        if phi.len() != p {
            return Err(bad("phi", format!("expected {p} entries")));
        }
        if reference.len() != p || !mirror.is_interior(&reference) {
            return Err(bad(
                "reference",
                "must be a strictly positive probability vector".into(),
            ));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(bad("tau", format!("must be positive, got {tau}")));
        }
        if terminal.quadratic.rows() != d {
            return Err(bad("terminal", "dimension mismatch".into()));
        }
        let kappa = crate::linalg::min_eigenvalue_sym(sigma.gram().as_slice(), d);
        Ok(Self {
            beta,
            phi,
            phi_slope: vec![vec![0.0; d]; p],
            reference,
            tau,
            sigma,
            terminal,
            kappa,
            mirror,
        })
    }

    pub fn with_phi_slope(mut self, slope: Vec<Vec<f64>>) -> Result<Self> {
        let d = self.sigma.rows();
        if slope.len() != self.beta.len() || slope.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidParameter {
                name: "phi_slope",
                reason: format!("expected {} rows of length {d}", self.beta.len()),
            });
        }
        self.phi_slope = slope;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    fn phi_at(&self, i: usize, x: &[f64]) -> f64 {
        self.phi[i] + dot(&self.phi_slope[i], x)
    }

    /// `beta_i . z + phi_i(x)`, the per-action cost rate.
    fn scores(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        (0..self.beta.len())
            .map(|i| dot(&self.beta[i], z) + self.phi_at(i, x))
            .collect()
    }
}

impl ControlProblem for FiniteAction {
    fn state_dim(&self) -> usize {
        self.sigma.rows()
    }

    fn noise_dim(&self) -> usize {
        self.sigma.cols()
    }

    fn mirror(&self) -> &MirrorMap {
        &self.mirror
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    fn ellipticity(&self) -> f64 {
        self.kappa
    }

    fn drift(&self, _t: f64, _x: &[f64], a: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (ai, b) in a.iter().zip(&self.beta) {
            for (o, bk) in out.iter_mut().zip(b) {
                *o += ai * bk;
            }
        }
    }

    fn drift_jacobian(&self, _t: f64, _x: &[f64], _a: &[f64], out: &mut [f64]) {
        let p = self.beta.len();
        for (i, b) in self.beta.iter().enumerate() {
            for (k, bk) in b.iter().enumerate() {
                out[k * p + i] = *bk;
            }
        }
    }

    fn sigma(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.sigma.as_slice());
    }

    fn running_cost(&self, _t: f64, x: &[f64], a: &[f64]) -> f64 {
        a.iter()
            .enumerate()
            .map(|(i, ai)| ai * self.phi_at(i, x))
            .sum()
    }

    fn running_cost_grad(&self, _t: f64, x: &[f64], _a: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.phi_at(i, x);
        }
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.terminal.eval(x)
    }

    fn reference_control(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.reference);
    }

    fn grad_a_hamiltonian(&self, _t: f64, x: &[f64], z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if !self.mirror.is_interior(a) {
            return Err(Error::Domain(format!(
                "{a:?} is not a strictly positive probability vector"
            )));
        }
        Ok(self
            .scores(x, z)
            .iter()
            .zip(a)
            .zip(&self.reference)
            .map(|((s, ai), r)| s + self.tau * (ai.ln() - r.ln()))
            .collect())
    }

    fn min_hamiltonian(&self, _t: f64, x: &[f64], z: &[f64]) -> Result<Minimizer> {
        let w: Vec<f64> = self
            .scores(x, z)
            .iter()
            .zip(&self.reference)
            .map(|(s, r)| r.ln() - s / self.tau)
            .collect();
        Ok(Minimizer {
            value: -self.tau * log_sum_exp(&w),
            argmin: softmax(&w),
            approximate: false,
        })
    }
}
