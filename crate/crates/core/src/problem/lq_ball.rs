use serde::{Deserialize, Serialize};

use super::{ControlProblem, Minimizer, QuadraticCost};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mirror::{dot, norm_sq, MirrorMap};

/// Linear-quadratic problem with actions in a ball of radius `R`:
/// `b = M1 x + N a`, `sigma = M2`, `f = |x|^2/2 + |a|^2/2`, `g = x^T M3 x`,
/// log-barrier geometry and reference control `u0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqBall {
    pub m1: Matrix,
    pub n: Matrix,
    pub m2: Matrix,
    pub terminal: QuadraticCost,
    pub radius: f64,
    pub tau: f64,
    pub kappa: f64,
    mirror: MirrorMap,
}

impl LqBall {
    pub fn new(
        m1: Matrix,
        n: Matrix,
        m2: Matrix,
        m3: Matrix,
        radius: f64,
        tau: f64,
        kappa: f64,
    ) -> Result<Self> {
        let d = m1.rows();
        let shape_err = |name: &'static str| Error::InvalidParameter {
            name,
            reason: "dimension mismatch".into(),
        };
        if m1.cols() != d {
            return Err(shape_err("m1"));
        }
        if n.rows() != d {
            return Err(shape_err("n"));
        }
        if m2.rows() != d {
            return Err(shape_err("m2"));
        }
        if m3.rows() != d || m3.cols() != d {
            return Err(shape_err("m3"));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be finite and non-negative, got {tau}"),
            });
        }
        let mirror = MirrorMap::ball(radius, n.cols())?;
        Ok(Self {
            m1,
            n,
            m2,
            terminal: QuadraticCost::pure(m3),
            radius,
            tau,
            kappa,
            mirror,
        })
    }

    /// Scalar analogue with `d = p = 1` and `A = [-R, R]`.
    pub fn scalar(m1: f64, n: f64, m2: f64, m3: f64, radius: f64, tau: f64) -> Result<Self> {
        Self::new(
            Matrix::diag(&[m1]),
            Matrix::diag(&[n]),
            Matrix::diag(&[m2]),
            Matrix::diag(&[m3]),
            radius,
            tau,
            m2 * m2,
        )
    }

    fn n_transpose_z(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n.cols()];
        self.n.t_mul_vec(z, &mut out);
        out
    }

    fn state_part(&self, x: &[f64], z: &[f64]) -> f64 {
        let mut m1x = vec![0.0; x.len()];
        self.m1.mul_vec(x, &mut m1x);
        dot(&m1x, z) + 0.5 * norm_sq(x)
    }
}

impl ControlProblem for LqBall {
    fn state_dim(&self) -> usize {
        self.m1.rows()
    }

    fn noise_dim(&self) -> usize {
        self.m2.cols()
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

    fn drift(&self, _t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        self.m1.mul_vec(x, out);
        for (k, o) in out.iter_mut().enumerate() {
            *o += (0..a.len()).map(|j| self.n.get(k, j) * a[j]).sum::<f64>();
        }
    }

    fn drift_jacobian(&self, _t: f64, _x: &[f64], _a: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.n.as_slice());
    }

    fn sigma(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.m2.as_slice());
    }

    fn running_cost(&self, _t: f64, x: &[f64], a: &[f64]) -> f64 {
        0.5 * norm_sq(x) + 0.5 * norm_sq(a)
    }

    fn running_cost_grad(&self, _t: f64, _x: &[f64], a: &[f64], out: &mut [f64]) {
        out.copy_from_slice(a);
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.terminal.eval(x)
    }

    fn reference_control(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn grad_a_hamiltonian(&self, _t: f64, _x: &[f64], z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let r2 = self.radius * self.radius;
        let gap = r2 - norm_sq(a);
        let barrier = if self.tau > 0.0 {
            if gap <= 0.0 {
                return Err(Error::Domain(format!("|a| >= R for a = {a:?}")));
            }
            2.0 * self.tau / gap
        } else {
            if !self.mirror().contains(a) {
                return Err(Error::Domain(format!("{a:?} outside the action set")));
            }
            0.0
        };
        let ntz = self.n_transpose_z(z);
        Ok(ntz
            .iter()
            .zip(a)
            .map(|(g, &v)| g + v + barrier * v)
            .collect())
    }

    fn min_hamiltonian(&self, _t: f64, x: &[f64], z: &[f64]) -> Result<Minimizer> {
        let base = self.state_part(x, z);
        let ntz = self.n_transpose_z(z);
        let m = norm_sq(&ntz).sqrt();
        let r = self.radius;
        if self.tau == 0.0 {
            let (argmin, value) = if m <= r {
                (ntz.iter().map(|v| -v).collect(), base - 0.5 * m * m)
            } else {
                (
                    ntz.iter().map(|v| -r * v / m).collect(),
                    base - r * m + 0.5 * r * r,
                )
            };
            return Ok(Minimizer {
                value,
                argmin,
                approximate: false,
            });
        }
        if m < 1e-14 {
            return Ok(Minimizer {
                value: base,
                argmin: vec![0.0; ntz.len()],
                approximate: false,
            });
        }
        let eps = epsilon_root(r, self.tau, m)?;
        let magnitude = r - eps;
        let argmin = ntz.iter().map(|v| -magnitude * v / m).collect();
        let value = base - magnitude * m
            + 0.5 * magnitude * magnitude
            + self.tau * (r * r / (eps * (2.0 * r - eps))).ln();
        Ok(Minimizer {
            value,
            argmin,
            approximate: false,
        })
    }
}

fn cubic(r: f64, tau: f64, m: f64, e: f64) -> (f64, f64, f64) {
    let c2 = m - 3.0 * r;
    let c1 = 2.0 * r * r - 2.0 * tau - 2.0 * r * m;
    let c0 = 2.0 * r * tau;
    let value = ((e + c2) * e + c1) * e + c0;
    let slope = (3.0 * e + 2.0 * c2) * e + c1;
    let scale = e.powi(3) + (c2 * e * e).abs() + (c1 * e).abs() + c0;
    (value, slope, scale)
}

/// Distance `eps = R - |a*|` of the regularised ball minimiser from the
/// sphere, as the root in `(0, R)` of
/// `eps^3 + (m - 3R) eps^2 + (2R^2 - 2tau - 2Rm) eps + 2R tau`,
/// where `m = |N^T z|`. Returns `R` when `m = 0`.
///
/// Safeguarded Newton from `R/2`: the bracket `P(0) = 2R tau > 0`,
/// `P(R) = -m R^2 < 0` is kept and bisection replaces any Newton step that
/// leaves it.
pub fn epsilon_root(radius: f64, tau: f64, m: f64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: format!("must be positive, got {radius}"),
        });
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be positive, got {tau}"),
        });
    }
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!("must be finite and non-negative, got {m}"),
        });
    }
    if m == 0.0 {
        return Ok(radius);
    }
    let (mut lo, mut hi) = (0.0, radius);
    let mut e = 0.5 * radius;
    for _ in 0..200 {
        let (p, dp, scale) = cubic(radius, tau, m, e);
        if p == 0.0 {
            return Ok(e);
        }
        if p > 0.0 {
            lo = e;
        } else {
            hi = e;
        }
        let newton = e - p / dp;
        let next = if dp != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged = (next - e).abs() <= 4.0 * f64::EPSILON * e.max(f64::MIN_POSITIVE)
            || hi - lo <= 4.0 * f64::EPSILON * hi;
        e = next;
        if converged && p.abs() <= 1e-12 * scale {
            break;
        }
    }
    Ok(e)
}

/// Residual of the first-order condition
/// `(R - eps)(1 + 2 tau / (R^2 - (R - eps)^2)) - m`.
pub fn first_order_residual(radius: f64, tau: f64, m: f64, eps: f64) -> f64 {
    (radius - eps) * (1.0 + 2.0 * tau / (eps * (2.0 * radius - eps))) - m
}
