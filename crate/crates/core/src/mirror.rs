//! Mirror geometry: the barrier `psi`, its Legendre conjugate `psi*`, their
//! gradients, the Hessian of `psi*` and both Bregman divergences.
//!
//! Two action sets are supported:
//!
//! * [`MirrorMap::Ball`]: the open ball of radius `R` in `R^p` with the
//!   log-barrier `psi(a) = -log(R^2 - |a|^2)`;
//! * [`MirrorMap::Simplex`]: the probability simplex with negative entropy
//!   `psi(a) = sum a_i log a_i`, whose conjugate is log-sum-exp.
//!
//! For both maps `D_psi(grad psi*(y) | grad psi*(y')) = D_psi*(y', y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum a_i = 1` when testing simplex membership.
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MirrorMap {
    Ball { radius: f64, dim: usize },
    Simplex { actions: usize },
}

impl MirrorMap {
    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self::Ball { radius, dim })
    }

    pub fn simplex(actions: usize) -> Result<Self> {
        if actions < 2 {
            return Err(Error::InvalidParameter {
                name: "actions",
                reason: format!("need at least 2 actions, got {actions}"),
            });
        }
        Ok(Self::Simplex { actions })
    }

    /// Dimension `p` of the action space.
    pub fn dim(&self) -> usize {
        match *self {
            Self::Ball { dim, .. } => dim,
            Self::Simplex { actions } => actions,
        }
    }

    /// Whether `a` lies in the interior of the action set (where `grad psi`
    /// is finite).
    pub fn is_interior(&self, a: &[f64]) -> bool {
        match *self {
            Self::Ball { radius, .. } => norm_sq(a) < radius * radius,
            Self::Simplex { .. } => {
                a.iter().all(|&v| v > 0.0) && (a.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_SUM_TOL
            }
        }
    }

    /// Whether `a` lies in the closed action set.
    pub fn contains(&self, a: &[f64]) -> bool {
        match *self {
            Self::Ball { radius, .. } => norm_sq(a).sqrt() <= radius * (1.0 + 1e-12),
            Self::Simplex { .. } => {
                a.iter().all(|&v| v >= 0.0)
                    && (a.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_SUM_TOL
            }
        }
    }

    /// `psi(a)`, `+inf` outside the domain.
    pub fn psi(&self, a: &[f64]) -> f64 {
        match *self {
            Self::Ball { radius, .. } => {
                let gap = radius * radius - norm_sq(a);
                if gap > 0.0 {
                    -gap.ln()
                } else {
                    f64::INFINITY
                }
            }
            Self::Simplex { .. } => {
                if !self.contains(a) {
                    return f64::INFINITY;
                }
                a.iter().map(|&v| xlogx(v)).sum()
            }
        }
    }

    pub fn grad_psi(&self, a: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Self::Ball { radius, .. } => {
                let gap = radius * radius - norm_sq(a);
                if gap <= 0.0 {
                    return Err(Error::Domain(format!("|a| >= R for a = {a:?}")));
                }
                Ok(a.iter().map(|&v| 2.0 * v / gap).collect())
            }
            Self::Simplex { .. } => {
                if a.iter().any(|&v| v <= 0.0) {
                    return Err(Error::Domain(format!("zero or negative weight in {a:?}")));
                }
                Ok(a.iter().map(|&v| 1.0 + v.ln()).collect())
            }
        }
    }

    /// `psi*(y)`, finite everywhere.
    pub fn psi_star(&self, y: &[f64]) -> f64 {
        match *self {
            Self::Ball { radius, .. } => {
                let r2 = radius * radius;
                let root = (1.0 + r2 * norm_sq(y)).sqrt();
                root - 1.0 + (2.0 * r2).ln() - (1.0 + root).ln()
            }
            Self::Simplex { .. } => log_sum_exp(y),
        }
    }

    /// `grad psi*(y)`, strictly inside the action set.
    pub fn grad_psi_star(&self, y: &[f64]) -> Vec<f64> {
        match *self {
            Self::Ball { radius, .. } => {
                let r2 = radius * radius;
                let scale = r2 / (1.0 + (1.0 + r2 * norm_sq(y)).sqrt());
                y.iter().map(|&v| scale * v).collect()
            }
            Self::Simplex { .. } => softmax(y),
        }
    }

    /// Hessian of `psi*` at `y`, row-major `p x p`.
    pub fn hess_psi_star(&self, y: &[f64]) -> Vec<f64> {
        let p = y.len();
        let mut h = vec![0.0; p * p];
        match *self {
            Self::Ball { radius, .. } => {
                let r2 = radius * radius;
                let root = (1.0 + r2 * norm_sq(y)).sqrt();
                let alpha = r2 / (1.0 + root);
                let beta = r2 * r2 / (root * (1.0 + root) * (1.0 + root));
                for i in 0..p {
                    for j in 0..p {
                        h[i * p + j] = -beta * y[i] * y[j];
                    }
                    h[i * p + i] += alpha;
                }
            }
            Self::Simplex { .. } => {
                let s = softmax(y);
                for i in 0..p {
                    for j in 0..p {
                        h[i * p + j] = -s[i] * s[j];
                    }
                    h[i * p + i] += s[i];
                }
            }
        }
        h
    }

    /// `D_psi(a | a_ref)`. `a_ref` must be interior; `a` outside the closed
    /// domain gives `+inf`.
    pub fn bregman_psi(&self, a: &[f64], a_ref: &[f64]) -> Result<f64> {
        if !self.is_interior(a_ref) {
            return Err(Error::Domain(format!(
                "reference point {a_ref:?} is not interior"
            )));
        }
        match *self {
            Self::Ball { radius, .. } => {
                let r2 = radius * radius;
                let gap = r2 - norm_sq(a);
                if gap <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                let gap_ref = r2 - norm_sq(a_ref);
                let lin: f64 = a_ref
                    .iter()
                    .zip(a)
                    .map(|(&r, &v)| 2.0 * r * (v - r))
                    .sum::<f64>()
                    / gap_ref;
                Ok(((gap_ref / gap).ln() - lin).max(0.0))
            }
            Self::Simplex { .. } => {
                if !self.contains(a) {
                    return Ok(f64::INFINITY);
                }
                // KL form of the Bregman divergence, exact for unnormalised
                // sums as well.
                let kl: f64 = a
                    .iter()
                    .zip(a_ref)
                    .map(|(&v, &r)| if v > 0.0 { v * (v / r).ln() } else { 0.0 })
                    .sum();
                let mass: f64 = a_ref.iter().sum::<f64>() - a.iter().sum::<f64>();
                Ok((kl + mass).max(0.0))
            }
        }
    }

    /// `D_psi*(y | y_ref) = psi*(y) - psi*(y_ref) - grad psi*(y_ref).(y - y_ref)`.
    pub fn bregman_psi_star(&self, y: &[f64], y_ref: &[f64]) -> f64 {
        if y == y_ref {
            return 0.0;
        }
        match *self {
            Self::Ball { radius, .. } => {
                // With q = sqrt(1 + R^2|y|^2): psi*(y) = q - 1 + log(2R^2) - log(1 + q)
                // and grad psi*(y') = R^2 y' / (1 + q').
                let r2 = radius * radius;
                let q = (1.0 + r2 * norm_sq(y)).sqrt();
                let q_ref = (1.0 + r2 * norm_sq(y_ref)).sqrt();
                let d = ((1.0 + q_ref) / (1.0 + q)).ln() + (q - 1.0)
                    - r2 * dot(y, y_ref) / (1.0 + q_ref);
                d.max(0.0)
            }
            Self::Simplex { .. } => {
                // equals KL(softmax(y_ref) | softmax(y))
                let lse = log_sum_exp(y);
                let lse_ref = log_sum_exp(y_ref);
                let kl: f64 = y
                    .iter()
                    .zip(y_ref)
                    .map(|(&yi, &yr)| {
                        let log_sr = yr - lse_ref;
                        log_sr.exp() * (log_sr - (yi - lse))
                    })
                    .sum();
                kl.max(0.0)
            }
        }
    }

    /// Moves a point of the closed action set at least `eps` into the interior:
    /// radial shrink for the ball, mixing with the uniform law for the simplex.
    /// Returns the moved point and whether it was changed.
    pub fn clamp_to_interior(&self, a: &[f64], eps: f64) -> (Vec<f64>, bool) {
        match *self {
            Self::Ball { radius, .. } => {
                let n = norm_sq(a).sqrt();
                let limit = if eps > 0.0 {
                    radius - eps
                } else {
                    radius * (1.0 - 1e-12)
                };
                if n > limit {
                    (a.iter().map(|&v| v * limit / n).collect(), true)
                } else {
                    (a.to_vec(), false)
                }
            }
            Self::Simplex { actions } => {
                let min = a.iter().copied().fold(f64::INFINITY, f64::min);
                if min > 0.0 && min >= eps {
                    return (a.to_vec(), false);
                }
                let w = if eps > 0.0 { eps } else { 1e-12 };
                let u = 1.0 / actions as f64;
                (
                    a.iter().map(|&v| (1.0 - w) * v.max(0.0) + w * u).collect(),
                    true,
                )
            }
        }
    }
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn xlogx(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// Max-shifted `log(sum exp(y_i))`.
pub fn log_sum_exp(y: &[f64]) -> f64 {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + y.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}
