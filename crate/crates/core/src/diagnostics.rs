//! Numerical certificates: performance difference, rate inequalities and the
//! relative strong convexity probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{controls, flow_step, FlowConfig, FlowRecord, FlowState};
use crate::grid::{spatial_gradient, Field, Grid};
use crate::mirror::{dot, norm_sq, MirrorMap};
use crate::pde::{evaluate_policy, feynman_kac, SchemeConfig};
use crate::problem::ControlProblem;

/// Values below this are treated as rounding noise by the rate checks.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct PerformanceDifference {
    /// `V^u - V^{u'}`
    pub lhs: Field,
    /// `E^{u'} int H(., grad V^u, u) - H(., grad V^u, u')`
    pub rhs: Field,
    pub residual: Field,
}

impl PerformanceDifference {
    /// Largest residual magnitude over levels before the horizon.
    pub fn max_residual(&self) -> f64 {
        self.residual.max_abs_before_terminal()
    }
}

pub fn performance_difference_residual<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    u: &Field,
    u_alt: &Field,
) -> Result<PerformanceDifference> {
    let v = evaluate_policy(problem, grid, u, scheme)?;
    let v_alt = evaluate_policy(problem, grid, u_alt, scheme)?;
    let grad = spatial_gradient(&v, grid)?;
    let d = grid.dim();
    let mut source = Field::zeros(grid, 1);
    for level in 0..grid.levels() {
        let t = grid.time(level);
        for node in 0..grid.n_interior() {
            let x = grid.coords(node);
            let z = grad.node(level, node);
            debug_assert_eq!(z.len(), d);
            let h = problem.hamiltonian(t, &x, z, u.node(level, node))?;
            let h_alt = problem.hamiltonian(t, &x, z, u_alt.node(level, node))?;
            source.set(level, node, 0, h - h_alt);
        }
    }
    let w = feynman_kac(problem, grid, u_alt, &source, scheme)?;
    let lhs = v.interior().axpy(-1.0, v_alt.interior());
    let residual = lhs.axpy(-1.0, w.interior());
    Ok(PerformanceDifference {
        lhs,
        rhs: w.interior().clone(),
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub certificate: String,
    pub pass: bool,
    pub worst_s: Option<f64>,
    pub worst_slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    pub allowance: f64,
    pub clamp_magnitude: f64,
    pub checked: usize,
}

/// Tracks the record with the smallest relative slack `(bound - value) / bound`.
struct Worst {
    s: Option<f64>,
    slack: Option<f64>,
    relative: f64,
    pass: bool,
    checked: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            s: None,
            slack: None,
            relative: f64::INFINITY,
            pass: true,
            checked: 0,
        }
    }

    fn check(&mut self, s: f64, value: f64, bound: f64, allowance: f64) {
        self.checked += 1;
        let slack = bound - value;
        let ok = slack >= -allowance * bound - ROUNDING_FLOOR;
        self.pass &= ok;
        let relative = if bound > 0.0 {
            slack / bound
        } else if slack >= -ROUNDING_FLOOR {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        if relative < self.relative {
            self.relative = relative;
            self.s = Some(s);
            self.slack = Some(slack);
        }
    }
}

/// `probe_gap(s) <= D0 / s` for every record with `s >= 1`, up to a relative
/// `allowance`.
pub fn linear_rate_certificate(
    records: &[FlowRecord],
    d0_probe: f64,
    allowance: f64,
    clamp_magnitude: f64,
) -> CertificateReport {
    let mut worst = Worst::new();
    for r in records.iter().filter(|r| r.s >= 1.0) {
        worst.check(r.s, r.probe_gap, d0_probe / r.s, allowance);
    }
    CertificateReport {
        certificate: "linear_rate".into(),
        pass: worst.pass,
        worst_s: worst.s,
        worst_slack: worst.slack,
        fitted_slope: None,
        lambda: None,
        allowance,
        clamp_magnitude,
        checked: worst.checked,
    }
}

/// Least-squares slope of `ln D` against `s` over records with
/// `D >= ROUNDING_FLOOR`.
pub fn fitted_log_slope(records: &[FlowRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| {
            r.lyapunov_probe
                .filter(|&d| d >= ROUNDING_FLOOR)
                .map(|d| (r.s, d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let ms = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - ms) * (p.0 - ms)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - ms) * (p.1 - ml)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Both exponential-rate inequalities per record,
/// `gap <= (lambda/2) D0 / (e^{lambda s / 2} - 1)` and
/// `D(s) <= e^{-lambda s / 2} D0`, plus the fitted slope of `ln D` against
/// `-(1 - allowance) lambda / 2`.
pub fn exponential_rate_certificate(
    records: &[FlowRecord],
    d0_probe: f64,
    lambda: f64,
    allowance: f64,
    clamp_magnitude: f64,
) -> Result<CertificateReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        });
    }
    let half = 0.5 * lambda;
    let mut worst = Worst::new();
    for r in records.iter().filter(|r| r.s > 0.0) {
        let gap_bound = half * d0_probe / (half * r.s).exp_m1();
        worst.check(r.s, r.probe_gap, gap_bound, allowance);
        if let Some(d) = r.lyapunov_probe.filter(|&d| d >= ROUNDING_FLOOR) {
            worst.check(r.s, d, (-half * r.s).exp() * d0_probe, allowance);
        }
    }
    let slope = fitted_log_slope(records);
    let slope_ok = slope.is_none_or(|m| m <= -(1.0 - allowance) * half);
    Ok(CertificateReport {
        certificate: "exponential_rate".into(),
        pass: worst.pass && slope_ok,
        worst_s: worst.s,
        worst_slack: worst.slack,
        fitted_slope: slope,
        lambda: Some(lambda),
        allowance,
        clamp_magnitude,
        checked: worst.checked,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexitySample {
    pub t: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub a_ref: Vec<f64>,
    pub margin: f64,
}

/// Uniform point in the ball of radius `scale * R`, or a Dirichlet(1) point
/// of the simplex mixed with the uniform law at weight `1 - scale`.
pub fn sample_action<R: Rng + ?Sized>(map: &MirrorMap, scale: f64, rng: &mut R) -> Vec<f64> {
    match *map {
        MirrorMap::Ball { radius, dim } => {
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
            let r = scale * radius * rng.random::<f64>().powf(1.0 / dim as f64);
            dir.iter().map(|v| v * r / n).collect()
        }
        MirrorMap::Simplex { actions } => {
            let e: Vec<f64> = (0..actions).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = e.iter().sum();
            let u = 1.0 / actions as f64;
            e.iter()
                .map(|v| scale * v / total + (1.0 - scale) * u)
                .collect()
        }
    }
}

/// Samples `(t, x, z, a, a')` and returns the sample with the smallest
/// `H(a) - H(a') - grad_a H(a').(a - a') - (lambda/2) D_psi(a | a')`.
/// `z` is uniform in the ball of radius `z_radius`; actions come from
/// `sample_action` with scale `1 - 1e-3` so that they stay interior.
pub fn convexity_probe<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    n_samples: usize,
    lambda: f64,
    z_radius: f64,
    seed: u64,
) -> Result<ConvexitySample> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: "must be at least 1".into(),
        });
    }
    let map = problem.mirror();
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<ConvexitySample> = None;
    for _ in 0..n_samples {
        let t = rng.random::<f64>() * grid.horizon();
        let x: Vec<f64> = (0..d)
            .map(|k| grid.lo()[k] + rng.random::<f64>() * (grid.hi()[k] - grid.lo()[k]))
            .collect();
        let z = sample_action(
            &MirrorMap::Ball {
                radius: z_radius.max(1e-300),
                dim: d,
            },
            1.0,
            &mut rng,
        );
        let a = sample_action(map, 1.0 - 1e-3, &mut rng);
        let a_ref = sample_action(map, 1.0 - 1e-3, &mut rng);
        let h = problem.hamiltonian(t, &x, &z, &a)?;
        let h_ref = problem.hamiltonian(t, &x, &z, &a_ref)?;
        let g = problem.grad_a_hamiltonian(t, &x, &z, &a_ref)?;
        let diff: Vec<f64> = a.iter().zip(&a_ref).map(|(u, v)| u - v).collect();
        let margin = h - h_ref - dot(&g, &diff) - 0.5 * lambda * map.bregman_psi(&a, &a_ref)?;
        if worst.as_ref().is_none_or(|w| margin < w.margin) {
            worst = Some(ConvexitySample {
                t,
                x,
                z,
                a,
                a_ref,
                margin,
            });
        }
    }
    Ok(worst.expect("at least one sample"))
}

/// Runs `steps` flow steps from `z0` and from `z0` shifted by `shift` along
/// the all-ones direction at every node, and returns the largest difference
/// between the two control trajectories. Only meaningful for the simplex.
pub fn gauge_invariance<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    config: &FlowConfig,
    z0: &Field,
    shift: f64,
    steps: usize,
) -> Result<f64> {
    let map = problem.mirror();
    let mut shifted = z0.clone();
    shifted.data_mut().iter_mut().for_each(|v| *v += shift);
    let mut a = FlowState::new(problem, grid, scheme, z0.clone(), config.eta0)?;
    let mut b = FlowState::new(problem, grid, scheme, shifted, config.eta0)?;
    let mut worst = controls(map, &a.z).max_abs_diff(&controls(map, &b.z));
    for _ in 0..steps {
        a = flow_step(problem, grid, scheme, config, &a, f64::INFINITY)?.0;
        b = flow_step(problem, grid, scheme, config, &b, f64::INFINITY)?.0;
        worst = worst.max(controls(map, &a.z).max_abs_diff(&controls(map, &b.z)));
    }
    Ok(worst)
}
