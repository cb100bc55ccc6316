//! Explicit Euler integration of the mirror flow `dZ/ds = -grad_a H(., grad V^{u_s}, u_s)`,
//! `u_s = grad psi*(Z_s)`, with the Lyapunov function and the value-derivative
//! identity used to certify it.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{spatial_gradient, Field, Grid, ValueField};
use crate::mirror::MirrorMap;
use crate::pde::{evaluate_policy, feynman_kac, SchemeConfig};
use crate::problem::ControlProblem;

/// Point `(t0, x0)` at which values and the Lyapunov function are tracked,
/// snapped to the nearest grid level and interior node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
}

impl Probe {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }

    pub fn locate(&self, grid: &Grid) -> Result<(usize, usize)> {
        if self.x.len() != grid.dim() || !grid.contains(&self.x) {
            return Err(Error::InvalidParameter {
                name: "probe",
                reason: format!("{:?} is not inside the domain", self.x),
            });
        }
        if !(0.0..grid.horizon()).contains(&self.t) {
            return Err(Error::InvalidParameter {
                name: "probe",
                reason: format!("time {} is not in [0, T)", self.t),
            });
        }
        let level = grid.nearest_level(self.t).min(grid.nt() - 1);
        Ok((level, grid.nearest_interior(&self.x)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub eta0: f64,
    pub horizon: f64,
    pub probe: Probe,
    /// Absolute part of the per-step monotonicity tolerance.
    #[serde(default = "default_mono_tolerance")]
    pub mono_tolerance: f64,
    /// Coefficient of `eta^2` in the per-step monotonicity tolerance.
    #[serde(default = "default_mono_quadratic")]
    pub mono_quadratic: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
}

fn default_mono_tolerance() -> f64 {
    1e-8
}

fn default_mono_quadratic() -> f64 {
    10.0
}

fn default_max_halvings() -> usize {
    20
}

impl FlowConfig {
    /// `S = 20` without regularisation and `10 / tau` otherwise.
    pub fn default_horizon(tau: f64) -> f64 {
        if tau > 0.0 {
            10.0 / tau
        } else {
            20.0
        }
    }

    pub fn new(eta0: f64, horizon: f64, probe: Probe) -> Self {
        Self {
            eta0,
            horizon,
            probe,
            mono_tolerance: default_mono_tolerance(),
            mono_quadratic: default_mono_quadratic(),
            max_halvings: default_max_halvings(),
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eta0",
                reason: format!("must be positive, got {}", self.eta0),
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be positive, got {}", self.horizon),
            });
        }
        self.probe.locate(grid)?;
        Ok(())
    }

    fn allowance(&self, eta: f64) -> f64 {
        self.mono_tolerance + self.mono_quadratic * eta * eta
    }
}

/// Dual field `Z_s` with its flow time, step size and the cached value
/// `V^{u_s}`.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub s: f64,
    pub z: Field,
    pub eta: f64,
    pub value: ValueField,
}

impl FlowState {
    pub fn new<P: ControlProblem + ?Sized>(
        problem: &P,
        grid: &Grid,
        scheme: &SchemeConfig,
        z: Field,
        eta: f64,
    ) -> Result<Self> {
        if z.components() != problem.mirror().dim() || !z.is_finite() {
            return Err(Error::InvalidParameter {
                name: "z",
                reason: "dual field must be finite with one component per action dimension".into(),
            });
        }
        let value = evaluate_policy(problem, grid, &controls(problem.mirror(), &z), scheme)?;
        Ok(Self {
            s: 0.0,
            z,
            eta,
            value,
        })
    }

    pub fn controls(&self, map: &MirrorMap) -> Field {
        controls(map, &self.z)
    }
}

/// `u = grad psi*(Z)` nodewise.
pub fn controls(map: &MirrorMap, z: &Field) -> Field {
    let p = map.dim();
    let mut u = z.clone();
    u.data_mut()
        .par_chunks_mut(p)
        .zip(z.data().par_chunks(p))
        .for_each(|(out, y)| out.copy_from_slice(&map.grad_psi_star(y)));
    u
}

/// `G = grad_a H(t, x, grad V, u)` at every node and level.
pub fn flow_velocity<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    value: &ValueField,
    u: &Field,
) -> Result<Field> {
    let d = grid.dim();
    let p = problem.mirror().dim();
    let grad = spatial_gradient(value, grid)?;
    let n = grid.n_interior();
    let coords: Vec<Vec<f64>> = (0..n).map(|i| grid.coords(i)).collect();
    let rows: Vec<Result<Vec<f64>>> = (0..grid.levels() * n)
        .into_par_iter()
        .map(|k| {
            let (level, node) = (k / n, k % n);
            let z = &grad.data()[k * d..(k + 1) * d];
            problem.grad_a_hamiltonian(grid.time(level), &coords[node], z, u.node(level, node))
        })
        .collect();
    let mut g = Field::zeros(grid, p);
    for (k, row) in rows.into_iter().enumerate() {
        g.data_mut()[k * p..(k + 1) * p].copy_from_slice(&row?);
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("flow velocity"));
    }
    Ok(g)
}

/// What happened in one accepted step.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// Velocity `G` at the start of the step (`dZ/ds = -G`).
    pub velocity: Field,
    pub eta: f64,
    pub halvings: usize,
    /// `max(0, V_new(probe) - V_old(probe))`.
    pub increase: f64,
}

/// One Euler step of size at most `min(state.eta, max_step)`, halving the
/// step while the probe value increases by more than the allowance.
pub fn flow_step<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    config: &FlowConfig,
    state: &FlowState,
    max_step: f64,
) -> Result<(FlowState, StepReport)> {
    let map = problem.mirror();
    let (level, node) = config.probe.locate(grid)?;
    let u = state.controls(map);
    let velocity = flow_velocity(problem, grid, &state.value, &u)?;
    let before = state.value.get(level, node);
    let mut eta = state.eta;
    let mut step = eta.min(max_step);
    let mut halvings = 0;
    loop {
        let z = state.z.axpy(-step, &velocity);
        let value = evaluate_policy(problem, grid, &controls(map, &z), scheme)?;
        let increase = value.get(level, node) - before;
        if increase <= config.allowance(step) {
            let next = FlowState {
                s: state.s + step,
                z,
                eta,
                value,
            };
            let report = StepReport {
                velocity,
                eta: step,
                halvings,
                increase: increase.max(0.0),
            };
            return Ok((next, report));
        }
        if halvings == config.max_halvings {
            return Err(Error::StepUnderflow {
                s: state.s,
                halvings,
                increase,
            });
        }
        halvings += 1;
        eta *= 0.5;
        step *= 0.5;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub s: f64,
    pub sup_gap: f64,
    pub probe_gap: f64,
    pub lyapunov_probe: Option<f64>,
    pub grad_sup: f64,
    pub eta: f64,
    pub mono_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    /// Lyapunov function at the probe for the initial dual field.
    pub d0_probe: Option<f64>,
    pub initial_probe_gap: f64,
    pub initial_sup_gap: f64,
    pub halvings: usize,
}

/// Optimal value and (optionally) optimal dual used as the reference for
/// gaps and the Lyapunov function.
#[derive(Clone, Copy, Debug)]
pub struct FlowTarget<'a> {
    pub value: &'a ValueField,
    pub dual: Option<&'a Field>,
}

fn sup_gap(grid: &Grid, v: &ValueField, vstar: &ValueField) -> f64 {
    let n = grid.n_interior();
    let mut worst = f64::NEG_INFINITY;
    for level in 0..grid.nt() {
        for i in 0..n {
            worst = worst.max(v.get(level, i) - vstar.get(level, i));
        }
    }
    worst
}

/// Integrates the flow from `z0` until `s = config.horizon`, recording one
/// entry per accepted step; the last step is shortened to land on the
/// horizon. `observer` sees every accepted state.
pub fn run_flow_observed<P, O>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    config: &FlowConfig,
    z0: Field,
    target: FlowTarget<'_>,
    mut observer: O,
) -> Result<FlowTrace>
where
    P: ControlProblem + ?Sized,
    O: FnMut(&FlowState, &FlowRecord) -> Result<()>,
{
    config.validate(grid)?;
    let (level, node) = config.probe.locate(grid)?;
    let lyapunov_at = |z: &Field| -> Result<Option<f64>> {
        match target.dual {
            Some(zstar) => {
                let l = lyapunov(problem, grid, scheme, z, zstar)?;
                Ok(Some(l.get(level, node)))
            }
            None => Ok(None),
        }
    };
    let mut state = FlowState::new(problem, grid, scheme, z0, config.eta0)?;
    let d0_probe = lyapunov_at(&state.z)?;
    let initial_probe_gap = state.value.get(level, node) - target.value.get(level, node);
    let initial_sup_gap = sup_gap(grid, &state.value, target.value);
    let mut records = Vec::new();
    let mut halvings = 0;
    let end = config.horizon;
    while state.s < end * (1.0 - 1e-12) {
        let (next, report) = flow_step(problem, grid, scheme, config, &state, end - state.s)?;
        halvings += report.halvings;
        state = next;
        if end - state.s <= 1e-12 * end {
            state.s = end;
        }
        let record = FlowRecord {
            s: state.s,
            sup_gap: sup_gap(grid, &state.value, target.value),
            probe_gap: state.value.get(level, node) - target.value.get(level, node),
            lyapunov_probe: lyapunov_at(&state.z)?,
            grad_sup: report.velocity.max_abs(),
            eta: report.eta,
            mono_violation: report.increase,
        };
        observer(&state, &record)?;
        records.push(record);
    }
    Ok(FlowTrace {
        records,
        d0_probe,
        initial_probe_gap,
        initial_sup_gap,
        halvings,
    })
}

pub fn run_flow<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    config: &FlowConfig,
    z0: Field,
    target: FlowTarget<'_>,
) -> Result<FlowTrace> {
    run_flow_observed(problem, grid, scheme, config, z0, target, |_, _| Ok(()))
}

/// `D(Z, Z*)`: expected time integral of `D_psi*(Z, Z*)` along the
/// `grad psi*(Z*)`-controlled dynamics, stopped at exit.
pub fn lyapunov<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    z: &Field,
    zstar: &Field,
) -> Result<ValueField> {
    let map = problem.mirror();
    let p = map.dim();
    if !z.same_shape(zstar) || z.components() != p {
        return Err(Error::Shape {
            expected: zstar.data().len(),
            found: z.data().len(),
        });
    }
    let mut source = Field::zeros(grid, 1);
    source
        .data_mut()
        .par_iter_mut()
        .zip(z.data().par_chunks(p).zip(zstar.data().par_chunks(p)))
        .for_each(|(out, (y, ystar))| *out = map.bregman_psi_star(y, ystar));
    feynman_kac(problem, grid, &controls(map, zstar), &source, scheme)
}

#[derive(Clone, Debug)]
pub struct DerivativeIdentity {
    /// Central difference of `s -> V^{u_s}` with step `h`.
    pub lhs: Field,
    /// `-E int G^T hess psi*(Z) G`.
    pub rhs: Field,
    pub residual: Field,
    pub h: f64,
}

/// Checks `dV^{u_s}/ds = -E^{u_s} int G^T hess psi*(Z_s) G` at the state,
/// using the velocity `velocity` of the current step and `h = eta / 4`.
pub fn value_derivative_identity<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    state: &FlowState,
    velocity: &Field,
) -> Result<DerivativeIdentity> {
    let map = problem.mirror();
    let p = map.dim();
    let h = state.eta / 4.0;
    let forward = evaluate_policy(
        problem,
        grid,
        &controls(map, &state.z.axpy(-h, velocity)),
        scheme,
    )?;
    let backward = evaluate_policy(
        problem,
        grid,
        &controls(map, &state.z.axpy(h, velocity)),
        scheme,
    )?;
    let lhs = scale(
        &forward.interior().axpy(-1.0, backward.interior()),
        1.0 / (2.0 * h),
    );
    let mut source = Field::zeros(grid, 1);
    source
        .data_mut()
        .par_iter_mut()
        .zip(
            state
                .z
                .data()
                .par_chunks(p)
                .zip(velocity.data().par_chunks(p)),
        )
        .for_each(|(out, (y, g))| {
            let hess = map.hess_psi_star(y);
            let mut q = 0.0;
            for i in 0..p {
                for j in 0..p {
                    q += g[i] * hess[i * p + j] * g[j];
                }
            }
            *out = q;
        });
    let w = feynman_kac(problem, grid, &state.controls(map), &source, scheme)?;
    let rhs = scale(w.interior(), -1.0);
    let residual = lhs.axpy(-1.0, &rhs);
    Ok(DerivativeIdentity {
        lhs,
        rhs,
        residual,
        h,
    })
}

fn scale(f: &Field, alpha: f64) -> Field {
    let mut out = f.clone();
    out.data_mut().iter_mut().for_each(|v| *v *= alpha);
    out
}

const TRACE_HEADER: &str = "s,sup_gap,probe_gap,lyapunov_probe,grad_sup,eta,mono_violation";

pub fn write_trace_csv<W: Write>(trace: &FlowTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        let lyap = r
            .lyapunov_probe
            .map(|v| format!("{v:.16e}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e}",
            r.s, r.sup_gap, r.probe_gap, lyap, r.grad_sup, r.eta, r.mono_violation
        )?;
    }
    Ok(())
}

pub fn read_trace_csv<R: BufRead>(r: R) -> Result<Vec<FlowRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Parse(e.to_string()))?
        .unwrap_or_default();
    if header.trim() != TRACE_HEADER {
        return Err(Error::Parse(format!("unexpected trace header `{header}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Parse(format!("row {}: expected 7 columns", i + 1)));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))
        };
        out.push(FlowRecord {
            s: num(cols[0])?,
            sup_gap: num(cols[1])?,
            probe_gap: num(cols[2])?,
            lyapunov_probe: if cols[3].trim().is_empty() {
                None
            } else {
                Some(num(cols[3])?)
            },
            grad_sup: num(cols[4])?,
            eta: num(cols[5])?,
            mono_violation: num(cols[6])?,
        });
    }
    Ok(out)
}
