//! Optimal value and control by per-level policy iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{spatial_gradient_level, Field, Grid, ValueField};
use crate::mirror::MirrorMap;
use crate::pde::{
    assemble_level, policy_source, solve_level, terminal_data, LevelOperator, SchemeConfig,
    Stencil, TimeStepping,
};
use crate::problem::ControlProblem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HjbConfig {
    /// Stop policy iteration once the sup-change of a level is below this.
    pub tolerance: f64,
    pub max_rounds: usize,
}

impl Default for HjbConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_rounds: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HjbSolution {
    pub value: ValueField,
    pub control: Field,
    /// Largest number of policy-iteration rounds used on any level.
    pub rounds: usize,
    /// Whether any pointwise minimiser came from the iterative fallback.
    pub approximate: bool,
}

/// Pointwise minimisers of `H(t, x, z, .)` at one level, `z` given per node.
pub fn argmin_level<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    level: usize,
    gradient: &[f64],
    out: &mut [f64],
) -> Result<bool> {
    let d = grid.dim();
    let p = problem.mirror().dim();
    let t = grid.time(level);
    let minimisers: Vec<_> = (0..grid.n_interior())
        .into_par_iter()
        .map(|node| {
            let x = grid.coords(node);
            problem.min_hamiltonian(t, &x, &gradient[node * d..(node + 1) * d])
        })
        .collect();
    let mut approximate = false;
    for (node, m) in minimisers.into_iter().enumerate() {
        let m = m?;
        approximate |= m.approximate;
        out[node * p..(node + 1) * p].copy_from_slice(&m.argmin);
    }
    Ok(approximate)
}

fn frozen_operator<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    level: usize,
    controls: &[f64],
) -> Result<LevelOperator> {
    let source = policy_source(problem, grid, level, controls)?;
    assemble_level(problem, grid, level, controls, source)
}

/// Backward sweep over levels. Implicit mode runs policy iteration at each
/// level (gradient of the current iterate, pointwise argmin, linear solve
/// with the frozen control), warm-started from the next level. Explicit mode
/// takes the argmin from the gradient of the next level and steps once.
pub fn solve_hjb<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    config: &HjbConfig,
) -> Result<HjbSolution> {
    scheme.validate()?;
    let d = grid.dim();
    let p = problem.mirror().dim();
    let n = grid.n_interior();
    let stencil = Stencil::new(grid);
    let mut v = terminal_data(problem, grid);
    let mut control = Field::zeros(grid, p);
    let mut gradient = vec![0.0; n * d];
    let mut approximate = false;
    let mut max_rounds = 0;

    let last = grid.nt();
    spatial_gradient_level(&v, grid, last, &mut gradient)?;
    approximate |= argmin_level(problem, grid, last, &gradient, control.level_mut(last))?;

    for level in (0..last).rev() {
        let next = v.interior().level(level + 1).to_vec();
        v.interior_mut().level_mut(level).copy_from_slice(&next);
        let mut controls = vec![0.0; n * p];
        match scheme.scheme {
            TimeStepping::Explicit => {
                spatial_gradient_level(&v, grid, level + 1, &mut gradient)?;
                approximate |= argmin_level(problem, grid, level, &gradient, &mut controls)?;
                let op = frozen_operator(problem, grid, level, &controls)?;
                solve_level(grid, &stencil, scheme, &op, &mut v)?;
                max_rounds = max_rounds.max(1);
            }
            TimeStepping::Implicit => {
                let mut converged = false;
                let mut worst = (0, f64::INFINITY);
                for round in 1..=config.max_rounds {
                    spatial_gradient_level(&v, grid, level, &mut gradient)?;
                    approximate |= argmin_level(problem, grid, level, &gradient, &mut controls)?;
                    let op = frozen_operator(problem, grid, level, &controls)?;
                    let before = v.interior().level(level).to_vec();
                    solve_level(grid, &stencil, scheme, &op, &mut v)?;
                    worst = (0, 0.0);
                    for (i, old) in before.iter().enumerate() {
                        let change = (v.get(level, i) - old).abs();
                        if change > worst.1 {
                            worst = (i, change);
                        }
                    }
                    if worst.1 <= config.tolerance {
                        max_rounds = max_rounds.max(round);
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::PolicyIteration {
                        level,
                        node: worst.0,
                        change: worst.1,
                    });
                }
            }
        }
        control.level_mut(level).copy_from_slice(&controls);
    }
    if !v.is_finite() || !control.is_finite() {
        return Err(Error::NonFinite("HJB solve"));
    }
    Ok(HjbSolution {
        value: v,
        control,
        rounds: max_rounds,
        approximate,
    })
}

/// Residual of the discrete HJB scheme at every level before the horizon,
/// with the minimiser recomputed from the gradient of `v` itself:
/// `(V^{n+1} - V^n)/dt + L^{a} V^m + F^{a}` where `m = n` in implicit mode
/// and `m = n + 1` in explicit mode. Terminal-level entries are zero.
pub fn bellman_residual<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    scheme: &SchemeConfig,
    v: &ValueField,
) -> Result<Field> {
    let d = grid.dim();
    let p = problem.mirror().dim();
    let n = grid.n_interior();
    let stencil = Stencil::new(grid);
    let mut out = Field::zeros(grid, 1);
    let mut gradient = vec![0.0; n * d];
    let mut controls = vec![0.0; n * p];
    for level in 0..grid.nt() {
        let m = match scheme.scheme {
            TimeStepping::Implicit => level,
            TimeStepping::Explicit => level + 1,
        };
        spatial_gradient_level(v, grid, m, &mut gradient)?;
        argmin_level(problem, grid, level, &gradient, &mut controls)?;
        let op = frozen_operator(problem, grid, level, &controls)?;
        let lv = op.apply(&stencil, v, m)?;
        for i in 0..n {
            let dtv = (v.get(level + 1, i) - v.get(level, i)) / grid.dt();
            out.set(level, i, 0, dtv + lv[i] + op.source[i]);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DualField {
    pub z: Field,
    /// Whether any node had to be pulled into the interior.
    pub clamped: bool,
    /// Largest distance a control was moved by the clamp.
    pub clamp_magnitude: f64,
}

/// `Z* = grad psi(u*)` after pulling `u*` into the interior of the action set
/// by `clamp`.
pub fn optimal_dual(map: &MirrorMap, ustar: &Field, clamp: f64) -> Result<DualField> {
    let p = map.dim();
    if ustar.components() != p {
        return Err(Error::Shape {
            expected: p,
            found: ustar.components(),
        });
    }
    let mut z = ustar.clone();
    let mut clamped = false;
    let mut magnitude: f64 = 0.0;
    for (chunk, out) in ustar.data().chunks(p).zip(z.data_mut().chunks_mut(p)) {
        let (inner, fired) = map.clamp_to_interior(chunk, clamp);
        if fired {
            clamped = true;
            let moved = chunk
                .iter()
                .zip(&inner)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            magnitude = magnitude.max(moved);
        }
        out.copy_from_slice(&map.grad_psi(&inner)?);
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("optimal dual"));
    }
    Ok(DualField {
        z,
        clamped,
        clamp_magnitude: magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::mirror::softmax;
    use crate::pde::evaluate_policy;
    use crate::problem::LqBall;

    fn lq_grid() -> Grid {
        Grid::new(GridSpec::interval(-1.0, 1.0, 31, 40, 1.0)).unwrap()
    }

    #[test]
    fn optimal_value_is_attained_and_bellman_residual_small() {
        let grid = lq_grid();
        let p = LqBall::scalar(-0.5, 0.5, 0.5, 0.25, 1.0, 0.0).unwrap();
        let scheme = SchemeConfig::default();
        let sol = solve_hjb(&p, &grid, &scheme, &HjbConfig::default()).unwrap();
        assert!(sol.rounds <= 20, "{}", sol.rounds);
        let v = evaluate_policy(&p, &grid, &sol.control, &scheme).unwrap();
        let diff = v.interior().max_abs_diff(sol.value.interior());
        assert!(diff <= 1e-8, "{diff}");
        let r = bellman_residual(&p, &grid, &scheme, &sol.value).unwrap();
        assert!(r.max_abs() <= 1e-8, "{}", r.max_abs());
    }

    #[test]
    fn explicit_variant_attains_its_value() {
        let grid = Grid::new(GridSpec::interval(-1.0, 1.0, 15, 100, 1.0)).unwrap();
        let p = LqBall::scalar(-0.5, 0.5, 0.5, 0.25, 1.0, 0.5).unwrap();
        let scheme = SchemeConfig::explicit();
        let sol = solve_hjb(&p, &grid, &scheme, &HjbConfig::default()).unwrap();
        let v = evaluate_policy(&p, &grid, &sol.control, &scheme).unwrap();
        assert!(v.interior().max_abs_diff(sol.value.interior()) <= 1e-12);
        let r = bellman_residual(&p, &grid, &scheme, &sol.value).unwrap();
        assert!(r.max_abs() <= 1e-10);
    }

    #[test]
    fn dual_of_zero_ball_control() {
        let grid = lq_grid();
        let map = MirrorMap::ball(1.0, 1).unwrap();
        let dual = optimal_dual(&map, &Field::zeros(&grid, 1), 1e-6).unwrap();
        assert_eq!(dual.z.max_abs(), 0.0);
        assert!(!dual.clamped);
    }

    #[test]
    fn dual_clamps_boundary_points() {
        let grid = lq_grid();
        let map = MirrorMap::ball(1.0, 1).unwrap();
        let mut u = Field::zeros(&grid, 1);
        u.set(3, 4, 0, 1.0);
        let dual = optimal_dual(&map, &u, 1e-6).unwrap();
        assert!(dual.clamped && dual.z.is_finite());
        assert!((dual.clamp_magnitude - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn dual_round_trip_on_simplex() {
        let grid = lq_grid();
        let map = MirrorMap::simplex(3).unwrap();
        let y0 = [0.3, -1.2, 2.0];
        let s = softmax(&y0);
        let u = Field::from_fn(&grid, 3, |_, _, out| out.copy_from_slice(&s));
        let dual = optimal_dual(&map, &u, 1e-6).unwrap();
        let back = softmax(dual.z.node(0, 0));
        for k in 0..3 {
            assert!((back[k] - s[k]).abs() < 1e-12);
        }
    }
}
