//! Linear backward parabolic solvers.
//!
//! Every expectation of the form `E[int F dr + g(X_exit)]` is computed from
//! `d_t v + L^u v + F = 0` with Dirichlet data on the parabolic boundary,
//! where `L^u v = 1/2 Tr(sigma sigma^T D^2 v) + b^u . grad v`. Diffusion uses
//! central second differences, drift is upwinded per axis, so each level
//! system is an M-matrix.

mod monte_carlo;

pub use monte_carlo::{
    monte_carlo_functional, monte_carlo_value, splitmix64, FieldPolicy, McEstimate,
    MonteCarloConfig, Policy,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Node, ValueField};
use crate::problem::ControlProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeStepping {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: TimeStepping,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cfl_safety: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: TimeStepping::Implicit,
            tolerance: 1e-10,
            max_iterations: 10_000,
            cfl_safety: 0.9,
        }
    }
}

impl SchemeConfig {
    pub fn explicit() -> Self {
        Self {
            scheme: TimeStepping::Explicit,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: format!("must be positive, got {}", self.tolerance),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "cfl_safety",
                reason: format!("must lie in (0, 1], got {}", self.cfl_safety),
            });
        }
        Ok(())
    }
}

/// Precomputed neighbour table: `[backward, forward]` per node and axis.
#[derive(Clone, Debug)]
pub struct Stencil {
    dim: usize,
    neighbours: Vec<[Node; 2]>,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let dim = grid.dim();
        let mut neighbours = Vec::with_capacity(grid.n_interior() * dim);
        for node in 0..grid.n_interior() {
            for axis in 0..dim {
                neighbours.push([
                    grid.neighbor(node, axis, false),
                    grid.neighbor(node, axis, true),
                ]);
            }
        }
        Self { dim, neighbours }
    }

    pub fn get(&self, node: usize, axis: usize) -> [Node; 2] {
        self.neighbours[node * self.dim + axis]
    }
}

/// Discrete `L^u` and source `F` at one time level. `lower`/`upper` hold the
/// (non-negative) couplings to the backward/forward neighbour per node and
/// axis; the diagonal of `L^u` is minus their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelOperator {
    pub level: usize,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub source: Vec<f64>,
    /// Largest diagonal entry of `sigma sigma^T` on this level.
    pub max_diffusion: f64,
}

impl LevelOperator {
    pub fn nodes(&self) -> usize {
        self.source.len()
    }

    /// Diagonal entry of `L^u` at a node.
    pub fn diagonal(&self, node: usize) -> f64 {
        let r = node * self.dim..(node + 1) * self.dim;
        -(self.lower[r.clone()].iter().sum::<f64>() + self.upper[r].iter().sum::<f64>())
    }

    /// Row margins `|A_ii| - sum_j |A_ij|` of the implicit system
    /// `A = I - dt L^u`, counting couplings to boundary nodes as
    /// off-diagonal.
    pub fn implicit_row_margins(&self, dt: f64) -> Vec<f64> {
        (0..self.nodes())
            .map(|i| {
                let r = i * self.dim..(i + 1) * self.dim;
                let off: f64 = self.lower[r.clone()]
                    .iter()
                    .chain(&self.upper[r])
                    .map(|c| (dt * c).abs())
                    .sum();
                (1.0 - dt * self.diagonal(i)).abs() - off
            })
            .collect()
    }

    /// Applies `L^u` to the values of `v` at `level`.
    pub fn apply(&self, stencil: &Stencil, v: &ValueField, level: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.nodes()];
        for (i, o) in out.iter_mut().enumerate() {
            let centre = v.get(level, i);
            let mut acc = 0.0;
            for axis in 0..self.dim {
                let [bwd, fwd] = stencil.get(i, axis);
                let k = i * self.dim + axis;
                acc += self.lower[k] * (v.at(level, bwd)? - centre);
                acc += self.upper[k] * (v.at(level, fwd)? - centre);
            }
            *o = acc;
        }
        Ok(out)
    }
}

/// Assembles `L^u` at one level from the controls `controls`
/// (`n_interior * p` values) and a source vector.
pub fn assemble_level<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    level: usize,
    controls: &[f64],
    source: Vec<f64>,
) -> Result<LevelOperator> {
    let d = grid.dim();
    let p = problem.mirror().dim();
    let n = grid.n_interior();
    if controls.len() != n * p {
        return Err(Error::Shape {
            expected: n * p,
            found: controls.len(),
        });
    }
    if source.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: source.len(),
        });
    }
    let t = grid.time(level);
    let dx = grid.dx();
    let mut lower = vec![0.0; n * d];
    let mut upper = vec![0.0; n * d];
    let mut b = vec![0.0; d];
    let mut max_diffusion: f64 = 0.0;
    for node in 0..n {
        let x = grid.coords(node);
        let a = &controls[node * p..(node + 1) * p];
        problem.drift(t, &x, a, &mut b);
        let cov = problem.covariance(t, &x);
        for i in 0..d {
            for j in 0..d {
                let c = cov[i * d + j];
                if i != j && c.abs() > 1e-12 * (cov[i * d + i].abs() + cov[j * d + j].abs()) {
                    return Err(Error::InvalidParameter {
                        name: "sigma",
                        reason: "sigma sigma^T must be diagonal".into(),
                    });
                }
            }
        }
        for k in 0..d {
            let diff = 0.5 * cov[k * d + k];
            max_diffusion = max_diffusion.max(cov[k * d + k]);
            let h2 = dx[k] * dx[k];
            lower[node * d + k] = diff / h2 + (-b[k]).max(0.0) / dx[k];
            upper[node * d + k] = diff / h2 + b[k].max(0.0) / dx[k];
        }
    }
    if lower.iter().chain(&upper).any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("operator assembly"));
    }
    Ok(LevelOperator {
        level,
        dim: d,
        lower,
        upper,
        source,
        max_diffusion,
    })
}

/// `f(t,x,u) + tau * rho^u(t,x)` at every interior node of a level.
pub fn policy_source<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    level: usize,
    controls: &[f64],
) -> Result<Vec<f64>> {
    let p = problem.mirror().dim();
    let t = grid.time(level);
    (0..grid.n_interior())
        .map(|node| {
            let x = grid.coords(node);
            let a = &controls[node * p..(node + 1) * p];
            let mut value = problem.running_cost(t, &x, a);
            if problem.tau() > 0.0 {
                let rho = problem.regularizer(t, &x, a)?;
                if !rho.is_finite() {
                    return Err(Error::Domain(format!("{a:?} has infinite regulariser")));
                }
                value += problem.tau() * rho;
            }
            Ok(value)
        })
        .collect()
}

/// Largest stable explicit step `safety * min dx^2 / (d * max |sigma sigma^T|)`.
pub fn cfl_limit(grid: &Grid, max_diffusion: f64, safety: f64) -> f64 {
    let h2 = grid.dx().iter().fold(f64::INFINITY, |m, h| m.min(h * h));
    if max_diffusion <= 0.0 {
        f64::INFINITY
    } else {
        safety * h2 / (grid.dim() as f64 * max_diffusion)
    }
}

/// Fills level `op.level` of `v` from level `op.level + 1`. In implicit mode
/// the current contents of the level are the starting guess of the
/// Gauss-Seidel sweeps (1D systems are solved exactly by the Thomas
/// algorithm).
pub fn solve_level(
    grid: &Grid,
    stencil: &Stencil,
    scheme: &SchemeConfig,
    op: &LevelOperator,
    v: &mut ValueField,
) -> Result<()> {
    let level = op.level;
    let dt = grid.dt();
    let n = op.nodes();
    let d = op.dim;
    match scheme.scheme {
        TimeStepping::Explicit => {
            let limit = cfl_limit(grid, op.max_diffusion, scheme.cfl_safety);
            if dt > limit {
                return Err(Error::Cfl { dt, limit });
            }
            let next = op.apply(stencil, v, level + 1)?;
            for (i, lv) in next.iter().enumerate() {
                let value = v.get(level + 1, i) + dt * (lv + op.source[i]);
                v.set_interior(level, i, value);
            }
        }
        TimeStepping::Implicit => {
            // rhs carries V^{n+1}, dt F and the known boundary couplings
            let mut rhs = vec![0.0; n];
            let mut diag = vec![0.0; n];
            for i in 0..n {
                let mut r = v.get(level + 1, i) + dt * op.source[i];
                for axis in 0..d {
                    let k = i * d + axis;
                    let [bwd, fwd] = stencil.get(i, axis);
                    if let Node::Boundary(ring) = bwd {
                        r += dt * op.lower[k] * v.boundary_value(level, ring)?;
                    }
                    if let Node::Boundary(ring) = fwd {
                        r += dt * op.upper[k] * v.boundary_value(level, ring)?;
                    }
                }
                rhs[i] = r;
                diag[i] = 1.0 - dt * op.diagonal(i);
            }
            if d == 1 {
                let sub: Vec<f64> = (0..n).map(|i| -dt * op.lower[i]).collect();
                let sup: Vec<f64> = (0..n).map(|i| -dt * op.upper[i]).collect();
                let x = thomas(&sub, &diag, &sup, &rhs);
                for (i, xi) in x.into_iter().enumerate() {
                    v.set_interior(level, i, xi);
                }
            } else {
                gauss_seidel(stencil, scheme, op, dt, &diag, &rhs, v)?;
            }
        }
    }
    for i in 0..n {
        if !v.get(level, i).is_finite() {
            return Err(Error::NonFinite("level solve"));
        }
    }
    Ok(())
}

fn gauss_seidel(
    stencil: &Stencil,
    scheme: &SchemeConfig,
    op: &LevelOperator,
    dt: f64,
    diag: &[f64],
    rhs: &[f64],
    v: &mut ValueField,
) -> Result<()> {
    let level = op.level;
    let d = op.dim;
    let mut update = f64::INFINITY;
    for _ in 0..scheme.max_iterations {
        update = 0.0;
        for i in 0..op.nodes() {
            let mut acc = rhs[i];
            for axis in 0..d {
                let k = i * d + axis;
                let [bwd, fwd] = stencil.get(i, axis);
                if let Node::Interior(j) = bwd {
                    acc += dt * op.lower[k] * v.get(level, j);
                }
                if let Node::Interior(j) = fwd {
                    acc += dt * op.upper[k] * v.get(level, j);
                }
            }
            let new = acc / diag[i];
            update = f64::max(update, (new - v.get(level, i)).abs());
            v.set_interior(level, i, new);
        }
        if update <= scheme.tolerance {
            return Ok(());
        }
    }
    Err(Error::SolverNonConvergence {
        level,
        iterations: scheme.max_iterations,
        update,
    })
}

/// Tridiagonal solve; `sub[0]` and `sup[n-1]` are ignored.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut m = diag[0];
    c[0] = sup[0] / m;
    x[0] = rhs[0] / m;
    for i in 1..n {
        m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

fn check_controls<P: ControlProblem + ?Sized>(problem: &P, grid: &Grid, u: &Field) -> Result<()> {
    let p = problem.mirror().dim();
    if u.levels() != grid.levels() || u.nodes() != grid.n_interior() || u.components() != p {
        return Err(Error::Shape {
            expected: grid.levels() * grid.n_interior() * p,
            found: u.data().len(),
        });
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("control field"));
    }
    Ok(())
}

/// Value field carrying `g` on the lateral boundary at every level and on the
/// interior at the horizon; other interior levels are zero.
pub fn terminal_data<P: ControlProblem + ?Sized>(problem: &P, grid: &Grid) -> ValueField {
    let mut v = ValueField::zeros(grid);
    let last = grid.nt();
    for node in 0..grid.n_interior() {
        v.set_interior(last, node, problem.terminal_cost(&grid.coords(node)));
    }
    for ring in 0..grid.n_boundary() {
        let g = problem.terminal_cost(&grid.boundary_coords(ring));
        for level in 0..grid.levels() {
            v.set_boundary(level, ring, g);
        }
    }
    v
}

fn backward_sweep<P, S>(
    problem: &P,
    grid: &Grid,
    u: &Field,
    scheme: &SchemeConfig,
    mut v: ValueField,
    mut source: S,
) -> Result<ValueField>
where
    P: ControlProblem + ?Sized,
    S: FnMut(usize) -> Result<Vec<f64>>,
{
    scheme.validate()?;
    check_controls(problem, grid, u)?;
    let stencil = Stencil::new(grid);
    for level in (0..grid.nt()).rev() {
        let op = assemble_level(problem, grid, level, u.level(level), source(level)?)?;
        let next = v.interior().level(level + 1).to_vec();
        v.interior_mut().level_mut(level).copy_from_slice(&next);
        solve_level(grid, &stencil, scheme, &op, &mut v)?;
    }
    Ok(v)
}

/// `V^u`: solves `d_t v + L^u v + f^u + tau rho^u = 0` with `v = g` on the
/// parabolic boundary.
pub fn evaluate_policy<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    u: &Field,
    scheme: &SchemeConfig,
) -> Result<ValueField> {
    let v = terminal_data(problem, grid);
    backward_sweep(problem, grid, u, scheme, v, |level| {
        policy_source(problem, grid, level, u.level(level))
    })
}

/// Solves `d_t h + L^u h + F = 0` with `h = 0` on the parabolic boundary.
pub fn feynman_kac<P: ControlProblem + ?Sized>(
    problem: &P,
    grid: &Grid,
    u: &Field,
    source: &Field,
    scheme: &SchemeConfig,
) -> Result<ValueField> {
    if source.components() != 1
        || source.levels() != grid.levels()
        || source.nodes() != grid.n_interior()
    {
        return Err(Error::Shape {
            expected: grid.levels() * grid.n_interior(),
            found: source.data().len(),
        });
    }
    if !source.is_finite() {
        return Err(Error::NonFinite("Feynman-Kac source"));
    }
    let v = ValueField::zeros(grid);
    backward_sweep(problem, grid, u, scheme, v, |level| {
        Ok(source.level(level).to_vec())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::mirror::MirrorMap;
    use crate::problem::{CustomProblem, LqBall};
    use std::f64::consts::PI;

    fn heat(sigma: f64) -> CustomProblem {
        CustomProblem::builder(1, MirrorMap::ball(1.0, 1).unwrap())
            .sigma(1, move |_, _, out| out[0] = sigma)
            .terminal_cost(|x| x[0].sin())
            .build()
            .unwrap()
    }

    fn heat_error(nx: usize, nt: usize, scheme: SchemeConfig) -> f64 {
        let grid = Grid::new(GridSpec::interval(0.0, PI, nx, nt, 1.0)).unwrap();
        let p = heat(2f64.sqrt());
        let u = Field::zeros(&grid, 1);
        let v = evaluate_policy(&p, &grid, &u, &scheme).unwrap();
        let exact = ValueField::from_fn(&grid, |t, x| (-(1.0 - t)).exp() * x[0].sin());
        v.interior().max_abs_diff(exact.interior())
    }

    #[test]
    fn constant_data_is_preserved() {
        let grid = Grid::new(GridSpec::new(
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![5, 6],
            40,
            1.0,
        ))
        .unwrap();
        let p = CustomProblem::builder(2, MirrorMap::ball(1.0, 2).unwrap())
            .drift(|_, x, _, out| {
                out[0] = x[1];
                out[1] = -x[0];
            })
            .terminal_cost(|_| 2.5)
            .build()
            .unwrap();
        let u = Field::zeros(&grid, 2);
        for scheme in [SchemeConfig::default(), SchemeConfig::explicit()] {
            let v = evaluate_policy(&p, &grid, &u, &scheme).unwrap();
            assert!(v.interior().data().iter().all(|x| (x - 2.5).abs() < 1e-9));
        }
    }

    #[test]
    fn heat_equation_implicit() {
        let e = heat_error(101, 200, SchemeConfig::default());
        assert!(e <= 1e-2, "{e}");
    }

    #[test]
    fn heat_equation_explicit_second_order() {
        let coarse = heat_error(15, 64, SchemeConfig::explicit());
        let fine = heat_error(31, 256, SchemeConfig::explicit());
        let ratio = coarse / fine;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn explicit_cfl_guard() {
        let grid = Grid::new(GridSpec::interval(0.0, PI, 99, 10, 1.0)).unwrap();
        let u = Field::zeros(&grid, 1);
        let err = evaluate_policy(&heat(1.0), &grid, &u, &SchemeConfig::explicit()).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn heat_equation_two_dimensional() {
        let grid = Grid::new(GridSpec::new(
            vec![0.0, 0.0],
            vec![PI, PI],
            vec![31, 31],
            100,
            1.0,
        ))
        .unwrap();
        let p = CustomProblem::builder(2, MirrorMap::ball(1.0, 1).unwrap())
            .sigma(2, |_, _, out| {
                out.copy_from_slice(&[2f64.sqrt(), 0.0, 0.0, 2f64.sqrt()])
            })
            .terminal_cost(|x| x[0].sin() * x[1].sin())
            .build()
            .unwrap();
        let v =
            evaluate_policy(&p, &grid, &Field::zeros(&grid, 1), &SchemeConfig::default()).unwrap();
        let exact = ValueField::from_fn(&grid, |t, x| {
            (-2.0 * (1.0 - t)).exp() * x[0].sin() * x[1].sin()
        });
        let err = v.interior().max_abs_diff(exact.interior());
        assert!(err < 2e-2, "{err}");
    }

    #[test]
    fn row_margins_positive() {
        let grid = Grid::new(GridSpec::interval(-1.0, 1.0, 31, 10, 1.0)).unwrap();
        let p = LqBall::scalar(-2.0, 1.0, 0.5, 0.25, 1.0, 0.0).unwrap();
        let u = Field::from_fn(&grid, 1, |_, x, out| out[0] = x[0].sin());
        let src = policy_source(&p, &grid, 0, u.level(0)).unwrap();
        let op = assemble_level(&p, &grid, 0, u.level(0), src).unwrap();
        assert!(op.lower.iter().chain(&op.upper).all(|&c| c >= 0.0));
        for m in op.implicit_row_margins(grid.dt()) {
            assert!(m > 0.0);
        }
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let x = thomas(
            &[0.0, -1.0, -1.0],
            &[4.0, 4.0, 4.0],
            &[-1.0, -1.0, 0.0],
            &[3.0, 2.0, 3.0],
        );
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }
}
