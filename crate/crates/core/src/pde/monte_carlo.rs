use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::problem::ControlProblem;

/// A Markov control evaluated at arbitrary `(t, x)`.
pub trait Policy: Sync {
    fn control(&self, t: f64, x: &[f64], out: &mut [f64]);
}

impl<F> Policy for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn control(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self(t, x, out)
    }
}

/// Piecewise-constant in time (level `n` on `[t_n, t_{n+1})`) and
/// multilinear in space interpolation of a control field. Convex weights
/// keep the result inside a convex action set.
pub struct FieldPolicy<'a> {
    grid: &'a Grid,
    field: &'a Field,
}

impl<'a> FieldPolicy<'a> {
    pub fn new(grid: &'a Grid, field: &'a Field) -> Result<Self> {
        if field.levels() != grid.levels() || field.nodes() != grid.n_interior() {
            return Err(Error::Shape {
                expected: grid.levels() * grid.n_interior() * field.components(),
                found: field.data().len(),
            });
        }
        Ok(Self { grid, field })
    }
}

impl Policy for FieldPolicy<'_> {
    fn control(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let level = ((t / self.grid.dt() + 1e-9).floor().max(0.0) as usize)
            .min(self.grid.nt().saturating_sub(1));
        out.fill(0.0);
        for (node, w) in self.grid.interpolation_stencil(x) {
            for (o, v) in out.iter_mut().zip(self.field.node(level, node)) {
                *o += w * v;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

pub fn splitmix64(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo estimate of `V^u(t, x)` including the regulariser.
pub fn monte_carlo_value<P, U>(
    problem: &P,
    grid: &Grid,
    policy: &U,
    t: f64,
    x: &[f64],
    config: &MonteCarloConfig,
) -> Result<McEstimate>
where
    P: ControlProblem + ?Sized,
    U: Policy + ?Sized,
{
    let tau = problem.tau();
    monte_carlo_functional(
        problem,
        grid,
        policy,
        t,
        x,
        config,
        |t, x, a| {
            let f = problem.running_cost(t, x, a);
            if tau > 0.0 {
                f + tau * problem.regularizer(t, x, a).unwrap_or(f64::INFINITY)
            } else {
                f
            }
        },
        |x| problem.terminal_cost(x),
    )
}

/// Euler-Maruyama estimate of `E[int_t^T_O F(r, X_r, u) dr + G(X_T_O)]`
/// under the `policy`-controlled dynamics of `problem`, stopped at the first
/// exit from the grid's box or at the horizon. Exit is detected per step; the
/// exit point is interpolated along the last step and the running cost of
/// that step is prorated. Path `i` draws from `ChaCha8(seed ^ splitmix64(i))`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_functional<P, U, F, G>(
    problem: &P,
    grid: &Grid,
    policy: &U,
    t: f64,
    x: &[f64],
    config: &MonteCarloConfig,
    running: F,
    terminal: G,
) -> Result<McEstimate>
where
    P: ControlProblem + ?Sized,
    U: Policy + ?Sized,
    F: Fn(f64, &[f64], &[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    if !grid.contains(x) || !(0.0..grid.horizon()).contains(&t) {
        return Err(Error::InvalidParameter {
            name: "start",
            reason: format!("({t}, {x:?}) is not in the open cylinder"),
        });
    }
    if config.n_paths < 2 || !(config.dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "monte_carlo",
            reason: "need at least two paths and a positive step".into(),
        });
    }
    let samples: Vec<f64> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ splitmix64(i));
            simulate_path(
                problem, grid, policy, t, x, config.dt, &running, &terminal, &mut rng,
            )
        })
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Monte Carlo sample"));
    }
    let n = samples.len() as f64;
    let shift = samples[0];
    let mean = shift + samples.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate_path<P, U, F, G>(
    problem: &P,
    grid: &Grid,
    policy: &U,
    t0: f64,
    x0: &[f64],
    dt: f64,
    running: &F,
    terminal: &G,
    rng: &mut ChaCha8Rng,
) -> f64
where
    P: ControlProblem + ?Sized,
    U: Policy + ?Sized,
    F: Fn(f64, &[f64], &[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    let d = problem.state_dim();
    let dn = problem.noise_dim();
    let horizon = grid.horizon();
    let (lo, hi) = (grid.lo(), grid.hi());
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut a = vec![0.0; problem.mirror().dim()];
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * dn];
    let mut noise = vec![0.0; dn];
    let mut t = t0;
    let mut total = 0.0;
    while t < horizon {
        let h = dt.min(horizon - t);
        policy.control(t, &x, &mut a);
        let rate = running(t, &x, &a);
        problem.drift(t, &x, &a, &mut b);
        problem.sigma(t, &x, &mut sigma);
        for w in noise.iter_mut() {
            *w = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
        }
        for k in 0..d {
            let diffusion: f64 = (0..dn).map(|j| sigma[k * dn + j] * noise[j]).sum();
            next[k] = x[k] + b[k] * h + diffusion;
        }
        // fraction of the step at which the segment first leaves the box
        let mut theta: f64 = 1.0;
        let mut exited = false;
        for k in 0..d {
            let step = next[k] - x[k];
            if next[k] <= lo[k] {
                theta = theta.min((lo[k] - x[k]) / step);
                exited = true;
            } else if next[k] >= hi[k] {
                theta = theta.min((hi[k] - x[k]) / step);
                exited = true;
            }
        }
        if exited {
            let theta = theta.clamp(0.0, 1.0);
            total += rate * theta * h;
            for k in 0..d {
                next[k] = (x[k] + theta * (next[k] - x[k])).clamp(lo[k], hi[k]);
            }
            return total + terminal(&next);
        }
        total += rate * h;
        std::mem::swap(&mut x, &mut next);
        t = if horizon - t <= dt { horizon } else { t + h };
    }
    total + terminal(&x)
}
