use std::fmt;
use std::sync::Arc;

use super::{projected_gradient_min, ControlProblem, Minimizer};
use crate::error::{Error, Result};
use crate::mirror::MirrorMap;

type VecFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
type StateFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type CostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type MinFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Result<Minimizer> + Send + Sync>;

/// Problem assembled from closures. Anything not supplied defaults to zero
/// (drift, costs), the identity (`sigma`) or the centre of the action set
/// (reference control). Without an explicit minimiser the
/// projected-gradient fallback is used.
#[derive(Clone)]
pub struct CustomProblem {
    state_dim: usize,
    noise_dim: usize,
    mirror: MirrorMap,
    tau: f64,
    kappa: f64,
    drift: VecFn,
    drift_jacobian: VecFn,
    sigma: StateFn,
    running_cost: CostFn,
    running_cost_grad: VecFn,
    terminal: TerminalFn,
    reference: StateFn,
    minimizer: Option<MinFn>,
}

impl fmt::Debug for CustomProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProblem")
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("mirror", &self.mirror)
            .field("tau", &self.tau)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl CustomProblem {
    pub fn builder(state_dim: usize, mirror: MirrorMap) -> CustomProblemBuilder {
        let centre = match mirror {
            MirrorMap::Ball { dim, .. } => vec![0.0; dim],
            MirrorMap::Simplex { actions } => vec![1.0 / actions as f64; actions],
        };
        CustomProblemBuilder {
            inner: CustomProblem {
                state_dim,
                noise_dim: state_dim,
                mirror,
                tau: 0.0,
                kappa: 1.0,
                drift: Arc::new(|_, _, _, out| out.fill(0.0)),
                drift_jacobian: Arc::new(|_, _, _, out| out.fill(0.0)),
                sigma: Arc::new(move |_, _, out| {
                    out.fill(0.0);
                    for k in 0..state_dim {
                        out[k * state_dim + k] = 1.0;
                    }
                }),
                running_cost: Arc::new(|_, _, _| 0.0),
                running_cost_grad: Arc::new(|_, _, _, out| out.fill(0.0)),
                terminal: Arc::new(|_| 0.0),
                reference: Arc::new(move |_, _, out| out.copy_from_slice(&centre)),
                minimizer: None,
            },
        }
    }
}

pub struct CustomProblemBuilder {
    inner: CustomProblem,
}

impl CustomProblemBuilder {
    pub fn tau(mut self, tau: f64) -> Self {
        self.inner.tau = tau;
        self
    }

    pub fn ellipticity(mut self, kappa: f64) -> Self {
        self.inner.kappa = kappa;
        self
    }

    pub fn drift(
        mut self,
        f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inner.drift = Arc::new(f);
        self
    }

    pub fn drift_jacobian(
        mut self,
        f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inner.drift_jacobian = Arc::new(f);
        self
    }

    /// `sigma(t,x)` as a row-major `d x noise_dim` matrix.
    pub fn sigma(
        mut self,
        noise_dim: usize,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inner.noise_dim = noise_dim;
        self.inner.sigma = Arc::new(f);
        self
    }

    pub fn running_cost(
        mut self,
        f: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.inner.running_cost = Arc::new(f);
        self
    }

    pub fn running_cost_grad(
        mut self,
        f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inner.running_cost_grad = Arc::new(f);
        self
    }

    pub fn terminal_cost(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.inner.terminal = Arc::new(f);
        self
    }

    pub fn reference_control(
        mut self,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inner.reference = Arc::new(f);
        self
    }

    pub fn minimizer(
        mut self,
        f: impl Fn(f64, &[f64], &[f64]) -> Result<Minimizer> + Send + Sync + 'static,
    ) -> Self {
        self.inner.minimizer = Some(Arc::new(f));
        self
    }

    pub fn build(self) -> Result<CustomProblem> {
        let p = &self.inner;
        if p.state_dim == 0 || p.noise_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "state_dim",
                reason: "dimensions must be positive".into(),
            });
        }
        if !(p.tau.is_finite() && p.tau >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be finite and non-negative, got {}", p.tau),
            });
        }
        Ok(self.inner)
    }
}

impl ControlProblem for CustomProblem {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
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

    fn drift(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, a, out)
    }

    fn drift_jacobian(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.drift_jacobian)(t, x, a, out)
    }

    fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.sigma)(t, x, out)
    }

    fn running_cost(&self, t: f64, x: &[f64], a: &[f64]) -> f64 {
        (self.running_cost)(t, x, a)
    }

    fn running_cost_grad(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.running_cost_grad)(t, x, a, out)
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    fn reference_control(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.reference)(t, x, out)
    }

    fn min_hamiltonian(&self, t: f64, x: &[f64], z: &[f64]) -> Result<Minimizer> {
        match &self.minimizer {
            Some(f) => f(t, x, z),
            None => projected_gradient_min(self, t, x, z),
        }
    }
}
