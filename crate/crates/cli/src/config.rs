//! Experiment configuration: TOML schema, default filling and cross-field
//! validation.
//!
//! ```toml
//! [problem]
//! kind = "lq_ball"          # or "finite_action", "custom"
//! tau = 0.5
//! m1 = [[-0.5]]
//! n = [[0.5]]
//! m2 = [[0.5]]
//! m3 = [[0.25]]
//! radius = 1.0
//!
//! [grid]
//! lo = [-1.0]
//! hi = [1.0]
//! nx = [63]
//! nt = 50
//! horizon = 1.0
//!
//! [flow]
//! eta0 = 0.1
//! probe = { t = 0.0, x = [0.3] }
//! ```
//!
//! Every section except `problem` and `grid` is optional. Unknown keys are
//! errors.

use std::fmt;
use std::path::{Path, PathBuf};

use mirrorflow::linalg::{min_eigenvalue_sym, Matrix};
use mirrorflow::problem::{validate_problem, QuadraticCost};
use mirrorflow::{
    ControlProblem, CustomProblem, FiniteAction, FlowConfig, Grid, GridSpec, HjbConfig, LqBall,
    MirrorMap, Probe, SchemeConfig,
};
use serde::{Deserialize, Serialize};

/// Tolerance on `sum(reference) = 1` for the simplex.
pub const REFERENCE_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub grid: GridSpec,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub hjb: HjbConfig,
    #[serde(default)]
    pub certificates: CertificateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    LqBall(LqBallConfig),
    FiniteAction(FiniteActionConfig),
    Custom(CustomConfig),
}

/// `dX = (M1 X + N a) dt + M2 dW`, running cost `(|x|^2 + |a|^2) / 2 + tau rho`,
/// terminal cost `X^T M3 X`, actions in the ball of radius `radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqBallConfig {
    #[serde(default)]
    pub tau: f64,
    pub m1: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
    pub m2: Vec<Vec<f64>>,
    pub m3: Vec<Vec<f64>>,
    pub radius: f64,
    /// Defaults to the smallest eigenvalue of `M2 M2^T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// `p` actions with drifts `beta_i`, costs `phi_i + phi_slope_i . x`,
/// entropy regularisation towards `reference`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteActionConfig {
    pub tau: f64,
    pub beta: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_slope: Option<Vec<Vec<f64>>>,
    pub reference: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub terminal: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// Coefficient tables: drift `A x + B a + c`, running cost
/// `x^T Q x + a^T P a / 2 + l . a`, terminal cost `x^T M x`. The Hamiltonian
/// is minimised numerically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    #[serde(default)]
    pub tau: f64,
    pub mirror: MirrorMap,
    pub drift_state: Vec<Vec<f64>>,
    pub drift_action: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_offset: Option<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_state: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_action: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_linear: Option<Vec<f64>>,
    pub terminal: Vec<Vec<f64>>,
    /// Defaults to the centre of the action set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialDual {
    /// `Z0 = 0`: the zero action on the ball, uniform on the simplex.
    #[default]
    Zero,
    /// `Z0 = grad psi(u0)`.
    Reference,
    /// Smooth random field with amplitude `initial_scale`, drawn from `seed`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    /// Flow horizon `S`; 20 without regularisation, `10 / tau` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Defaults to `t = 0` at the centre of the domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Probe>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialDual,
    #[serde(default = "default_initial_scale")]
    pub initial_scale: f64,
    /// Flow times at which `u_s` and `V^{u_s}` are dumped.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default = "default_mono_tolerance")]
    pub mono_tolerance: f64,
    #[serde(default = "default_mono_quadratic")]
    pub mono_quadratic: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            eta0: default_eta0(),
            horizon: None,
            probe: None,
            seed: 0,
            initial: InitialDual::Zero,
            initial_scale: default_initial_scale(),
            snapshots: Vec::new(),
            mono_tolerance: default_mono_tolerance(),
            mono_quadratic: default_mono_quadratic(),
            max_halvings: default_max_halvings(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    #[serde(default = "default_allowance")]
    pub allowance: f64,
    /// Clamp applied when inverting `u*` to `Z*`.
    #[serde(default = "default_clamp")]
    pub clamp: f64,
    /// Defaults to `2 tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_convexity_samples")]
    pub convexity_samples: usize,
    #[serde(default = "default_z_radius")]
    pub z_radius: f64,
    #[serde(default = "default_convexity_floor")]
    pub convexity_floor: f64,
    #[serde(default = "default_gauge_shift")]
    pub gauge_shift: f64,
    #[serde(default = "default_gauge_steps")]
    pub gauge_steps: usize,
    #[serde(default = "default_gauge_tolerance")]
    pub gauge_tolerance: f64,
}

impl Default for CertificateSection {
    fn default() -> Self {
        Self {
            allowance: default_allowance(),
            clamp: default_clamp(),
            lambda: None,
            convexity_samples: default_convexity_samples(),
            z_radius: default_z_radius(),
            convexity_floor: default_convexity_floor(),
            gauge_shift: default_gauge_shift(),
            gauge_steps: default_gauge_steps(),
            gauge_tolerance: default_gauge_tolerance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn default_eta0() -> f64 {
    0.1
}
fn default_initial_scale() -> f64 {
    1.0
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
fn default_allowance() -> f64 {
    0.1
}
fn default_clamp() -> f64 {
    1e-6
}
fn default_convexity_samples() -> usize {
    1000
}
fn default_z_radius() -> f64 {
    5.0
}
fn default_convexity_floor() -> f64 {
    1e-10
}
fn default_gauge_shift() -> f64 {
    3.7
}
fn default_gauge_steps() -> usize {
    5
}
fn default_gauge_tolerance() -> f64 {
    1e-12
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One problem with a config, located by its dotted field path.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}", list(.0))]
    Invalid(Vec<ConfigIssue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            Self::Invalid(v) => v,
            Self::Unreadable { .. } => &[],
        }
    }

    /// True when some issue sits at `path` or below it.
    pub fn mentions(&self, path: &str) -> bool {
        self.issues().iter().any(|i| i.path.starts_with(path))
    }
}

fn list(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn issue(path: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        path: path.into(),
        message: message.into(),
    }
}

/// The problem built from a config.
#[derive(Debug)]
pub enum BuiltProblem {
    LqBall(LqBall),
    FiniteAction(FiniteAction),
    Custom(CustomProblem),
}

impl BuiltProblem {
    pub fn as_dyn(&self) -> &dyn ControlProblem {
        match self {
            Self::LqBall(p) => p,
            Self::FiniteAction(p) => p,
            Self::Custom(p) => p,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::LqBall(_) => "lq_ball",
            Self::FiniteAction(_) => "finite_action",
            Self::Custom(_) => "custom",
        }
    }
}

impl ProblemConfig {
    pub fn tau(&self) -> f64 {
        match self {
            Self::LqBall(c) => c.tau,
            Self::FiniteAction(c) => c.tau,
            Self::Custom(c) => c.tau,
        }
    }

    pub fn build(&self) -> Result<BuiltProblem, ConfigIssue> {
        let core = |e: mirrorflow::Error| issue("problem", e.to_string());
        Ok(match self {
            Self::LqBall(c) => {
                let m2 = matrix("problem.m2", &c.m2)?;
                let kappa = c.kappa.unwrap_or_else(|| lowest_eigenvalue(&m2));
                BuiltProblem::LqBall(
                    LqBall::new(
                        matrix("problem.m1", &c.m1)?,
                        matrix("problem.n", &c.n)?,
                        m2,
                        matrix("problem.m3", &c.m3)?,
                        c.radius,
                        c.tau,
                        kappa,
                    )
                    .map_err(core)?,
                )
            }
            Self::FiniteAction(c) => {
                let mut p = FiniteAction::new(
                    c.beta.clone(),
                    c.phi.clone(),
                    c.reference.clone(),
                    c.tau,
                    matrix("problem.sigma", &c.sigma)?,
                    QuadraticCost::pure(matrix("problem.terminal", &c.terminal)?),
                )
                .map_err(core)?;
                if let Some(slope) = &c.phi_slope {
                    p = p.with_phi_slope(slope.clone()).map_err(core)?;
                }
                if let Some(k) = c.kappa {
                    p = p.with_kappa(k);
                }
                BuiltProblem::FiniteAction(p)
            }
            Self::Custom(c) => BuiltProblem::Custom(c.build()?),
        })
    }

    /// Dimension of the state implied by the problem tables.
    fn state_dim(&self) -> usize {
        match self {
            Self::LqBall(c) => c.m1.len(),
            Self::FiniteAction(c) => c.sigma.len(),
            Self::Custom(c) => c.drift_state.len(),
        }
    }
}

impl CustomConfig {
    fn build(&self) -> Result<CustomProblem, ConfigIssue> {
        let d = self.drift_state.len();
        let p = self.mirror.dim();
        let a = matrix("problem.drift_state", &self.drift_state)?;
        let b = matrix("problem.drift_action", &self.drift_action)?;
        let sigma = matrix("problem.sigma", &self.sigma)?;
        let m = matrix("problem.terminal", &self.terminal)?;
        let q = match &self.cost_state {
            Some(rows) => matrix("problem.cost_state", rows)?,
            None => Matrix::zeros(d, d),
        };
        let pm = match &self.cost_action {
            Some(rows) => matrix("problem.cost_action", rows)?,
            None => Matrix::zeros(p, p),
        };
        let c = self.drift_offset.clone().unwrap_or_else(|| vec![0.0; d]);
        let l = self.cost_linear.clone().unwrap_or_else(|| vec![0.0; p]);
        let shape = |path: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(issue(path, "dimension mismatch"))
            }
        };
        shape("problem.drift_state", a.cols() == d)?;
        shape("problem.drift_action", b.rows() == d && b.cols() == p)?;
        shape("problem.drift_offset", c.len() == d)?;
        shape("problem.sigma", sigma.rows() == d)?;
        shape("problem.terminal", m.rows() == d && m.cols() == d)?;
        shape("problem.cost_state", q.rows() == d && q.cols() == d)?;
        shape("problem.cost_action", pm.rows() == p && pm.cols() == p)?;
        shape("problem.cost_linear", l.len() == p)?;
        let kappa = self.kappa.unwrap_or_else(|| lowest_eigenvalue(&sigma));
        let noise = sigma.cols();
        let mut builder = CustomProblem::builder(d, self.mirror)
            .tau(self.tau)
            .ellipticity(kappa);
        {
            let (a, b, c) = (a.clone(), b.clone(), c.clone());
            builder = builder.drift(move |_, x, act, out| {
                a.mul_vec(x, out);
                for (k, o) in out.iter_mut().enumerate() {
                    *o += c[k] + (0..act.len()).map(|j| b.get(k, j) * act[j]).sum::<f64>();
                }
            });
        }
        {
            let b = b.clone();
            builder = builder.drift_jacobian(move |_, _, _, out| out.copy_from_slice(b.as_slice()));
        }
        builder = builder.sigma(noise, move |_, _, out| {
            out.copy_from_slice(sigma.as_slice())
        });
        {
            let (q, pm, l) = (q.clone(), pm.clone(), l.clone());
            builder = builder.running_cost(move |_, x, act| {
                let linear: f64 = l.iter().zip(act).map(|(u, v)| u * v).sum();
                q.quadratic_form(x) + 0.5 * pm.quadratic_form(act) + linear
            });
        }
        builder = builder.running_cost_grad(move |_, _, act, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = l[i]
                    + 0.5
                        * (0..act.len())
                            .map(|j| (pm.get(i, j) + pm.get(j, i)) * act[j])
                            .sum::<f64>();
            }
        });
        builder = builder.terminal_cost(move |x| m.quadratic_form(x));
        if let Some(reference) = self.reference.clone() {
            if reference.len() != p {
                return Err(issue("problem.reference", format!("expected {p} entries")));
            }
            builder = builder.reference_control(move |_, _, out| out.copy_from_slice(&reference));
        }
        builder.build().map_err(|e| issue("problem", e.to_string()))
    }
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<Matrix, ConfigIssue> {
    Matrix::from_rows(rows).map_err(|e| issue(path, e.to_string()))
}

fn lowest_eigenvalue(sigma: &Matrix) -> f64 {
    min_eigenvalue_sym(sigma.gram().as_slice(), sigma.rows())
}

impl ExperimentConfig {
    /// Parses TOML text, reporting the dotted path of the offending field.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Invalid(vec![issue(&path, inner.message().trim().to_string())])
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn tau(&self) -> f64 {
        self.problem.tau()
    }

    /// Fills every default that depends on other fields: flow horizon,
    /// probe, `lambda` and the ellipticity constant.
    pub fn normalize(mut self) -> Self {
        let tau = self.tau();
        self.flow
            .horizon
            .get_or_insert(FlowConfig::default_horizon(tau));
        if self.flow.probe.is_none() {
            let centre = self
                .grid
                .lo
                .iter()
                .zip(&self.grid.hi)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            self.flow.probe = Some(Probe::new(0.0, centre));
        }
        self.certificates.lambda.get_or_insert(2.0 * tau);
        match &mut self.problem {
            ProblemConfig::LqBall(c) if c.kappa.is_none() => {
                if let Ok(m2) = Matrix::from_rows(&c.m2) {
                    c.kappa = Some(lowest_eigenvalue(&m2));
                }
            }
            ProblemConfig::FiniteAction(c) if c.kappa.is_none() => {
                if let Ok(s) = Matrix::from_rows(&c.sigma) {
                    c.kappa = Some(lowest_eigenvalue(&s));
                }
            }
            ProblemConfig::Custom(c) if c.kappa.is_none() => {
                if let Ok(s) = Matrix::from_rows(&c.sigma) {
                    c.kappa = Some(lowest_eigenvalue(&s));
                }
            }
            _ => {}
        }
        self
    }

    /// Flow settings for the core integrator. Call on a normalised config.
    pub fn flow_config(&self) -> FlowConfig {
        let mut cfg = FlowConfig::new(
            self.flow.eta0,
            self.flow
                .horizon
                .unwrap_or_else(|| FlowConfig::default_horizon(self.tau())),
            self.flow
                .probe
                .clone()
                .unwrap_or_else(|| Probe::new(0.0, vec![0.0; self.grid.lo.len()])),
        );
        cfg.mono_tolerance = self.flow.mono_tolerance;
        cfg.mono_quadratic = self.flow.mono_quadratic;
        cfg.max_halvings = self.flow.max_halvings;
        cfg
    }

    pub fn lambda(&self) -> f64 {
        self.certificates.lambda.unwrap_or(2.0 * self.tau())
    }

    /// Checks every invariant on a normalised config and returns all
    /// violations at once, together with the grid and problem on success.
    pub fn check(&self) -> Result<(Grid, BuiltProblem), ConfigError> {
        let mut issues = Vec::new();
        let grid = match Grid::new(self.grid.clone()) {
            Ok(g) => Some(g),
            Err(e) => {
                issues.push(issue("grid", e.to_string()));
                None
            }
        };
        let d = self.grid.lo.len();
        if self.problem.state_dim() != d {
            issues.push(issue(
                "problem",
                format!(
                    "state dimension {} does not match the grid dimension {d}",
                    self.problem.state_dim()
                ),
            ));
        }
        if let ProblemConfig::FiniteAction(c) = &self.problem {
            let sum: f64 = c.reference.iter().sum();
            if (sum - 1.0).abs() > REFERENCE_SUM_TOLERANCE {
                issues.push(issue(
                    "problem.reference",
                    format!("must sum to 1, sums to {sum}"),
                ));
            }
            if c.beta.len() != c.reference.len() {
                issues.push(issue(
                    "problem.reference",
                    format!(
                        "has {} entries for {} actions",
                        c.reference.len(),
                        c.beta.len()
                    ),
                ));
            }
        }
        if let ProblemConfig::Custom(c) = &self.problem {
            if let Some(r) = &c.reference {
                if let MirrorMap::Simplex { .. } = c.mirror {
                    let sum: f64 = r.iter().sum();
                    if (sum - 1.0).abs() > REFERENCE_SUM_TOLERANCE {
                        issues.push(issue(
                            "problem.reference",
                            format!("must sum to 1, sums to {sum}"),
                        ));
                    }
                }
            }
        }
        let problem = match self.problem.build() {
            Ok(p) => Some(p),
            Err(e) => {
                issues.push(e);
                None
            }
        };
        if let (Some(g), Some(p)) = (&grid, &problem) {
            if p.as_dyn().state_dim() == g.dim() {
                if let Err(e) = validate_problem(p.as_dyn(), g) {
                    issues.push(issue("problem", e.to_string()));
                }
            }
        }
        let f = &self.flow;
        if !(f.eta0 > 0.0 && f.eta0.is_finite()) {
            issues.push(issue(
                "flow.eta0",
                format!("must be positive, got {}", f.eta0),
            ));
        }
        let horizon = f.horizon.unwrap_or(f64::NAN);
        if !(horizon > 0.0 && horizon.is_finite()) {
            issues.push(issue(
                "flow.horizon",
                format!("must be positive, got {horizon}"),
            ));
        }
        if !(f.initial_scale >= 0.0 && f.initial_scale.is_finite()) {
            issues.push(issue(
                "flow.initial_scale",
                "must be finite and non-negative",
            ));
        }
        if !(f.mono_tolerance >= 0.0 && f.mono_quadratic >= 0.0) {
            issues.push(issue(
                "flow.mono_tolerance",
                "tolerances must be non-negative",
            ));
        }
        if let Some(s) = f.snapshots.iter().find(|s| !(**s >= 0.0 && **s <= horizon)) {
            issues.push(issue(
                "flow.snapshots",
                format!("{s} is outside [0, {horizon}]"),
            ));
        }
        match (&f.probe, &grid) {
            (Some(probe), Some(g)) => {
                if let Err(e) = probe.locate(g) {
                    issues.push(issue("flow.probe", e.to_string()));
                }
            }
            (None, _) => issues.push(issue("flow.probe", "missing")),
            _ => {}
        }
        if let Err(e) = self.scheme.validate() {
            issues.push(issue("scheme", e.to_string()));
        }
        if !(self.hjb.tolerance > 0.0) || self.hjb.max_rounds == 0 {
            issues.push(issue("hjb", "tolerance and max_rounds must be positive"));
        }
        let c = &self.certificates;
        if !(0.0..1.0).contains(&c.allowance) {
            issues.push(issue(
                "certificates.allowance",
                format!("must lie in [0, 1), got {}", c.allowance),
            ));
        }
        if !(c.clamp > 0.0 && c.clamp < 0.5) {
            issues.push(issue(
                "certificates.clamp",
                format!("must lie in (0, 0.5), got {}", c.clamp),
            ));
        }
        if !(self.lambda() >= 0.0 && self.lambda().is_finite()) {
            issues.push(issue(
                "certificates.lambda",
                "must be finite and non-negative",
            ));
        }
        if c.convexity_samples == 0 {
            issues.push(issue(
                "certificates.convexity_samples",
                "must be at least 1",
            ));
        }
        if !(c.z_radius > 0.0) {
            issues.push(issue("certificates.z_radius", "must be positive"));
        }
        match (grid, problem) {
            (Some(g), Some(p)) if issues.is_empty() => Ok((g, p)),
            _ => Err(ConfigError::Invalid(issues)),
        }
    }
}

/// Reads, normalises and checks a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let config = ExperimentConfig::parse(&text)?.normalize();
    config.check()?;
    Ok(config)
}
