//! End-to-end experiment: HJB ground truth, mirror flow, certificates and
//! artifacts on disk.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use mirrorflow::diagnostics::{
    convexity_probe, exponential_rate_certificate, gauge_invariance, linear_rate_certificate,
    CertificateReport,
};
use mirrorflow::flow::{
    controls, flow_velocity, run_flow_observed, value_derivative_identity, write_trace_csv,
};
use mirrorflow::grid::{write_field_csv, write_value_csv};
use mirrorflow::hjb::bellman_residual;
use mirrorflow::{
    optimal_dual, solve_hjb, ControlProblem, Field, FlowState, FlowTarget, Grid, MirrorMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, InitialDual};

pub const VSTAR_FILE: &str = "Vstar.csv";
pub const USTAR_FILE: &str = "ustar.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Sign tolerance on the right-hand side of the value-derivative identity.
pub const IDENTITY_SIGN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{stage} failed: {source}")]
    Solver {
        stage: &'static str,
        source: mirrorflow::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver { .. } | Self::Io { .. } => 3,
        }
    }
}

fn stage(name: &'static str) -> impl Fn(mirrorflow::Error) -> RunError {
    move |source| RunError::Solver {
        stage: name,
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeInfo {
    pub t: f64,
    pub x: Vec<f64>,
    pub level: usize,
    pub node: usize,
    pub snapped_t: f64,
    pub snapped_x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HjbInfo {
    pub rounds: usize,
    pub approximate: bool,
    pub bellman_residual: f64,
    pub value_at_probe: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualInfo {
    pub clamped: bool,
    pub clamp_magnitude: f64,
    pub d0_probe: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub pass: bool,
    pub steps: usize,
    pub halvings: usize,
    pub worst_increase: f64,
    pub initial_probe_gap: f64,
    pub final_probe_gap: f64,
    pub initial_sup_gap: f64,
    pub final_sup_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convexity {
    pub pass: bool,
    pub lambda: f64,
    pub samples: usize,
    pub worst_margin: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub pass: bool,
    pub shift: f64,
    pub steps: usize,
    pub max_difference: f64,
    pub tolerance: f64,
}

/// The identity at the initial dual: the sign of its right-hand side is
/// certified, the residual is reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub pass: bool,
    pub h: f64,
    pub max_rhs: f64,
    pub min_rhs: f64,
    pub max_residual: f64,
}

/// Contents of `certificates.json`. Deterministic for a fixed config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub problem: String,
    pub tau: f64,
    pub seed: u64,
    pub probe: ProbeInfo,
    pub hjb: HjbInfo,
    pub dual: DualInfo,
    pub linear_rate: CertificateReport,
    pub exponential_rate: Option<CertificateReport>,
    pub monotonicity: Monotonicity,
    pub convexity: Convexity,
    pub gauge_invariance: Option<Gauge>,
    pub derivative_identity: Identity,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub mirrorflow_version: String,
    pub cli_version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub files: Vec<String>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub certificates: Certificates,
    pub manifest: Manifest,
}

struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<StageTiming>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: name.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_with<F>(path: &Path, f: F) -> Result<(), RunError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn initial_dual(
    config: &ExperimentConfig,
    grid: &Grid,
    problem: &dyn ControlProblem,
) -> Result<Field, RunError> {
    let map = problem.mirror();
    let p = map.dim();
    match config.flow.initial {
        InitialDual::Zero => Ok(Field::zeros(grid, p)),
        InitialDual::Reference => {
            let mut u0 = vec![0.0; p];
            let mut out = Field::zeros(grid, p);
            for level in 0..grid.levels() {
                let t = grid.time(level);
                for node in 0..grid.n_interior() {
                    problem.reference_control(t, &grid.coords(node), &mut u0);
                    let z = map.grad_psi(&u0).map_err(stage("initial dual"))?;
                    out.node_mut(level, node).copy_from_slice(&z);
                }
            }
            Ok(out)
        }
        InitialDual::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.flow.seed);
            let d = grid.dim();
            let coef: Vec<[f64; 4]> = (0..p)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0.5..3.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect();
            let scale = config.flow.initial_scale;
            let mut z = Field::from_fn(grid, p, |t, x, out| {
                let sx: f64 = x.iter().sum::<f64>() / d as f64;
                for (o, c) in out.iter_mut().zip(&coef) {
                    *o = scale * (c[0] * (c[1] * sx + c[2]).sin() + 0.5 * c[3] * t);
                }
            });
            if let MirrorMap::Ball { radius, .. } = *map {
                z.data_mut().iter_mut().for_each(|v| *v /= radius.max(1.0));
            }
            Ok(z)
        }
    }
}

fn snapshot_name(prefix: &str, s: f64) -> String {
    format!("{prefix}_s{s}.csv")
}

/// Runs the experiment described by a normalised, checked config and writes
/// every artifact below `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut clock = Clock::new();
    let (grid, built) = config.check()?;
    let problem: &dyn ControlProblem = built.as_dyn();
    let map = *problem.mirror();
    let scheme = &config.scheme;
    let flow_cfg = config.flow_config();
    let certs = &config.certificates;

    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let snap_dir = out_dir.join(SNAPSHOT_DIR);
    if !config.flow.snapshots.is_empty() {
        fs::create_dir_all(&snap_dir).map_err(io(&snap_dir))?;
    }
    let mut files = vec![CONFIG_ECHO_FILE.to_string()];
    let echo = out_dir.join(CONFIG_ECHO_FILE);
    fs::write(&echo, config.to_toml()).map_err(io(&echo))?;

    let sol = solve_hjb(problem, &grid, scheme, &config.hjb).map_err(stage("hjb"))?;
    let residual = bellman_residual(problem, &grid, scheme, &sol.value).map_err(stage("hjb"))?;
    write_with(&out_dir.join(VSTAR_FILE), |w| {
        write_value_csv(&grid, &sol.value, w)
    })?;
    write_with(&out_dir.join(USTAR_FILE), |w| {
        write_field_csv(&grid, &sol.control, w)
    })?;
    files.extend([VSTAR_FILE.to_string(), USTAR_FILE.to_string()]);
    clock.lap("hjb");

    let dual = optimal_dual(&map, &sol.control, certs.clamp).map_err(stage("dual"))?;
    let z0 = initial_dual(config, &grid, problem)?;
    let (level, node) = flow_cfg.probe.locate(&grid).map_err(stage("flow"))?;
    let probe = ProbeInfo {
        t: flow_cfg.probe.t,
        x: flow_cfg.probe.x.clone(),
        level,
        node,
        snapped_t: grid.time(level),
        snapped_x: grid.coords(node),
    };

    let mut pending: Vec<f64> = config.flow.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    pending.dedup();
    let snapshot = |s: f64, z: &Field, value: &mirrorflow::ValueField, files: &mut Vec<String>| {
        let u = controls(&map, z);
        let (un, vn) = (snapshot_name("u", s), snapshot_name("V", s));
        write_with(&snap_dir.join(&un), |w| write_field_csv(&grid, &u, w))?;
        write_with(&snap_dir.join(&vn), |w| write_value_csv(&grid, value, w))?;
        files.push(format!("{SNAPSHOT_DIR}/{un}"));
        files.push(format!("{SNAPSHOT_DIR}/{vn}"));
        Ok::<(), RunError>(())
    };
    let initial_state =
        FlowState::new(problem, &grid, scheme, z0.clone(), flow_cfg.eta0).map_err(stage("flow"))?;
    while pending.first().is_some_and(|&s| s <= 0.0) {
        snapshot(0.0, &initial_state.z, &initial_state.value, &mut files)?;
        pending.remove(0);
    }
    let velocity = flow_velocity(
        problem,
        &grid,
        &initial_state.value,
        &initial_state.controls(&map),
    )
    .map_err(stage("derivative identity"))?;
    let id = value_derivative_identity(problem, &grid, scheme, &initial_state, &velocity)
        .map_err(stage("derivative identity"))?;
    let max_rhs = id
        .rhs
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min_rhs = id.rhs.data().iter().copied().fold(f64::INFINITY, f64::min);
    let identity = Identity {
        pass: max_rhs <= IDENTITY_SIGN_TOLERANCE,
        h: id.h,
        max_rhs,
        min_rhs,
        max_residual: id.residual.max_abs_before_terminal(),
    };
    drop(initial_state);
    clock.lap("setup");

    let target = FlowTarget {
        value: &sol.value,
        dual: Some(&dual.z),
    };
    let mut snap_error = None;
    let trace = run_flow_observed(
        problem,
        &grid,
        scheme,
        &flow_cfg,
        z0.clone(),
        target,
        |state, record| {
            while pending
                .first()
                .is_some_and(|&s| s <= record.s * (1.0 + 1e-12))
            {
                let s = pending.remove(0);
                if let Err(e) = snapshot(s, &state.z, &state.value, &mut files) {
                    snap_error.get_or_insert(e);
                }
            }
            Ok(())
        },
    )
    .map_err(stage("flow"))?;
    if let Some(e) = snap_error {
        return Err(e);
    }
    write_with(&out_dir.join(TRACE_FILE), |w| write_trace_csv(&trace, w))?;
    files.push(TRACE_FILE.into());
    clock.lap("flow");

    let d0 = trace.d0_probe.unwrap_or(f64::NAN);
    let linear = linear_rate_certificate(&trace.records, d0, certs.allowance, dual.clamp_magnitude);
    let lambda = config.lambda();
    let exponential = if lambda > 0.0 {
        Some(
            exponential_rate_certificate(
                &trace.records,
                d0,
                lambda,
                certs.allowance,
                dual.clamp_magnitude,
            )
            .map_err(stage("certificates"))?,
        )
    } else {
        None
    };
    let worst_increase = trace
        .records
        .iter()
        .map(|r| r.mono_violation)
        .fold(0.0, f64::max);
    let mono_ok = trace.records.iter().all(|r| {
        r.mono_violation <= flow_cfg.mono_tolerance + flow_cfg.mono_quadratic * r.eta * r.eta
    });
    let last = trace.records.last();
    let monotonicity = Monotonicity {
        pass: mono_ok,
        steps: trace.records.len(),
        halvings: trace.halvings,
        worst_increase,
        initial_probe_gap: trace.initial_probe_gap,
        final_probe_gap: last.map_or(trace.initial_probe_gap, |r| r.probe_gap),
        initial_sup_gap: trace.initial_sup_gap,
        final_sup_gap: last.map_or(trace.initial_sup_gap, |r| r.sup_gap),
    };
    let sample = convexity_probe(
        problem,
        &grid,
        certs.convexity_samples,
        lambda,
        certs.z_radius,
        config.flow.seed,
    )
    .map_err(stage("convexity"))?;
    let convexity = Convexity {
        pass: sample.margin >= -certs.convexity_floor,
        lambda,
        samples: certs.convexity_samples,
        worst_margin: sample.margin,
        floor: certs.convexity_floor,
    };
    let gauge = match map {
        MirrorMap::Simplex { .. } => {
            let diff = gauge_invariance(
                problem,
                &grid,
                scheme,
                &flow_cfg,
                &z0,
                certs.gauge_shift,
                certs.gauge_steps,
            )
            .map_err(stage("gauge invariance"))?;
            Some(Gauge {
                pass: diff <= certs.gauge_tolerance,
                shift: certs.gauge_shift,
                steps: certs.gauge_steps,
                max_difference: diff,
                tolerance: certs.gauge_tolerance,
            })
        }
        MirrorMap::Ball { .. } => None,
    };
    let pass = linear.pass
        && exponential.as_ref().is_none_or(|c| c.pass)
        && monotonicity.pass
        && convexity.pass
        && gauge.as_ref().is_none_or(|g| g.pass)
        && identity.pass;
    let certificates = Certificates {
        problem: built.kind().into(),
        tau: problem.tau(),
        seed: config.flow.seed,
        probe,
        hjb: HjbInfo {
            rounds: sol.rounds,
            approximate: sol.approximate,
            bellman_residual: residual.max_abs(),
            value_at_probe: sol.value.get(level, node),
        },
        dual: DualInfo {
            clamped: dual.clamped,
            clamp_magnitude: dual.clamp_magnitude,
            d0_probe: d0,
        },
        linear_rate: linear,
        exponential_rate: exponential,
        monotonicity,
        convexity,
        gauge_invariance: gauge,
        derivative_identity: identity,
        pass,
    };
    let cert_path = out_dir.join(CERTIFICATES_FILE);
    let json = serde_json::to_string_pretty(&certificates).expect("certificates serialise");
    fs::write(&cert_path, json + "\n").map_err(io(&cert_path))?;
    files.push(CERTIFICATES_FILE.into());
    clock.lap("certificates");

    files.push(MANIFEST_FILE.into());
    let manifest = Manifest {
        seed: config.flow.seed,
        mirrorflow_version: mirrorflow::VERSION.into(),
        cli_version: env!("CARGO_PKG_VERSION").into(),
        started_unix,
        wall_clock_seconds: clock.start.elapsed().as_secs_f64(),
        stages: clock.stages,
        files,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&manifest_path, json + "\n").map_err(io(&manifest_path))?;

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        certificates,
        manifest,
    })
}

/// Reads `certificates.json` back.
pub fn read_certificates(path: &Path) -> Result<Certificates, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}
