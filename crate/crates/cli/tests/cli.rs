use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::Command;

use mirrorflow::flow::read_trace_csv;
use mirrorflow::grid::{read_field_csv, read_value_csv};
use mirrorflow::Grid;
use mirrorflow_cli::config::{ExperimentConfig, ProblemConfig};
use mirrorflow_cli::run::{
    read_certificates, Manifest, CERTIFICATES_FILE, MANIFEST_FILE, TRACE_FILE,
};
use mirrorflow_cli::{presets_dir, run_experiment, validate_config, PRESETS};

const SMALL: &str = r#"
[problem]
kind = "lq_ball"
tau = 0.5
m1 = [[-0.5]]
n = [[0.5]]
m2 = [[0.5]]
m3 = [[0.25]]
radius = 1.0

[grid]
lo = [-1.0]
hi = [1.0]
nx = [15]
nt = 10
horizon = 1.0

[flow]
horizon = 2.0
probe = { t = 0.0, x = [0.3] }
snapshots = [0.0, 1.0]
"#;

const SMALL_SIMPLEX: &str = r#"
[problem]
kind = "finite_action"
tau = 0.5
beta = [[-1.0], [0.0], [1.0]]
phi = [0.3, 0.0, 0.3]
reference = [0.25, 0.5, 0.25]
sigma = [[0.5]]
terminal = [[1.0]]

[grid]
lo = [-1.0]
hi = [1.0]
nx = [15]
nt = 10
horizon = 1.0

[flow]
horizon = 2.0
initial = "random"
seed = 11
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mirrorflow"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap().normalize()
}

#[test]
fn presets_validate() {
    for name in PRESETS {
        let config = validate_config(&presets_dir().join(format!("{name}.toml"))).unwrap();
        assert_eq!(config.flow.eta0, 0.1);
        assert_eq!(config.certificates.allowance, 0.1);
        assert_eq!(config.certificates.clamp, 1e-6);
        assert_eq!(config.lambda(), 2.0 * config.tau());
    }
}

#[test]
fn run_is_deterministic_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    for (k, text) in [SMALL, SMALL_SIMPLEX].iter().enumerate() {
        let config = parse(text);
        let (a, b) = (
            tmp.path().join(format!("a{k}")),
            tmp.path().join(format!("b{k}")),
        );
        let first = run_experiment(&config, &a).unwrap();
        run_experiment(&config, &b).unwrap();
        for f in [TRACE_FILE, CERTIFICATES_FILE] {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{f}"
            );
        }

        let grid = Grid::new(config.grid.clone()).unwrap();
        let open = |name: &str| BufReader::new(File::open(a.join(name)).unwrap());
        let records = read_trace_csv(open(TRACE_FILE)).unwrap();
        assert_eq!(records.len(), first.certificates.monotonicity.steps);
        assert_eq!(records.last().unwrap().s, 2.0);
        read_value_csv(&grid, open("Vstar.csv")).unwrap();
        let ustar = read_field_csv(&grid, open("ustar.csv")).unwrap();
        assert_eq!(ustar.components(), if k == 0 { 1 } else { 3 });
        assert_eq!(
            read_certificates(&a.join(CERTIFICATES_FILE)).unwrap(),
            first.certificates
        );
        let echo =
            ExperimentConfig::parse(&fs::read_to_string(a.join("config.toml")).unwrap()).unwrap();
        assert_eq!(echo, config);
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(a.join(MANIFEST_FILE)).unwrap()).unwrap();
        for f in &manifest.files {
            assert!(a.join(f).exists(), "{f}");
        }
        assert_eq!(manifest.seed, config.flow.seed);
    }
    let snaps = tmp.path().join("a0").join("snapshots");
    for f in ["u_s0.csv", "V_s0.csv", "u_s1.csv", "V_s1.csv"] {
        assert!(snaps.join(f).exists(), "{f}");
    }
}

#[test]
fn certificates_follow_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let lq = run_experiment(&parse(SMALL), tmp.path())
        .unwrap()
        .certificates;
    assert!(lq.exponential_rate.is_some());
    assert!(lq.gauge_invariance.is_none());
    assert_eq!(lq.probe.snapped_x, vec![0.25]);
    let fa = run_experiment(&parse(SMALL_SIMPLEX), &tmp.path().join("fa"))
        .unwrap()
        .certificates;
    let gauge = fa.gauge_invariance.unwrap();
    assert!(gauge.pass, "{gauge:?}");
    let tau0 = parse(&SMALL.replace("tau = 0.5", "tau = 0.0"));
    let c = run_experiment(&tau0, &tmp.path().join("t0"))
        .unwrap()
        .certificates;
    assert!(c.exponential_rate.is_none());
    assert!(c.linear_rate.checked > 0);
}

#[test]
fn config_errors_name_the_field() {
    let err =
        ExperimentConfig::parse(&SMALL.replace("radius = 1.0", "radius = 1.0\nradius_typo = 2.0"))
            .unwrap_err();
    assert!(err.to_string().contains("radius_typo"), "{err}");
    let err = ExperimentConfig::parse(&SMALL.replace("horizon = 2.0", "horizon = 2.0\nstep = 1"))
        .unwrap_err();
    assert!(err.mentions("flow"), "{err}");

    let outside = parse(&SMALL.replace("x = [0.3]", "x = [1.3]"));
    assert!(outside.check().unwrap_err().mentions("flow.probe"));
    let late = parse(&SMALL.replace("t = 0.0", "t = 1.0"));
    assert!(late.check().unwrap_err().mentions("flow.probe"));
    let wrong_dim = parse(&SMALL.replace("x = [0.3]", "x = [0.3, 0.1]"));
    assert!(wrong_dim.check().unwrap_err().mentions("flow.probe"));

    let off = parse(&SMALL_SIMPLEX.replace("[0.25, 0.5, 0.25]", "[0.25, 0.5, 0.2500001]"));
    assert!(off.check().unwrap_err().mentions("problem.reference"));
    let tiny = parse(&SMALL_SIMPLEX.replace("[0.25, 0.5, 0.25]", "[0.25, 0.5, 0.25000000000001]"));
    tiny.check().unwrap();

    let mismatch = parse(
        &SMALL
            .replace("lo = [-1.0]", "lo = [-1.0, -1.0]")
            .replace("hi = [1.0]", "hi = [1.0, 1.0]")
            .replace("nx = [15]", "nx = [5, 5]"),
    );
    assert!(mismatch.check().unwrap_err().mentions("problem"));

    let weak = parse(&SMALL.replace("radius = 1.0", "radius = 1.0\nkappa = 1.0"));
    assert!(weak.check().unwrap_err().mentions("problem"));
    let snap = parse(&SMALL.replace("snapshots = [0.0, 1.0]", "snapshots = [3.0]"));
    assert!(snap.check().unwrap_err().mentions("flow.snapshots"));
}

#[test]
fn custom_problem_runs() {
    let text = r#"
[problem]
kind = "custom"
tau = 0.5
mirror = { kind = "ball", radius = 1.0, dim = 1 }
drift_state = [[-0.5]]
drift_action = [[0.5]]
sigma = [[0.5]]
cost_state = [[0.5]]
cost_action = [[1.0]]
terminal = [[0.25]]

[grid]
lo = [-1.0]
hi = [1.0]
nx = [15]
nt = 10
horizon = 1.0

[flow]
horizon = 1.0
probe = { t = 0.0, x = [0.3] }
"#;
    let config = parse(text);
    match &config.problem {
        ProblemConfig::Custom(c) => assert_eq!(c.kappa, Some(0.25)),
        _ => unreachable!(),
    }
    let tmp = tempfile::tempdir().unwrap();
    let custom = run_experiment(&config, tmp.path()).unwrap().certificates;
    assert!(custom.hjb.approximate);
    let lq = parse(
        &SMALL
            .replace("horizon = 2.0", "horizon = 1.0")
            .replace("snapshots = [0.0, 1.0]", "snapshots = []"),
    );
    let lq = run_experiment(&lq, &tmp.path().join("lq"))
        .unwrap()
        .certificates;
    assert!(
        (custom.hjb.value_at_probe - lq.hjb.value_at_probe).abs() <= 1e-6,
        "{:?} {:?}",
        custom.hjb,
        lq.hjb
    );
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("mirrorflow"));

    let good = write_config(tmp.path(), SMALL);
    let out = bin()
        .args(["validate", "--config"])
        .arg(&good)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("allowance = 0.1"));

    let run_dir = tmp.path().join("run");
    let out = bin()
        .args(["run", "--seed", "5", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        read_certificates(&run_dir.join(CERTIFICATES_FILE))
            .unwrap()
            .seed,
        5
    );

    let bad_dir = tmp.path().join("bad");
    fs::create_dir(&bad_dir).unwrap();
    let bad = write_config(&bad_dir, &SMALL.replace("x = [0.3]", "x = [2.0]"));
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow.probe"));
    let out = bin()
        .args(["validate", "--config"])
        .arg(tmp.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfl_dir = tmp.path().join("cfl");
    fs::create_dir(&cfl_dir).unwrap();
    let cfl = write_config(
        &cfl_dir,
        &format!("{SMALL}\n[scheme]\nscheme = \"explicit\"\n"),
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfl)
        .arg("--out")
        .arg(cfl_dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hjb"));

    let cert_dir = tmp.path().join("cert");
    fs::create_dir(&cert_dir).unwrap();
    let text = SMALL.replace("tau = 0.5", "tau = 0.0") + "\n[certificates]\nlambda = 10.0\n";
    let failing = write_config(&cert_dir, &text);
    let out = bin()
        .args(["run", "--config"])
        .arg(&failing)
        .arg("--out")
        .arg(cert_dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
