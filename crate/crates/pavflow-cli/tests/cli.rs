//! End-to-end checks of the `pavflow` binary: argument handling, exit
//! codes, output shapes, and bitwise reproducibility.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pavflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawning pavflow")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "pavflow {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

/// Small, fast scenario every command accepts, including the
/// dense-analysis scan.
const SMOKE_CFG: &str = "label = smoke\n\
                         k = 5\n\
                         horizon_t = 10\n\
                         n_particles = 20000\n\
                         dt_mc = 0.002\n";

const SMOKE_PROFILE: &str = "time_s,speed_mps\n0,8\n5,12\n10,9\n";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("smoke.cfg"), SMOKE_CFG).unwrap();
        std::fs::write(dir.path().join("profile.csv"), SMOKE_PROFILE).unwrap();
        Fixture { dir }
    }

    fn cfg(&self) -> String {
        self.dir.path().join("smoke.cfg").display().to_string()
    }

    fn profile(&self) -> String {
        self.dir.path().join("profile.csv").display().to_string()
    }

    fn out(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().into_string().unwrap();
        files.insert(name, std::fs::read(entry.path()).unwrap());
    }
    files
}

fn csv_rows(bytes: &[u8]) -> Vec<String> {
    String::from_utf8(bytes.to_vec()).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn help_and_version_succeed() {
    let help = run_ok(&["--help"]);
    let text = String::from_utf8(help.stdout).unwrap();
    for cmd in [
        "simulate",
        "compare",
        "sweep",
        "ngsim",
        "stability-scan",
        "erlang-check",
        "oracle-validate",
        "equilibrium",
    ] {
        assert!(text.contains(cmd), "--help does not mention {cmd}");
    }
    assert!(text.contains("downward-cascade"), "--help does not list presets");
    run_ok(&["--version"]);
    // A plain usage error is not a numerical failure.
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&[]), 1);
}

#[test]
fn validation_problems_exit_one() {
    let fx = Fixture::new();
    let out = fx.out("v");

    assert_eq!(code(&["equilibrium", "--preset", "nope", "--out", &out]), 1);
    let err = run(&["equilibrium", "--preset", "nope", "--out", &out]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("unknown preset"));

    std::fs::write(fx.dir.path().join("bad.cfg"), "lambda9 = 1\n").unwrap();
    let bad = fx.dir.path().join("bad.cfg").display().to_string();
    assert_eq!(code(&["simulate", "--config", &bad, "--out", &out]), 1);

    let missing = fx.out("does-not-exist.cfg");
    assert_eq!(code(&["simulate", "--config", &missing, "--out", &out]), 1);

    // Too-coarse particle clock at the default k = 200.
    std::fs::write(fx.dir.path().join("coarse.cfg"), "dt_mc = 0.05\n").unwrap();
    let coarse = fx.dir.path().join("coarse.cfg").display().to_string();
    assert_eq!(code(&["oracle-validate", "--config", &coarse, "--out", &out]), 1);

    // Dense analysis refuses the default chain length.
    assert_eq!(code(&["stability-scan", "--out", &out]), 1);

    assert_eq!(code(&["sweep", "sideways", "--out", &out]), 1);
}

#[test]
fn numerical_problems_exit_two() {
    let fx = Fixture::new();
    // A one-hour lockout cannot meet the approximation threshold with
    // any admissible stage count: not a validation problem.
    std::fs::write(fx.dir.path().join("long.cfg"), "t_lock_h = 1000\nt_lock_a = 1000\n")
        .unwrap();
    let long = fx.dir.path().join("long.cfg").display().to_string();
    let out = fx.out("n");
    assert_eq!(code(&["erlang-check", "--config", &long, "--out", &out]), 2);
}

#[test]
fn simulate_writes_the_advertised_files() {
    let fx = Fixture::new();
    let out = fx.out("sim");
    let cfg = fx.cfg();
    let stdout = run_ok(&["simulate", "--config", &cfg, "--out", &out]).stdout;
    assert!(String::from_utf8_lossy(&stdout).starts_with("simulate smoke:"));

    let files = snapshot(Path::new(&out));
    let names: Vec<&str> = files.keys().map(String::as_str).collect();
    assert_eq!(
        names,
        [
            "smoke_phase.csv",
            "smoke_simulate.json",
            "smoke_throughput.csv",
            "smoke_trajectory.csv"
        ]
    );

    // 10 s at the default 0.01 s step, every sample recorded.
    let traj = csv_rows(&files["smoke_trajectory.csv"]);
    assert_eq!(traj[0], "time_s,sum_xh,sum_xa,q_hdv,xh0,xa0");
    assert_eq!(traj.len(), 1 + 1001);

    let thr = csv_rows(&files["smoke_throughput.csv"]);
    assert_eq!(thr[0], "time_s,v_mps,h_eff_s,c_vphpl");
    assert_eq!(thr.len(), 1 + 1001);

    let phase = csv_rows(&files["smoke_phase.csv"]);
    assert_eq!(phase[0], "sum_xh,sum_xa");
    assert_eq!(phase.len(), 1 + 1001);

    let report: serde_json::Value =
        serde_json::from_slice(&files["smoke_simulate.json"]).unwrap();
    assert_eq!(report["label"], "smoke");
    assert_eq!(report["samples"], 1001);
    assert!(report["steady_c_vphpl"].as_f64().unwrap() > 0.0);
}

#[test]
fn the_downward_preset_records_the_full_default_grid() {
    let fx = Fixture::new();
    let out = fx.out("grid");
    run_ok(&["simulate", "--preset", "downward-cascade", "--out", &out]);
    let files = snapshot(Path::new(&out));
    let rows = csv_rows(&files["downward-cascade_trajectory.csv"]);
    // 30 s horizon at 0.01 s steps.
    assert_eq!(rows.len(), 1 + 3001);
}

#[test]
fn every_command_is_bitwise_reproducible() {
    let fx = Fixture::new();
    let cfg = fx.cfg();
    let profile = fx.profile();
    let commands: Vec<Vec<&str>> = vec![
        vec!["simulate"],
        vec!["compare"],
        vec!["sweep", "gamma"],
        vec!["sweep", "initial-fraction"],
        vec!["sweep", "rate-grid"],
        vec!["ngsim", &profile],
        vec!["stability-scan"],
        vec!["erlang-check"],
        vec!["oracle-validate"],
        vec!["equilibrium"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let out_a = fx.out(&format!("a{i}"));
        let out_b = fx.out(&format!("b{i}"));
        let mut args_a: Vec<&str> = cmd.clone();
        args_a.extend(["--config", &cfg, "--seed", "7", "--out", &out_a]);
        let mut args_b: Vec<&str> = cmd.clone();
        args_b.extend(["--config", &cfg, "--seed", "7", "--out", &out_b]);

        let first = run_ok(&args_a);
        let second = run_ok(&args_b);
        assert_eq!(
            first.stdout, second.stdout,
            "stdout of {cmd:?} changed between runs"
        );

        let files_a = snapshot(Path::new(&out_a));
        let files_b = snapshot(Path::new(&out_b));
        assert!(!files_a.is_empty(), "{cmd:?} wrote no files");
        assert_eq!(
            files_a.keys().collect::<Vec<_>>(),
            files_b.keys().collect::<Vec<_>>(),
            "file sets of {cmd:?} differ"
        );
        for (name, bytes) in &files_a {
            assert_eq!(
                Some(bytes),
                files_b.get(name),
                "{name} from {cmd:?} is not byte-identical"
            );
        }
    }
}

#[test]
fn seeds_steer_the_stochastic_commands() {
    let fx = Fixture::new();
    let cfg = fx.cfg();
    let out7 = fx.out("s7");
    let out8 = fx.out("s8");
    run_ok(&["oracle-validate", "--config", &cfg, "--seed", "7", "--out", &out7]);
    run_ok(&["oracle-validate", "--config", &cfg, "--seed", "8", "--out", &out8]);
    let a = std::fs::read(Path::new(&out7).join("smoke_oracle.csv")).unwrap();
    let b = std::fs::read(Path::new(&out8).join("smoke_oracle.csv")).unwrap();
    assert_ne!(a, b, "different seeds produced identical particle series");
}

#[test]
fn config_overrides_reach_the_model() {
    let fx = Fixture::new();
    let cfg = fx.cfg();
    let out = fx.out("eq");
    // The smoke config only changes structure (k = 5), so the
    // memoryless preset keeps its closed-form origin occupancies.
    run_ok(&["equilibrium", "--preset", "downward-baseline", "--config", &cfg, "--out", &out]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(Path::new(&out).join("smoke_equilibrium.json")).unwrap())
            .unwrap();
    let x_h0 = report["x_h0"].as_f64().unwrap();
    let x_a0 = report["x_a0"].as_f64().unwrap();
    assert!((x_h0 - 10.0 / 18.0).abs() < 1e-8, "x_h0 = {x_h0}");
    assert!((x_a0 - 2.0 / 18.0).abs() < 1e-8, "x_a0 = {x_a0}");
    assert_eq!(report["multistart"]["n_clusters"], 1);
    assert_eq!(report["label"], "smoke");
}
