use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phi4sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phi4sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn clean_run_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bddv.csv");
    let o = phi4sim(&["--scheme", "bddv", "--amplitude", "10", "--sites", "64", "--duration", "0.5", "--out", path_arg(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["t_over_L", "E", "E_plus", "E_minus", "Q0", "Q1", "eps0_max", "eps1_max", "eps0_peak", "eps1_peak", "parity", "diverged"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bddv.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["scheme"], "bddv");
    assert_eq!(meta["outcome"]["status"], "completed");
    assert!(meta["runtime_seconds"].as_f64().unwrap() >= 0.0);
    assert!(meta["solver_stats"]["total_iterations"].is_u64());
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    fs::write(&out, "keep me").unwrap();
    let args = ["--scheme", "newton", "--sites", "32", "--duration", "0.25", "--out", path_arg(&out)];
    let o = phi4sim(&args);
    assert_eq!(code(&o), 5);
    assert_eq!(fs::read_to_string(&out).unwrap(), "keep me");
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&phi4sim(&forced)), 0);
    assert!(fs::read_to_string(&out).unwrap().starts_with("n,"));
}

#[test]
fn exit_codes() {
    // configuration errors
    assert_eq!(code(&phi4sim(&["--scheme", "euler"])), 2);
    assert_eq!(code(&phi4sim(&["--scheme", "msilcc", "--sites", "15"])), 2);
    assert_eq!(code(&phi4sim(&["--lambda", "-1"])), 2);
    assert_eq!(code(&phi4sim(&["--duration", "0"])), 2);
    assert_eq!(code(&phi4sim(&["--preset", "nope"])), 2);
    // divergence
    let o = phi4sim(&["--scheme", "newton", "--amplitude", "30", "--sites", "128", "--duration", "1", "--record-every", "1000"]);
    assert_eq!(code(&o), 3);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.lines().last().unwrap().ends_with(",1"), "last record flags divergence");
    // solver failure: one iteration cannot reach the tolerance on a nonlinear cell
    let o = phi4sim(&["--scheme", "msilcc", "--amplitude", "10", "--sites", "32", "--duration", "0.1", "--max-iter", "1", "--tol", "1e-14"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small msilcc run\nscheme = msilcc\namplitude = 1\nsites = 16\nduration = 0.25\nformat = json\n").unwrap();
    let out = dir.path().join("run.json");
    let o = phi4sim(&["--config", path_arg(&cfg), "--amplitude", "2", "--out", path_arg(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["config"]["scheme"], "msilcc");
    assert_eq!(doc["metadata"]["config"]["amplitude"], 2.0);
    assert_eq!(doc["metadata"]["config"]["n_sites"], 16);
    assert_eq!(doc["records"].as_array().unwrap().len(), 9);

    fs::write(&cfg, "scheme = msilcc\nsites = lots\n").unwrap();
    let o = phi4sim(&["--config", path_arg(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.cfg:2"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let run = |parallel: bool| {
        let mut args = vec!["--scheme", "msilcc", "--amplitude", "10", "--sites", "64", "--duration", "0.5"];
        if parallel {
            args.push("--parallel");
        }
        let o = phi4sim(&args);
        assert_eq!(code(&o), 0);
        o.stdout
    };
    let a = run(false);
    assert_eq!(a, run(false));
    assert_eq!(a, run(true));
}

#[test]
fn jacobi_preset_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("jacobi");
    let o = phi4sim(&["--preset", "jacobi-compare", "--sites", "32", "--out", path_arg(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    for scheme in ["newton", "bddv", "msilcc", "midpoint0d"] {
        assert!(out.join(format!("{scheme}.csv")).exists());
        let line = summary.lines().find(|l| l.starts_with(scheme)).unwrap();
        let err: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-2, "{scheme}: {err}");
    }
    // a second run into the same directory is refused
    let o = phi4sim(&["--preset", "jacobi-compare", "--sites", "32", "--out", path_arg(&out)]);
    assert_eq!(code(&o), 5);
}

#[test]
fn snapshot_preset_writes_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("snap");
    let o = phi4sim(&["--preset", "field-snapshots", "--sites", "16", "--out", path_arg(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fields = fs::read_to_string(out.join("msilcc_A1.000000e-1.csv.fields.csv")).unwrap();
    assert_eq!(fields.lines().next(), Some("n,t_over_L,j,x,phi"));
    assert!(fields.lines().count() > 16);
}
