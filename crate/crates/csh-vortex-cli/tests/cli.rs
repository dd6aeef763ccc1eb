use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TORUS: &str = "\
[geometry]
kind = periodic
l1 = 6.283185307179586
l2 = 6.283185307179586
grid = 16x16

[params]
n = 2
kappa = 3
lambda_over_bound = 4

[vortices]
vortex1 = 1.0 2.0 1
vortex2 = 4.0 3.5 1

[sweep]
lambda_factors = 0.5 4 8
";

const PLANAR: &str = "\
[geometry]
kind = planar
half_width = 8
grid = 64x64

[params]
n = 2
kappa = 3
lambda = 2

[vortices]
vortex1 = 0.0 0.0 1
";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn csh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csh-vortex")).args(args).output().unwrap()
}

fn run_mode(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![mode, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    csh(&args)
}

fn summary_value(dir: &Path, key: &str) -> Option<String> {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
}

#[test]
fn solve_writes_dumps_that_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TORUS);
    let out = dir.path().join("out");
    let o = run_mode("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["fields.csv", "fields.bin", "summary.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(summary_value(&out, "status").as_deref(), Some("converged"));
    assert_eq!(summary_value(&out, "verify").as_deref(), Some("pass"));
    assert!(summary_value(&out, "bradlow_bound").is_some());

    let csv = fs::read_to_string(out.join("fields.csv")).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "x,y,u1,u2,v1,v2");
    assert_eq!(data.len(), 1 + 16 * 16);

    let v = csh(&["verify", "--input", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stdout));
    assert!(String::from_utf8_lossy(&v.stdout).contains("verify = pass"));
}

#[test]
fn verify_rejects_a_tampered_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TORUS);
    let out = dir.path().join("out");
    assert_eq!(run_mode("solve", &cfg, &out, &[]).status.code(), Some(0));
    let path = out.join("fields.bin");
    let mut bytes = fs::read(&path).unwrap();
    // First value of v1 sits right after the node count.
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let at = 16 + header_len + 8 + 40 * 8;
    let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) + 0.1;
    bytes[at..at + 8].copy_from_slice(&v.to_le_bytes());
    fs::write(&path, bytes).unwrap();
    let o = csh(&["verify", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verify = fail"));
}

#[test]
fn below_the_bound_exits_with_the_bound_in_the_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TORUS);
    let out = dir.path().join("out");
    let o = run_mode("solve", &cfg, &out, &["--lambda", "1.0"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Bradlow bound 1.27323954"), "{err}");
    assert_eq!(summary_value(&out, "status").as_deref(), Some("infeasible"));
}

#[test]
fn config_errors_exit_with_code_two_and_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TORUS.replace("n = 2", "n = two"));
    let o = run_mode("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config line 8"));

    let cfg = write_config(dir.path(), PLANAR);
    let o = run_mode("second", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), TORUS);
    let o = run_mode("solve", &cfg, &dir.path().join("out"), &["--grid", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TORUS);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_mode("solve", &cfg, &a, &["--seed", "11"]).status.code(), Some(0));
    assert_eq!(run_mode("solve", &cfg, &b, &["--seed", "11"]).status.code(), Some(0));
    assert_eq!(fs::read(a.join("fields.bin")).unwrap(), fs::read(b.join("fields.bin")).unwrap());
}

#[test]
fn sweep_reports_every_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TORUS);
    let out = dir.path().join("out");
    let o = run_mode("sweep", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let statuses: Vec<String> = r.records().map(|rec| rec.unwrap()[2].to_string()).collect();
    assert_eq!(statuses, ["infeasible", "converged", "converged"]);
    assert_eq!(summary_value(&out, "monotone").as_deref(), Some("true"));
}

#[test]
fn second_mode_finds_a_distinct_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TORUS);
    let out = dir.path().join("out");
    let o = run_mode("second", &cfg, &out, &["--grid", "32x32"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["first.bin", "second.bin", "first.csv", "second.csv", "path.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(summary_value(&out, "second.verify").as_deref(), Some("pass"));
    let distance: f64 = summary_value(&out, "distance").unwrap().parse().unwrap();
    assert!(distance > 1.0);
    let v = csh(&["verify", "--input", out.join("second.bin").to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn planar_solve_reports_quantized_flux() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PLANAR);
    let out = dir.path().join("out");
    let o = run_mode("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let flux: f64 = summary_value(&out, "flux_u1").unwrap().parse().unwrap();
    let expected: f64 = summary_value(&out, "expected_flux_u1").unwrap().parse().unwrap();
    assert!(((flux - expected) / expected).abs() < 1e-2);
    assert_eq!(csh(&["verify", "--input", out.to_str().unwrap()]).status.code(), Some(0));
}
