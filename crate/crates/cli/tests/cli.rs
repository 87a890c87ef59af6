use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_viscofem"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_config(cfg: &Path, out: &Path) -> Output {
    bin().args(["run", "--config"]).arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn cert_value<'a>(cert: &'a str, key: &str) -> &'a str {
    cert.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = "))).unwrap()
}

#[test]
fn equilibrium_run_has_flat_trace() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("equilibrium.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("trace.csv")).unwrap();
    let f = column(&csv, "F");
    assert_eq!(f.len(), 11);
    for name in ["kinetic", "visc_dissipation", "stress_dissipation", "forcing_pairing", "slack"] {
        assert!(column(&csv, name).iter().all(|v| v.abs() <= 1e-12), "{name}");
    }
    assert!(f.iter().all(|v| (v - f[0]).abs() <= 1e-12));
    let cert = std::fs::read_to_string(out.path().join("certificate.txt")).unwrap();
    assert_eq!(cert_value(&cert, "verdict"), "pass");
    assert_eq!(cert_value(&cert, "scheme"), "dg0");
}

#[test]
fn unforced_cavity_energy_is_monotone() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("cavity_dg0.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("trace.csv")).unwrap();
    let f = column(&csv, "F");
    assert!(f[0] > f[f.len() - 1]);
    assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(column(&csv, "slack").iter().all(|s| *s >= -1e-9));
}

#[test]
fn bad_delta_is_rejected_with_position() {
    let o = bin().args(["run", "--config"]).arg(configs().join("bad_delta.toml")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad_delta.toml:3:9"), "{err}");
    assert!(err.contains("(0, 1/2]"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "scheme = \"fem1\"\nreynolds = 3.0\n").unwrap();
    let o = run_config(&cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("c.toml:2:1"));
}

#[test]
fn newton_failure_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "scheme = \"fem1\"\nnx = 3\nny = 3\nforcing = \"constant\"\nforcing_x = 50.0\nmax_iter = 1\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run_config(&cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("failure.txt")).unwrap();
    assert_eq!(cert_value(&report, "step"), "1");
    assert!(report.contains("residual.0 = "));
    let cert = std::fs::read_to_string(out.join("certificate.txt")).unwrap();
    assert_eq!(cert_value(&cert, "partial"), "true");
    assert_eq!(cert_value(&cert, "verdict"), "fail");
}

#[test]
fn snapshots_are_written() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--snapshots", "4", "--parallel-assembly", "--config"])
        .arg(configs().join("unreg_fem1.toml"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for n in [0, 4, 5] {
        let vtk = std::fs::read_to_string(out.path().join(format!("snapshot_{n:04}.vtk"))).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    }
    assert!(!out.path().join("snapshot_0001.vtk").exists());
}

#[test]
fn props_suite_reports() {
    let o = bin().args(["props", "--suite", "lumping"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("passed = true"));
    let o = bin().args(["props", "--suite", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mesh_audit_flags_obtuse_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.mesh");
    let mesh = viscofem::mesh::build_structured_mesh::<f64>(3, 2, viscofem::mesh::Rect::unit()).unwrap();
    std::fs::write(&good, mesh.to_text()).unwrap();
    let o = bin().args(["mesh-audit", "--mesh"]).arg(&good).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("non_obtuse = true"));

    let bad = dir.path().join("bad.mesh");
    std::fs::write(&bad, "2 4 2 1\n0 0\n2 0\n1 0.2\n1 -0.2\n0 1 2\n0 3 1\n0 1 0 1\n").unwrap();
    let o = bin().args(["mesh-audit", "--mesh"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("non_obtuse = false") && text.contains("obtuse.0 = "), "{text}");

    std::fs::write(&bad, "2 x\n").unwrap();
    let o = bin().args(["mesh-audit", "--mesh"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
