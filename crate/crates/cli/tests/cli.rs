use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn oemsim(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_oemsim"));
    cmd.args(args).env_remove("OEMSIM_OUT");
    if let Some(dir) = env_out {
        cmd.env("OEMSIM_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .display()
        .to_string()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_scenario_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "empty.toml", "");
    let o = oemsim(&["run", "--scenario", &path, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn unknown_key_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "bad.toml", "name = \"x\"\nrun_kind = \"steady\"\nbogus = 1\n");
    let o = oemsim(&["validate", "--scenario", &path], None);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
}

#[test]
fn validate_exit_codes() {
    let ok = oemsim(&["validate", "--scenario", &bundled("storage_protocol.toml")], None);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));

    let tmp = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(bundled("storage_protocol.toml")).unwrap();
    let body = body.replacen("[params]", "[params]\nmirror_mass = -1.0", 1);
    let path = write(tmp.path(), "neg.toml", &body);
    let bad = oemsim(&["validate", "--scenario", &path], None);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("mirror_mass"));
}

#[test]
fn protocol_run_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("storage");
    let o = oemsim(
        &["--quiet", "run", "--scenario", &bundled("storage_protocol.toml"), "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.len() >= 3);
    for f in files {
        let p = out.join(f["path"].as_str().unwrap());
        assert_eq!(std::fs::metadata(&p).unwrap().len(), f["bytes"].as_u64().unwrap());
    }
    assert_eq!(manifest["scenario_hash"].as_str().unwrap().len(), 64);
    for name in ["control.csv", "output.csv", "report.json", "storage_fields.bin"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn sweep_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = oemsim(
        &[
            "--quiet",
            "run",
            "--scenario",
            &bundled("sweep_depth.toml"),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            "2",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);

    let r = oemsim(&["report", "--out", out.to_str().unwrap()], None);
    assert!(r.status.success(), "{}", stderr(&r));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn environment_overrides_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir: PathBuf = tmp.path().join("from_env");
    let flag_dir = tmp.path().join("from_flag");
    let o = oemsim(
        &["--quiet", "run", "--scenario", &bundled("steady.toml"), "--out", flag_dir.to_str().unwrap()],
        Some(&env_dir),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.join("steady.csv").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn zero_workers_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = oemsim(
        &["run", "--scenario", &bundled("steady.toml"), "--out", tmp.path().to_str().unwrap(), "--workers", "0"],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
}
