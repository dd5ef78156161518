use std::process::Command;

fn landau() -> Command {
    Command::new(env!("CARGO_BIN_EXE_landau"))
}

#[test]
fn symbol_table_writes_manifest_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = landau()
        .args(["symbol-table", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("[pass]"));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "symbol-table");
    assert_eq!(manifest["passed"], true);
    for artifact in manifest["artifacts"].as_array().unwrap() {
        assert!(dir.path().join(artifact.as_str().unwrap()).exists());
    }
}

#[test]
fn torus_with_zero_flux_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = landau()
        .args(["torus-verify", "--set", "flux=0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = landau()
        .args(["dos-scan", "--set", "no_such_key=1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
