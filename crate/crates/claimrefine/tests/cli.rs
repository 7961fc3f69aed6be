use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_claimrefine"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn loop_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "iterations = 5\nmaster_seed = 3\n[desk]\nclaims = 10\n").unwrap();

    let out = bin()
        .args(["loop", "--config"])
        .arg(&cfg)
        .args(["--iterations", "1", "--run-dir"])
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("iteration")).count(), 1);
    let snapshot = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("iterations = 1"));
    assert!(snapshot.contains("master_seed = 3"));

    let again = bin().args(["loop", "--config"]).arg(&cfg).args(["--iterations", "1", "--run-dir"]).arg(&run).output().unwrap();
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("--resume"));

    let out = bin().args(["baseline", "--variant", "seed", "--config"]).arg(&cfg).arg("--run-dir").arg(&run).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().arg("report").arg("--run-dir").arg(&run).output().unwrap();
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert!(rows[0].starts_with("variant"));
    assert!(rows[1].starts_with("seed"));
    assert!(rows[2].starts_with("dpo_iteration(0)"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["report", "--run-dir"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no baselines or iterations"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "iterationz = 2\n").unwrap();
    let out = bin().args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());

    let out = bin().args(["baseline", "--variant", "dpo"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn check_backends_without_remote() {
    let out = bin().arg("check-backends").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("no remote backends"));
}

#[test]
fn remote_without_url_is_reported() {
    let out = bin()
        .args(["check-backends", "--fact-checker", "remote"])
        .env_remove("CLAIMREFINE_NLI_URL")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("CLAIMREFINE_NLI_URL"));
}
