use std::path::Path;
use std::process::{Command, Output};

fn gencomm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gencomm"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn verify_reports_pass_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = gencomm(&["verify", "--seed", "7", "--out", "checks.json", "--format", "json"], dir.path());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(code(&o), 0, "{err}");
    assert!(err.contains("checks passed (seed 7)"), "{err}");
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("checks.json")).unwrap()).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gencomm(&["simulate", "--no-such-flag"], dir.path())), 1);
    assert_eq!(code(&gencomm(&[], dir.path())), 1);

    std::fs::write(dir.path().join("bad.toml"), "spec_version = 1\n[sampler]\nsteps = 10\nwarm_start = 5\n").unwrap();
    let o = gencomm(&["simulate", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("N_s"));

    std::fs::write(dir.path().join("nover.toml"), "seed = 3\n").unwrap();
    let o = gencomm(&["simulate", "--config", "nover.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("spec_version"));

    assert_eq!(code(&gencomm(&["simulate", "--config", "missing.toml"], dir.path())), 1);
    assert_eq!(code(&gencomm(&["simulate", "--threads", "0"], dir.path())), 1);
    assert_eq!(code(&gencomm(&["train-denoiser"], dir.path())), 1);
}

#[test]
fn quiet_changes_only_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let loud = gencomm(&["simulate", "--trials", "3"], dir.path());
    let quiet = gencomm(&["simulate", "--trials", "3", "--quiet"], dir.path());
    assert_eq!(code(&loud), 0);
    assert_eq!(code(&quiet), 0);
    assert_eq!(loud.stdout, quiet.stdout);
    assert!(!loud.stderr.is_empty());
    assert!(quiet.stderr.is_empty());
}

#[test]
fn sweep_writes_rows_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let o = gencomm(&["sweep-cbr", "--trials", "3", "--seed", "5", "--out", "r.csv", "--quiet"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(rows.contains("# seed: 5"));
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4 * 3);
    let agg = std::fs::read_to_string(dir.path().join("r.agg.csv")).unwrap();
    assert_eq!(agg.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);

    let o = gencomm(&["sweep-snr", "--trials", "2", "--out", "r.json", "--format", "json", "--quiet"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 10);
    assert_eq!(v["aggregates"].as_array().unwrap().len(), 5);
}

#[test]
fn sidechannel_table_and_alist() {
    let dir = tempfile::tempdir().unwrap();
    let o = gencomm(
        &["sidechannel-test", "--ebn0", "1,5", "--code-length", "96", "--bits", "960", "--alist-out", "h.alist", "--quiet"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("ebn0_db,snr_db,n,k,iters,frames"));
    assert_eq!(lines.len(), 3);

    let again = gencomm(
        &["sidechannel-test", "--ebn0", "1,5", "--bits", "960", "--alist-in", "h.alist", "--quiet"],
        dir.path(),
    );
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), table);
}

#[test]
fn train_then_sample_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = gencomm(&["train-denoiser", "--steps", "20", "--out", "m.json", "--quiet"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let loss = std::fs::read_to_string(dir.path().join("m.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 21);

    std::fs::write(
        dir.path().join("mlp.toml"),
        "spec_version = 1\npredictor = \"mlp\"\nmlp_checkpoint = \"m.json\"\n",
    )
    .unwrap();
    let o = gencomm(&["sample", "--config", "mlp.toml", "--format", "json", "--trial", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["z_hat"].as_array().unwrap().len(), 16);
    assert_eq!(v["trace"]["steps"].as_array().unwrap().len(), 5);
}
