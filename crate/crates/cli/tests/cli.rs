use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringvqe"))
}

#[test]
fn ed_locates_the_four_site_crossing() {
    let out = bin()
        .args(["ed", "--tprime", "0.3", "--u", "0.5", "--levels", "1", "--bracket", "0.4,0.6"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# ground sector A2/B1"), "{text}");
    let line = text.lines().find(|l| l.contains("crossing")).unwrap();
    let x: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(x > 0.48 && x < 0.52, "{x}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema_version = 1\n[model]\nu = 0.5\n[vqe]\nshots = 0\n").unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vqe.shots"));

    let out = bin().args(["sweep", "--sites", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    // No crossing inside the bracket.
    let out = bin()
        .args(["ed", "--tprime", "0.3", "--u", "0.5", "--bracket", "0.1,0.2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_plotdata_and_replay_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let status = bin()
        .env("RINGVQE_OUTPUT_DIR", root.path())
        .args(["sweep", "--tprime", "0.3", "--sector", "B1", "--n-c", "2", "--n-init", "2"])
        .args(["--iters", "10", "--repeats", "2", "--name", "cli", "-q"])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(String::from_utf8_lossy(&status.stdout).starts_with("t_over,"));
    let dir = root.path().join("cli");
    assert!(dir.join("records.jsonl").is_file());

    let out = bin().arg("plotdata").arg(&dir).output().unwrap();
    assert!(out.status.success());
    assert!(dir.join("plotdata/fig4.csv").is_file());

    let out = bin()
        .env("RINGVQE_OUTPUT_DIR", root.path())
        .args(["replay", "cli_t0.3000_B1_c1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("record identical"));

    let out = bin()
        .args(["replay", "cli_t0.3000_B1_c7", "--dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
