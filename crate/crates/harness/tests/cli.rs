use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn matchsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matchsim")).args(args).current_dir(dir).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn figures_without_run_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = matchsim(&["figures", ".", "--which", "fig1"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no completed run"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "p = 2\nn = 100\nseed = 1\nbogus = 3\n").unwrap();
    let out = matchsim(&["simulate", "bad.toml", "--workers", "1"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "y,treat,x1\n1,0,0.5\n2,1,0.1\n").unwrap();
    let out = matchsim(&["match", "d.csv", "--psm"], dir.path());
    assert_eq!(code(&out), 3);
    fs::write(dir.path().join("d.csv"), "y,w,x1\n1,2,0.5\n2,1,0.1\n").unwrap();
    let out = matchsim(&["match", "d.csv", "--psm"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn empty_cem_match_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,w,x1\n");
    for i in 0..10 {
        csv.push_str(&format!("{i},1,{}\n", 10.0 + i as f64));
        csv.push_str(&format!("{i},0,{}\n", -10.0 - i as f64));
    }
    fs::write(dir.path().join("d.csv"), csv).unwrap();
    let out = matchsim(&["match", "d.csv", "--cem", "g3"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("match_cem.csv").exists());
}

#[test]
fn simulate_match_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.toml"),
        "p = 2\nn = 300\ncoefficient_pairs = 2\nreplications = 4\ncovariate_scale = 0.5\nseed = 9\n",
    )
    .unwrap();
    let out = matchsim(&["simulate", "s.toml", "--workers", "2", "--out", "run"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["replications.csv", "aggregate.csv", "imbalance.csv", "imbalance_summary.csv", "manifest.toml"] {
        assert!(dir.path().join("run").join(f).is_file(), "{f}");
    }
    let out = matchsim(&["figures", "run", "--which", "fig1"], dir.path());
    assert_eq!(code(&out), 0);

    let mut csv = String::from("y,w,x1,x2\n");
    for i in 0..200 {
        let x1 = ((i * 37) % 101) as f64 / 50.0 - 1.0;
        let x2 = ((i * 53) % 97) as f64 / 48.0 - 1.0;
        let w = (i * 7919) % 3 == 0 || x1 > 0.6;
        csv.push_str(&format!("{},{},{x1},{x2}\n", x1 + x2 + if w { 2.0 } else { 0.0 }, u8::from(w)));
    }
    fs::write(dir.path().join("d.csv"), csv).unwrap();
    let out = matchsim(&["match", "d.csv", "--psm", "--cem", "auto", "--out", "m"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = matchsim(&["balance", "d.csv", "m/match_cem.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("stage,metric,covariate,value,replication"));
    assert!(stdout.lines().any(|l| l.starts_with("post,I2,")));
}
