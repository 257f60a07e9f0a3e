use std::fs;
use std::process::Command;

fn fshedge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fshedge"))
}

const LEVY: &str = r#"
[model]
horizon = 0.25
s0 = 100
driver = { law = "nig", alpha = 38.46, beta = -3.85, delta = 6.40, mu = 0.64 }

[payoff]
kind = "call"
strike = 99

[experiment]
rebalances = [4]
refinement = 1
paths = 400
seed = 11
strikes = [90, 99]
tail_factors = [0.2]
"#;

fn write_config(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_versioned_csv_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, LEVY);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = fshedge()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", "2"])
            .status()
            .unwrap();
        assert!(status.success());
        fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let lines: Vec<&str> = a.lines().collect();
    assert!(lines[0].starts_with("# fshedge simulate v1"));
    assert_eq!(lines[1], "strategy,N,K,C,bias,std,stderr,V0");
    assert_eq!(lines.len(), 2 + 2 * 2);
    assert!(lines[2].starts_with("VO,4,90,0.2,"));
    assert!(lines[3].starts_with("BS,4,90,0.2,"));
}

#[test]
fn seed_flag_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, LEVY);
    let run = |seed: &str| {
        let out = fshedge().args(["simulate", "--seed", seed, "--config"]).arg(&cfg).output().unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn validate_names_the_failed_assumption() {
    let dir = tempfile::tempdir().unwrap();
    // α − β < 2 puts 2 outside the strip
    let text = LEVY
        .replace("alpha = 38.46, beta = -3.85", "alpha = 1.5, beta = -0.4")
        .replace("tail_factors = [0.2]", "");
    let cfg = write_config(&dir, &text);
    let out = fshedge().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("FAIL 2 ∈ D"), "{stdout}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, &LEVY.replace("kind = \"call\"", "kind = \"digital\""));
    let out = fshedge().arg("price").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line"), "{stderr}");

    let out = fshedge().arg("price").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn error_command_reports_zero_for_poisson() {
    let dir = tempfile::tempdir().unwrap();
    let text = LEVY
        .replace(
            "driver = { law = \"nig\", alpha = 38.46, beta = -3.85, delta = 6.40, mu = 0.64 }",
            "driver = { law = \"poisson\", intensity = 2 }",
        )
        .replace("tail_factors = [0.2]", "");
    let cfg = write_config(&dir, &text);
    let out = fshedge().arg("error").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    for row in stdout.lines().skip(2) {
        let j0: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(j0.abs() < 1e-6, "{row}");
    }
}

#[test]
fn price_dumps_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, LEVY);
    let tables = dir.path().join("tables.csv");
    let out = fshedge().arg("price").arg("--config").arg(&cfg).arg("--tables").arg(&tables).output().unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(tables).unwrap();
    assert!(text.starts_with("node,re_z,im_z,t,re_gamma,im_gamma,re_eta_tail,im_eta_tail"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 4);
}
