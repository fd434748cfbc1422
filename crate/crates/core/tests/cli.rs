//! The command-line tool end to end: exit codes, output files and
//! reproducibility across invocations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spde-picard");

const SMALL: &str = r#"
dim = 2
dt = 0.01
paths = 12

[picard]
uniqueness_paths = 2
rescale_paths = 2

[hypothesis]
samples = 300
noise_paths = 200

[benchmark]
coarsest_level = 3
finest_level = 6
reference_level = 6
min_order = 0.0
max_reference_rms = 1.0
"#;

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{SMALL}\n{extra}")).unwrap();
    path
}

fn invoke(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

#[test]
fn every_subcommand_passes_on_a_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    for sub in ["picard", "ito-check", "benchmark", "hypothesis-check", "simulate"] {
        let out = dir.path().join(sub);
        let o = invoke(sub, &cfg, &out, &["--seed", "3"]);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(o.status.code(), Some(0), "{sub}: {stdout}{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout.contains("[PASS]"), "{sub}");
        let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(summary.contains("pass = true"), "{sub}: {summary}");
        assert!(summary.contains("seed = 3"), "{sub}");
    }
}

#[test]
fn failing_diagnostic_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace("min_order = 0.0", "min_order = 5.0")).unwrap();
    let o = invoke("benchmark", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL] strong_order"));
}

#[test]
fn bad_configuration_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "no_such_field = 1\n");
    let o = invoke("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_field"));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "paths = 2\n[picard]\nratio_safty = 3.0\n").unwrap();
    let o = invoke("picard", &typo, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ratio_safty"));

    let cfg = write_config(dir.path(), "");
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace("dt = 0.01", "dt = -1.0")).unwrap();
    let o = invoke("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));

    let o = invoke("simulate", &dir.path().join("missing.toml"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn inner_solver_failure_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[picard.inner]\nmethod = \"fixed-point\"\nmax_iterations = 1\n",
    );
    let o = invoke("picard", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wave.toml");
    fs::write(&cfg, format!("example = \"hyperbolic-wave\"\n{SMALL}")).unwrap();
    for sub in ["picard", "ito-check", "simulate"] {
        let a = dir.path().join(format!("{sub}-a"));
        let b = dir.path().join(format!("{sub}-b"));
        assert_eq!(invoke(sub, &cfg, &a, &["--threads", "2"]).status.code(), Some(0));
        assert_eq!(invoke(sub, &cfg, &b, &["--threads", "2"]).status.code(), Some(0));
        let mut names: Vec<_> = fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{sub}/{n}");
        }
    }
}

#[test]
fn csv_files_carry_a_schema_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    assert_eq!(invoke("picard", &cfg, &out, &[]).status.code(), Some(0));
    let text = fs::read_to_string(out.join("picard_iterations.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: spde-picard/picard_iterations v1"));
    assert!(lines.next().unwrap().starts_with("n,e_n,std_error,predicted,ratio"));
}
