use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 0

[mesh]
coarse_sizes = [0.5]
refinement_levels = 3

[source]
kind = "constant"
value = 1.0

[spaces]
kinds = ["S", "SNAP", "H"]
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gmsfem-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, config: &str, cmd: &str) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_gmsfem"))
        .arg(cmd)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn solve_writes_a_report_with_positive_errors() {
    let dir = scratch("solve");
    let out = run(&dir, SMALL, "solve");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.join("out/report.csv")).unwrap();
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "run_id");
    assert_eq!(header.len(), 14);
    let col = header.iter().position(|h| *h == "energy_error").unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let e: f64 = r[col].parse().unwrap();
        assert!(e > 0.0 || r[1] == "SNAP", "{r:?}");
    }
    for name in ["solution_fine.csv", "solution_S.csv", "coefficients_H.csv"] {
        assert!(dir.join("out").join(name).exists(), "{name}");
    }
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn study_reports_one_row_per_size_and_kind() {
    let dir = scratch("study");
    let config = SMALL.replace("coarse_sizes = [0.5]", "coarse_sizes = [0.5, 0.25]").replace("refinement_levels = 3", "refinement_levels = 2");
    let out = run(&dir, &config, "study");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.join("out/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 3);
    let rates = fs::read_to_string(dir.join("out/rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + 3);
    let plot = fs::read_to_string(dir.join("out/plot_S.dat")).unwrap();
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 2);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn malformed_config_exits_with_input_error() {
    let dir = scratch("malformed");
    let out = run(&dir, "[mesh]\ncoarse_sizes = \"quarter\"\n", "solve");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    let out = run(&dir, &SMALL.replace("[0.5]", "[0.5, 0.5]"), "solve");
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn budget_overflow_names_the_neighborhood() {
    let dir = scratch("overflow");
    let config = format!("{SMALL}\n[budgets]\nsteklov = 1000\n");
    let out = run(&dir, &config, "solve");
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("neighborhood 0") && err.contains("1000"), "{err}");
    let _ = fs::remove_dir_all(dir);
}
