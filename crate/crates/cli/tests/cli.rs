use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ipower"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const FIGURE_ONE: &str = "mode = curve\np = 9\ncovariates = bernoulli\nq = 0.5\nbeta0 = 0\nbeta = 0.5\nsigma2 = 1\ntruth = dim\nfit = both\n";

#[test]
fn figure_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), FIGURE_ONE, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(table[0], ["delta", "power_dim_fit", "power_pim_fit"]);
    assert_eq!(table.len(), 62);
    for row in &table[1..] {
        for v in &row[1..] {
            let v: f64 = v.parse().unwrap();
            assert!((0.05 - 1e-9..=1.0).contains(&v));
        }
    }
}

#[test]
fn output_file_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = "mode = mc\np = 3\ntruth = pim\nf1 = 1\nf2 = 1\nf3 = 1\ndelta = 0, 2\nn = 300\nreps = 100\nseed = 5\n";
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(dir.path(), config, &["--out", a.to_str().unwrap(), "--threads", "1"]).status.success());
    assert!(run(dir.path(), config, &["--out", b.to_str().unwrap(), "--threads", "4"]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn grid_mode_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let script = dir.path().join("plot.py");
    let config = format!(
        "mode = grid\np = 9\ntruth = pim\ndelta_min = -2\ndelta_max = 2\ndelta_steps = 5\nout = {}\n",
        csv.display()
    );
    let out = run(dir.path(), &config, &["--plot-script", script.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&fs::read_to_string(&csv).unwrap());
    assert_eq!(table[0], ["f1", "f2", "f3", "delta", "fit", "power"]);
    assert_eq!(table.len() - 1, 27 * 5 * 2);
    let mut keys: Vec<_> = table[1..].iter().map(|r| r[..5].join(",")).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 27 * 5 * 2);
    assert!(fs::read_to_string(&script).unwrap().contains("grid.csv"));
}

#[test]
fn mc_size_check_at_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let config = "mode = mc\np = 3\ntruth = dim\nfit = pim\ndelta = 0\nn = 500\nreps = 400\n";
    let out = run(dir.path(), config, &["--seed", "11"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(table[0], ["delta", "fit", "n", "reps", "rate", "se", "nonconverged"]);
    let rate: f64 = table[1][4].parse().unwrap();
    let se: f64 = table[1][5].parse().unwrap();
    assert!((rate - 0.05).abs() <= 3.0 * se, "rate {rate} se {se}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &FIGURE_ONE.replace("sigma2 = 1", "sigma2 = -1"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigma2") && err.contains("line 7"), "{err}");
    let out = run(dir.path(), &format!("{FIGURE_ONE}beta = 1\n"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 10"));
}

#[test]
fn singular_information_exits_with_two() {
    // with every main effect zero the DIM power parameter is not identified
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "mode = curve\np = 3\nbeta = 0\n", &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stderr.is_empty());
}
