use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use quantcredit::model::GbmSpec;
use quantcredit::quantizer::QuantizationTree;

const SMALL: &str = "sizes = 8\nobs_steps = 10\nt_end = 2\npaths = 200\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantcredit"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .take_while(|l| !l.is_empty())
        .filter(|l| !l.starts_with('#') && !l.chars().next().is_some_and(char::is_alphabetic))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn quantize_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let a = run(dir.path(), &["quantize", "--config", &cfg, "--out", "a.txt"]);
    let b = run(dir.path(), &["quantize", "--config", &cfg, "--out", "b.txt", "--threads", "1"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    let (ta, tb) = (fs::read(dir.path().join("a.txt")).unwrap(), fs::read(dir.path().join("b.txt")).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("# quantcredit quantize\n# config-sha256 "));
    assert!(stdout(&a).contains("# config-sha256 "));

    let file = fs::File::open(dir.path().join("a.txt")).unwrap();
    let tree = QuantizationTree::read_from(BufReader::new(file), GbmSpec::reference().into_arc()).unwrap();
    assert_eq!(tree.steps(), 20);
    assert_eq!(tree.grid(5).len(), 8);
}

#[test]
fn default_quantize_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let o = run(dir.path(), &["quantize", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join(quantcredit::cli::DEFAULT_TREE_FILE).exists());
}

#[test]
fn hash_tracks_resolved_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let hash = |seed: &str| {
        let o = run(dir.path(), &["quantize", "--config", &cfg, "--seed", seed, "--out", "t.txt"]);
        stdout(&o).lines().nth(1).unwrap().to_owned()
    };
    assert_eq!(hash("1"), hash("1"));
    assert_ne!(hash("1"), hash("2"));
}

#[test]
fn default_prob_orders_the_filtrations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sizes = 10\nobs_steps = 10\nt_end = 3\n");
    let o = run(dir.path(), &["default-prob", "--config", &cfg, "--out", "dp.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = fs::read_to_string(dir.path().join("dp.csv")).unwrap();
    let rows = data_rows(&body);
    assert!(!rows.is_empty());
    for r in &rows {
        let (pf, py) = (r[1], r[2]);
        assert!((0.0..=1.0).contains(&pf) && (0.0..=1.0).contains(&py));
        assert!(py <= pf + 1e-12, "{r:?}");
    }
    let obs = fs::read_to_string(dir.path().join("dp.obs.csv")).unwrap();
    assert!(obs.starts_with("# quantcredit default-prob"));
}

#[test]
fn default_prob_reads_supplied_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sizes = 10\nobs_steps = 10\nt_end = 3\nseed = 9\n");
    let first = run(dir.path(), &["default-prob", "--config", &cfg, "--out", "dp.csv"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let replay = config(
        dir.path(),
        &format!("sizes = 10\nobs_steps = 10\nt_end = 3\nobs_path = {}\n", dir.path().join("dp.obs.csv").display()),
    );
    let second = run(dir.path(), &["default-prob", "--config", &replay]);
    assert!(second.status.success(), "{}", stderr(&second));
    let a = data_rows(&fs::read_to_string(dir.path().join("dp.csv")).unwrap());
    let b = data_rows(&stdout(&second));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x[1] - y[1]).abs() < 1e-12 && (x[2] - y[2]).abs() < 1e-12);
    }
}

#[test]
fn fbar_convergence_has_one_row_per_size_and_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sizes = 8, 16\nobs_steps = 10\nt_end = 2\n");
    let o = run(dir.path(), &["fbar-convergence", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.matches("# sup_abs_error").count(), 2);
    let rows = data_rows(&text);
    let per_size = rows.iter().filter(|r| r[0] == 8.0).count();
    assert!(per_size > 0);
    assert_eq!(rows.len(), 2 * per_size);
}

#[test]
fn cds_par_sweep_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "lgd_list = 0.4, 0.6\nrate_list = 0, 0.02\n");
    let o = run(dir.path(), &["cds-par", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[2] > 0.0 && r[2].is_finite()));
    let at = |lgd: f64| rows.iter().find(|r| r[0] == lgd && r[1] == 0.0).unwrap()[2];
    assert!(at(0.6) > at(0.4));
}

#[test]
fn configuration_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "mu = 0.03\n\nsigma = abc\n");
    let o = run(dir.path(), &["quantize", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = config(dir.path(), "colour = blue\n");
    let o = run(dir.path(), &["quantize", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"));

    let cfg = config(dir.path(), "barrier = 90\n");
    let o = run(dir.path(), &["quantize", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["quantize", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(4));
    let cfg = config(dir.path(), SMALL);
    let o = run(dir.path(), &["quantize", "--config", &cfg, "--out", "no/such/dir/t.txt"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn extinct_filter_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // the proxy falls far below the barrier while its noise is tiny
    let mut obs = String::from("time,value\n");
    for k in 0..=10 {
        let _ = std::fmt::Write::write_fmt(&mut obs, format_args!("{},{}\n", k as f64 / 10.0, 86.3 - 30.0 * k as f64));
    }
    let path = dir.path().join("obs.csv");
    fs::write(&path, obs).unwrap();
    let cfg = config(
        dir.path(),
        &format!("sizes = 8\nobs_steps = 10\nt_end = 2\ndelta = 0.0001\nobs_path = {}\n", path.display()),
    );
    let o = run(dir.path(), &["default-prob", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
