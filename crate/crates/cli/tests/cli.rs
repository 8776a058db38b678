use drcurve::dgp::Dgp;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_drcurve"));
    c.env_remove("DRCURVE_SEED");
    c
}

fn data(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let sample = Dgp::default().draw_sample(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let path = dir.join(format!("data_{n}_{seed}.csv"));
    sample.to_csv(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv_text: &str) -> Vec<Vec<String>> {
    csv_text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(csv_text: &str, j: usize) -> Vec<f64> {
    rows(csv_text).iter().map(|r| r[j].parse().unwrap()).collect()
}

#[test]
fn hoif_order_one_equals_empty_basis() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 240, 1);
    let input = input.to_str().unwrap();
    let base = ["estimate", "--input", input, "--method", "hoif", "--h", "0.4"];
    let m1 = stdout(&run(&[&base[..], &["--order", "1"]].concat()));
    let m2 = stdout(&run(&[&base[..], &["--order", "2", "--basis-k", "0"]].concat()));
    assert_eq!(m1, m2);
    assert!(m1.starts_with("t,method,estimate\n"));
    assert_eq!(rows(&m1).len(), 5);
}

#[test]
fn gamma_one_collapses_bounds() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 300, 2);
    let out = stdout(&run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "dr",
        "--gamma",
        "1",
        "--eval",
        "-0.3,0,0.3",
    ]));
    assert!(out.starts_with("t,method,estimate,lower,upper\n"));
    for r in rows(&out) {
        assert_eq!(r[2], r[3]);
        assert_eq!(r[3], r[4]);
    }
}

#[test]
fn bounds_widen_with_gamma() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 300, 3);
    let out = stdout(&run(&["estimate", "--input", input.to_str().unwrap(), "--method", "dr", "--gamma", "2"]));
    for r in rows(&out) {
        let v: Vec<f64> = r[2..].iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[1] <= v[2], "{r:?}");
    }
}

#[test]
fn output_file_round_trips() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 240, 4);
    let out_path = dir.path().join("est.csv");
    let args = ["estimate", "--input", input.to_str().unwrap(), "--method", "erm", "--k", "4"];
    let printed = stdout(&run(&args));
    stdout(&run(&[&args[..], &["--out", out_path.to_str().unwrap()]].concat()));
    let written = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(printed, written);
    let mut rdr = csv::Reader::from_path(&out_path).unwrap();
    let back: Vec<f64> = rdr.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(back, column(&printed, 2));
}

#[test]
fn seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 240, 5);
    let args = ["estimate", "--input", input.to_str().unwrap(), "--method", "dr"];
    let flag = stdout(&run(&[&args[..], &["--seed", "17"]].concat()));
    let env = stdout(&bin().args(args).env("DRCURVE_SEED", "17").output().unwrap());
    let other = stdout(&run(&[&args[..], &["--seed", "18"]].concat()));
    assert_eq!(flag, env);
    assert_ne!(flag, other);
}

#[test]
fn malformed_input_exits_2_with_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "y,a,x1\n1,0.1,0.2\n2,oops,0.3\n").unwrap();
    let o = run(&["estimate", "--input", path.to_str().unwrap(), "--method", "dr"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    std::fs::write(&path, "Y,a,x1\n1,0.1,0.2\n").unwrap();
    let o = run(&["estimate", "--input", path.to_str().unwrap(), "--method", "dr"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inconsistent_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 60, 6);
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--method", "dr", "--order", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--method", "hoif", "--gamma", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let input = data(dir.path(), 9, 7);
    // six estimation rows cannot support an eight-function Gram matrix
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--method", "hoif", "--basis-k", "8"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn rates_table() {
    let out = stdout(&run(&["rates", "--alpha", "2", "--dim", "20", "--s-grid", "0.5:40:0.5"]));
    assert!(out.starts_with("s,oracle,plugin,dr,hoif2,ate_minimax\n"));
    assert_eq!(out.lines().count(), 81);
    let last: Vec<f64> = out.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 40.0);
    assert!((last[3] - 0.8).abs() < 1e-12);
    let single = stdout(&run(&["rates", "--alpha", "2", "--dim", "20", "--s-grid", "1:2:5"]));
    assert_eq!(single.lines().count(), 2);
    assert_eq!(run(&["rates", "--alpha", "-2", "--dim", "20"]).status.code(), Some(2));
    assert_eq!(run(&["rates", "--alpha", "2", "--dim", "20", "--s-grid", "1:2"]).status.code(), Some(2));
}

const SMALL: &str = "n = 60\nalphas = 4\neval_points = -0.25, 0.25\nbandwidths = 0.3, 0.5\nerm_k = 2, 3\nhoif_k = 4\nseed = 3\n";

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("study.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--reps", "1", "--out", out.to_str().unwrap()]);
        stdout(&o);
    }
    for f in ["mse.csv", "weighted_mse.csv", "failures.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let cells = std::fs::read_to_string(a.join("mse.csv")).unwrap();
    assert!(cells.starts_with("method,alpha,tuning,t,mse,mc_se,weight\n"));
    // erm 2 + dr 2 + hoif 2x2 + oracle 2 + plugin 1 columns at 2 points, one replication
    assert_eq!(cells.lines().count(), 1 + 22);
    let agg = std::fs::read_to_string(a.join("weighted_mse.csv")).unwrap();
    assert!(agg.starts_with("method,alpha,weighted_mse\n"));
}

#[test]
fn simulate_threads_do_not_change_results() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("study.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let args = ["--threads", threads, "simulate", "--config", cfg.to_str().unwrap(), "--reps", "3"];
        stdout(&run(&[&args[..], &["--out", out.to_str().unwrap()]].concat()));
    }
    assert_eq!(std::fs::read(a.join("mse.csv")).unwrap(), std::fs::read(b.join("mse.csv")).unwrap());
}

#[test]
fn simulate_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "n = 60\nflavour = mint\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flavour"));
}
