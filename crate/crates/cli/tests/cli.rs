use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn oqss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oqss"))
        .current_dir(dir)
        .env_remove("OQSS_OUTPUT_DIR")
        .env_remove("OQSS_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map(|it| it.map(|e| e.unwrap().path()).collect())
        .unwrap_or_default();
    dirs.sort();
    dirs
}

fn printed_value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap_or_else(|| panic!("no {key:?} in {out}"))
        .parse()
        .unwrap()
}

#[test]
fn gkp_target_writes_codeword_and_truncation_fidelity() {
    let tmp = TempDir::new().unwrap();
    let o = oqss(tmp.path(), &["gkp-target", "--db", "10", "--nmax", "32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = printed_value(&stdout(&o), "truncation fidelity ");
    assert!((f - 0.999).abs() < 5e-4, "fidelity {f}");

    let text = fs::read_to_string(tmp.path().join("gkp_10db_n32.txt")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 33);
    let norm: f64 = rows.iter().map(|r| r[1] * r[1] + r[2] * r[2]).sum();
    assert!((norm - 1.0).abs() < 1e-12);
    assert!(rows.iter().filter(|r| r[0] as usize % 2 == 1).all(|r| r[1] == 0.0 && r[2] == 0.0));
}

#[test]
fn gkp_target_at_zero_db_is_close_to_vacuum() {
    let tmp = TempDir::new().unwrap();
    let o = oqss(tmp.path(), &["gkp-target", "--db", "0", "--nmax", "4", "--out", "g.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("g.txt")).unwrap();
    let c0: f64 = text.lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(c0 * c0 > 0.5, "vacuum weight {}", c0 * c0);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(oqss(tmp.path(), &["gkp-target", "--nmax", "4"]).status.code(), Some(2));
    fs::write(tmp.path().join("vac.txt"), "0 1 0\n").unwrap();
    let o = oqss(
        tmp.path(),
        &["wigner", "--fock", "vac.txt", "--q", "-1,1", "--p", "-1,1", "--nq", "0", "--np", "3"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wigner_of_vacuum_peaks_at_one_over_pi() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("vac.txt"), "0 1 0\n").unwrap();
    let o = oqss(
        tmp.path(),
        &["wigner", "--fock", "vac.txt", "--q", "-2,2", "--p", "-2,2", "--nq", "5", "--np", "5"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("# -2 2 -2 2 5 5"));
    let grid: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(grid.len(), 5);
    assert!((grid[2][2] - std::f64::consts::FRAC_1_PI).abs() < 1e-12);
    let max = grid.iter().flatten().cloned().fold(f64::MIN, f64::max);
    assert_eq!(max, grid[2][2]);
}

#[test]
fn wigner_of_malformed_file_is_parse_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.txt"), "0 one 0\n").unwrap();
    let o = oqss(
        tmp.path(),
        &["wigner", "--fock", "bad.txt", "--q", "-1,1", "--p", "-1,1", "--nq", "2", "--np", "2"],
    );
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn hafnian_bench_single_size_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let o = oqss(tmp.path(), &["hafnian-bench", "--min", "8", "--max", "8", "--repeats", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "D,l,pattern,predicted_steps,wall_time_ns");
    assert!(lines[1].starts_with("8,4,2 2 2 2,"));
}

#[test]
fn hafnian_bench_sweep_reports_slope() {
    let tmp = TempDir::new().unwrap();
    let o = oqss(
        tmp.path(),
        &["hafnian-bench", "--min", "8", "--max", "12", "--out", "bench.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(stderr(&o).contains("slope"));
}

#[test]
fn infeasible_plan_is_a_planning_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "[target.gkp]\ndb = 10.0\nn_max = 4\n[plan]\nn_max = 40\nn_layers = 1\n",
    )
    .unwrap();
    let o = oqss(tmp.path(), &["synthesize", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(run_dirs(&tmp.path().join("runs")).is_empty());
}

#[test]
fn malformed_or_missing_config() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.toml"), "seed = 1\n").unwrap();
    assert_eq!(oqss(tmp.path(), &["synthesize", "--config", "run.toml"]).status.code(), Some(6));
    assert_eq!(oqss(tmp.path(), &["synthesize", "--config", "none.toml"]).status.code(), Some(5));
}

#[test]
fn verify_missing_or_malformed_result() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("vac.txt"), "0 1 0\n").unwrap();
    let o = oqss(tmp.path(), &["verify", "--result", "none.json", "--target", "vac.txt"]);
    assert_eq!(o.status.code(), Some(5));
    fs::write(tmp.path().join("bad.json"), "{").unwrap();
    let o = oqss(tmp.path(), &["verify", "--result", "bad.json", "--target", "vac.txt"]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn fock_target_run_honours_output_dir_override() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("one.txt"), "1 1 0\n").unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "seed = 2\nfidelity_floor = 0.99\n[target]\nfock = \"one.txt\"\n",
    )
    .unwrap();
    let out = tmp.path().join("elsewhere");
    let o = Command::new(env!("CARGO_BIN_EXE_oqss"))
        .current_dir(tmp.path())
        .env("OQSS_OUTPUT_DIR", &out)
        .env("OQSS_THREADS", "2")
        .args(["synthesize", "--config", "run.toml"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(run_dirs(&out).len(), 1);
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn toy_synthesis_is_reproducible_and_verifiable() {
    let tmp = TempDir::new().unwrap();
    let config = "seed = 7\nfidelity_floor = 0.99\n[target.gkp]\ndb = 10.0\nn_max = 4\n";
    fs::write(tmp.path().join("run.toml"), config).unwrap();

    let first = oqss(tmp.path(), &["synthesize", "--config", "run.toml"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = oqss(tmp.path(), &["synthesize", "--config", "run.toml"]);
    assert!(second.status.success(), "{}", stderr(&second));
    let dirs = run_dirs(&tmp.path().join("runs"));
    assert_eq!(dirs.len(), 2, "reruns must not overwrite");

    for d in &dirs {
        for f in ["result.json", "report.txt", "config.toml", "target.txt", "circuits.json"] {
            assert!(d.join(f).is_file(), "{} missing in {}", f, d.display());
        }
        let report = fs::read_to_string(d.join("report.txt")).unwrap();
        assert!(report.contains("end-to-end fidelity"));
        assert!(report.contains("[target.gkp]"));
        assert!(report.contains("[synthesis.leaf]"));
    }

    let load = |d: &Path| -> Value { serde_json::from_str(&fs::read_to_string(d.join("result.json")).unwrap()).unwrap() };
    let (a, b) = (load(&dirs[0]), load(&dirs[1]));
    for key in [
        "end_to_end_fidelity",
        "cumulative_success_probability",
        "first_layer_probability",
        "log_success_probability",
    ] {
        assert_eq!(a[key].to_string(), b[key].to_string(), "{key}");
    }
    assert_eq!(a["nodes"][0]["params"], b["nodes"][0]["params"]);
    let fidelity = a["end_to_end_fidelity"].as_f64().unwrap();
    assert!(fidelity >= 0.99);

    let result = dirs[0].join("result.json");
    let target = dirs[0].join("target.txt");
    let v = oqss(
        tmp.path(),
        &["verify", "--result", result.to_str().unwrap(), "--target", target.to_str().unwrap()],
    );
    assert!(v.status.success(), "{}", stderr(&v));
    let verified = printed_value(&stdout(&v), "fidelity ");
    assert!((verified - fidelity).abs() < 1e-9);

    let mut tampered = a.clone();
    let r = &mut tampered["nodes"][0]["params"]["circuit"]["squeeze"][0][0];
    *r = Value::from(r.as_f64().unwrap() + 0.05);
    fs::write(tmp.path().join("tampered.json"), tampered.to_string()).unwrap();
    let t = oqss(
        tmp.path(),
        &["verify", "--result", "tampered.json", "--target", target.to_str().unwrap()],
    );
    assert_eq!(t.status.code(), Some(7), "{}", stdout(&t));
    assert!(stderr(&t).contains("node (1,0)"));
}
