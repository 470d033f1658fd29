use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hierspin"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn spectrum_small_chain() {
    let o = run(&["spectrum", "--L", "2", "--d", "1", "--K", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("k,lambda,multiplicity,weight\n"));
    let r = rows(&text);
    let expected = [(0.3125, 2), (0.0625, 1), (0.0, 1)];
    assert_eq!(r.len(), 3);
    for (row, (lam, mult)) in r.iter().zip(expected) {
        assert!((num(&row[1]) - lam).abs() < 1e-15);
        assert_eq!(row[2], mult.to_string());
    }
}

#[test]
fn spectrum_dense_check_column() {
    let o = run(&["spectrum", "--L", "3", "--d", "2", "--K", "2", "--dense-check"]);
    assert!(o.status.success());
    for row in rows(&stdout(&o)) {
        assert!(num(&row[4]) < 1e-10);
    }
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["spectrum", "--d", "1", "--K", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--L"));
    let o = run(&["spectrum", "--L", "2", "--d", "1", "--K", "2", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["rg", "--mode", "lpa", "--N", "inf", "--beta", "1", "--c1", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["rg", "--mode", "lpa", "--N", "zero", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_three() {
    let o = run(&["spectrum", "--L", "2", "--d", "3", "--K", "4", "--dense-check"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["critical-search", "--mode", "lpa", "--family", "linear", "--lo", "0.2", "--hi", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn every_subcommand_has_a_worked_example() {
    for sub in ["spectrum", "spherical", "rg", "mc", "critical-search"] {
        let o = run(&[sub, "--help"]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("Example:\n  hierspin"), "{sub}");
    }
}

#[test]
fn spherical_sweep_rows() {
    let beta_half = 4.0 * (1.0 - 2f64.ln());
    let grid = format!("{beta_half},4,5");
    let o = run(&["spherical", "--model", "continuum", "--d", "4", "--beta-grid", &grid, "--d4-closed-form"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("beta,mu,rho0,free_energy,clt_variance,status,mu_d4_diff\n"));
    let r = rows(&text);
    assert!((num(&r[0][1]) + 0.5).abs() < 1e-8);
    assert_eq!(r[0][5], "ok");
    assert!(num(&r[0][6]).abs() < 1e-10);
    assert!(num(&r[1][2]).abs() < 1e-12);
    assert_eq!(r[2][5], "condensed");
    assert!((num(&r[2][2]) - 1.0).abs() < 1e-12);
}

#[test]
fn spherical_two_dimensions_flags_divergence() {
    let o = run(&["spherical", "--model", "continuum", "--d", "2", "--beta-grid", "0.5:2:4"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|row| row[5] == "divergent_beta_c"));
}

#[test]
fn spherical_finite_and_hierarchy_models() {
    let o = run(&["spherical", "--model", "infiniteK", "--L", "2", "--d", "3", "--beta-grid", "1,6"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r[0][5], "ok");
    assert_eq!(r[1][5], "condensed");
    assert!((num(&r[1][2]) - 0.75).abs() < 1e-12);
    let o = run(&["spherical", "--model", "finite", "--L", "2", "--d", "1", "--K", "3", "--beta-grid", "1"]);
    assert!(o.status.success());
}

#[test]
fn rg_stationary_point() {
    let o = run(&["rg", "--mode", "lpa", "--N", "inf", "--d", "4", "--c1", "-1", "--M", "6", "--t-final", "5", "--steps", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("t_or_k,c1,c2,c3,c4,c5,c6\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 11);
    for row in &r {
        assert!((num(&row[1]) + 1.0).abs() < 1e-8);
        assert!(row[2..].iter().all(|c| num(c).abs() < 1e-8));
    }
}

#[test]
fn rg_logistic_and_blowup_sentinel() {
    let a0: f64 = 0.5;
    let o = run(&["rg", "--mode", "lpa", "--N", "inf", "--d", "3", "--c1", "-0.5", "--M", "1", "--t-final", "1", "--steps", "4"]);
    assert!(o.status.success());
    for row in rows(&stdout(&o)) {
        let t = num(&row[0]);
        let a = a0 / (a0 + (1.0 - a0) * (2.0 * t).exp());
        assert!((num(&row[1]) + a).abs() < 1e-6);
    }
    let o = run(&["rg", "--mode", "lpa", "--N", "inf", "--d", "3", "--c1", "-1.5", "--M", "2", "--t-final", "5", "--steps", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let last = rows(&stdout(&o)).pop().unwrap();
    assert_eq!(last[0], "blowup");
    assert!((num(&last[1]) - 0.5 * 3f64.ln()).abs() < 0.05);
    assert_eq!(last.len(), 3);
}

#[test]
fn rg_discrete_fixed_point() {
    for l in [2.0f64, 3.0] {
        let c1 = format!("{}", -(l * l - 1.0));
        let o = run(&["rg", "--mode", "discrete", "--N", "5", "--d", "3", "--L", &format!("{l}"), "--c1", &c1, "--M", "1", "--steps", "1"]);
        assert!(o.status.success());
        for row in rows(&stdout(&o)) {
            assert!((num(&row[1]) + (l * l - 1.0)).abs() < 1e-8);
        }
    }
}

#[test]
fn critical_search_linear_family() {
    let o = run(&["critical-search", "--mode", "lpa", "--family", "linear", "--d", "3", "--lo", "0.37", "--hi", "1.71", "--width", "1e-6"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert!((num(&r[0][0]) - 1.0).abs() < 1e-6);
}

#[test]
fn mc_exact_check_and_determinism() {
    let out_a = scratch("mc_a.csv");
    let out_b = scratch("mc_b.csv");
    let args = |out: &Path| {
        vec![
            "mc".to_string(), "--L".into(), "2".into(), "--d".into(), "1".into(), "--K".into(), "2".into(),
            "--N".into(), "1".into(), "--beta".into(), "0.7".into(), "--z-grid".into(), "0,0.5,1".into(),
            "--moves".into(), "100000".into(), "--seed".into(), "4".into(), "--exact-check".into(),
            "--output".into(), out.display().to_string(),
        ]
    };
    assert!(bin().args(args(&out_a)).status().unwrap().success());
    assert!(bin().args(args(&out_b)).status().unwrap().success());
    let a = std::fs::read(&out_a).unwrap();
    assert_eq!(a, std::fs::read(&out_b).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("z,theta_hat,std_error,tau_int,status,exact,deviation_in_se\n"));
    let r = rows(&text);
    assert_eq!(num(&r[0][1]), 1.0);
    assert_eq!(num(&r[0][2]), 0.0);
    for row in &r {
        assert!(num(&row[6]).abs() < 3.0, "{row:?}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scratch("mc_a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "mc");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["params"]["N"], 1);
}

#[test]
fn manifest_round_trips_as_config() {
    let out = scratch("spherical.csv");
    let manifest = scratch("spherical.json");
    let o = run(&[
        "spherical", "--model", "infiniteK", "--L", "2", "--d", "3", "--beta-grid", "0.5:5:5",
        "--float-format", "shortest", "--output", out.to_str().unwrap(), "--manifest", manifest.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let first = std::fs::read(&out).unwrap();
    let out2 = scratch("spherical2.csv");
    let o = run(&["spherical", "--config", manifest.to_str().unwrap(), "--output", out2.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first, std::fs::read(&out2).unwrap());
    assert_eq!(
        std::fs::read_to_string(&manifest).unwrap(),
        std::fs::read_to_string(scratch("spherical2.csv.manifest.json")).unwrap()
    );

    // Flags override the config file.
    let o = run(&["spherical", "--config", manifest.to_str().unwrap(), "--beta-grid", "1"]);
    assert!(o.status.success());
    assert_eq!(rows(&stdout(&o)).len(), 1);

    // A config for another command is a usage error.
    let o = run(&["rg", "--config", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_manifest_round_trip_reproduces_estimates() {
    let out = scratch("mc_cfg.csv");
    let o = run(&[
        "mc", "--L", "2", "--d", "1", "--K", "2", "--N", "3", "--beta", "0.5", "--moves", "20000",
        "--chains", "2", "--seed", "9", "--threads", "2", "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let manifest = scratch("mc_cfg.csv.manifest.json");
    let out2 = scratch("mc_cfg2.csv");
    let o = run(&["mc", "--config", manifest.to_str().unwrap(), "--output", out2.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn mc_histogram_file() {
    let hist = scratch("hist.csv");
    let o = run(&[
        "mc", "--L", "2", "--d", "1", "--K", "2", "--N", "2", "--beta", "0.5", "--moves", "5000",
        "--histogram", hist.to_str().unwrap(), "--bins", "11",
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(hist).unwrap();
    assert!(text.starts_with("bin_center,count\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 11);
    let total: u64 = r.iter().map(|row| row[1].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 5000 * 2);
}
