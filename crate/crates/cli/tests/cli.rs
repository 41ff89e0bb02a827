use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;

use dislo_cli::config::{CellSection, DomainSpec, RunConfig, TensorSpec};

fn dislo(cmd: &str, config: &str, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_dislo"))
        .arg(cmd)
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap();
    (o, dir)
}

fn out_dir(d: &tempfile::TempDir) -> PathBuf {
    d.path().join("out")
}

/// Data rows of a payload as `(header, rows)`.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config sha256="));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

const TOY_CELL: &str = "schema_version = 1\n[tensor]\nmode = \"toy\"\n[cell]\nxi = [1.0, 0.0]\neps = [1e-2, 1e-3]\n";

#[test]
fn cell_toy_value() {
    let (o, d) = dislo("cell", TOY_CELL, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out_dir(&d).join("cell.csv"));
    assert_eq!(h[3], "psi_eps");
    let row = rows.iter().find(|r| num(&r[0]) == 1e-3).unwrap();
    assert!((num(&row[3]) - 1.0 / (2.0 * PI)).abs() < 0.03 / (2.0 * PI));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir(&d).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "cell");
    assert!(manifest["seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["input_blob"].as_str().unwrap().len(), 40);
}

#[test]
fn cell_empty_eps_is_a_no_op() {
    let (o, d) = dislo("cell", "schema_version = 1\n[cell]\nxi = [1.0, 0.0]\neps = []\n", &[]);
    assert!(o.status.success());
    assert!(read_csv(&out_dir(&d).join("cell.csv")).1.is_empty());
}

#[test]
fn config_errors_exit_2() {
    for bad in ["schema_version = 1\n[cell\n", "schema_version = 1\nunknown = 1\n", "schema_version = 1\n"] {
        let (o, _) = dislo("cell", bad, &[]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_dislo")).args(["cell", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_errors_exit_3() {
    let (o, _) = dislo("cell", "schema_version = 1\n[cell]\nxi = [0.0, 0.0]\neps = [1e-2, 1e-3]\n", &[]);
    assert_eq!(o.status.code(), Some(3));
}

const TOY_PHI: &str = "schema_version = 1\n[tensor]\nmode = \"toy\"\n[phi]\npolar_samples = 40\nprobes = [[1.0, 1.0]]\n";

#[test]
fn phi_toy_polar_and_burgers() {
    let (o, d) = dislo("phi", TOY_PHI, &["--check-burgers"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, polar) = read_csv(&out_dir(&d).join("phi_polar.csv"));
    assert_eq!(polar.len(), 40);
    for r in &polar {
        let th = num(&r[0]);
        let expected = (th.cos().abs() + th.sin().abs()) / (2.0 * PI);
        assert!((num(&r[1]) - expected).abs() < 1e-12);
    }
    let (_, check) = read_csv(&out_dir(&d).join("burgers_check.csv"));
    assert_eq!(check[0][0], "true");
    let (_, cert) = read_csv(&out_dir(&d).join("phi_certificates.csv"));
    assert!((num(&cert[0][2]) - 2.0 / (2.0 * PI)).abs() < 1e-12);
    // without the flag no report is written
    let (o, d) = dislo("phi", TOY_PHI, &[]);
    assert!(o.status.success());
    assert!(!out_dir(&d).join("burgers_check.csv").exists());
}

#[test]
fn phi_radius_too_small() {
    let (o, _) = dislo("phi", "schema_version = 1\n[tensor]\nmode = \"toy\"\n[phi]\nradius = 0.5\n", &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_toy_single() {
    let cfg = "schema_version = 1\n[tensor]\nmode = \"toy\"\n[simulate]\neps = 1e-3\nrho = 0.03\ndislocations = [{ position = [0.0, 0.0], burgers = [0.0, 1.0] }]\n";
    let (o, d) = dislo("simulate", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&out_dir(&d).join("simulate.csv"));
    let total = num(&rows.iter().find(|r| r[0] == "total").unwrap()[1]);
    let expected = 1000f64.ln() / (2.0 * PI);
    assert!((total - expected).abs() / expected < 0.03);
}

#[test]
fn simulate_lists_violations() {
    let cfg = "schema_version = 1\n[simulate]\neps = 1e-3\nrho = 0.1\ndislocations = [{ position = [0.0, 0.0], burgers = [1.0, 0.0] }, { position = [0.05, 0.0], burgers = [1.0, 0.0] }]\n";
    let (o, _) = dislo("simulate", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains('0') && err.contains('1'), "{err}");
}

#[test]
fn simulate_empty_is_zero() {
    let (o, d) = dislo("simulate", "schema_version = 1\n[simulate]\neps = 1e-3\nrho = 0.1\n", &[]);
    assert!(o.status.success());
    let (_, rows) = read_csv(&out_dir(&d).join("simulate.csv"));
    assert_eq!(num(&rows[0][1]), 0.0);
}

#[test]
fn sweep_single_eps_has_no_fit() {
    let cfg = "schema_version = 1\n[domain]\nshape = \"rectangle\"\nmin = [0.0, 0.0]\nmax = [1.0, 1.0]\nmesh_size = 0.0625\n[sweep]\nregime = \"dilute\"\neps = [1e-2]\nrho_power = 0.5\ntarget = [{ min = [0.0, 0.0], max = [1.0, 1.0], density = [1.0, 0.0] }]\n";
    let (o, d) = dislo("sweep", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_csv(&out_dir(&d).join("sweep.csv")).1.len(), 1);
    assert!(!out_dir(&d).join("sweep_fit.csv").exists());
    let (o, _) = dislo("sweep", &cfg.replace("dilute", "moderate"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

fn korn_constant(family: &str, seed: &str) -> f64 {
    let (o, d) = dislo("korn", &format!("schema_version = 1\n[korn]\nfamily = \"{family}\"\nsamples = 40\n"), &["--seed", seed]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    num(&read_csv(&out_dir(&d).join("korn_summary.csv")).1[0][3])
}

#[test]
fn korn_families() {
    assert_eq!(korn_constant("symmetric", "5"), 0.0);
    let g = korn_constant("gradient-polynomials", "5");
    assert!(korn_constant("mixed", "5") >= g);
    let (o, d) = dislo("korn", "schema_version = 1\n[korn]\nfamily = \"gradient-polynomials\"\nsamples = 10\n", &[]);
    assert!(o.status.success());
    let replay = std::fs::read_to_string(out_dir(&d).join("korn_worst.toml")).unwrap();
    assert!(replay.contains("family = \"gradient-polynomials\"") && replay.contains("index = "));
}

#[test]
fn seed_changes_korn_payload() {
    let run = |seed: &str| {
        let (_, d) = dislo("korn", "schema_version = 1\n[korn]\nfamily = \"gradient-polynomials\"\nsamples = 5\npower_steps = 0\n", &["--seed", seed]);
        std::fs::read(out_dir(&d).join("korn.csv")).unwrap()
    };
    assert_eq!(run("1"), run("1"));
    assert_ne!(run("1"), run("2"));
}

fn tensor_strategy() -> impl Strategy<Value = TensorSpec> {
    prop_oneof![
        (0.0..5.0f64, 0.1..5.0f64).prop_map(|(lambda, mu)| TensorSpec::Isotropic { lambda, mu }),
        Just(TensorSpec::Toy {}),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        seed in 0..=i64::MAX as u64,
        tensor in tensor_strategy(),
        radius in 0.5..3.0f64,
        h in 0.01..0.2f64,
        eps in proptest::collection::vec(1e-6..0.5f64, 0..5),
        n_theta in 8usize..256,
    ) {
        let cfg = RunConfig {
            schema_version: 1,
            seed,
            threads: None,
            tensor,
            burgers: Default::default(),
            domain: DomainSpec::Disk { center: [0.1, -0.2], radius, mesh_size: h },
            cell: Some(CellSection { xi: [1.0, 0.25], eps, n_theta, rho: None, extrapolate: true }),
            phi: None,
            simulate: None,
            sweep: None,
            korn: None,
        };
        let parsed = RunConfig::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.hash(), cfg.hash());
    }
}
