use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhfermion"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let j = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[j].parse().unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn model_list_names_every_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["model-list"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["hatano_nelson", "nh_ssh", "quasicrystal", "guo_chain", "guo_2d", "chern_ribbon", "eb_ssh", "measurement_heff"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn nh_ssh_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["entanglement", "--config", &config("nh_ssh_point.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("entanglement.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(
        rows[0],
        ["point", "partition", "basis", "L_A", "re_S", "im_S", "re_S_renyi2", "im_S_renyi2", "S_modified", "modified_residual", "n_midgap"]
    );
    assert_eq!(column(&rows, "n_midgap"), vec![2.0]);
    assert!(column(&rows, "im_S")[0].abs() < 1e-8);

    let reports = json(&dir.path().join("entanglement.json"));
    assert_eq!(reports.as_array().unwrap().len(), 1);
    let manifest = json(&dir.path().join("manifest.json"));
    assert!(manifest["config_digest"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(manifest["points"][0]["status"], "ok");
    // The clamped-mode warning from the entanglement Hamiltonian must surface.
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("Clamped")));
}

#[test]
fn hatano_nelson_alpha_sweep_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["entanglement", "--config", &config("hatano_nelson_alpha.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("entanglement.csv"));
    assert_eq!(column(&rows, "alpha"), vec![0.0, 0.25, 0.5, 1.0]);
    let s = column(&rows, "re_S");
    assert!(s.iter().all(|x| (x - s[0]).abs() < 1e-6), "{s:?}");
}

#[test]
fn quasicrystal_scan_has_both_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["entanglement", "--config", &config("quasicrystal_scan.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("entanglement.csv"));
    assert_eq!(rows.len(), 1 + 2 * 9);
    let bases: Vec<&str> = rows[1..].iter().map(|r| r[3].as_str()).collect();
    assert!(bases.chunks(2).all(|c| c == ["position", "momentum"]));
    // Real-space entropy collapses on the localized side.
    let s = column(&rows, "re_S");
    assert!(s[16] < 0.5 * s[0], "{s:?}");
}

#[test]
fn outputs_are_deterministic_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("hatano_nelson_alpha.toml");
    assert!(run(&["entanglement", "--config", &cfg], a.path()).status.success());
    assert!(run(&["entanglement", "--config", &cfg, "--workers", "3"], b.path()).status.success());
    for f in ["entanglement.csv", "entanglement.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_1_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("duality_nh_ssh.toml")).unwrap();
    let path = write_config(dir.path(), &format!("{text}\nfiling = \"1/2\"\n"));
    let o = run(&["entanglement", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("filing") && err.contains("line"), "{err}");

    let path = write_config(dir.path(), &text.replace("u = 0.5", "uu = 0.5"));
    let o = run(&["entanglement", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("uu"), "{}", stderr(&o));

    let o = run(&["duality", "--config", &config("duality_nh_ssh.toml"), "--tolerance", "dualty=1e-3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exact_exceptional_point_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    // Exactly on the PT boundary omega - upsilon = u the Bloch matrix at k = pi
    // is a Jordan block; rounding leaves it barely diagonalizable.
    let path = write_config(
        dir.path(),
        "[model]\nfamily = \"nh_ssh\"\nlength = 16\nbc = \"periodic\"\nparams = { omega = 1.0, upsilon = 0.5, u = 0.5 }\n",
    );
    let o = run(&["entanglement", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = json(&dir.path().join("manifest.json"));
    let kinds: Vec<&str> =
        manifest["points"][0]["warnings"].as_array().unwrap().iter().map(|w| w["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"defectiveness") && kinds.contains(&"realness"), "{kinds:?}");
}

#[test]
fn singular_potential_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // The mobility-edge denominator 1 - a exp(i theta_n) vanishes at a = 1 on site 0.
    let path = write_config(
        dir.path(),
        "[model]\nfamily = \"quasicrystal\"\nlength = 13\nbc = \"periodic\"\npotential = \"mobility_edge\"\n\
         params = { J_L = 1.0, J_R = 1.0, V = 1.0, a = 1.0 }\n",
    );
    let o = run(&["entanglement", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["points"][0]["status"], "error");
}

#[test]
fn oracle_default_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("oracle.csv"));
    assert_eq!(rows.len(), 1 + 24);
    assert!(column(&rows, "corrected_entropy_residual").iter().all(|&r| r < 1e-8));
    assert!(column(&rows, "spectrum_residual").iter().all(|&r| r < 1e-9));
    assert!(column(&rows, "idempotence_residual").iter().all(|&r| r < 1e-10));

    let o = run(&["oracle", "--tolerance", "oracle_entropy=1e-30"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_on_configured_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "[model]\nfamily = \"hatano_nelson\"\nlength = 8\nbc = \"open\"\nparams = { t = 1.0, alpha = 0.4 }\n\
         [[sweep]]\nparam = \"alpha\"\nvalues = [0.0, 0.4]\n[[partitions]]\nindices = [0, 2, 5]\n",
    );
    let o = run(&["oracle", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("oracle.csv")).len(), 3);
}

#[test]
fn duality_nh_ssh_half_cut() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["duality", "--config", &config("duality_nh_ssh.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("duality.csv"));
    assert!(column(&rows, "max_mismatch")[0] < 1e-9);
}

#[test]
fn dynamics_hermitian_limit_matches_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dynamics", "--config", &config("dynamics_reference.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("dynamics.csv"));
    assert_eq!(rows.len(), 1 + 21);
    assert!(column(&rows, "reference_deviation").iter().all(|&d| d < 1e-8));
    assert!(column(&rows, "purity_residual").iter().all(|&d| d < 1e-9));
}

#[test]
fn dynamics_monitoring_suppresses_entanglement() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dynamics", "--config", &config("dynamics_measurement.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("dynamics.csv"));
    let s = column(&rows, "re_S");
    let (free, monitored) = s.split_at(s.len() / 2);
    // Skip t = 0, where both are the product state.
    assert!(free.iter().zip(monitored).skip(1).all(|(a, b)| b < a));
}

#[test]
fn dynamics_reference_needs_hermitian_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("dynamics_reference.toml")).unwrap();
    let path = write_config(dir.path(), &text.replace("Gamma = 0.0", "Gamma = 0.5"));
    let o = run(&["dynamics", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn series_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["entanglement", "--config", &config("chain_series.toml")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let series = dir.path().join("series_0000.csv");
    let fit_dir = dir.path().join("fit");
    let o = run(&["fit", "--series", series.to_str().unwrap(), "--geometry", "chord"], &fit_dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(&fit_dir.join("fit.json"));
    let c = fit[0]["result"]["c"].as_f64().unwrap();
    assert!((c - 1.0).abs() < 0.05, "c = {c}");
    assert!(fit[0]["window_check"]["converged"].as_bool().unwrap());
    // The inline fit agrees with the one from the file.
    let inline = json(&dir.path().join("entanglement.json"));
    let c_inline = inline[0]["result"]["series"]["fit"]["c"].as_f64().unwrap();
    assert!((c - c_inline).abs() < 1e-9);

    let o = run(&["fit", "--series", series.to_str().unwrap(), "--window", "4,6"], &fit_dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[4, 6]"), "{}", stderr(&o));
}
