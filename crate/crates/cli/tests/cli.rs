use std::path::{Path, PathBuf};
use std::process::Command;

fn pfotoc(dir: &Path, args: &[&str], config: &str) -> (i32, PathBuf) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_pfotoc"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (status.status.code().unwrap_or(-1), out)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn metadata(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap()
}

#[test]
fn zero_final_time_gives_single_unit_row() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = pfotoc(dir.path(), &["otoc"], "[otoc]\nlength = 6\nj = 2\nk = 5\nt_max = 0.0\nchi = 8\n");
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out.join("otoc.csv"));
    assert_eq!(header, ["t", "re_f", "im_f", "c", "trunc_weight"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[0][1] - 1.0).abs() < 1e-12);
    assert!(rows[0][3].abs() < 1e-12);
    assert_eq!(metadata(&out)["status"], "ok");
}

#[test]
fn csv_has_twelve_digits_and_lf_endings() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) =
        pfotoc(dir.path(), &["otoc"], "[otoc]\nlength = 6\nj = 4\nk = 1\nt_max = 0.4\ndt = 0.01\nmethod = \"direct\"\n");
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(out.join("otoc.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let field = text.lines().nth(3).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 12, "{field}");
}

#[test]
fn mpo_column_matches_exact_dynamics() {
    let dir = tempfile::tempdir().unwrap();
    let base = "length = 8\nt2 = 0.5\nj = 6\nk = 2\nt_max = 4.0\ndt = 0.01\nstride = 0.2\nchi = 64\n";
    let (code, out) = pfotoc(dir.path(), &["otoc"], &format!("[otoc]\n{base}"));
    assert_eq!(code, 0);
    let (_, mpo) = read_csv(&out.join("otoc.csv"));
    let ed_dir = tempfile::tempdir().unwrap();
    let (code, out) = pfotoc(ed_dir.path(), &["otoc", "--method", "ed"], &format!("[otoc]\n{base}"));
    assert_eq!(code, 0);
    let (_, ed) = read_csv(&out.join("otoc.csv"));
    assert_eq!(mpo.len(), ed.len());
    for (a, b) in mpo.iter().zip(&ed) {
        assert!((a[3] - b[3]).abs() <= 0.01 * b[3].abs().max(1e-2), "t={}: {} vs {}", a[0], a[3], b[3]);
    }
}

#[test]
fn flags_override_the_file_and_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = pfotoc(
        dir.path(),
        &["otoc", "--chi", "5", "--tmax", "0.2", "--dt", "0.01"],
        "[otoc]\nlength = 6\nj = 3\nk = 4\nchi = 40\nt_max = 9.0\n",
    );
    assert_eq!(code, 0);
    let meta = metadata(&out);
    assert_eq!(meta["config"]["chi"], 5);
    assert_eq!(meta["config"]["t_max"], 0.2);
    assert_eq!(meta["command"], "otoc");
    assert!(meta["version"].is_string());
    assert!(meta["wall_time_seconds"].as_f64().unwrap() >= 0.0);

    // rerunning from the echoed config reproduces the table
    let echo = meta["config_toml"].as_str().unwrap().to_string();
    let again = tempfile::tempdir().unwrap();
    let (code, out2) = pfotoc(again.path(), &["otoc"], &echo);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(out.join("otoc.csv")).unwrap(), std::fs::read(out2.join("otoc.csv")).unwrap());
    let mut c1 = meta["config"].clone();
    let mut c2 = metadata(&out2)["config"].clone();
    c1["out"] = serde_json::Value::Null;
    c2["out"] = serde_json::Value::Null;
    assert_eq!(c1, c2);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfotoc(dir.path(), &["otoc"], "[otoc]\nnonsense = 3\n").0, 2);
    assert_eq!(pfotoc(dir.path(), &["otoc"], "[otoc]\nlength = 6\nk = 40\n").0, 2);
    assert_eq!(pfotoc(dir.path(), &["otoc"], "[otoc\n").0, 2);
    assert_eq!(pfotoc(dir.path(), &["butterfly"], "[butterfly]\nsweep_values = []\n").0, 2);
    assert_eq!(pfotoc(dir.path(), &["levels"], "[levels]\nlength = 30\n").0, 2);
    assert_eq!(pfotoc(dir.path(), &["otoc", "--method", "exact"], "").0, 2);
    assert_eq!(pfotoc(dir.path(), &["otoc", "--workers", "0"], "[otoc]\nlength = 6\n").0, 2);
}

#[test]
fn failed_comparison_exits_with_three_and_keeps_results() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = pfotoc(
        dir.path(),
        &["bench-ed"],
        "[bench-ed]\nlength = 8\nchi = 2\ndt = 0.01\nt_max = 3.0\nstride = 0.2\ntolerance = 1e-9\nmethod = \"direct\"\n",
    );
    assert_eq!(code, 3);
    let meta = metadata(&out);
    assert_eq!(meta["status"], "FAILED");
    assert!(meta["error"].as_str().unwrap().contains("relative error"));
    let text = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",false")), "{text}");
}

#[test]
fn lightcone_writes_long_form_grid_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) =
        pfotoc(dir.path(), &["lightcone"], "[lightcone]\nlength = 8\nj = 4\nt_max = 1.0\ndt = 0.01\nchi = 16\n");
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out.join("lightcone.csv"));
    assert_eq!(header, ["t", "k", "re_f", "c"]);
    assert_eq!(rows.len(), 11 * 8);
    let script = std::fs::read_to_string(out.join("plot_lightcone.py")).unwrap();
    assert!(script.contains("\"none\""));
    assert!(script.contains("--interpolate"));
    assert_eq!(metadata(&out)["results"]["arrivals"].as_array().unwrap().len(), 8);
}
