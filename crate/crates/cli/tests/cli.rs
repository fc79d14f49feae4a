use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const THREE: &str = "scheme = \"three-incoherent\"\n\n[params]\ng = 0.6\nkappa = 0.1\ngamma = 1.0\nGamma = 1.0\n";

fn satl(job: &str, config: &str, dir: &TempDir, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.path().join(format!("{job}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join(format!("{job}-out"));
    let output = Command::new(env!("CARGO_BIN_EXE_satl"))
        .arg(job)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string() + "\n"
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn stdout_lines(o: &Output) -> Vec<String> {
    String::from_utf8(o.stdout.clone()).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn steady_job_at_the_four_level_point() {
    let dir = TempDir::new().unwrap();
    let cfg = "scheme = \"four-incoherent\"\n[params]\ng = 10.0\nkappa = 0.1\ngamma = 1.0\ngamma_f = 2.0\nGamma = 10.0\n";
    let (o, out) = satl("steady", cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_lines(&o).len(), 1);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["job"], "steady");
    assert!(m["results"]["n_max"].as_u64().unwrap() >= 4);
    let n = m["results"]["mean_n"].as_f64().unwrap();
    assert!((n - 2.6).abs() < 0.15, "{n}");
    assert_eq!(m["config"]["truncation"]["threshold"], 1e-4);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["artifacts"].as_array().unwrap().iter().any(|a| a == "steady.json"));
}

#[test]
fn spectrum_header_and_normalization() {
    let dir = TempDir::new().unwrap();
    let (o, out) = satl("spectrum", THREE, &dir, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first_line(&out.join("spectrum.csv")), golden("spectrum_header.csv"));
    let mut rdr = csv::Reader::from_path(out.join("spectrum.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2001);
    let h = rows[1].0 - rows[0].0;
    let integral: f64 = rows.windows(2).map(|w| 0.5 * h * (w[0].1 + w[1].1)).sum();
    assert!((integral - 1.0).abs() < 1e-9);
}

#[test]
fn zero_signal_spectrum_exits_2() {
    let dir = TempDir::new().unwrap();
    let (o, out) = satl("spectrum", &THREE.replace("Gamma = 1.0", "Gamma = 0.0"), &dir, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "zero-signal");
    assert_eq!(err["exit_code"], 2);
    assert_eq!(json(&out.join("manifest.json"))["status"], "error");
    assert_eq!(json(&out.join("error.json"))["error"], "zero-signal");
}

#[test]
fn config_errors_exit_1_with_line() {
    let dir = TempDir::new().unwrap();
    let (o, _) = satl("steady", &THREE.replace("kappa = 0.1", "kappa = -0.1"), &dir, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["line"], 5);
    assert!(err["message"].as_str().unwrap().contains("kappa"));
    let (o, _) = satl("steady", &format!("job = \"sweep\"\n{THREE}"), &dir, &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn truncation_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{}\n[truncation]\nceiling = 6\n", THREE.replace("g = 0.6", "g = 10.0").replace("Gamma = 1.0", "Gamma = 50.0"));
    let (o, _) = satl("steady", &cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "truncation-failure");
}

#[test]
fn doublet_fit_exits_4() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{}\n[spectrum]\nfit = true\n", THREE.replace("g = 0.6", "g = 1.414").replace("Gamma = 1.0", "Gamma = 0.05"));
    let (o, out) = satl("spectrum", &cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(4));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "doublet-detected");
    assert_eq!(json(&out.join("spectrum.json"))["peaks"].as_array().unwrap().len(), 2);
}

#[test]
fn single_line_fit() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{THREE}\n[spectrum]\nfit = true\n");
    let (o, out) = satl("spectrum", &cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fwhm = json(&out.join("spectrum.json"))["fit"]["fwhm"].as_f64().unwrap();
    assert!(fwhm > 0.0);
    assert!(stdout_lines(&o)[0].contains("fwhm="));
}

#[test]
fn trajectory_replay_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{}\n[trajectory]\nt_final = 20.0\n", THREE.replace("g = 0.6", "g = 1.414"));
    let (a, out_a) = satl("trajectory", &cfg, &dir, &["--seed", "17"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let first: Vec<Vec<u8>> = ["trajectory.csv", "events.json", "manifest.json"].iter().map(|f| fs::read(out_a.join(f)).unwrap()).collect();
    let (b, out_b) = satl("trajectory", &cfg, &dir, &["--seed", "17"]);
    assert_eq!(b.status.code(), Some(0));
    for (f, bytes) in ["trajectory.csv", "events.json", "manifest.json"].iter().zip(&first) {
        assert_eq!(&fs::read(out_b.join(f)).unwrap(), bytes, "{f}");
    }
    assert_eq!(first_line(&out_a.join("trajectory.csv")), golden("trajectory_header.csv"));
    let events = json(&out_a.join("events.json"));
    assert_eq!(events["seed"], 17);
    let times: Vec<f64> = events["events"].as_array().unwrap().iter().map(|e| e["t_gamma"].as_f64().unwrap()).collect();
    assert!(!times.is_empty());
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    let (c, out_c) = satl("trajectory", &cfg, &dir, &["--seed", "18"]);
    assert_eq!(c.status.code(), Some(0));
    assert_ne!(fs::read(out_c.join("events.json")).unwrap(), first[1]);
}

#[test]
fn trajectory_ensemble_files() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{THREE}\n[truncation]\nn_max = 3\n\n[trajectory]\nt_final = 2.0\nn_traj = 3\n");
    let (o, out) = satl("trajectory", &cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        assert!(out.join(format!("trajectories/trajectory_{k:04}.csv")).exists());
        assert!(out.join(format!("trajectories/events_{k:04}.json")).exists());
    }
    assert_eq!(first_line(&out.join("trajectory.csv")), golden("trajectory_header.csv"));
}

#[test]
fn sweep_table() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{THREE}\n[sweep]\nstart = 0.5\nstop = 8.0\npoints = 3\n\n[sweep.outputs]\nspectrum = true\n");
    let (o, out) = satl("sweep", &cfg, &dir, &["--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_lines(&o).len(), 1);
    assert_eq!(first_line(&out.join("sweep.csv")), golden("sweep_header.csv"));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(&r[7], "ok");
        assert!(r[4].parse::<f64>().unwrap() > r[5].parse::<f64>().unwrap());
    }
    for i in 0..3 {
        assert_eq!(first_line(&out.join(format!("spectra/spectrum_{i:03}.csv"))), golden("spectrum_header.csv"));
    }
    assert_eq!(json(&out.join("manifest.json"))["threads"], 2);
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{THREE}\n[sweep]\nstart = 0.05\nstop = 100.0\npoints = 0\n");
    let (o, out) = satl("sweep", &cfg, &dir, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap(), golden("sweep_header.csv"));
}

#[test]
fn sweep_job_needs_sweep_section() {
    let dir = TempDir::new().unwrap();
    let (o, _) = satl("sweep", THREE, &dir, &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = satl_cli::parse_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if cfg.job == Some(satl_cli::JobKind::Sweep) {
            cfg.sweep_plan().unwrap();
        }
        n += 1;
    }
    assert!(n >= 4);
}
