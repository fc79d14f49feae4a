//! Job execution and artifact layout.

use std::fs;
use std::path::{Path, PathBuf};

use satl_core::liouvillian::steady_state;
use satl_core::observables::{beta, photon_stats, Fano};
use satl_core::spectrum::{auto_spectrum, classify_peaks_with, refine_linewidth, SpectrumResult};
use satl_core::sweep::{pinned, run_sweep, SweepRow};
use satl_core::trajectory::{run_ensemble, run_trajectory, RngStream, TrajectoryRecord};
use satl_core::{adaptive_steady_state, Exec, Generator, ModelSpec, SteadyState, C64};
use serde_json::{json, Value};

use crate::config::{parse_config, InitialState, JobKind, RunConfig};
use crate::error::CliError;

pub const DEFAULT_OUT: &str = "satl-out";

pub const SPECTRUM_HEADER: [&str; 2] = ["omega_over_gamma", "s_normalized"];
pub const TRAJECTORY_HEADER: [&str; 3] = ["t_gamma", "pop_upper", "dipole_mag"];
pub const SWEEP_HEADER: [&str; 8] = [
    "pump_over_gamma",
    "mean_n",
    "fano",
    "beta",
    "linewidth_fwhm",
    "st_width",
    "n_peaks",
    "status",
];

#[derive(Debug, Clone, Default)]
pub struct Request {
    pub job: Option<JobKind>,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: u8,
    /// One-line summary for stdout on success.
    pub summary: Option<String>,
    /// Error document for stderr on failure.
    pub error: Option<Value>,
    pub out_dir: Option<PathBuf>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        self.files.push(name.to_string());
        log::info!("writing {}", p.display());
        Ok(p)
    }

    fn csv<const N: usize>(&mut self, name: &str, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<(), CliError> {
        let path = self.path(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
        w.write_record(header).map_err(|e| CliError::io(&path, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let path = self.path(name)?;
        write_json(&path, value)
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn fano_cell(f: Option<Fano>) -> String {
    match f {
        Some(Fano::Defined(v)) => num(v),
        Some(Fano::Undefined) => "undefined".into(),
        None => String::new(),
    }
}

fn solve(cfg: &RunConfig) -> Result<SteadyState, CliError> {
    Ok(match cfg.truncation.n_max {
        Some(n) => steady_state(&Generator::new(&ModelSpec::new(cfg.scheme, cfg.params, n)?)?)?,
        None => adaptive_steady_state(cfg.scheme, cfg.params, &cfg.truncation.options())?,
    })
}

fn write_spectrum(art: &mut Artifacts, name: &str, spec: &SpectrumResult) -> Result<(), CliError> {
    let rows = spec.grid.values().iter().zip(&spec.s_values).map(|(w, s)| [num(*w), num(*s)]);
    art.csv(name, SPECTRUM_HEADER, rows)
}

fn steady_job(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let ss = solve(cfg)?;
    let stats = photon_stats(&ss)?;
    let space = ss.model.space();
    let levels: Vec<f64> = (1..=space.n_levels())
        .map(|l| stats.level_population(space, l))
        .collect::<Result<_, _>>()?;
    let results = json!({
        "n_max": ss.n_max(),
        "mean_n": stats.mean_n,
        "fano": stats.fano,
        "beta": beta(cfg.scheme, &cfg.params).ok(),
        "residual": ss.residual,
        "top_population": ss.top_population(),
        "level_populations": levels,
    });
    art.json("steady.json", &json!({ "results": results, "photon_distribution": stats.photon_distribution }))?;
    let rows = stats.photon_distribution.iter().enumerate().map(|(n, p)| [n.to_string(), num(*p)]);
    art.csv("photon_distribution.csv", ["n", "probability"], rows)?;
    let summary = format!(
        "steady {} n_max={} mean_n={:.6} fano={}",
        cfg.scheme,
        ss.n_max(),
        stats.mean_n,
        fano_cell(Some(stats.fano))
    );
    Ok((summary, results))
}

fn spectrum_job(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let ss = solve(cfg)?;
    let gen = Generator::new(&ss.model)?;
    let opts = cfg.spectrum.options();
    let spec = auto_spectrum(&ss, &gen, &opts)?;
    write_spectrum(art, "spectrum.csv", &spec)?;
    let peaks = classify_peaks_with(&spec, opts.prominence);
    let mut results = json!({
        "n_max": ss.n_max(),
        "mean_n": spec.mean_n,
        "method": spec.method,
        "points": spec.grid.len(),
        "half_width": spec.grid.hi(),
        "raw_integral": spec.raw_integral,
        "imag_ratio": spec.imag_ratio,
        "min_before_clamp": spec.min_before_clamp,
        "edge_weight": spec.edge_weight(),
        "peaks": peaks,
    });
    let mut summary = format!("spectrum {} n_max={} mean_n={:.6} peaks={}", cfg.scheme, ss.n_max(), spec.mean_n, peaks.len());
    if cfg.spectrum.fit {
        match refine_linewidth(&ss, &gen, &spec, &opts) {
            Ok((fit, zoom)) => {
                write_spectrum(art, "spectrum_zoom.csv", &zoom)?;
                summary.push_str(&format!(" fwhm={:.6}", fit.fwhm));
                results["fit"] = json!(fit);
            }
            Err(e) => {
                art.json("spectrum.json", &results)?;
                return Err(e.into());
            }
        }
    }
    art.json("spectrum.json", &results)?;
    Ok((summary, results))
}

fn initial_state(model: &ModelSpec, which: InitialState) -> Result<Vec<C64>, CliError> {
    let level = match which {
        InitialState::Ground => 1,
        InitialState::Upper => model.lasing_levels().1,
    };
    Ok(model.space().basis_vector(level, 0)?)
}

fn trajectory_rows(rec: &TrajectoryRecord) -> impl Iterator<Item = [String; 3]> + '_ {
    rec.times
        .iter()
        .zip(&rec.pop_upper)
        .zip(&rec.dipole_mag)
        .map(|((t, p), d)| [num(*t), num(*p), num(*d)])
}

fn event_log(rec: &TrajectoryRecord) -> Value {
    json!({
        "seed": rec.stream.seed,
        "substream": rec.stream.substream,
        "dt": rec.dt,
        "channels": rec.channel_names,
        "events": rec.events.iter().map(|e| json!({
            "t_gamma": e.time,
            "channel": rec.channel_names[e.channel],
        })).collect::<Vec<_>>(),
    })
}

fn trajectory_job(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let t = &cfg.trajectory;
    let n_max = match cfg.truncation.n_max {
        Some(n) => n,
        None => adaptive_steady_state(cfg.scheme, cfg.params, &cfg.truncation.options())?.n_max(),
    };
    let model = ModelSpec::new(cfg.scheme, cfg.params, n_max)?;
    let psi = initial_state(&model, t.initial)?;
    let opts = t.options();
    let records = if t.n_traj == 1 {
        vec![run_trajectory(&model, &psi, &opts, RngStream::new(t.seed, 0))?]
    } else {
        run_ensemble(&model, &psi, &opts, t.n_traj, t.seed, Exec::Parallel)?
    };
    let events: usize = records.iter().map(|r| r.events.len()).sum();
    if let [rec] = records.as_slice() {
        art.csv("trajectory.csv", TRAJECTORY_HEADER, trajectory_rows(rec))?;
        art.json("events.json", &event_log(rec))?;
    } else {
        for (k, rec) in records.iter().enumerate() {
            art.csv(&format!("trajectories/trajectory_{k:04}.csv"), TRAJECTORY_HEADER, trajectory_rows(rec))?;
            art.json(&format!("trajectories/events_{k:04}.json"), &event_log(rec))?;
        }
        let n = records.len() as f64;
        let mean = |f: fn(&TrajectoryRecord) -> &Vec<f64>, i: usize| records.iter().map(|r| f(r)[i]).sum::<f64>() / n;
        let rows = (0..records[0].times.len()).map(|i| {
            [
                num(records[0].times[i]),
                num(mean(|r| &r.pop_upper, i)),
                num(mean(|r| &r.dipole_mag, i)),
            ]
        });
        art.csv("trajectory.csv", TRAJECTORY_HEADER, rows)?;
    }
    let results = json!({
        "n_max": n_max,
        "n_traj": t.n_traj,
        "dt": records[0].dt,
        "samples": records[0].times.len(),
        "events": events,
    });
    let summary = format!(
        "trajectory {} n_max={} n_traj={} seed={} events={}",
        cfg.scheme, n_max, t.n_traj, t.seed, events
    );
    Ok((summary, results))
}

fn sweep_job(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let plan = cfg.sweep_plan()?;
    let rows: Vec<SweepRow> = run_sweep(&plan, Exec::Parallel)?;
    let cells = rows.iter().map(|r| {
        [
            num(r.value),
            opt(r.mean_n),
            fano_cell(r.fano),
            opt(r.beta),
            opt(r.linewidth_fwhm),
            opt(r.st_width),
            r.n_peaks.map(|n| n.to_string()).unwrap_or_default(),
            r.status.clone(),
        ]
    });
    art.csv("sweep.csv", SWEEP_HEADER, cells)?;
    for (i, r) in rows.iter().enumerate() {
        if let Some(spec) = &r.spectrum {
            write_spectrum(art, &format!("spectra/spectrum_{i:03}.csv"), spec)?;
        }
    }
    let series = |f: fn(&SweepRow) -> Option<f64>| -> Option<bool> {
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| f(r).map(|y| (r.value, y))).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        pinned(&xs, &ys)
    };
    let failed: Vec<Value> = rows
        .iter()
        .filter(|r| r.error.is_some())
        .map(|r| json!({ "value": r.value, "status": r.status, "error": r.error }))
        .collect();
    let results = json!({
        "swept": plan.swept,
        "points": rows.len(),
        "n_max": rows.iter().map(|r| r.n_max).collect::<Vec<_>>(),
        "pinned": { "mean_n": series(|r| r.mean_n), "linewidth_fwhm": series(|r| r.linewidth_fwhm) },
        "failures": failed,
    });
    let summary = format!(
        "sweep {} {} points={} failed={}",
        cfg.scheme,
        plan.swept,
        rows.len(),
        failed.len()
    );
    Ok((summary, results))
}

fn load(req: &Request) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&req.config).map_err(|e| CliError::io(&req.config, e))?;
    let mut cfg = parse_config(&text)?;
    if let (Some(want), Some(job)) = (cfg.job, req.job) {
        if want != job {
            return Err(CliError::Config {
                line: crate::config::line_of_key(&text, "job"),
                message: format!("config is for a {} job, not {}", want.name(), job.name()),
            });
        }
    }
    cfg.job = req.job.or(cfg.job);
    if cfg.job.is_none() {
        return Err(CliError::Config {
            line: None,
            message: "no job kind given".into(),
        });
    }
    if let Some(seed) = req.seed {
        cfg.trajectory.seed = seed;
    }
    cfg.out = Some(req.out.clone().or(cfg.out.take()).unwrap_or_else(|| DEFAULT_OUT.into()));
    Ok(cfg)
}

fn manifest(cfg: Option<&RunConfig>, req: &Request, art: &Artifacts, results: Option<&Value>, error: Option<&CliError>) -> Value {
    json!({
        "tool": "satl",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": satl_core::VERSION,
        "job": cfg.and_then(|c| c.job).or(req.job).map(JobKind::name),
        "status": if error.is_none() { "ok" } else { "error" },
        "seed": cfg.map(|c| c.trajectory.seed),
        "threads": req.threads,
        "config": cfg,
        "artifacts": art.files,
        "results": results,
        "error": error.map(CliError::to_json),
    })
}

/// Runs one job and writes its artifacts and manifest.
pub fn dispatch(req: &Request) -> Outcome {
    let cfg = match load(req) {
        Ok(c) => c,
        Err(e) => {
            // without a valid config the output directory is only known from the command line
            let out_dir = req.out.clone();
            if let Some(dir) = &out_dir {
                let art = Artifacts { dir: dir.clone(), files: Vec::new() };
                let _ = fs::create_dir_all(dir).map(|_| write_json(&dir.join("manifest.json"), &manifest(None, req, &art, None, Some(&e))));
            }
            return failure(e, out_dir);
        }
    };
    let dir = cfg.out.clone().expect("resolved in load");
    if let Err(e) = fs::create_dir_all(&dir) {
        return failure(CliError::io(&dir, e), None);
    }
    let mut art = Artifacts { dir: dir.clone(), files: Vec::new() };
    let run = match cfg.job.expect("resolved in load") {
        JobKind::Steady => steady_job(&cfg, &mut art),
        JobKind::Spectrum => spectrum_job(&cfg, &mut art),
        JobKind::Trajectory => trajectory_job(&cfg, &mut art),
        JobKind::Sweep => sweep_job(&cfg, &mut art),
    };
    match run {
        Ok((summary, results)) => {
            if let Err(e) = write_json(&dir.join("manifest.json"), &manifest(Some(&cfg), req, &art, Some(&results), None)) {
                return failure(e, Some(dir));
            }
            Outcome {
                exit_code: 0,
                summary: Some(format!("{summary} out={}", dir.display())),
                error: None,
                out_dir: Some(dir),
            }
        }
        Err(e) => {
            let _ = write_json(&dir.join("manifest.json"), &manifest(Some(&cfg), req, &art, None, Some(&e)));
            let _ = write_json(&dir.join("error.json"), &e.to_json());
            failure(e, Some(dir))
        }
    }
}

fn failure(e: CliError, out_dir: Option<PathBuf>) -> Outcome {
    Outcome {
        exit_code: e.exit_code(),
        summary: None,
        error: Some(e.to_json()),
        out_dir,
    }
}
