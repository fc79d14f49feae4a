//! Parameter sweeps over one rate of a scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::liouvillian::{adaptive_steady_state, Generator, SteadyState, TruncationOptions};
use crate::models::{RateParams, Scheme};
use crate::observables::{beta, photon_stats, Fano};
use crate::spectrum::{auto_spectrum, classify_peaks_with, refine_linewidth, schawlow_townes, SpectrumOptions, SpectrumResult};

/// Relative change per decade below which a curve counts as pinned.
pub const PIN_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub kind: GridKind,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl SweepGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let (a, b, n) = (self.start, self.stop, self.points);
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Config("sweep bounds must be finite".into()));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        if !(b > a) {
            return Err(Error::Config(format!("sweep stop {b} must exceed start {a}")));
        }
        let t = |k: usize| k as f64 / (n - 1) as f64;
        Ok(match self.kind {
            GridKind::Linear => (0..n).map(|k| if k == n - 1 { b } else { a + (b - a) * t(k) }).collect(),
            GridKind::Log => {
                if !(a > 0.0) {
                    return Err(Error::Config(format!("log sweep needs a positive start, got {a}")));
                }
                let (la, lb) = (a.ln(), b.ln());
                (0..n)
                    .map(|k| match k {
                        0 => a,
                        _ if k == n - 1 => b,
                        _ => (la + (lb - la) * t(k)).exp(),
                    })
                    .collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOutputs {
    pub photon_stats: bool,
    pub beta: bool,
    pub linewidth: bool,
    /// Keep the normalized spectrum of each point.
    pub spectrum: bool,
}

impl Default for SweepOutputs {
    fn default() -> Self {
        Self {
            photon_stats: true,
            beta: true,
            linewidth: true,
            spectrum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub scheme: Scheme,
    pub params: RateParams,
    pub swept: String,
    pub values: Vec<f64>,
    pub outputs: SweepOutputs,
    pub truncation: TruncationOptions,
    pub spectrum: SpectrumOptions,
}

impl SweepPlan {
    pub fn new(scheme: Scheme, params: RateParams, swept: &str, values: Vec<f64>) -> Result<Self> {
        let plan = Self {
            scheme,
            params,
            swept: swept.to_string(),
            values,
            outputs: SweepOutputs::default(),
            truncation: TruncationOptions::default(),
            spectrum: SpectrumOptions::default(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.get(&self.swept).is_none() || self.scheme.unused_keys().contains(&self.swept.as_str()) {
            return Err(Error::Config(format!(
                "'{}' is not a parameter of the {} scheme",
                self.swept, self.scheme
            )));
        }
        if let Some(bad) = self.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!("swept values must be finite and nonnegative, got {bad}")));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("swept values must be strictly increasing".into()));
        }
        self.truncation.validate()?;
        self.spectrum.validate()?;
        self.params_at(self.values.first().copied().unwrap_or(0.0)).map(|_| ())
    }

    pub fn params_at(&self, value: f64) -> Result<RateParams> {
        let mut p = self.params;
        p.set(&self.swept, value)?;
        self.scheme.check_params(&p)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub n_max: Option<usize>,
    pub mean_n: Option<f64>,
    pub fano: Option<Fano>,
    pub beta: Option<f64>,
    pub linewidth_fwhm: Option<f64>,
    pub st_width: Option<f64>,
    pub n_peaks: Option<usize>,
    /// `ok` or the error code that stopped this point.
    pub status: String,
    pub error: Option<String>,
    #[serde(skip)]
    pub spectrum: Option<SpectrumResult>,
}

impl SweepRow {
    fn empty(value: f64) -> Self {
        Self {
            value,
            n_max: None,
            mean_n: None,
            fano: None,
            beta: None,
            linewidth_fwhm: None,
            st_width: None,
            n_peaks: None,
            status: "ok".into(),
            error: None,
            spectrum: None,
        }
    }

    fn fail(&mut self, e: &Error) {
        self.status = e.code().into();
        self.error = Some(e.to_string());
    }
}

/// Evaluates one swept value. Failures are recorded in the row.
pub fn evaluate_point(plan: &SweepPlan, value: f64) -> SweepRow {
    let mut row = SweepRow::empty(value);
    if let Err(e) = fill_row(plan, value, &mut row) {
        row.fail(&e);
    }
    row
}

fn fill_row(plan: &SweepPlan, value: f64, row: &mut SweepRow) -> Result<()> {
    let p = plan.params_at(value)?;
    if plan.outputs.beta {
        row.beta = beta(plan.scheme, &p).ok();
    }
    let ss: SteadyState = adaptive_steady_state(plan.scheme, p, &plan.truncation)?;
    row.n_max = Some(ss.n_max());
    let stats = photon_stats(&ss)?;
    row.mean_n = Some(stats.mean_n);
    if plan.outputs.photon_stats {
        row.fano = Some(stats.fano);
    }
    if !(plan.outputs.linewidth || plan.outputs.spectrum) {
        return Ok(());
    }
    let gen = Generator::new(&ss.model)?;
    let opts = SpectrumOptions {
        exec: Exec::Sequential,
        ..plan.spectrum
    };
    let spec = auto_spectrum(&ss, &gen, &opts)?;
    let n_peaks = classify_peaks_with(&spec, opts.prominence).len();
    row.n_peaks = Some(n_peaks);
    if plan.outputs.linewidth {
        row.st_width = Some(schawlow_townes(p.kappa, stats.mean_n)?);
        if n_peaks == 1 {
            let (fit, _) = refine_linewidth(&ss, &gen, &spec, &opts)?;
            row.linewidth_fwhm = Some(fit.fwhm);
        } else {
            row.status = Error::Doublet { n_peaks }.code().into();
        }
    }
    if plan.outputs.spectrum {
        row.spectrum = Some(spec);
    }
    Ok(())
}

/// One row per swept value, in plan order.
pub fn run_sweep(plan: &SweepPlan, exec: Exec) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    Ok(exec.map_slice(&plan.values, |&v| evaluate_point(plan, v)))
}

fn interp_log(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1].ln(), xs[k].ln());
    let t = if x1 > x0 { (x.ln() - x0) / (x1 - x0) } else { 0.0 };
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Whether `ys(xs)` changes by less than 5% per decade over the last two
/// decades of the grid. `None` when the grid spans less than two decades.
pub fn pinned(xs: &[f64], ys: &[f64]) -> Option<bool> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let end = *xs.last()?;
    if !(xs[0] > 0.0) || xs[0] > end / 100.0 * (1.0 + 1e-12) {
        return None;
    }
    let y2 = ys[ys.len() - 1];
    let y1 = interp_log(xs, ys, end / 10.0);
    let y0 = interp_log(xs, ys, end / 100.0);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(a.abs());
    Some(rel(y2, y1) < PIN_TOLERANCE && rel(y1, y0) < PIN_TOLERANCE)
}
