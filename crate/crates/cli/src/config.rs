//! Run configuration: TOML sections of `key = value` pairs with `#` comments.

use std::path::PathBuf;

use satl_core::spectrum::{SpectrumMethod, SpectrumOptions};
use satl_core::sweep::{GridKind, SweepGrid, SweepOutputs, SweepPlan};
use satl_core::trajectory::TrajectoryOptions;
use satl_core::{RateParams, Scheme, TruncationOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Steady,
    Spectrum,
    Trajectory,
    Sweep,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Steady => "steady",
            JobKind::Spectrum => "spectrum",
            JobKind::Trajectory => "trajectory",
            JobKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSection {
    /// Fixed photon cutoff; adaptive when absent.
    pub n_max: Option<usize>,
    pub start: usize,
    pub step: usize,
    pub ceiling: usize,
    pub threshold: f64,
}

impl Default for TruncationSection {
    fn default() -> Self {
        let t = TruncationOptions::default();
        Self {
            n_max: None,
            start: t.start,
            step: t.step,
            ceiling: t.ceiling,
            threshold: t.threshold,
        }
    }
}

impl TruncationSection {
    pub fn options(&self) -> TruncationOptions {
        TruncationOptions {
            start: self.start,
            step: self.step,
            ceiling: self.ceiling,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub method: SpectrumMethod,
    pub points: usize,
    pub half_width: Option<f64>,
    pub prominence: f64,
    /// Fit a Lorentzian to a single-peaked spectrum.
    pub fit: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let s = SpectrumOptions::default();
        Self {
            method: s.method,
            points: s.points,
            half_width: s.half_width,
            prominence: s.prominence,
            fit: false,
        }
    }
}

impl SpectrumSection {
    pub fn options(&self) -> SpectrumOptions {
        SpectrumOptions {
            method: self.method,
            points: self.points,
            half_width: self.half_width,
            prominence: self.prominence,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Lowest atomic level, empty cavity.
    #[default]
    Ground,
    /// Upper lasing level, empty cavity.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub dt: Option<f64>,
    pub t_final: f64,
    pub record_stride: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub initial: InitialState,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        let t = TrajectoryOptions::default();
        Self {
            dt: t.dt,
            t_final: t.t_final,
            record_stride: t.record_stride,
            n_traj: 1,
            seed: 0,
            initial: InitialState::Ground,
        }
    }
}

impl TrajectorySection {
    pub fn options(&self) -> TrajectoryOptions {
        TrajectoryOptions {
            dt: self.dt,
            t_final: self.t_final,
            record_stride: self.record_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Swept parameter; the scheme's pump parameter when absent.
    #[serde(default)]
    pub parameter: Option<String>,
    #[serde(default = "default_grid")]
    pub grid: GridKind,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub outputs: SweepOutputs,
}

fn default_grid() -> GridKind {
    GridKind::Log
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub job: Option<JobKind>,
    pub scheme: Scheme,
    pub params: RateParams,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub truncation: TruncationSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, if any.
pub fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn at_key(text: &str, key: &str, message: String) -> CliError {
    CliError::Config {
        line: line_of_key(text, key),
        message,
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate(text)?;
    Ok(cfg)
}

impl RunConfig {
    fn validate(&self, text: &str) -> Result<(), CliError> {
        for (key, value) in self.params.entries() {
            if !value.is_finite() {
                return Err(at_key(text, key, format!("parameter `{key}` must be finite")));
            }
            if !matches!(key, "g" | "E_pump") && value < 0.0 {
                return Err(at_key(text, key, format!("rate `{key}` must be nonnegative, got {value}")));
            }
        }
        for key in self.scheme.unused_keys() {
            if self.params.get(key).unwrap_or(0.0) != 0.0 {
                return Err(at_key(
                    text,
                    key,
                    format!("parameter `{key}` does not apply to the {} scheme", self.scheme),
                ));
            }
        }
        if let Some(n) = self.truncation.n_max {
            if n == 0 {
                return Err(at_key(text, "n_max", "n_max must be at least 1".into()));
            }
        }
        self.truncation.options().validate().map_err(|e| at_key(text, "threshold", e.to_string()))?;
        self.spectrum.options().validate().map_err(|e| CliError::Config {
            line: None,
            message: e.to_string(),
        })?;
        let t = &self.trajectory;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(at_key(text, "t_final", format!("t_final must be nonnegative, got {}", t.t_final)));
        }
        if t.record_stride == 0 {
            return Err(at_key(text, "record_stride", "record_stride must be at least 1".into()));
        }
        if t.n_traj == 0 {
            return Err(at_key(text, "n_traj", "n_traj must be at least 1".into()));
        }
        if let Some(dt) = t.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(at_key(text, "dt", format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(s) = &self.sweep {
            self.sweep_plan_from(s).map_err(|e| match e {
                CliError::Config { line: None, message } => at_key(text, "parameter", message),
                other => other,
            })?;
        }
        Ok(())
    }

    fn sweep_plan_from(&self, s: &SweepSection) -> Result<SweepPlan, CliError> {
        let values = SweepGrid {
            kind: s.grid,
            start: s.start,
            stop: s.stop,
            points: s.points,
        }
        .values()?;
        let swept = s.parameter.clone().unwrap_or_else(|| self.scheme.pump_key().to_string());
        let mut plan = SweepPlan::new(self.scheme, self.params, &swept, values)?;
        plan.outputs = s.outputs;
        plan.truncation = self.truncation.options();
        plan.spectrum = self.spectrum.options();
        plan.validate()?;
        Ok(plan)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan, CliError> {
        let s = self.sweep.as_ref().ok_or_else(|| CliError::Config {
            line: None,
            message: "sweep job needs a [sweep] section".into(),
        })?;
        self.sweep_plan_from(s)
    }
}
