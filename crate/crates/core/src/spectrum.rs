//! Output spectrum from the quantum regression theorem.
//!
//! With `g(τ) = tr(a e^{Lτ}(ρ_ss a†))` the one-sided transform is
//! `F(ω) = ∫₀^∞ e^{iωτ} g(τ) dτ = tr(a X)` where `(L + iω) X = −ρ_ss a†`,
//! and `S(ω) = 2 Re F(ω)`. `ρ_ss a†` lies in charge sector 1, so the solve
//! can be restricted to that sector and done with a banded factorization.
//! The full-space route reduces the whole `d² × d²` generator to Hessenberg
//! form once and is meant for small models and cross-checks.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hilbert::{annihilation, C64, ZERO};
use crate::linalg::{stack, trapezoid, BandMatrix, ShiftedHessenberg};
use crate::liouvillian::{Generator, Sector, SteadyState};
use crate::models::ModelSpec;

/// Below this `⟨a†a⟩` the field correlation is treated as identically zero.
pub const ZERO_SIGNAL_FLOOR: f64 = 1e-14;
pub const DEFAULT_POINTS: usize = 2001;
pub const DEFAULT_PROMINENCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
}

impl FrequencyGrid {
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!(
                "frequency grid needs lo < hi and at least 2 points, got [{lo}, {hi}] with {count}"
            )));
        }
        let h = (hi - lo) / (count - 1) as f64;
        Ok(Self {
            omegas: (0..count).map(|k| lo + h * k as f64).collect(),
        })
    }

    pub fn symmetric(half_width: f64, count: usize) -> Result<Self> {
        let mut g = Self::uniform(-half_width, half_width, count)?;
        // exact mirror symmetry
        let n = g.omegas.len();
        for k in 0..n / 2 {
            g.omegas[n - 1 - k] = -g.omegas[k];
        }
        if n % 2 == 1 {
            g.omegas[n / 2] = 0.0;
        }
        Ok(g)
    }

    pub fn values(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.omegas[self.omegas.len() - 1] - self.omegas[0]) / (self.omegas.len() - 1) as f64
    }

    pub fn lo(&self) -> f64 {
        self.omegas[0]
    }

    pub fn hi(&self) -> f64 {
        self.omegas[self.omegas.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    /// Sector solve when the correlation source fits in a sector, full otherwise.
    #[default]
    Auto,
    Full,
    Sector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    pub method: SpectrumMethod,
    #[serde(skip)]
    pub exec: Exec,
    pub points: usize,
    /// Fixed half-width of the grid; automatic with widening when absent.
    pub half_width: Option<f64>,
    pub prominence: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            method: SpectrumMethod::Auto,
            exec: Exec::default(),
            points: DEFAULT_POINTS,
            half_width: None,
            prominence: DEFAULT_PROMINENCE,
        }
    }
}

impl SpectrumOptions {
    pub fn validate(&self) -> Result<()> {
        if self.points < 3 {
            return Err(Error::Config(format!("spectrum needs at least 3 points, got {}", self.points)));
        }
        if let Some(w) = self.half_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("spectrum half_width must be positive, got {w}")));
            }
        }
        if !(self.prominence > 0.0 && self.prominence < 1.0) {
            return Err(Error::Config(format!(
                "peak prominence threshold must lie in (0, 1), got {}",
                self.prominence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    pub height: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub grid: FrequencyGrid,
    /// Normalized to unit trapezoid integral, negatives clamped to 0.
    pub s_values: Vec<f64>,
    pub normalized: bool,
    /// Trapezoid integral of the unnormalized `2 Re F`.
    pub raw_integral: f64,
    /// `|∫ 2 Im F| / ∫ 2 Re F` over the grid.
    pub imag_ratio: f64,
    /// Most negative normalized value before clamping (0 if none).
    pub min_before_clamp: f64,
    pub mean_n: f64,
    pub method: SpectrumMethod,
}

impl SpectrumResult {
    /// Fraction of the spectral weight in the outer 5% of the grid on each side.
    pub fn edge_weight(&self) -> f64 {
        let (lo, hi) = (self.grid.lo(), self.grid.hi());
        let margin = 0.05 * (hi - lo) / 2.0;
        let h = self.grid.spacing();
        self.grid
            .values()
            .iter()
            .zip(&self.s_values)
            .filter(|(w, _)| **w < lo + margin || **w > hi - margin)
            .map(|(_, s)| s * h)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    /// RMS fit residual relative to the fitted peak height.
    pub residual: f64,
    pub iterations: usize,
    pub peaks: Vec<Peak>,
}

/// `ρ_ss a†`, the initial operator of the regression.
pub fn correlation_source(ss: &SteadyState) -> DMatrix<C64> {
    &ss.rho * annihilation(ss.model.space()).adjoint().matrix()
}

/// Generator restricted to the sector holding `ρ a†`.
pub fn sector_reduced_generator(model: &ModelSpec) -> Result<Sector> {
    Generator::new(model)?.sector(1)
}

enum Solver {
    Sector { sector: Sector, band: BandMatrix, rhs: Vec<C64>, weights: Vec<(usize, C64)> },
    Full { hess: ShiftedHessenberg, rhs: Vec<C64>, weights: Vec<(usize, C64)> },
}

/// `tr(a X) = Σ a[c, r] X[r, c]` as weights on the coordinates of `X`.
fn trace_weights(a: &DMatrix<C64>, coordinate: impl Fn(usize, usize) -> Option<usize>) -> Result<Vec<(usize, C64)>> {
    let d = a.nrows();
    let mut w = Vec::new();
    for c in 0..d {
        for r in 0..d {
            let v = a[(c, r)];
            if v != ZERO {
                let i = coordinate(r, c).ok_or_else(|| {
                    Error::UnsupportedScheme("field operator leaves the correlation sector".into())
                })?;
                w.push((i, v));
            }
        }
    }
    Ok(w)
}

impl Solver {
    fn new(gen: &Generator, source: &DMatrix<C64>, method: SpectrumMethod) -> Result<(Self, SpectrumMethod)> {
        let a = annihilation(gen.model().space()).into_matrix();
        let sector_attempt = || -> Result<Self> {
            let sector = gen.sector(1)?;
            let rhs: Vec<C64> = sector.gather(source)?.into_iter().map(|z| -z).collect();
            let weights = trace_weights(&a, |r, c| sector.position(r, c))?;
            let band = BandMatrix::from_sparse(sector.matrix())?;
            Ok(Solver::Sector { sector, band, rhs, weights })
        };
        let full = || -> Result<Self> {
            let d = gen.dim();
            let hess = ShiftedHessenberg::new(gen.full_dense())?;
            let b: Vec<C64> = stack(source).into_iter().map(|z| -z).collect();
            let rhs = hess.to_reduced(&b);
            let weights = trace_weights(&a, |r, c| Some(r + c * d))?;
            Ok(Solver::Full { hess, rhs, weights })
        };
        match method {
            SpectrumMethod::Sector => Ok((sector_attempt()?, SpectrumMethod::Sector)),
            SpectrumMethod::Full => Ok((full()?, SpectrumMethod::Full)),
            SpectrumMethod::Auto => match sector_attempt() {
                Ok(s) => Ok((s, SpectrumMethod::Sector)),
                Err(Error::UnsupportedScheme(why)) => {
                    warn!("sector reduction unavailable ({why}); using the full generator");
                    Ok((full()?, SpectrumMethod::Full))
                }
                Err(e) => Err(e),
            },
        }
    }

    fn try_at(&self, omega: f64) -> Result<C64> {
        let shift = C64::new(0.0, omega);
        match self {
            Solver::Sector { band, rhs, weights, .. } => {
                let mut m = band.clone();
                m.add_to_diagonal(shift);
                let lu = m.factor();
                let mut x = rhs.clone();
                lu.solve_in_place(&mut x)?;
                Ok(weights.iter().map(|&(i, w)| w * x[i]).sum())
            }
            Solver::Full { hess, rhs, weights } => {
                let y = hess.solve_reduced(shift, rhs)?;
                let x = hess.q() * DVector::from_column_slice(&y);
                Ok(weights.iter().map(|&(i, w)| w * x[i]).sum())
            }
        }
    }

    fn at(&self, omega: f64, spacing: f64) -> Result<C64> {
        match self.try_at(omega) {
            Err(Error::Numerical { .. }) => {
                let nudged = omega + 1e-9 * spacing;
                warn!("singular resolvent at ω = {omega}; retrying at {nudged}");
                self.try_at(nudged)
            }
            other => other,
        }
    }

    fn len(&self) -> usize {
        match self {
            Solver::Sector { sector, .. } => sector.len(),
            Solver::Full { rhs, .. } => rhs.len(),
        }
    }
}

/// `F(ω_k) = tr(a X_k)` with `(L + iω_k) X_k = −source`, for an arbitrary
/// source operator.
pub fn resolvent_trace(
    gen: &Generator,
    source: &DMatrix<C64>,
    grid: &FrequencyGrid,
    method: SpectrumMethod,
    exec: Exec,
) -> Result<(Vec<C64>, SpectrumMethod)> {
    let (solver, used) = Solver::new(gen, source, method)?;
    debug!("resolvent: {used:?} route, system size {}", solver.len());
    let h = grid.spacing();
    let values = exec.map_slice(grid.values(), |&w| solver.at(w, h));
    Ok((values.into_iter().collect::<Result<Vec<_>>>()?, used))
}

/// Normalized `S(ω)` on `grid`.
pub fn regression_spectrum(
    ss: &SteadyState,
    gen: &Generator,
    grid: &FrequencyGrid,
    method: SpectrumMethod,
    exec: Exec,
) -> Result<SpectrumResult> {
    if gen.model() != &ss.model {
        return Err(Error::Config("steady state was computed for a different model".into()));
    }
    let mean_n = ss.mean_photons();
    if mean_n < ZERO_SIGNAL_FLOOR {
        return Err(Error::ZeroSignal);
    }
    let (f, used) = resolvent_trace(gen, &correlation_source(ss), grid, method, exec)?;
    let re: Vec<f64> = f.iter().map(|z| 2.0 * z.re).collect();
    let im: Vec<f64> = f.iter().map(|z| 2.0 * z.im).collect();
    let h = grid.spacing();
    let raw_integral = trapezoid(&re, h);
    if !(raw_integral > 0.0) || !raw_integral.is_finite() {
        return Err(Error::ZeroSignal);
    }
    let imag_ratio = trapezoid(&im, h).abs() / raw_integral;
    let mut min_before_clamp: f64 = 0.0;
    let s_values = re
        .iter()
        .map(|v| {
            let s = v / raw_integral;
            min_before_clamp = min_before_clamp.min(s);
            s.max(0.0)
        })
        .collect::<Vec<_>>();
    let mut s_values = s_values;
    // renormalize after clamping so the unit-integral invariant holds exactly
    let clamped_integral = trapezoid(&s_values, h);
    for s in &mut s_values {
        *s /= clamped_integral;
    }
    Ok(SpectrumResult {
        grid: grid.clone(),
        s_values,
        normalized: true,
        raw_integral,
        imag_ratio,
        min_before_clamp,
        mean_n,
        method: used,
    })
}

/// Half-width of the default grid: five times the largest of `g`, `κ`, `γ`.
pub fn default_half_width(model: &ModelSpec) -> f64 {
    let p = model.params();
    let w = 5.0 * [p.g.abs(), p.kappa, p.gamma].into_iter().fold(0.0, f64::max);
    if w > 0.0 {
        w
    } else {
        5.0
    }
}

const MAX_WIDENINGS: usize = 6;
const EDGE_WEIGHT_LIMIT: f64 = 0.005;

/// Spectrum on the default grid, doubled in width while more than 0.5% of
/// the weight sits in the outer 5%. A fixed `half_width` disables widening.
pub fn auto_spectrum(ss: &SteadyState, gen: &Generator, opts: &SpectrumOptions) -> Result<SpectrumResult> {
    opts.validate()?;
    if let Some(w) = opts.half_width {
        let grid = FrequencyGrid::symmetric(w, opts.points)?;
        return regression_spectrum(ss, gen, &grid, opts.method, opts.exec);
    }
    let mut half_width = default_half_width(gen.model());
    let mut points = opts.points;
    let mut widenings = 0;
    loop {
        let grid = FrequencyGrid::symmetric(half_width, points)?;
        let spec = regression_spectrum(ss, gen, &grid, opts.method, opts.exec)?;
        let edge = spec.edge_weight();
        if edge <= EDGE_WEIGHT_LIMIT || widenings == MAX_WIDENINGS {
            if edge > EDGE_WEIGHT_LIMIT {
                warn!("spectrum still carries {edge:.3e} of its weight at the grid edge after widening");
            }
            return Ok(spec);
        }
        debug!("edge weight {edge:.3e} at half-width {half_width}; widening");
        half_width *= 2.0;
        points = (2 * points - 1).min(4 * opts.points);
        widenings += 1;
    }
}

/// Local maxima whose topographic prominence exceeds `threshold` times the
/// global maximum, in increasing `ω`.
pub fn classify_peaks_with(spec: &SpectrumResult, threshold: f64) -> Vec<Peak> {
    let s = &spec.s_values;
    let w = spec.grid.values();
    let n = s.len();
    let global = s.iter().copied().fold(0.0, f64::max);
    if n < 3 || global <= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if s[i] > s[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < n && s[j + 1] < s[i] {
                let mid = (i + j) / 2;
                let height = s[mid];
                let mut left_min = height;
                for k in (0..i).rev() {
                    if s[k] > height {
                        break;
                    }
                    left_min = left_min.min(s[k]);
                }
                let mut right_min = height;
                for &v in &s[j + 1..] {
                    if v > height {
                        break;
                    }
                    right_min = right_min.min(v);
                }
                let prominence = height - left_min.max(right_min);
                if prominence >= threshold * global {
                    peaks.push(Peak {
                        omega: w[mid],
                        height,
                        prominence,
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

pub fn classify_peaks(spec: &SpectrumResult) -> Vec<Peak> {
    classify_peaks_with(spec, DEFAULT_PROMINENCE)
}

/// Full width at half maximum from linear interpolation of the crossings
/// around the global maximum.
pub fn half_max_width(omegas: &[f64], s: &[f64]) -> Option<(f64, f64)> {
    let (imax, &smax) = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if smax <= 0.0 {
        return None;
    }
    let half = smax / 2.0;
    let mut l = imax;
    while l > 0 && s[l] > half {
        l -= 1;
    }
    let mut r = imax;
    while r + 1 < s.len() && s[r] > half {
        r += 1;
    }
    if s[l] > half || s[r] > half {
        return None;
    }
    let cross = |a: usize, b: usize| {
        let t = (half - s[a]) / (s[b] - s[a]);
        omegas[a] + t * (omegas[b] - omegas[a])
    };
    let left = cross(l, l + 1);
    let right = cross(r, r - 1);
    Some((right - left, omegas[imax]))
}

fn lorentzian(w: f64, amp: f64, center: f64, width: f64) -> f64 {
    let hw2 = 0.25 * width * width;
    amp * hw2 / ((w - center).powi(2) + hw2)
}

const LM_MAX_ITER: usize = 200;

/// Least-squares fit of `A (w/2)² / ((ω − ω₀)² + (w/2)²)`. Refuses spectra
/// whose peak inventory is not a single line.
pub fn fit_lorentzian(spec: &SpectrumResult) -> Result<LineFit> {
    fit_lorentzian_with(spec, DEFAULT_PROMINENCE)
}

pub fn fit_lorentzian_with(spec: &SpectrumResult, threshold: f64) -> Result<LineFit> {
    let peaks = classify_peaks_with(spec, threshold);
    if peaks.len() != 1 {
        return Err(Error::Doublet { n_peaks: peaks.len() });
    }
    let x = spec.grid.values();
    let y = &spec.s_values;
    let (w0, c0) = half_max_width(x, y).ok_or_else(|| Error::Fit("half-maximum crossings not found on the grid".into()))?;
    let above = y.iter().filter(|&&v| v > 0.5 * peaks[0].height).count();
    if above < 3 {
        return Err(Error::Fit(format!("line is unresolved: {above} grid points above half maximum")));
    }
    let mut p = Vector3::new(peaks[0].height, c0, w0);
    let cost = |p: &Vector3<f64>| -> f64 {
        x.iter().zip(y).map(|(&w, &v)| (lorentzian(w, p[0], p[1], p[2]) - v).powi(2)).sum()
    };
    let mut lambda = 1e-3;
    let mut current = cost(&p);
    for it in 0..LM_MAX_ITER {
        let iterations = it + 1;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&w, &v) in x.iter().zip(y) {
            let (amp, center, width) = (p[0], p[1], p[2]);
            let hw2 = 0.25 * width * width;
            let dx = w - center;
            let den = dx * dx + hw2;
            let f = amp * hw2 / den;
            let j = Vector3::new(
                hw2 / den,
                amp * hw2 * 2.0 * dx / (den * den),
                amp * 0.5 * width * dx * dx / (den * den),
            );
            jtj += j * j.transpose();
            jtr += j * (v - f);
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = cost(&trial);
            if c.is_finite() && c <= current {
                let scale = Vector3::new(p[0].abs(), p[2].abs(), p[2].abs()).map(|v| v.max(1e-300));
                let rel = step.component_div(&scale).amax();
                p = trial;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < 1e-13 {
                    return finish(p, current, y.len(), iterations, peaks);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left: at a minimum to working precision
            return finish(p, current, y.len(), iterations, peaks);
        }
    }
    Err(Error::Fit(format!(
        "Levenberg–Marquardt did not converge in {LM_MAX_ITER} iterations (A={:.4e}, ω₀={:.4e}, w={:.4e})",
        p[0], p[1], p[2]
    )))
}

fn finish(p: Vector3<f64>, cost: f64, n: usize, iterations: usize, peaks: Vec<Peak>) -> Result<LineFit> {
    let fwhm = p[2].abs();
    if !(fwhm > 0.0) || !p[0].is_finite() || p[0] <= 0.0 {
        return Err(Error::Fit(format!("degenerate fit parameters {p:?}")));
    }
    Ok(LineFit {
        center: p[1],
        fwhm,
        amplitude: p[0],
        residual: (cost / n as f64).sqrt() / p[0],
        iterations,
        peaks,
    })
}

/// `κ / (2 ⟨n⟩)`.
pub fn schawlow_townes(kappa: f64, mean_n: f64) -> Result<f64> {
    if !(mean_n > 0.0) {
        return Err(Error::Domain(format!("Schawlow–Townes width needs ⟨n⟩ > 0, got {mean_n}")));
    }
    Ok(kappa / (2.0 * mean_n))
}

/// Linewidth from a single-peaked spectrum: the line is located on the
/// automatic grid, then refit on a grid spanning ±10 estimated widths.
pub fn measure_linewidth(ss: &SteadyState, gen: &Generator, opts: &SpectrumOptions) -> Result<(LineFit, SpectrumResult)> {
    let coarse = auto_spectrum(ss, gen, opts)?;
    refine_linewidth(ss, gen, &coarse, opts)
}

/// Zoomed Lorentzian fit around the single line of an already computed spectrum.
pub fn refine_linewidth(
    ss: &SteadyState,
    gen: &Generator,
    coarse: &SpectrumResult,
    opts: &SpectrumOptions,
) -> Result<(LineFit, SpectrumResult)> {
    let peaks = classify_peaks_with(coarse, opts.prominence);
    if peaks.len() != 1 {
        return Err(Error::Doublet { n_peaks: peaks.len() });
    }
    let (est, center) = half_max_width(coarse.grid.values(), &coarse.s_values)
        .ok_or_else(|| Error::Fit("half-maximum crossings not found on the grid".into()))?;
    let mut width = est.max(coarse.grid.spacing());
    // a line narrower than the coarse spacing is overestimated; iterate the zoom
    let mut zoomed = None;
    for _ in 0..4 {
        let grid = FrequencyGrid::uniform(center - 10.0 * width, center + 10.0 * width, opts.points)?;
        let spec = regression_spectrum(ss, gen, &grid, opts.method, opts.exec)?;
        let fit = fit_lorentzian_with(&spec, opts.prominence)?;
        let settled = fit.fwhm > 0.5 * width;
        width = fit.fwhm;
        zoomed = Some((fit, spec));
        if settled {
            break;
        }
    }
    Ok(zoomed.expect("at least one zoom pass"))
}
