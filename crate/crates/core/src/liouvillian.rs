//! Vectorized master equation, steady states and the adaptive photon cutoff.
//!
//! Density operators are column-stacked (`vec(ρ)[r + c·d] = ρ[r, c]`), so a
//! term `A ρ B` becomes `Bᵀ ⊗ A`. Writing `K = −iH − ½ Σ_k F_k†F_k` the
//! generator is `L ρ = K ρ + ρ K† + Σ_k F_k ρ F_k†`.
//!
//! Every model conserves an excitation charge (see [`Scheme::level_charges`]),
//! so `L` maps the span of `|i⟩⟨j|` with `q_i − q_j = k` into itself. The
//! steady state lives in sector `k = 0` and field correlations in `k = 1`.
//! Ordering a sector by the charge of the row state makes its matrix
//! block-tridiagonal with blocks no wider than `n_levels²`, which is what the
//! banded solver exploits.
//!
//! [`Scheme::level_charges`]: crate::models::Scheme::level_charges

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{number, C64, I, ONE, ZERO};
use crate::linalg::{stack, unstack, BandMatrix, SparseMatrix};
use crate::models::{ModelSpec, RateParams, Scheme};

/// Nonzeros of a dense matrix grouped by column: `cols[c] = [(r, m[r,c])]`.
fn columns(m: &DMatrix<C64>) -> Vec<Vec<(usize, C64)>> {
    (0..m.ncols())
        .map(|c| (0..m.nrows()).filter(|&r| m[(r, c)] != ZERO).map(|r| (r, m[(r, c)])).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Generator {
    model: ModelSpec,
    k: DMatrix<C64>,
    jumps: Vec<DMatrix<C64>>,
    k_cols: Vec<Vec<(usize, C64)>>,
    jump_cols: Vec<Vec<Vec<(usize, C64)>>>,
}

impl Generator {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let d = model.space().dim();
        let mut k = model.hamiltonian().matrix() * (-I);
        let mut jumps = Vec::new();
        for c in model.active_collapses() {
            let f = c.scaled_operator().into_matrix();
            if f.nrows() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: f.nrows(),
                });
            }
            k -= (f.adjoint() * &f) * C64::new(0.5, 0.0);
            jumps.push(f);
        }
        let k_cols = columns(&k);
        let jump_cols = jumps.iter().map(columns).collect();
        Ok(Self {
            model: model.clone(),
            k,
            jumps,
            k_cols,
            jump_cols,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// Dimension `d²` of the vectorized space.
    pub fn vec_dim(&self) -> usize {
        self.dim() * self.dim()
    }

    /// `K = −iH − ½ Σ F†F`.
    pub fn drift(&self) -> &DMatrix<C64> {
        &self.k
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = &self.k * rho;
        out += rho * self.k.adjoint();
        for f in &self.jumps {
            out += f * rho * f.adjoint();
        }
        out
    }

    pub fn apply_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        Ok(stack(&self.apply(&unstack(v, self.dim())?)))
    }

    /// Every nonzero `(row, value)` in column `(r0, c0)` of the vectorized
    /// generator, with rows given as `(r, c)` pairs. Duplicates are summed by
    /// the caller.
    fn column_entries(&self, r0: usize, c0: usize, mut emit: impl FnMut(usize, usize, C64)) {
        for &(r, v) in &self.k_cols[r0] {
            emit(r, c0, v);
        }
        for &(c, v) in &self.k_cols[c0] {
            emit(r0, c, v.conj());
        }
        for cols in &self.jump_cols {
            for &(r, fr) in &cols[r0] {
                for &(c, fc) in &cols[c0] {
                    emit(r, c, fr * fc.conj());
                }
            }
        }
    }

    pub fn full_sparse(&self) -> SparseMatrix {
        let d = self.dim();
        let mut t = Vec::new();
        for c0 in 0..d {
            for r0 in 0..d {
                let col = r0 + c0 * d;
                self.column_entries(r0, c0, |r, c, v| t.push((r + c * d, col, v)));
            }
        }
        SparseMatrix::from_triplets(d * d, d * d, t)
    }

    pub fn full_dense(&self) -> DMatrix<C64> {
        self.full_sparse().to_dense()
    }

    /// Restriction of the generator to charge sector `charge`.
    pub fn sector(&self, charge: i32) -> Result<Sector> {
        let d = self.dim();
        let q = self.model.state_charges();
        let mut elements: Vec<(usize, usize)> = (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .filter(|&(r, c)| q[r] - q[c] == charge)
            .collect();
        elements.sort_by_key(|&(r, c)| (q[r], r, c));
        let mut position = vec![usize::MAX; d * d];
        for (i, &(r, c)) in elements.iter().enumerate() {
            position[r + c * d] = i;
        }
        let mut t = Vec::new();
        let mut leak = None;
        for (j, &(r0, c0)) in elements.iter().enumerate() {
            self.column_entries(r0, c0, |r, c, v| match position[r + c * d] {
                usize::MAX => leak = Some((r, c)),
                i => t.push((i, j, v)),
            });
        }
        if let Some((r, c)) = leak {
            return Err(Error::UnsupportedScheme(format!(
                "generator couples charge sector {charge} to element ({r}, {c}) outside it"
            )));
        }
        let n = elements.len();
        Ok(Sector {
            charge,
            dim: d,
            elements,
            position,
            matrix: SparseMatrix::from_triplets(n, n, t),
        })
    }
}

/// One charge sector of the generator with its element ordering.
#[derive(Debug, Clone)]
pub struct Sector {
    charge: i32,
    dim: usize,
    elements: Vec<(usize, usize)>,
    position: Vec<usize>,
    matrix: SparseMatrix,
}

impl Sector {
    pub fn charge(&self) -> i32 {
        self.charge
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `(row, col)` operator element behind each sector coordinate.
    pub fn elements(&self) -> &[(usize, usize)] {
        &self.elements
    }

    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        match self.position[r + c * self.dim] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Sector coordinates of `x`. Fails if `x` has weight outside the sector.
    pub fn gather(&self, x: &DMatrix<C64>) -> Result<Vec<C64>> {
        let d = self.dim;
        for c in 0..d {
            for r in 0..d {
                if x[(r, c)] != ZERO && self.position[r + c * d] == usize::MAX {
                    return Err(Error::UnsupportedScheme(format!(
                        "operator has weight at ({r}, {c}) outside charge sector {}",
                        self.charge
                    )));
                }
            }
        }
        Ok(self.elements.iter().map(|&(r, c)| x[(r, c)]).collect())
    }

    pub fn scatter(&self, v: &[C64]) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(r, c), &x) in self.elements.iter().zip(v) {
            m[(r, c)] = x;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DMatrix<C64>,
    pub model: ModelSpec,
    /// `‖L vec(ρ)‖_∞` after symmetrization.
    pub residual: f64,
}

impl SteadyState {
    pub fn n_max(&self) -> usize {
        self.model.space().n_max()
    }

    /// Total population of the photon number `n_max`.
    pub fn top_population(&self) -> f64 {
        let s = self.model.space();
        (1..=s.n_levels())
            .map(|j| self.rho[(s.index_unchecked(j, s.n_max()), s.index_unchecked(j, s.n_max()))].re)
            .sum()
    }

    pub fn mean_photons(&self) -> f64 {
        expectation(&self.rho, number(self.model.space()).matrix()).re
    }

    pub fn trace(&self) -> C64 {
        crate::linalg::trace(&self.rho)
    }
}

/// `tr(ρ X)`.
pub fn expectation(rho: &DMatrix<C64>, x: &DMatrix<C64>) -> C64 {
    let d = rho.nrows();
    let mut acc = ZERO;
    for r in 0..d {
        for c in 0..d {
            acc += rho[(r, c)] * x[(c, r)];
        }
    }
    acc
}

fn hermitize(rho: &DMatrix<C64>) -> DMatrix<C64> {
    let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let tr = crate::linalg::trace(&h).re;
    h / C64::new(tr, 0.0)
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Numerical rank with tolerance `1e-8·‖M‖_max` from column-pivoted QR.
fn kernel_dim(m: DMatrix<C64>) -> usize {
    let n = m.ncols();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let r = m.col_piv_qr().r();
    let rank = (0..n.min(r.nrows())).filter(|&i| r[(i, i)].norm() > 1e-8 * scale).count();
    n - rank
}

const PIVOT_TOL: f64 = 1e-8;

/// Steady state from the charge-0 sector. One vacuum population is pinned
/// to 1 in place of its row, the banded system is solved, and the result is
/// trace-normalized. The pin is then moved to the largest population and the
/// solve repeated, which keeps the pinned system well scaled.
pub fn steady_state(gen: &Generator) -> Result<SteadyState> {
    let sector = gen.sector(0)?;
    let space = *gen.model().space();
    let scale = sector.matrix().max_abs().max(f64::MIN_POSITIVE);
    let band = BandMatrix::from_sparse(sector.matrix())?;

    let solve_pinned = |pin: usize| -> Option<DMatrix<C64>> {
        let mut b = band.clone();
        b.set_unit_row(pin);
        let lu = b.factor();
        if lu.min_pivot() <= PIVOT_TOL * scale {
            return None;
        }
        let mut rhs = vec![ZERO; sector.len()];
        rhs[pin] = ONE;
        lu.solve_in_place(&mut rhs).ok()?;
        let rho = sector.scatter(&rhs);
        let tr = crate::linalg::trace(&rho).re;
        (tr.is_finite() && tr > 0.0).then(|| hermitize(&rho))
    };

    let candidates = (1..=space.n_levels())
        .map(|j| space.index_unchecked(j, 0))
        .chain((1..=space.n_levels()).flat_map(|j| (1..=space.n_max()).map(move |n| space.index_unchecked(j, n))));
    let mut first = None;
    for i in candidates {
        let pin = sector.position(i, i).expect("diagonal lies in sector 0");
        if let Some(rho) = solve_pinned(pin) {
            first = Some((pin, rho));
            break;
        }
    }
    let Some((pin, mut rho)) = first else {
        let dense = sector.matrix().to_dense();
        let kd = if dense.nrows() <= 2000 {
            kernel_dim(dense)
        } else {
            band.clone().factor().small_pivots(PIVOT_TOL * scale)
        };
        return Err(Error::DegenerateSteadyState { kernel_dim: kd });
    };

    let best = (0..space.dim())
        .max_by(|&a, &b| rho[(a, a)].re.total_cmp(&rho[(b, b)].re))
        .unwrap();
    let best_pin = sector.position(best, best).unwrap();
    let residual_of = |rho: &DMatrix<C64>| inf_norm(&sector.matrix().matvec(&sector.gather(rho).unwrap()));
    let mut residual = residual_of(&rho);
    if best_pin != pin {
        if let Some(alt) = solve_pinned(best_pin) {
            let r = residual_of(&alt);
            if r < residual {
                rho = alt;
                residual = r;
            }
        }
    }
    debug!(
        "steady state: sector dim {}, band {:?}, residual {residual:e}",
        sector.len(),
        band.bandwidths()
    );
    if !residual.is_finite() || residual > 1e-6 * scale {
        return Err(Error::Numerical {
            message: "steady-state residual too large".into(),
            residual,
        });
    }
    Ok(SteadyState {
        rho,
        model: gen.model().clone(),
        residual,
    })
}

/// Steady state from the full `d² × d²` generator with the trace condition
/// replacing the row of the `(1,0)` population. Intended for small models.
pub fn steady_state_dense(gen: &Generator) -> Result<SteadyState> {
    let d = gen.dim();
    let l = gen.full_dense();
    let kd = kernel_dim(l.clone());
    if kd != 1 {
        return Err(Error::DegenerateSteadyState { kernel_dim: kd });
    }
    let mut m = l.clone();
    let pin = 0;
    for c in 0..d * d {
        m[(pin, c)] = ZERO;
    }
    for i in 0..d {
        m[(pin, i + i * d)] = ONE;
    }
    let mut rhs = DVector::zeros(d * d);
    rhs[pin] = ONE;
    let x = m.lu().solve(&rhs).ok_or(Error::Numerical {
        message: "trace-augmented generator is singular".into(),
        residual: f64::INFINITY,
    })?;
    let rho = hermitize(&unstack(x.as_slice(), d)?);
    let residual = inf_norm((&l * DVector::from_column_slice(&stack(&rho))).as_slice());
    Ok(SteadyState {
        rho,
        model: gen.model().clone(),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationOptions {
    pub start: usize,
    pub step: usize,
    pub ceiling: usize,
    pub threshold: f64,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        Self {
            start: 4,
            step: 2,
            ceiling: 60,
            threshold: 1e-4,
        }
    }
}

impl TruncationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.start < 1 {
            return Err(Error::Config("truncation start must be at least 1".into()));
        }
        if self.step < 1 {
            return Err(Error::Config("truncation step must be at least 1".into()));
        }
        if self.ceiling < self.start {
            return Err(Error::Config(format!(
                "truncation ceiling {} is below the start value {}",
                self.ceiling, self.start
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "truncation threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Raises `n_max` by `step` until the top photon sector holds less than
/// `threshold` of the population.
pub fn solve_with_adaptive_truncation<F>(factory: F, opts: &TruncationOptions) -> Result<SteadyState>
where
    F: Fn(usize) -> Result<ModelSpec>,
{
    opts.validate()?;
    let mut n_max = opts.start;
    loop {
        let model = factory(n_max)?;
        let ss = steady_state(&Generator::new(&model)?)?;
        let top = ss.top_population();
        debug!("adaptive truncation: n_max {n_max}, top population {top:e}");
        if top < opts.threshold {
            return Ok(ss);
        }
        if n_max + opts.step > opts.ceiling {
            return Err(Error::TruncationFailure {
                ceiling: opts.ceiling,
                top_population: top,
            });
        }
        n_max += opts.step;
    }
}

pub fn adaptive_steady_state(scheme: Scheme, params: RateParams, opts: &TruncationOptions) -> Result<SteadyState> {
    solve_with_adaptive_truncation(|n| ModelSpec::new(scheme, params, n), opts)
}

/// Fixed-step RK4 integration of `dρ/dt = L ρ`, sampled at `times`
/// (nondecreasing, starting at or after 0).
pub fn propagate(gen: &Generator, rho0: &DMatrix<C64>, times: &[f64], dt: f64) -> Result<Vec<DMatrix<C64>>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Config("sample times must be nondecreasing and nonnegative".into()));
    }
    let half = C64::new(0.5, 0.0);
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target - 1e-12 * target.max(1.0) {
            let h = dt.min(target - t);
            let hc = C64::new(h, 0.0);
            let k1 = gen.apply(&rho);
            let k2 = gen.apply(&(&rho + &k1 * (hc * half)));
            let k3 = gen.apply(&(&rho + &k2 * (hc * half)));
            let k4 = gen.apply(&(&rho + &k3 * hc));
            rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (hc / C64::new(6.0, 0.0));
            t += h;
        }
        out.push(rho.clone());
    }
    Ok(out)
}
