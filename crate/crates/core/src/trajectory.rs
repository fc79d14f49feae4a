//! Monte-Carlo wave-function trajectories.
//!
//! Between collapses the conditioned state evolves under
//! `H_eff = H − (i/2) Σ_k r_k F_k†F_k` with the symmetric split
//! `e^{−iH dt/2} e^{−A dt} e^{−iH dt/2}`, `A = ½ Σ_k r_k F_k†F_k`, and is
//! renormalized after every step. Each channel fires independently when its
//! own uniform draw falls below `dt ⟨F_k†F_k⟩`; simultaneous firings are
//! resolved by one more draw weighted by those probabilities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hilbert::{OperatorKind, OperatorMatrix, C64, I, ZERO};
use crate::linalg::SparseMatrix;
use crate::models::ModelSpec;

/// Smallest state norm tolerated before renormalization.
pub const NORM_FLOOR: f64 = 1e-12;
/// Upper bound on `dt · max_rate`.
pub const DT_LIMIT: f64 = 0.01;
/// Default `dt · max_rate`.
pub const DT_DEFAULT: f64 = 0.005;

/// `(seed, substream)` pair identifying one reproducible random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub substream: u64,
}

impl RngStream {
    pub fn new(seed: u64, substream: u64) -> Self {
        Self { seed, substream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.substream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedState {
    pub amplitudes: Vec<C64>,
    pub time: f64,
}

impl ConditionedState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let mut s = Self { amplitudes, time: 0.0 };
        s.renormalize()?;
        Ok(s)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn renormalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n >= NORM_FLOOR) || !n.is_finite() {
            return Err(Error::Numerical {
                message: "conditioned state norm collapsed".into(),
                residual: n,
            });
        }
        let inv = 1.0 / n;
        for z in &mut self.amplitudes {
            *z *= inv;
        }
        Ok(())
    }

    pub fn density(&self) -> DMatrix<C64> {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        &v * v.adjoint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub time: f64,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Upper lasing level population.
    pub pop_upper: Vec<f64>,
    /// `|Σ_n C_{u,n} C*_{l,n+1}|` on the lasing transition.
    pub dipole_mag: Vec<f64>,
    /// Real part of the same sum.
    pub dipole_re: Vec<f64>,
    pub events: Vec<CollapseEvent>,
    pub channel_names: Vec<String>,
    pub dt: f64,
    pub stream: RngStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryOptions {
    /// Time step; `0.005 / max_rate` when absent.
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Record every `record_stride` steps.
    pub record_stride: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            dt: None,
            t_final: 50.0,
            record_stride: 10,
        }
    }
}

impl TrajectoryOptions {
    pub fn resolve_dt(&self, model: &ModelSpec) -> Result<f64> {
        let max_rate = model.max_rate();
        let dt = match self.dt {
            Some(dt) => dt,
            None if max_rate > 0.0 => DT_DEFAULT / max_rate,
            None => 1e-2,
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if dt * max_rate > DT_LIMIT * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "time step {dt} exceeds {DT_LIMIT}/max_rate = {}",
                DT_LIMIT / max_rate
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be nonnegative, got {}", self.t_final)));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(dt)
    }

    pub fn steps(&self, dt: f64) -> usize {
        (self.t_final / dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// `H − (i/2) Σ_k r_k F_k†F_k`.
pub fn effective_hamiltonian(model: &ModelSpec) -> OperatorMatrix {
    let mut h = model.hamiltonian().matrix().clone();
    for c in model.active_collapses() {
        let f = c.operator.matrix();
        h -= (f.adjoint() * f) * (I * (0.5 * c.rate));
    }
    OperatorMatrix::new(OperatorKind::Other, h).expect("square by construction")
}

/// Precomputed no-jump step and jump operators of a model at fixed `dt`.
#[derive(Debug, Clone)]
pub struct Propagator {
    step: SparseMatrix,
    jumps: Vec<SparseMatrix>,
    channels: Vec<usize>,
    dt: f64,
}

fn to_sparse(m: &DMatrix<C64>) -> SparseMatrix {
    let mut t = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if m[(r, c)] != ZERO {
                t.push((r, c, m[(r, c)]));
            }
        }
    }
    SparseMatrix::from_triplets(m.nrows(), m.ncols(), t)
}

impl Propagator {
    pub fn new(model: &ModelSpec, dt: f64) -> Self {
        let d = model.space().dim();
        let mut a = DMatrix::<C64>::zeros(d, d);
        let mut jumps = Vec::new();
        let mut channels = Vec::new();
        for (k, c) in model.collapses().iter().enumerate() {
            if c.rate > 0.0 {
                let f = c.scaled_operator().into_matrix();
                a += (f.adjoint() * &f) * C64::new(0.5, 0.0);
                jumps.push(to_sparse(&f));
                channels.push(k);
            }
        }
        let half = (model.hamiltonian().matrix() * (-I * (0.5 * dt))).exp();
        let damp = (a * C64::new(-dt, 0.0)).exp();
        let step = &half * damp * &half;
        Self {
            step: to_sparse(&step),
            jumps,
            channels,
            dt,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One no-jump step without renormalization.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        self.step.matvec(psi)
    }

    pub fn step_matrix(&self) -> &SparseMatrix {
        &self.step
    }
}

/// Advances `state` by one step. Returns the model channel index of a
/// collapse if one occurred.
pub fn step<R: Rng>(prop: &Propagator, state: &mut ConditionedState, rng: &mut R) -> Result<Option<usize>> {
    let dt = prop.dt;
    let mut fired: Vec<(usize, Vec<C64>, f64)> = Vec::new();
    for (j, f) in prop.jumps.iter().enumerate() {
        let out = f.matvec(&state.amplitudes);
        let p = dt * out.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let u: f64 = rng.random();
        if u < p {
            fired.push((j, out, p));
        }
    }
    let chosen = match fired.len() {
        0 => None,
        1 => fired.pop(),
        _ => {
            let total: f64 = fired.iter().map(|f| f.2).sum();
            let mut target = rng.random::<f64>() * total;
            let mut pick = fired.len() - 1;
            for (i, f) in fired.iter().enumerate() {
                if target < f.2 {
                    pick = i;
                    break;
                }
                target -= f.2;
            }
            Some(fired.swap_remove(pick))
        }
    };
    state.time += dt;
    match chosen {
        Some((j, out, _)) => {
            state.amplitudes = out;
            state.renormalize()?;
            Ok(Some(prop.channels[j]))
        }
        None => {
            state.amplitudes = prop.apply(&state.amplitudes);
            state.renormalize()?;
            Ok(None)
        }
    }
}

/// `(upper population, lasing dipole)` of a conditioned state.
pub fn lasing_observables(model: &ModelSpec, psi: &[C64]) -> (f64, C64) {
    let s = model.space();
    let (lo, up) = model.lasing_levels();
    let pop = (0..=s.n_max()).map(|n| psi[s.index_unchecked(up, n)].norm_sqr()).sum();
    let dip = (0..s.n_max())
        .map(|n| psi[s.index_unchecked(up, n)] * psi[s.index_unchecked(lo, n + 1)].conj())
        .sum();
    (pop, dip)
}

/// Runs one trajectory, calling `observe(k, t, ψ)` at every recorded step `k`.
fn simulate(
    model: &ModelSpec,
    initial: &[C64],
    opts: &TrajectoryOptions,
    prop: &Propagator,
    stream: RngStream,
    mut observe: impl FnMut(f64, &[C64]),
) -> Result<Vec<CollapseEvent>> {
    if initial.len() != model.space().dim() {
        return Err(Error::Dimension {
            expected: model.space().dim(),
            found: initial.len(),
        });
    }
    let dt = prop.dt;
    let steps = opts.steps(dt);
    let mut rng = stream.rng();
    let mut state = ConditionedState::new(initial.to_vec())?;
    let mut events = Vec::new();
    observe(0.0, &state.amplitudes);
    for k in 1..=steps {
        if let Some(channel) = step(prop, &mut state, &mut rng)? {
            events.push(CollapseEvent {
                time: k as f64 * dt,
                channel,
            });
        }
        if k % opts.record_stride == 0 {
            observe(k as f64 * dt, &state.amplitudes);
        }
    }
    Ok(events)
}

pub fn run_trajectory(model: &ModelSpec, initial: &[C64], opts: &TrajectoryOptions, stream: RngStream) -> Result<TrajectoryRecord> {
    let dt = opts.resolve_dt(model)?;
    let prop = Propagator::new(model, dt);
    run_with(model, initial, opts, &prop, stream)
}

fn run_with(
    model: &ModelSpec,
    initial: &[C64],
    opts: &TrajectoryOptions,
    prop: &Propagator,
    stream: RngStream,
) -> Result<TrajectoryRecord> {
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        pop_upper: Vec::new(),
        dipole_mag: Vec::new(),
        dipole_re: Vec::new(),
        events: Vec::new(),
        channel_names: model.collapses().iter().map(|c| c.name.to_string()).collect(),
        dt: prop.dt,
        stream,
    };
    rec.events = simulate(model, initial, opts, prop, stream, |t, psi| {
        let (pop, dip) = lasing_observables(model, psi);
        rec.times.push(t);
        rec.pop_upper.push(pop.clamp(0.0, 1.0));
        rec.dipole_mag.push(dip.norm());
        rec.dipole_re.push(dip.re);
    })?;
    Ok(rec)
}

/// Independent trajectories on substreams `0..n_traj` of `seed`.
pub fn run_ensemble(
    model: &ModelSpec,
    initial: &[C64],
    opts: &TrajectoryOptions,
    n_traj: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<TrajectoryRecord>> {
    let dt = opts.resolve_dt(model)?;
    let prop = Propagator::new(model, dt);
    exec.map_range(n_traj, |k| run_with(model, initial, opts, &prop, RngStream::new(seed, k as u64)))
        .into_iter()
        .collect()
}

pub const MIN_ENSEMBLE: usize = 100;
const CHUNK: usize = 64;

/// Average of `|ψ_c⟩⟨ψ_c|` over `n_traj` trajectories at the recorded times.
/// Trajectories are reduced in fixed chunks so the sum does not depend on
/// the execution mode.
pub fn ensemble_density(
    model: &ModelSpec,
    initial: &[C64],
    opts: &TrajectoryOptions,
    n_traj: usize,
    seed: u64,
    exec: Exec,
) -> Result<(Vec<f64>, Vec<DMatrix<C64>>)> {
    if n_traj < MIN_ENSEMBLE {
        return Err(Error::Precondition(format!(
            "ensemble needs at least {MIN_ENSEMBLE} trajectories, got {n_traj}"
        )));
    }
    let dt = opts.resolve_dt(model)?;
    let prop = Propagator::new(model, dt);
    let d = model.space().dim();
    let mut times = Vec::new();
    let mut acc: Vec<DMatrix<C64>> = Vec::new();
    let mut start = 0;
    while start < n_traj {
        let end = (start + CHUNK).min(n_traj);
        let chunk = exec.map_range(end - start, |i| {
            let mut rhos = Vec::new();
            let mut ts = Vec::new();
            simulate(model, initial, opts, &prop, RngStream::new(seed, (start + i) as u64), |t, psi| {
                let v = nalgebra::DVector::from_column_slice(psi);
                rhos.push(&v * v.adjoint());
                ts.push(t);
            })
            .map(|_| (ts, rhos))
        });
        for res in chunk {
            let (ts, rhos) = res?;
            if acc.is_empty() {
                times = ts;
                acc = vec![DMatrix::zeros(d, d); rhos.len()];
            }
            for (a, r) in acc.iter_mut().zip(rhos) {
                *a += r;
            }
        }
        start = end;
    }
    let inv = C64::new(1.0 / n_traj as f64, 0.0);
    for a in &mut acc {
        *a *= inv;
    }
    Ok((times, acc))
}
