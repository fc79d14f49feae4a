//! The three laser schemes, each rendered as a Hamiltonian plus a list of
//! Lindblad collapse channels.
//!
//! A channel with operator `F` and rate `r` contributes
//! `r (F ρ F† − ½{F†F, ρ})` to the master equation. The cavity channel uses
//! `F = a` with rate `2κ`. All rates are in units of the lasing-transition
//! spontaneous rate, and all models are written in the frame rotating at the
//! common atom and cavity frequency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, atomic_transition, creation, OperatorKind, OperatorMatrix, StateSpace, C64, I};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateParams {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Incoherent pump rate.
    #[serde(rename = "Gamma")]
    pub pump: f64,
    pub gamma_f: f64,
    pub gamma_4: f64,
    /// Coherent pump amplitude.
    #[serde(rename = "E_pump")]
    pub e_pump: f64,
}

impl RateParams {
    /// `(config key, value)` for every field.
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("Gamma", self.pump),
            ("gamma_f", self.gamma_f),
            ("gamma_4", self.gamma_4),
            ("E_pump", self.e_pump),
        ]
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries().into_iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "g" => &mut self.g,
            "kappa" => &mut self.kappa,
            "gamma" => &mut self.gamma,
            "Gamma" => &mut self.pump,
            "gamma_f" => &mut self.gamma_f,
            "gamma_4" => &mut self.gamma_4,
            "E_pump" => &mut self.e_pump,
            other => return Err(Error::Config(format!("unknown parameter `{other}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Finite values and nonnegative rates. `g` and `E_pump` may take either sign.
    pub fn validate(&self) -> Result<()> {
        for (key, value) in self.entries() {
            if !value.is_finite() {
                return Err(Error::Config(format!("parameter `{key}` must be finite, got {value}")));
            }
            if !matches!(key, "g" | "E_pump") && value < 0.0 {
                return Err(Error::Config(format!("rate `{key}` must be nonnegative, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ThreeIncoherent,
    FourIncoherent,
    FourCoherent,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::ThreeIncoherent, Scheme::FourIncoherent, Scheme::FourCoherent];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::ThreeIncoherent => "three-incoherent",
            Scheme::FourIncoherent => "four-incoherent",
            Scheme::FourCoherent => "four-coherent",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.tag() == tag)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{tag}`")))
    }

    /// Atomic levels kept in the state space. The incoherent four-level
    /// scheme has its top pump level already eliminated.
    pub fn n_levels(self) -> usize {
        match self {
            Scheme::ThreeIncoherent => 2,
            Scheme::FourIncoherent => 3,
            Scheme::FourCoherent => 4,
        }
    }

    /// `(lower, upper)` levels of the lasing transition.
    pub fn lasing_levels(self) -> (usize, usize) {
        match self {
            Scheme::ThreeIncoherent => (1, 2),
            Scheme::FourIncoherent | Scheme::FourCoherent => (2, 3),
        }
    }

    /// Excitation charge of each atomic level. A basis state `(j, n)` carries
    /// `charges[j-1] + n`, and every operator of the model shifts it by a fixed amount.
    pub fn level_charges(self) -> &'static [i32] {
        match self {
            Scheme::ThreeIncoherent => &[0, 1],
            Scheme::FourIncoherent => &[0, 0, 1],
            Scheme::FourCoherent => &[0, 0, 1, 0],
        }
    }

    pub fn pump_key(self) -> &'static str {
        match self {
            Scheme::ThreeIncoherent | Scheme::FourIncoherent => "Gamma",
            Scheme::FourCoherent => "E_pump",
        }
    }

    /// Keys that must be zero for this scheme.
    pub fn unused_keys(self) -> &'static [&'static str] {
        match self {
            Scheme::ThreeIncoherent => &["gamma_f", "gamma_4", "E_pump"],
            Scheme::FourIncoherent => &["gamma_4", "E_pump"],
            Scheme::FourCoherent => &["Gamma"],
        }
    }

    pub fn check_params(self, params: &RateParams) -> Result<()> {
        params.validate()?;
        for key in self.unused_keys() {
            let v = params.get(key).unwrap_or(0.0);
            if v != 0.0 {
                return Err(Error::Config(format!(
                    "parameter `{key}` is not used by the {} scheme and must be zero, got {v}",
                    self.tag()
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_tag(s)
    }
}

/// One Lindblad channel: unscaled jump operator and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub name: &'static str,
    pub operator: OperatorMatrix,
    pub rate: f64,
}

impl Collapse {
    /// `sqrt(rate) · operator`.
    pub fn scaled_operator(&self) -> OperatorMatrix {
        self.operator.scaled(C64::new(self.rate.sqrt(), 0.0)).with_kind(OperatorKind::Collapse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    scheme: Scheme,
    params: RateParams,
    space: StateSpace,
    hamiltonian: OperatorMatrix,
    collapses: Vec<Collapse>,
}

impl ModelSpec {
    pub fn new(scheme: Scheme, params: RateParams, n_max: usize) -> Result<Self> {
        match scheme {
            Scheme::ThreeIncoherent => three_level_incoherent(params, n_max),
            Scheme::FourIncoherent => four_level_incoherent(params, n_max),
            Scheme::FourCoherent => four_level_coherent(params, n_max),
        }
    }

    /// Assembles a model from explicit parts. The Hamiltonian must be Hermitian
    /// and every operator must live on `space`.
    pub fn from_parts(
        scheme: Scheme,
        params: RateParams,
        space: StateSpace,
        hamiltonian: OperatorMatrix,
        collapses: Vec<Collapse>,
    ) -> Result<Self> {
        let d = space.dim();
        if hamiltonian.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: hamiltonian.dim(),
            });
        }
        if !hamiltonian.is_hermitian(1e-12) {
            return Err(Error::Config("Hamiltonian is not Hermitian".into()));
        }
        for c in &collapses {
            if c.operator.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: c.operator.dim(),
                });
            }
            if !(c.rate.is_finite() && c.rate >= 0.0) {
                return Err(Error::Config(format!("collapse `{}` has invalid rate {}", c.name, c.rate)));
            }
        }
        Ok(Self {
            scheme,
            params,
            space,
            hamiltonian: hamiltonian.with_kind(OperatorKind::Hamiltonian),
            collapses,
        })
    }

    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        Self::new(self.scheme, self.params, n_max)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn collapses(&self) -> &[Collapse] {
        &self.collapses
    }

    /// Channels with a strictly positive rate.
    pub fn active_collapses(&self) -> impl Iterator<Item = &Collapse> {
        self.collapses.iter().filter(|c| c.rate > 0.0)
    }

    pub fn lasing_levels(&self) -> (usize, usize) {
        self.scheme.lasing_levels()
    }

    /// Charge of every basis state in flat order.
    pub fn state_charges(&self) -> Vec<i32> {
        let q = self.scheme.level_charges();
        self.space.labels().map(|(j, n)| q[j - 1] + n as i32).collect()
    }

    /// Fastest rate in the model, counting coherent couplings.
    pub fn max_rate(&self) -> f64 {
        self.collapses
            .iter()
            .map(|c| c.rate)
            .chain([self.params.g.abs(), self.params.e_pump.abs()])
            .fold(0.0, f64::max)
    }
}

fn check_n_max(n_max: usize) -> Result<()> {
    if n_max < 1 {
        return Err(Error::Config("photon truncation n_max must be at least 1".into()));
    }
    Ok(())
}

fn sigma(space: &StateSpace, from: usize, to: usize) -> OperatorMatrix {
    atomic_transition(space, from, to).expect("level indices fixed by the scheme")
}

/// `i·c·(X − X†)`.
fn i_antihermitian(x: &OperatorMatrix, c: f64) -> nalgebra::DMatrix<C64> {
    (x.matrix() - x.matrix().adjoint()) * (I * c)
}

/// `H = i g (a† σ_{u→l} − a σ_{l→u})` on the lasing transition.
fn jaynes_cummings(space: &StateSpace, g: f64, lower: usize, upper: usize) -> nalgebra::DMatrix<C64> {
    let emit = creation(space).product(&sigma(space, upper, lower));
    i_antihermitian(&emit, g)
}

fn collapse(name: &'static str, operator: OperatorMatrix, rate: f64) -> Collapse {
    Collapse { name, operator, rate }
}

/// Two-level atom with incoherent pump `1 → 2` in a single-mode cavity.
pub fn three_level_incoherent(params: RateParams, n_max: usize) -> Result<ModelSpec> {
    let scheme = Scheme::ThreeIncoherent;
    scheme.check_params(&params)?;
    check_n_max(n_max)?;
    let space = StateSpace::new(scheme.n_levels(), n_max)?;
    let h = OperatorMatrix::new(OperatorKind::Hamiltonian, jaynes_cummings(&space, params.g, 1, 2))?;
    let collapses = vec![
        collapse("cavity", annihilation(&space), 2.0 * params.kappa),
        collapse("spontaneous", sigma(&space, 2, 1), params.gamma),
        collapse("pump", sigma(&space, 1, 2), params.pump),
    ];
    ModelSpec::from_parts(scheme, params, space, h, collapses)
}

/// Levels 1 (ground), 2 (lower lasing), 3 (upper lasing); pump `1 → 3`.
pub fn four_level_incoherent(params: RateParams, n_max: usize) -> Result<ModelSpec> {
    let scheme = Scheme::FourIncoherent;
    scheme.check_params(&params)?;
    check_n_max(n_max)?;
    let space = StateSpace::new(scheme.n_levels(), n_max)?;
    let h = OperatorMatrix::new(OperatorKind::Hamiltonian, jaynes_cummings(&space, params.g, 2, 3))?;
    let collapses = vec![
        collapse("cavity", annihilation(&space), 2.0 * params.kappa),
        collapse("pump", sigma(&space, 1, 3), params.pump),
        collapse("spontaneous", sigma(&space, 3, 2), params.gamma),
        collapse("lower-decay", sigma(&space, 2, 1), params.gamma_f),
    ];
    ModelSpec::from_parts(scheme, params, space, h, collapses)
}

/// Coherent drive `1 ↔ 4` with amplitude `E_pump`, level 4 decaying into 3.
pub fn four_level_coherent(params: RateParams, n_max: usize) -> Result<ModelSpec> {
    let scheme = Scheme::FourCoherent;
    scheme.check_params(&params)?;
    check_n_max(n_max)?;
    let space = StateSpace::new(scheme.n_levels(), n_max)?;
    let drive = i_antihermitian(&sigma(&space, 4, 1), params.e_pump);
    let h = OperatorMatrix::new(OperatorKind::Hamiltonian, jaynes_cummings(&space, params.g, 2, 3) + drive)?;
    let collapses = vec![
        collapse("cavity", annihilation(&space), 2.0 * params.kappa),
        collapse("spontaneous", sigma(&space, 3, 2), params.gamma),
        collapse("lower-decay", sigma(&space, 2, 1), params.gamma_f),
        collapse("pump-level-decay", sigma(&space, 4, 3), params.gamma_4),
    ];
    ModelSpec::from_parts(scheme, params, space, h, collapses)
}
