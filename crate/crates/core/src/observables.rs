//! Photon statistics of a steady state and the spontaneous-emission fraction β.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{StateSpace, C64};
use crate::liouvillian::SteadyState;
use crate::models::{RateParams, Scheme};

/// Mean photon numbers below this make the Fano factor meaningless.
pub const FANO_MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "value")]
pub enum Fano {
    Defined(f64),
    Undefined,
}

impl Fano {
    pub fn value(self) -> Option<f64> {
        match self {
            Fano::Defined(v) => Some(v),
            Fano::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonStats {
    pub mean_n: f64,
    pub fano: Fano,
    /// `p(j, n)` in flat basis order.
    pub populations: Vec<f64>,
    /// `p(n)` summed over atomic levels.
    pub photon_distribution: Vec<f64>,
}

impl PhotonStats {
    pub fn from_density(rho: &DMatrix<C64>, space: &StateSpace) -> Result<Self> {
        if rho.nrows() != space.dim() || rho.ncols() != space.dim() {
            return Err(Error::Dimension {
                expected: space.dim(),
                found: rho.nrows(),
            });
        }
        let populations: Vec<f64> = (0..space.dim()).map(|i| rho[(i, i)].re).collect();
        let mut photon_distribution = vec![0.0; space.photon_states()];
        for (i, (_, n)) in space.labels().enumerate() {
            photon_distribution[n] += populations[i];
        }
        let (m1, m2) = photon_distribution
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(a, b), (n, p)| (a + n as f64 * p, b + (n * n) as f64 * p));
        let mean_n = m1.max(0.0);
        let fano = if mean_n < FANO_MEAN_FLOOR {
            Fano::Undefined
        } else {
            Fano::Defined(((m2 - m1 * m1) / m1).max(0.0))
        };
        Ok(Self {
            mean_n,
            fano,
            populations,
            photon_distribution,
        })
    }

    /// Population of atomic level `level` summed over photon numbers.
    pub fn level_population(&self, space: &StateSpace, level: usize) -> Result<f64> {
        let lo = space.flat_index(level, 0)?;
        Ok(self.populations[lo..lo + space.photon_states()].iter().sum())
    }
}

pub fn photon_stats(ss: &SteadyState) -> Result<PhotonStats> {
    PhotonStats::from_density(&ss.rho, ss.model.space())
}

fn require_gamma(params: &RateParams) -> Result<()> {
    params.validate()?;
    if params.gamma <= 0.0 {
        return Err(Error::Domain("β requires a positive spontaneous rate γ".into()));
    }
    Ok(())
}

fn beta_from_cavity_rate(cavity_rate: f64, gamma: f64) -> f64 {
    if cavity_rate == 0.0 {
        return 0.0;
    }
    cavity_rate / (cavity_rate + gamma / 2.0)
}

pub fn beta_three_level(params: &RateParams) -> Result<f64> {
    require_gamma(params)?;
    let p = params;
    let denom = p.gamma + p.pump + 2.0 * p.kappa;
    Ok(beta_from_cavity_rate(2.0 * p.g * p.g / denom, p.gamma))
}

pub fn beta_four_level(params: &RateParams) -> Result<f64> {
    require_gamma(params)?;
    let p = params;
    let denom = p.gamma_f + 2.0 * p.kappa;
    if denom == 0.0 {
        return Err(Error::Domain("β requires γ_f + 2κ > 0".into()));
    }
    Ok(beta_from_cavity_rate(2.0 * p.g * p.g / denom, p.gamma))
}

/// β of the given scheme. The coherently pumped scheme shares the lasing
/// structure of the incoherent four-level one.
pub fn beta(scheme: Scheme, params: &RateParams) -> Result<f64> {
    match scheme {
        Scheme::ThreeIncoherent => beta_three_level(params),
        Scheme::FourIncoherent | Scheme::FourCoherent => beta_four_level(params),
    }
}

/// Nonnegative coupling `g` giving the four-level β at the other rates of `params`.
pub fn coupling_for_beta_four_level(beta: f64, params: &RateParams) -> Result<f64> {
    require_gamma(params)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("β must lie in [0, 1), got {beta}")));
    }
    let cavity_rate = beta / (1.0 - beta) * params.gamma / 2.0;
    Ok((cavity_rate * (params.gamma_f + 2.0 * params.kappa) / 2.0).sqrt())
}

/// Compares the upper-lasing amplitude `C_{3,n}` of the coupled
/// `(C_{3,n}, C_{2,n+1})` pair against its single-equation form with the fast
/// lower level eliminated. Both start from `C_{3,n} = 1`. Returns the largest
/// deviation over a window of five reduced decay times.
pub fn verify_adiabatic_reduction(params: &RateParams, n: usize) -> Result<f64> {
    let p = params;
    p.validate()?;
    let slowest = [p.gamma, p.g.abs(), p.kappa, p.pump].into_iter().fold(0.0, f64::max);
    if p.gamma_f < 50.0 * slowest || p.gamma_f <= 0.0 {
        return Err(Error::Precondition(format!(
            "adiabatic reduction needs γ_f ≥ 50·max(γ, g, κ, Γ) = {}, got {}",
            50.0 * slowest,
            p.gamma_f
        )));
    }
    let nf = n as f64;
    let d3 = p.gamma / 2.0 + nf * p.kappa;
    let d2 = p.gamma_f / 2.0 + (nf + 1.0) * p.kappa;
    let c = p.g * (nf + 1.0).sqrt();
    let full = Matrix2::new(-d3, -c, c, -d2);
    let reduced_rate = d3 + p.g * p.g * (nf + 1.0) / (p.kappa * (nf + 1.0) + p.gamma_f / 2.0);
    let t_end = 5.0 / reduced_rate;
    let samples = 400;
    let mut worst: f64 = 0.0;
    for k in 0..=samples {
        let t = t_end * k as f64 / samples as f64;
        let c3_full = (full * t).exp()[(0, 0)];
        let c3_reduced = (-reduced_rate * t).exp();
        worst = worst.max((c3_full - c3_reduced).abs());
    }
    Ok(worst)
}
