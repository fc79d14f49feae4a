#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use satl_core::{Generator, ModelSpec, RateParams, Scheme, SteadyState};

/// Hand-written model description used by the element-equation oracle.
/// Levels are 1-based.
pub struct ElementModel {
    pub n_levels: usize,
    pub n_max: usize,
    pub lower: usize,
    pub upper: usize,
    pub g: f64,
    pub kappa: f64,
    /// `(from, to, rate)` incoherent atomic transitions.
    pub jumps: Vec<(usize, usize, f64)>,
    /// `(a, b, E)` for a drive `iE(|a⟩⟨b| − |b⟩⟨a|)`.
    pub drive: Option<(usize, usize, f64)>,
}

impl ElementModel {
    pub fn of(scheme: Scheme, p: &RateParams, n_max: usize) -> Self {
        match scheme {
            Scheme::ThreeIncoherent => Self {
                n_levels: 2,
                n_max,
                lower: 1,
                upper: 2,
                g: p.g,
                kappa: p.kappa,
                jumps: vec![(2, 1, p.gamma), (1, 2, p.pump)],
                drive: None,
            },
            Scheme::FourIncoherent => Self {
                n_levels: 3,
                n_max,
                lower: 2,
                upper: 3,
                g: p.g,
                kappa: p.kappa,
                jumps: vec![(1, 3, p.pump), (3, 2, p.gamma), (2, 1, p.gamma_f)],
                drive: None,
            },
            Scheme::FourCoherent => Self {
                n_levels: 4,
                n_max,
                lower: 2,
                upper: 3,
                g: p.g,
                kappa: p.kappa,
                jumps: vec![(3, 2, p.gamma), (2, 1, p.gamma_f), (4, 3, p.gamma_4)],
                drive: Some((1, 4, p.e_pump)),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.n_levels * (self.n_max + 1)
    }

    fn idx(&self, level: usize, n: usize) -> usize {
        (level - 1) * (self.n_max + 1) + n
    }

    /// `dρ/dt` written element by element.
    pub fn rhs(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim();
        let nm = self.n_max;
        let (l, u, g) = (self.lower, self.upper, self.g);
        let r = |i: usize, n: usize, j: usize, m: usize| rho[(self.idx(i, n), self.idx(j, m))];
        let mut out = DMatrix::zeros(d, d);
        for i in 1..=self.n_levels {
            for n in 0..=nm {
                for j in 1..=self.n_levels {
                    for m in 0..=nm {
                        let mut v = C64::new(0.0, 0.0);
                        let sq = |k: usize| (k as f64).sqrt();
                        // coupling, left action
                        if i == l && n >= 1 {
                            v += g * sq(n) * r(u, n - 1, j, m);
                        }
                        if i == u && n < nm {
                            v -= g * sq(n + 1) * r(l, n + 1, j, m);
                        }
                        // coupling, right action
                        if j == u && m < nm {
                            v -= g * sq(m + 1) * r(i, n, l, m + 1);
                        }
                        if j == l && m >= 1 {
                            v += g * sq(m) * r(i, n, u, m - 1);
                        }
                        if let Some((a, b, e)) = self.drive {
                            if i == a {
                                v += e * r(b, n, j, m);
                            }
                            if i == b {
                                v -= e * r(a, n, j, m);
                            }
                            if j == b {
                                v -= e * r(i, n, a, m);
                            }
                            if j == a {
                                v += e * r(i, n, b, m);
                            }
                        }
                        // cavity loss
                        if n < nm && m < nm {
                            v += 2.0 * self.kappa * (((n + 1) * (m + 1)) as f64).sqrt() * r(i, n + 1, j, m + 1);
                        }
                        v -= self.kappa * (n + m) as f64 * r(i, n, j, m);
                        for &(f, t, rate) in &self.jumps {
                            if i == t && j == t {
                                v += rate * r(f, n, f, m);
                            }
                            let hits = (i == f) as u8 + (j == f) as u8;
                            v -= 0.5 * rate * hits as f64 * r(i, n, j, m);
                        }
                        out[(self.idx(i, n), self.idx(j, m))] = v;
                    }
                }
            }
        }
        out
    }
}

pub fn random_matrix(d: usize, seed: u64) -> DMatrix<C64> {
    // xorshift keeps the oracle free of library code
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    DMatrix::from_fn(d, d, |_, _| C64::new(next(), next()))
}

/// `2 Re ∫₀^∞ e^{iωτ} ⟨a†(0) a(τ)⟩ dτ` from RK4 integration of the
/// regression equation and one FFT, on the FFT frequencies `2πk/(N h)` for
/// `|k| ≤ k_max`. Returns `(omegas, spectrum)`.
#[allow(clippy::needless_range_loop)]
pub fn time_domain_spectrum(ss: &SteadyState, gen: &Generator, h: f64, n_fft: usize, k_max: usize) -> (Vec<f64>, Vec<f64>) {
    let d = ss.rho.nrows();
    let ns = ss.model.space().n_max();
    let mut a = DMatrix::<C64>::zeros(d, d);
    for lvl in 1..=ss.model.space().n_levels() {
        for n in 1..=ns {
            let i = ss.model.space().flat_index(lvl, n - 1).unwrap();
            let j = ss.model.space().flat_index(lvl, n).unwrap();
            a[(i, j)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    let tr = |x: &DMatrix<C64>| (&a * x).trace();
    let mut x = &ss.rho * a.adjoint();
    let g0 = tr(&x);
    let dg0 = tr(&gen.apply(&x));
    let mut samples = vec![C64::new(0.0, 0.0); n_fft];
    samples[0] = g0;
    for j in 1..n_fft / 2 {
        let k1 = gen.apply(&x);
        let k2 = gen.apply(&(&x + &k1 * C64::new(h / 2.0, 0.0)));
        let k3 = gen.apply(&(&x + &k2 * C64::new(h / 2.0, 0.0)));
        let k4 = gen.apply(&(&x + &k3 * C64::new(h, 0.0)));
        x += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        samples[j] = tr(&x);
        if samples[j].norm() < 1e-13 * g0.norm() {
            break;
        }
    }
    let mut buf = samples.clone();
    FftPlanner::new().plan_fft_inverse(n_fft).process(&mut buf);
    let dw = 2.0 * std::f64::consts::PI / (n_fft as f64 * h);
    let mut omegas = Vec::new();
    let mut spec = Vec::new();
    for k in -(k_max as i64)..=(k_max as i64) {
        let w = k as f64 * dw;
        let sum = buf[k.rem_euclid(n_fft as i64) as usize];
        // trapezoid on the half line plus the first endpoint correction
        let f = h * (sum - g0 * 0.5) + h * h / 12.0 * (dg0 + C64::new(0.0, w) * g0);
        omegas.push(w);
        spec.push(2.0 * f.re);
    }
    (omegas, spec)
}

pub fn normalize(s: &[f64], h: f64) -> Vec<f64> {
    let n = s.len();
    let integral = h * (s.iter().sum::<f64>() - 0.5 * (s[0] + s[n - 1]));
    s.iter().map(|v| v / integral).collect()
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn model(scheme: Scheme, p: RateParams, n_max: usize) -> ModelSpec {
    ModelSpec::new(scheme, p, n_max).unwrap()
}
