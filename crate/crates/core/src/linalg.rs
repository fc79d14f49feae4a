//! Sparse storage and the two direct solvers used on Liouvillian blocks.
//!
//! [`BandedLu`] factors charge-ordered sector matrices, whose bandwidth is a
//! few times the number of atomic levels squared independent of the photon
//! truncation. [`ShiftedHessenberg`] reduces a dense matrix once and then
//! solves `(M + σ I) x = b` for many shifts at `O(n²)` each.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{C64, ZERO};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != ZERO) {
            return;
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != ZERO {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        match self.indices[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => ZERO,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        self.iter().fold((0, 0), |(kl, ku), (r, c, _)| {
            if r >= c {
                (kl.max(r - c), ku)
            } else {
                (kl, ku.max(c - r))
            }
        })
    }
}

/// Square band matrix in LAPACK `gbtrf` layout, with `kl` extra rows reserved
/// for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
}

impl BandMatrix {
    pub fn from_sparse(m: &SparseMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let (kl, ku) = m.bandwidths();
        let mut band = Self::zeros(m.nrows(), kl, ku);
        for (r, c, v) in m.iter() {
            *band.at_mut(r, c) = v;
        }
        Ok(band)
    }

    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![ZERO; ldab * n.max(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn offset(&self, r: usize, c: usize) -> usize {
        self.kl + self.ku + r - c + c * self.ldab
    }

    #[inline]
    fn in_band(&self, r: usize, c: usize) -> bool {
        r + self.ku >= c && c + self.kl >= r
    }

    /// Mutable access to an entry inside the original band.
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut C64 {
        assert!(self.in_band(r, c), "entry ({r}, {c}) outside band");
        let k = self.offset(r, c);
        &mut self.ab[k]
    }

    pub fn add_to_diagonal(&mut self, shift: C64) {
        for j in 0..self.n {
            let k = self.offset(j, j);
            self.ab[k] += shift;
        }
    }

    /// Overwrites row `r` with the unit row `e_r`.
    pub fn set_unit_row(&mut self, r: usize) {
        let lo = r.saturating_sub(self.ku);
        let hi = (r + self.kl).min(self.n - 1);
        for c in lo..=hi {
            let k = self.offset(r, c);
            self.ab[k] = ZERO;
        }
        let k = self.offset(r, r);
        self.ab[k] = C64::new(1.0, 0.0);
    }

    /// LU factorization with partial pivoting. Never fails; exact zero pivots
    /// are reported through [`BandedLu::min_pivot`].
    #[allow(clippy::needless_range_loop)]
    pub fn factor(mut self) -> BandedLu {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let ldab = self.ldab;
        let mut piv = vec![0usize; n];
        let mut min_pivot = f64::INFINITY;
        let mut ju = 0usize;
        let idx = |r: usize, c: usize| kv + r - c + c * ldab;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0usize;
            let mut best = -1.0;
            for t in 0..=km {
                let v = self.ab[idx(j + t, j)].norm();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            piv[j] = j + jp;
            min_pivot = min_pivot.min(best);
            if best == 0.0 {
                continue;
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    self.ab.swap(idx(j + jp, c), idx(j, c));
                }
            }
            let inv = C64::new(1.0, 0.0) / self.ab[idx(j, j)];
            for t in 1..=km {
                self.ab[idx(j + t, j)] *= inv;
            }
            for c in (j + 1)..=ju {
                let u = self.ab[idx(j, c)];
                if u == ZERO {
                    continue;
                }
                for t in 1..=km {
                    let l = self.ab[idx(j + t, j)];
                    self.ab[idx(j + t, c)] -= l * u;
                }
            }
        }
        BandedLu {
            band: self,
            piv,
            min_pivot,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    band: BandMatrix,
    piv: Vec<usize>,
    min_pivot: f64,
}

impl BandedLu {
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Number of pivots at or below `tol`.
    pub fn small_pivots(&self, tol: f64) -> usize {
        let kv = self.band.kl + self.band.ku;
        (0..self.band.n)
            .filter(|&j| self.band.ab[kv + j * self.band.ldab].norm() <= tol)
            .count()
    }

    pub fn solve_in_place(&self, b: &mut [C64]) -> Result<()> {
        let BandMatrix { n, kl, ku, ldab, ref ab } = self.band;
        if b.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: b.len(),
            });
        }
        if self.min_pivot == 0.0 {
            return Err(Error::Numerical {
                message: "singular banded system".into(),
                residual: f64::INFINITY,
            });
        }
        let kv = kl + ku;
        let idx = |r: usize, c: usize| kv + r - c + c * ldab;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != ZERO {
                for t in 1..=km {
                    b[j + t] -= ab[idx(j + t, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= ab[idx(j, j)];
            let bj = b[j];
            if bj == ZERO {
                continue;
            }
            for i in j.saturating_sub(kv)..j {
                b[i] -= ab[idx(i, j)] * bj;
            }
        }
        Ok(())
    }
}

/// `M = Q H Q†` with `H` upper Hessenberg, reused for every shift.
#[derive(Debug, Clone)]
pub struct ShiftedHessenberg {
    q: DMatrix<C64>,
    h: DMatrix<C64>,
}

impl ShiftedHessenberg {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let (q, h) = nalgebra::linalg::Hessenberg::new(m).unpack();
        Ok(Self { q, h })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn q(&self) -> &DMatrix<C64> {
        &self.q
    }

    /// Solves `(H + shift I) y = c` where `c` is already expressed in the
    /// Hessenberg basis (`c = Q† b`). Returns `y`; the caller maps back with `Q`.
    pub fn solve_reduced(&self, shift: C64, c: &[C64]) -> Result<Vec<C64>> {
        let n = self.dim();
        let mut a = self.h.clone();
        for j in 0..n {
            a[(j, j)] += shift;
        }
        let mut y = c.to_vec();
        for j in 0..n.saturating_sub(1) {
            if a[(j + 1, j)].norm() > a[(j, j)].norm() {
                for col in j..n {
                    a.swap((j, col), (j + 1, col));
                }
                y.swap(j, j + 1);
            }
            let pivot = a[(j, j)];
            if pivot == ZERO {
                continue;
            }
            let m = a[(j + 1, j)] / pivot;
            if m != ZERO {
                for col in (j + 1)..n {
                    let u = a[(j, col)];
                    a[(j + 1, col)] -= m * u;
                }
                let yj = y[j];
                y[j + 1] -= m * yj;
            }
        }
        for j in (0..n).rev() {
            let d = a[(j, j)];
            if d == ZERO {
                return Err(Error::Numerical {
                    message: "singular shifted Hessenberg system".into(),
                    residual: f64::INFINITY,
                });
            }
            let mut s = y[j];
            for col in (j + 1)..n {
                s -= a[(j, col)] * y[col];
            }
            y[j] = s / d;
        }
        Ok(y)
    }

    /// `Q† b`.
    pub fn to_reduced(&self, b: &[C64]) -> Vec<C64> {
        let v = DVector::from_column_slice(b);
        (self.q.adjoint() * v).as_slice().to_vec()
    }
}

/// Column-stacked vectorization: `vec(ρ)[r + c·d] = ρ[r, c]`.
pub fn stack(rho: &DMatrix<C64>) -> Vec<C64> {
    rho.as_slice().to_vec()
}

pub fn unstack(v: &[C64], dim: usize) -> Result<DMatrix<C64>> {
    if v.len() != dim * dim {
        return Err(Error::Dimension {
            expected: dim * dim,
            found: v.len(),
        });
    }
    Ok(DMatrix::from_column_slice(dim, dim, v))
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `½‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().iter().sum()
}

/// Trapezoid integral on a uniform grid.
pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => spacing * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}
