//! Truncated atom ⊗ cavity-mode state space and its elementary operators.
//!
//! Basis states are labeled `(level, photons)` with `level` counted from 1.
//! The flat ordering is level-major: all photon numbers `0..=n_max` of level 1,
//! then those of level 2, and so on.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateSpace {
    n_levels: usize,
    n_max: usize,
}

impl StateSpace {
    pub fn new(n_levels: usize, n_max: usize) -> Result<Self> {
        if !(1..=8).contains(&n_levels) {
            return Err(Error::Config(format!(
                "atomic level count must lie in 1..=8, got {n_levels}"
            )));
        }
        Ok(Self { n_levels, n_max })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn photon_states(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.n_levels * (self.n_max + 1)
    }

    pub fn flat_index(&self, level: usize, photons: usize) -> Result<usize> {
        if level == 0 || level > self.n_levels {
            return Err(Error::Index(format!(
                "atomic level {level} outside 1..={}",
                self.n_levels
            )));
        }
        if photons > self.n_max {
            return Err(Error::Index(format!(
                "photon number {photons} exceeds n_max = {}",
                self.n_max
            )));
        }
        Ok(self.index_unchecked(level, photons))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, level: usize, photons: usize) -> usize {
        (level - 1) * (self.n_max + 1) + photons
    }

    /// Inverse of [`StateSpace::flat_index`].
    pub fn label(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.dim() {
            return Err(Error::Index(format!(
                "flat index {index} outside 0..{}",
                self.dim()
            )));
        }
        Ok(self.label_unchecked(index))
    }

    #[inline]
    pub(crate) fn label_unchecked(&self, index: usize) -> (usize, usize) {
        let per = self.n_max + 1;
        (index / per + 1, index % per)
    }

    /// All `(level, photons)` labels in flat order.
    pub fn labels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim()).map(move |i| self.label_unchecked(i))
    }

    pub fn basis_vector(&self, level: usize, photons: usize) -> Result<Vec<C64>> {
        let idx = self.flat_index(level, photons)?;
        let mut v = vec![ZERO; self.dim()];
        v[idx] = ONE;
        Ok(v)
    }

    pub fn projector(&self, level: usize, photons: usize) -> Result<DMatrix<C64>> {
        let idx = self.flat_index(level, photons)?;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m[(idx, idx)] = ONE;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Annihilation,
    Creation,
    AtomicTransition,
    Hamiltonian,
    Collapse,
    Identity,
    Other,
}

/// Dense operator on a [`StateSpace`] with a semantic tag.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    kind: OperatorKind,
    matrix: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn new(kind: OperatorKind, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Self { kind, matrix })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_kind(mut self, kind: OperatorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn adjoint(&self) -> Self {
        let kind = match self.kind {
            OperatorKind::Annihilation => OperatorKind::Creation,
            OperatorKind::Creation => OperatorKind::Annihilation,
            k => k,
        };
        Self {
            kind,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            kind: self.kind,
            matrix: &self.matrix * factor,
        }
    }

    pub fn product(&self, rhs: &OperatorMatrix) -> Self {
        Self {
            kind: OperatorKind::Other,
            matrix: &self.matrix * &rhs.matrix,
        }
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let v = nalgebra::DVectorView::from_slice(psi, psi.len());
        (&self.matrix * v).as_slice().to_vec()
    }

    /// `(row, col, value)` for every structurally nonzero entry, column-major.
    pub fn nonzeros(&self) -> Vec<(usize, usize, C64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for c in 0..n {
            for r in 0..n {
                let v = self.matrix[(r, c)];
                if v != ZERO {
                    out.push((r, c, v));
                }
            }
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|r| (0..n).all(|c| (self.matrix[(r, c)] - self.matrix[(c, r)].conj()).norm() <= tol))
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }
}

pub fn identity(space: &StateSpace) -> OperatorMatrix {
    OperatorMatrix {
        kind: OperatorKind::Identity,
        matrix: DMatrix::identity(space.dim(), space.dim()),
    }
}

/// Cavity annihilation operator `a` with `<j,n-1|a|j,n> = sqrt(n)`.
pub fn annihilation(space: &StateSpace) -> OperatorMatrix {
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for level in 1..=space.n_levels() {
        for n in 1..=space.n_max() {
            let from = space.index_unchecked(level, n);
            let to = space.index_unchecked(level, n - 1);
            m[(to, from)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    OperatorMatrix {
        kind: OperatorKind::Annihilation,
        matrix: m,
    }
}

pub fn creation(space: &StateSpace) -> OperatorMatrix {
    annihilation(space).adjoint()
}

/// Photon number operator `a†a`.
pub fn number(space: &StateSpace) -> OperatorMatrix {
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for (i, (_, n)) in space.labels().enumerate() {
        m[(i, i)] = C64::new(n as f64, 0.0);
    }
    OperatorMatrix {
        kind: OperatorKind::Other,
        matrix: m,
    }
}

/// Atomic transition `σ_{from,to} = |to⟩⟨from|`, identity on the field.
pub fn atomic_transition(space: &StateSpace, from: usize, to: usize) -> Result<OperatorMatrix> {
    for level in [from, to] {
        if level == 0 || level > space.n_levels() {
            return Err(Error::Index(format!(
                "atomic level {level} outside 1..={}",
                space.n_levels()
            )));
        }
    }
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for n in 0..=space.n_max() {
        m[(space.index_unchecked(to, n), space.index_unchecked(from, n))] = ONE;
    }
    Ok(OperatorMatrix {
        kind: OperatorKind::AtomicTransition,
        matrix: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_basis_element_is_zero() {
        let s = StateSpace::new(2, 3).unwrap();
        assert_eq!(s.flat_index(1, 0).unwrap(), 0);
        assert_eq!(s.dim(), 8);
    }

    #[test]
    fn round_trip_single_label() {
        let s = StateSpace::new(2, 3).unwrap();
        let i = s.flat_index(1, 1).unwrap();
        assert_eq!(s.label(i).unwrap(), (1, 1));
    }

    #[test]
    fn enumeration_is_bijective() {
        let s = StateSpace::new(3, 2).unwrap();
        let labels: std::collections::HashSet<_> = s.labels().collect();
        assert_eq!(labels.len(), 9);
        for (level, n) in labels {
            let i = s.flat_index(level, n).unwrap();
            assert_eq!(s.label(i).unwrap(), (level, n));
        }
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        let s = StateSpace::new(2, 3).unwrap();
        assert!(matches!(s.flat_index(0, 0), Err(Error::Index(_))));
        assert!(matches!(s.flat_index(3, 0), Err(Error::Index(_))));
        assert!(matches!(s.flat_index(1, 4), Err(Error::Index(_))));
        assert!(matches!(s.label(8), Err(Error::Index(_))));
    }

    #[test]
    fn annihilation_ladder() {
        let s1 = StateSpace::new(2, 1).unwrap();
        let a = annihilation(&s1);
        for level in 1..=2 {
            let out = a.apply(&s1.basis_vector(level, 1).unwrap());
            assert_eq!(out, s1.basis_vector(level, 0).unwrap());
            let vac = a.apply(&s1.basis_vector(level, 0).unwrap());
            assert!(vac.iter().all(|z| *z == ZERO));
        }

        let s3 = StateSpace::new(3, 3).unwrap();
        let a = annihilation(&s3);
        for level in 1..=3 {
            let r = s3.flat_index(level, 2).unwrap();
            let c = s3.flat_index(level, 3).unwrap();
            assert_eq!(a.matrix()[(r, c)], C64::new(3f64.sqrt(), 0.0));
        }
        let n_op = a.adjoint().product(&a);
        assert!((n_op.matrix() - number(&s3).matrix()).norm() < 1e-14);
    }

    #[test]
    fn commutator_is_identity_below_top_sector() {
        let s = StateSpace::new(3, 5).unwrap();
        let a = annihilation(&s);
        let ad = a.adjoint();
        let comm = a.product(&ad).matrix() - ad.product(&a).matrix();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let (_, n) = s.label(i).unwrap();
                let expected = if i == j {
                    if n < s.n_max() {
                        1.0
                    } else {
                        // truncation: [a, a†] = -n_max on the top sector
                        -(s.n_max() as f64)
                    }
                } else {
                    0.0
                };
                assert!((comm[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transition_action_and_adjoint() {
        let s = StateSpace::new(3, 4).unwrap();
        let s32 = atomic_transition(&s, 3, 2).unwrap();
        for n in 0..=4 {
            assert_eq!(
                s32.apply(&s.basis_vector(3, n).unwrap()),
                s.basis_vector(2, n).unwrap()
            );
            assert!(s32
                .apply(&s.basis_vector(1, n).unwrap())
                .iter()
                .all(|z| *z == ZERO));
        }
        assert_eq!(s32.nonzeros().len(), 5);
        let s13 = atomic_transition(&s, 1, 3).unwrap();
        let s31 = atomic_transition(&s, 3, 1).unwrap();
        assert_eq!(s13.adjoint().matrix(), s31.matrix());
        assert!(matches!(atomic_transition(&s, 4, 1), Err(Error::Index(_))));
    }

    #[test]
    fn elementary_operators_are_real() {
        let s = StateSpace::new(4, 3).unwrap();
        assert!(annihilation(&s).is_real());
        for i in 1..=4 {
            for j in 1..=4 {
                assert!(atomic_transition(&s, i, j).unwrap().is_real());
            }
        }
    }

    proptest! {
        #[test]
        fn transition_composition(levels in 2usize..=4, n_max in 0usize..4,
                                  i in 1usize..=4, j in 1usize..=4, k in 1usize..=4, l in 1usize..=4) {
            prop_assume!(i <= levels && j <= levels && k <= levels && l <= levels);
            let s = StateSpace::new(levels, n_max).unwrap();
            // σ_ij σ_kl = |j⟩⟨i|l⟩⟨k| = δ_il σ_kj
            let lhs = atomic_transition(&s, i, j).unwrap().product(&atomic_transition(&s, k, l).unwrap());
            let expected = if i == l {
                atomic_transition(&s, k, j).unwrap().into_matrix()
            } else {
                DMatrix::zeros(s.dim(), s.dim())
            };
            prop_assert_eq!(lhs.matrix(), &expected);
        }

        #[test]
        fn flat_index_round_trips(levels in 1usize..=4, n_max in 0usize..20, seed in 0usize..10_000) {
            let s = StateSpace::new(levels, n_max).unwrap();
            let idx = seed % s.dim();
            let (level, n) = s.label(idx).unwrap();
            prop_assert_eq!(s.flat_index(level, n).unwrap(), idx);
        }
    }
}
