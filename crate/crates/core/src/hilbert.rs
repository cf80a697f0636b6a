//! Finite-dimensional system states and Hermitian operators.
//!
//! States are pure and unit-normalized; operators are Hermitian matrices in
//! the computational basis. [`Projector`] refines [`SystemOperator`] with the
//! idempotency check that the exact pointer formulas depend on.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MeasureError, Result};

pub const NORM_TOLERANCE: f64 = 1e-12;
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
pub const IDEMPOTENT_TOLERANCE: f64 = 1e-10;
pub const RANK_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_OVERLAP_TOLERANCE: f64 = 1e-10;

/// Pure state of the measured system, unit norm, dimension at least 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct SystemState {
    amps: DVector<C64>,
}

impl SystemState {

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(MeasureError::DimensionTooSmall(amps.len()));
        }
        let v = DVector::from_vec(amps);
        let norm = v.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(MeasureError::NotNormalizable { norm });
        }
        Ok(Self { amps: v.unscale(norm) })
    }

    /// Accepts amplitudes that are already normalized to within `1e-12`.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(MeasureError::DimensionTooSmall(amps.len()));
        }
        let v = DVector::from_vec(amps);
        let norm = v.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(MeasureError::NotNormalizable { norm });
        }
        Ok(Self { amps: v })
    }

    /// Computational basis state `|k>`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(MeasureError::DimensionMismatch { expected: dim, found: k + 1 });
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[k] = C64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    /// `<self|other>`
    pub fn inner(&self, other: &SystemState) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// The same ray with a global phase `e^{i theta}` attached.
    pub fn with_phase(&self, theta: f64) -> Self {
        let phase = C64::from_polar(1.0, theta);
        Self { amps: self.amps.map(|c| c * phase) }
    }
}

impl TryFrom<Vec<[f64; 2]>> for SystemState {
    type Error = MeasureError;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        Self::normalized(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

impl From<SystemState> for Vec<[f64; 2]> {
    fn from(s: SystemState) -> Self {
        s.amps.iter().map(|c| [c.re, c.im]).collect()
    }
}

/// Hermitian operator on the system space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 2]>>", into = "Vec<Vec<[f64; 2]>>")]
pub struct SystemOperator {
    matrix: DMatrix<C64>,
}

impl SystemOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(MeasureError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() < 2 {
            return Err(MeasureError::DimensionTooSmall(matrix.nrows()));
        }
        let deviation = max_abs(&(&matrix - matrix.adjoint()));
        if !(deviation < HERMITIAN_TOLERANCE) {
            return Err(MeasureError::NotHermitian { deviation });
        }
        // Symmetrize away the sub-tolerance anti-Hermitian residue.
        let matrix = (&matrix + matrix.adjoint()).unscale(2.0);
        Ok(Self { matrix })
    }

    /// Builds from row-major rows of complex entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            check_dim(n, row.len())?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> =
            rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("Pauli x is Hermitian")
    }

    pub fn pauli_z() -> Self {
        Self::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).expect("Pauli z is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn apply(&self, state: &SystemState) -> Result<DVector<C64>> {
        check_dim(self.dim(), state.dim())?;
        Ok(&self.matrix * state.amplitudes())
    }

    /// `|| A^2 - A ||_max`
    pub fn idempotency_residual(&self) -> f64 {
        max_abs(&(&self.matrix * &self.matrix - &self.matrix))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> =
            SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |m, e| m.max(e.abs()))
    }
}

impl TryFrom<Vec<Vec<[f64; 2]>>> for SystemOperator {
    type Error = MeasureError;

    fn try_from(rows: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        Self::from_rows(&rows)
    }
}

impl From<SystemOperator> for Vec<Vec<[f64; 2]>> {
    fn from(op: SystemOperator) -> Self {
        op.matrix
            .row_iter()
            .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
            .collect()
    }
}

/// Hermitian idempotent operator (`A^2 = A`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemOperator", into = "SystemOperator")]
pub struct Projector(SystemOperator);

impl Projector {
    pub fn new(op: SystemOperator) -> Result<Self> {
        let residual = op.idempotency_residual();
        if !(residual < IDEMPOTENT_TOLERANCE) {
            return Err(MeasureError::NotIdempotent { residual });
        }
        let spectral = op
            .eigenvalues()
            .iter()
            .map(|&e| e.abs().min((e - 1.0).abs()))
            .fold(0.0_f64, f64::max);
        if spectral > IDEMPOTENT_TOLERANCE {
            return Err(MeasureError::NotIdempotent { residual: spectral });
        }
        Ok(Self(op))
    }

    /// Rank-1 projector onto a single computational basis state.
    pub fn onto_basis(dim: usize, k: usize) -> Result<Self> {
        make_projector(&[SystemState::basis(dim, k)?])
    }

    pub fn operator(&self) -> &SystemOperator {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn rank(&self) -> usize {
        self.0.matrix.trace().re.round() as usize
    }

    /// `1 - A`
    pub fn complement(&self) -> Projector {
        let d = self.dim();
        Projector(SystemOperator { matrix: DMatrix::identity(d, d) - &self.0.matrix })
    }
}

impl TryFrom<SystemOperator> for Projector {
    type Error = MeasureError;

    fn try_from(op: SystemOperator) -> Result<Self> {
        Self::new(op)
    }
}

impl From<Projector> for SystemOperator {
    fn from(p: Projector) -> Self {
        p.0
    }
}

impl AsRef<SystemOperator> for Projector {
    fn as_ref(&self) -> &SystemOperator {
        &self.0
    }
}

impl AsRef<SystemOperator> for SystemOperator {
    fn as_ref(&self) -> &SystemOperator {
        self
    }
}

/// Builds `sum |v><v|` over the modified Gram-Schmidt orthonormalization of
/// the given vectors.
pub fn make_projector(basis: &[SystemState]) -> Result<Projector> {
    let Some(first) = basis.first() else {
        return Err(MeasureError::DegenerateInput { residual: 0.0 });
    };
    let dim = first.dim();
    let mut ortho: Vec<DVector<C64>> = Vec::with_capacity(basis.len());
    for v in basis {
        check_dim(dim, v.dim())?;
        let mut w = v.amplitudes().clone();
        for q in &ortho {
            let c = q.dotc(&w);
            w -= q * c;
        }
        let residual = w.norm();
        if residual < RANK_TOLERANCE {
            return Err(MeasureError::DegenerateInput { residual });
        }
        ortho.push(w.unscale(residual));
    }
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for q in &ortho {
        m += q * q.adjoint();
    }
    Projector::new(SystemOperator::new((&m + m.adjoint()).unscale(2.0))?)
}

/// `<psi|A|psi>`, real for Hermitian `A`.
pub fn expectation(state: &SystemState, op: &SystemOperator) -> Result<f64> {
    let applied = op.apply(state)?;
    Ok(state.amplitudes().dotc(&applied).re)
}

/// Complex weak value `<psi_f|A|psi_i> / <psi_f|psi_i>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakValue(pub C64);

impl WeakValue {
    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }

    pub fn value(&self) -> C64 {
        self.0
    }
}

pub fn weak_value(psi_i: &SystemState, psi_f: &SystemState, op: &SystemOperator) -> Result<WeakValue> {
    weak_value_with_tolerance(psi_i, psi_f, op, DEFAULT_OVERLAP_TOLERANCE)
}

pub fn weak_value_with_tolerance(
    psi_i: &SystemState,
    psi_f: &SystemState,
    op: &SystemOperator,
    overlap_tolerance: f64,
) -> Result<WeakValue> {
    let overlap = psi_f.inner(psi_i)?;
    if !(overlap.norm() > overlap_tolerance) {
        return Err(MeasureError::OrthogonalPostSelection { overlap: overlap.norm() });
    }
    let applied = op.apply(psi_i)?;
    Ok(WeakValue(psi_f.amplitudes().dotc(&applied) / overlap))
}

/// Pre- and post-selection pair with its overlap, Pancharatnam phase and the
/// weak value of one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PpsContext {
    pub psi_i: SystemState,
    pub psi_f: SystemState,
    pub overlap: C64,
    /// `arg <psi_f|psi_i>` on the principal branch `(-pi, pi]`.
    pub chi: f64,
    pub a_w: WeakValue,
}

impl PpsContext {
    pub fn new(psi_i: &SystemState, psi_f: &SystemState, op: &SystemOperator) -> Result<Self> {
        Self::with_tolerance(psi_i, psi_f, op, DEFAULT_OVERLAP_TOLERANCE)
    }

    pub fn with_tolerance(
        psi_i: &SystemState,
        psi_f: &SystemState,
        op: &SystemOperator,
        overlap_tolerance: f64,
    ) -> Result<Self> {
        let a_w = weak_value_with_tolerance(psi_i, psi_f, op, overlap_tolerance)?;
        let overlap = psi_f.inner(psi_i)?;
        Ok(Self {
            psi_i: psi_i.clone(),
            psi_f: psi_f.clone(),
            overlap,
            chi: principal_arg(overlap),
            a_w,
        })
    }

    /// Weak value of `op` for this selection pair, checked against the stored
    /// one so a context built for a different operator is caught.
    pub fn weak_value_for(&self, op: &SystemOperator) -> Result<C64> {
        let a_w = weak_value(&self.psi_i, &self.psi_f, op)?.value();
        let drift = (a_w - self.a_w.value()).norm();
        if drift > 1e-9 * (1.0 + a_w.norm()) {
            return Err(MeasureError::ContextMismatch { drift });
        }
        Ok(a_w)
    }

    /// Post-selection success probability at zero coupling, `|<psi_f|psi_i>|^2`.
    pub fn overlap_probability(&self) -> f64 {
        self.overlap.norm_sqr()
    }
}

/// Argument mapped into `(-pi, pi]`.
pub fn principal_arg(z: C64) -> f64 {
    let a = z.arg();
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(MeasureError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, c| acc.max(c.norm()))
}

/// Random instances for property tests and randomized verification.
pub mod random {
    use super::*;

    fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<C64> {
        (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    }

    /// Haar-distributed pure state.
    pub fn state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SystemState {
        loop {
            if let Ok(s) = SystemState::normalized(gaussian_vector(rng, dim)) {
                return s;
            }
        }
    }

    /// Rank-`rank` projector onto a random subspace.
    pub fn projector<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> Projector {
        loop {
            let basis: Vec<SystemState> = (0..rank).map(|_| state(rng, dim)).collect();
            if let Ok(p) = make_projector(&basis) {
                return p;
            }
        }
    }

    /// Random Hermitian operator with spectrum rescaled into `[-1, 1]`.
    pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SystemOperator {
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let h = (&g + g.adjoint()).unscale(2.0);
        let radius = SymmetricEigen::new(h.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()));
        SystemOperator::new(h.unscale(radius.max(1e-12))).expect("symmetrized matrix is Hermitian")
    }
}
