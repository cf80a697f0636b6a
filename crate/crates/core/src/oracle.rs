//! Brute-force reference evolution.
//!
//! Applies `exp(-i gamma A p / hbar)` to `|psi>|phi>` through the spectral
//! decomposition `A = sum_a a |a><a|`: each eigencomponent of `psi` carries a
//! pointer copy shifted by `gamma a`. Nothing here relies on `A` being a
//! projector, so the results check the closed forms in [`crate::exact`]
//! independently and extend to arbitrary Hermitian operators.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{MeasureError, Result};
use crate::exact::JointState;
use crate::hilbert::{max_abs, SystemOperator, SystemState};
use crate::pointer::{squared_norm, translate_amplitudes, MomentReport, PointerObservable, PointerState};

/// Post-selection probabilities below this are treated as orthogonality.
pub const SUCCESS_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: DMatrix<C64>,
}

impl SpectralDecomposition {
    pub fn new(op: &SystemOperator) -> Self {
        let eig = SymmetricEigen::new(op.matrix().clone());
        Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        }
    }

    /// `|| sum_a a |a><a| - A ||_max`
    pub fn reconstruction_residual(&self, op: &SystemOperator) -> f64 {
        let v = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&e| C64::new(e, 0.0)),
        ));
        max_abs(&(v * d * v.adjoint() - op.matrix()))
    }

    /// `|| V^dag V - 1 ||_max`
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.eigenvectors.ncols();
        max_abs(&(self.eigenvectors.adjoint() * &self.eigenvectors - DMatrix::<C64>::identity(n, n)))
    }
}

/// `exp(-i gamma A p / hbar) |psi>|phi>`
pub fn evolve_joint(
    psi: &SystemState,
    phi: &PointerState,
    a: &SystemOperator,
    gamma: f64,
) -> Result<JointState> {
    if psi.dim() != a.dim() {
        return Err(MeasureError::DimensionMismatch { expected: a.dim(), found: psi.dim() });
    }
    let spectral = SpectralDecomposition::new(a);
    for &e in &spectral.eigenvalues {
        phi.check_shift(gamma * e)?;
    }
    let grid = phi.grid();
    let d = psi.dim();
    let mut rows = vec![vec![C64::new(0.0, 0.0); grid.n_points()]; d];
    for (idx, &e) in spectral.eigenvalues.iter().enumerate() {
        let vec = spectral.eigenvectors.column(idx);
        let coeff = vec.dotc(psi.amplitudes());
        if coeff == C64::new(0.0, 0.0) {
            continue;
        }
        let branch = translate_amplitudes(grid, phi.amplitudes(), gamma * e);
        for (k, row) in rows.iter_mut().enumerate() {
            let w = vec[k] * coeff;
            for (r, b) in row.iter_mut().zip(&branch) {
                *r += w * b;
            }
        }
    }
    Ok(JointState::from_rows(grid.clone(), rows))
}

/// Moments of the reduced pointer state of `joint`.
pub fn oracle_ps_moments(joint: &JointState, m: &PointerObservable) -> MomentReport {
    joint.pointer_moments(m)
}

/// Post-selected pointer read directly off a joint state.
#[derive(Debug, Clone)]
pub struct PostSelected {
    /// `<psi_f|Phi>` normalized, global phase kept.
    pub pointer: PointerState,
    /// `|| <psi_f|Phi> ||` before normalization.
    pub norm: f64,
}

impl PostSelected {
    pub fn success_probability(&self) -> f64 {
        self.norm * self.norm
    }
}

pub fn oracle_post_select(joint: &JointState, psi_f: &SystemState) -> Result<PostSelected> {
    let mut raw = joint.project(psi_f)?;
    let norm_sq = squared_norm(&raw, joint.grid().dq());
    if !(norm_sq > SUCCESS_FLOOR) {
        return Err(MeasureError::PostSelectionFailure { probability: norm_sq });
    }
    let norm = norm_sq.sqrt();
    for z in raw.iter_mut() {
        *z /= norm;
    }
    Ok(PostSelected { pointer: PointerState::new(joint.grid().clone(), raw)?, norm })
}
