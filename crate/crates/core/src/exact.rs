//! Closed-form pointer results for projector measurements at any coupling.
//!
//! For a projector `A` the interaction `exp(-i gamma A p / hbar)` collapses to
//! `1 - A + A S`, where `S` shifts the pointer by `gamma`. Every quantity here
//! is built from the two branches `phi` and `S phi`:
//!
//! * pre-selection: the pointer is an incoherent mixture of the branches with
//!   weights `1 - <A>` and `<A>`, so its profile has no interference term;
//! * pre- and post-selection: the pointer is the pure state
//!   `(e^{i chi} / N) (1 - A_w + A_w S) phi`, whose profile carries the cross
//!   term `2 Re[A_w (1 - A_w*) phi*(q) phi(q - gamma)]`.

use num_complex::Complex64 as C64;

use crate::error::{MeasureError, Result};
use crate::hilbert::{expectation, PpsContext, Projector, SystemState};
use crate::pointer::{
    inner_product, moments, squared_norm, translate, MomentReport, PointerGrid, PointerObservable,
    PointerState, ProductExpectations,
};

/// Coupling strength, measured operator and initial pointer of one
/// measurement.
#[derive(Debug, Clone)]
pub struct MeasurementConfig<O> {
    pub gamma: f64,
    pub op: O,
    pub phi0: PointerState,
}

/// System-pointer state stored as `d` pointer rows, row `k` being
/// `<k|Phi>` as a function of `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    grid: PointerGrid,
    rows: Vec<Vec<C64>>,
}

impl JointState {
    pub(crate) fn from_rows(grid: PointerGrid, rows: Vec<Vec<C64>>) -> Self {
        Self { grid, rows }
    }

    /// `psi (x) phi`
    pub fn product(psi: &SystemState, phi: &PointerState) -> Self {
        let rows = psi
            .amplitudes()
            .iter()
            .map(|&c| phi.amplitudes().iter().map(|z| c * z).collect())
            .collect();
        Self { grid: phi.grid().clone(), rows }
    }

    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<C64>] {
        &self.rows
    }

    /// `sum_{k,j} |c_{k,j}|^2 dq`
    pub fn norm_squared(&self) -> f64 {
        self.rows.iter().map(|r| squared_norm(r, self.grid.dq())).sum()
    }

    /// Reduced pointer density `sum_k |c_{k,j}|^2`.
    pub fn marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_points()];
        for row in &self.rows {
            for (o, z) in out.iter_mut().zip(row) {
                *o += z.norm_sqr();
            }
        }
        out
    }

    /// Largest elementwise difference.
    pub fn max_abs_diff(&self, other: &JointState) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(if self.rows.len() == other.rows.len() { 0.0 } else { f64::INFINITY }, f64::max)
    }

    /// Unnormalized pointer `<psi_f|Phi>`.
    pub fn project(&self, psi_f: &SystemState) -> Result<Vec<C64>> {
        if psi_f.dim() != self.dim() {
            return Err(MeasureError::DimensionMismatch { expected: self.dim(), found: psi_f.dim() });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.grid.n_points()];
        for (c, row) in psi_f.amplitudes().iter().zip(&self.rows) {
            let c = c.conj();
            for (o, z) in out.iter_mut().zip(row) {
                *o += c * z;
            }
        }
        Ok(out)
    }

    /// Moments of the reduced pointer state for a pointer-only observable.
    pub fn pointer_moments(&self, m: &PointerObservable) -> MomentReport {
        let rows = || self.rows.iter().map(Vec::as_slice);
        let q = ProductExpectations::evaluate_rows(&self.grid, rows(), &PointerObservable::Position);
        let e = ProductExpectations::evaluate_rows(&self.grid, rows(), m);
        MomentReport::from_products(&q, &e)
    }
}

/// `(1 - A + A S) |psi>|phi>`, assembled from the unshifted and shifted
/// branches.
pub fn interaction_apply(
    psi: &SystemState,
    phi: &PointerState,
    a: &Projector,
    gamma: f64,
) -> Result<JointState> {
    let kept = a.complement().operator().apply(psi)?;
    let moved = a.operator().apply(psi)?;
    let shifted = translate(phi, gamma)?;
    let rows = kept
        .iter()
        .zip(moved.iter())
        .map(|(&ck, &mk)| {
            phi.amplitudes()
                .iter()
                .zip(shifted.amplitudes())
                .map(|(u, s)| ck * u + mk * s)
                .collect()
        })
        .collect();
    Ok(JointState::from_rows(phi.grid().clone(), rows))
}

/// `(1 - <A>) |phi(q)|^2 + <A> |phi(q - gamma)|^2`
pub fn ps_profile(psi: &SystemState, phi: &PointerState, a: &Projector, gamma: f64) -> Result<Vec<f64>> {
    let weight = expectation(psi, a.operator())?;
    let shifted = translate(phi, gamma)?;
    Ok(phi
        .amplitudes()
        .iter()
        .zip(shifted.amplitudes())
        .map(|(u, s)| (1.0 - weight) * u.norm_sqr() + weight * s.norm_sqr())
        .collect())
}

/// `(1 - <A>) <phi|M|phi> + <A> <phi|S^dag M S|phi>`
pub fn ps_mean(
    m: &PointerObservable,
    psi: &SystemState,
    phi: &PointerState,
    a: &Projector,
    gamma: f64,
) -> Result<f64> {
    Ok(ps_mean_variance(m, psi, phi, a, gamma)?.0)
}

/// Mean and variance of `M` in the pre-selected pointer mixture.
pub fn ps_mean_variance(
    m: &PointerObservable,
    psi: &SystemState,
    phi: &PointerState,
    a: &Projector,
    gamma: f64,
) -> Result<(f64, f64)> {
    let weight = expectation(psi, a.operator())?;
    let shifted = translate(phi, gamma)?;
    let grid = phi.grid();
    let dq = grid.dq();
    let branch = |amps: &[C64]| {
        let m_amps = m.apply(grid, amps);
        (inner_product(amps, &m_amps, dq).re, inner_product(&m_amps, &m_amps, dq).re)
    };
    let (m0, s0) = branch(phi.amplitudes());
    let (m1, s1) = branch(shifted.amplitudes());
    let mean = (1.0 - weight) * m0 + weight * m1;
    let second = (1.0 - weight) * s0 + weight * s1;
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Post-selected pointer `(e^{i chi} / N)(1 - A_w + A_w S)|phi>` with its
/// Pancharatnam phase and normalization.
#[derive(Debug, Clone)]
pub struct PpsPointerState {
    pub pointer: PointerState,
    pub chi: f64,
    /// `N = || (1 - A_w + A_w S) phi ||`
    pub normalization_n: f64,
}

/// The pieces shared by the post-selected closed forms.
struct PpsBranches {
    a_w: C64,
    chi: f64,
    unshifted: PointerState,
    shifted: PointerState,
    /// `A_w (1 - A_w*)`
    cross: C64,
    n_squared: f64,
}

impl PpsBranches {
    fn new(ctx: &PpsContext, a: &Projector, phi: &PointerState, gamma: f64) -> Result<Self> {
        let a_w = ctx.weak_value_for(a.operator())?;
        let shifted = translate(phi, gamma)?;
        let dq = phi.grid().dq();
        let overlap_s = inner_product(phi.amplitudes(), shifted.amplitudes(), dq);
        let cross = a_w * (C64::new(1.0, 0.0) - a_w.conj());
        let n_squared = (C64::new(1.0, 0.0) - a_w).norm_sqr()
            + a_w.norm_sqr()
            + 2.0 * (cross * overlap_s).re;
        if !(n_squared > 1e-20) {
            return Err(MeasureError::PostSelectionFailure {
                probability: n_squared * ctx.overlap_probability(),
            });
        }
        Ok(Self { a_w, chi: ctx.chi, unshifted: phi.clone(), shifted, cross, n_squared })
    }
}

pub fn pps_pointer_state(
    ctx: &PpsContext,
    a: &Projector,
    phi: &PointerState,
    gamma: f64,
) -> Result<PpsPointerState> {
    let b = PpsBranches::new(ctx, a, phi, gamma)?;
    let n = b.n_squared.sqrt();
    let lead = C64::from_polar(1.0, b.chi) / n;
    let one_minus = C64::new(1.0, 0.0) - b.a_w;
    let amps = b
        .unshifted
        .amplitudes()
        .iter()
        .zip(b.shifted.amplitudes())
        .map(|(u, s)| lead * (one_minus * u + b.a_w * s))
        .collect();
    let pointer = PointerState::new(phi.grid().clone(), amps)?;
    Ok(PpsPointerState { pointer, chi: b.chi, normalization_n: n })
}

/// `N^-2 { |1-A_w|^2 |phi(q)|^2 + |A_w|^2 |phi(q-gamma)|^2
///         + 2 Re[A_w (1-A_w*) phi*(q) phi(q-gamma)] }`
pub fn pps_profile(ctx: &PpsContext, a: &Projector, phi: &PointerState, gamma: f64) -> Result<Vec<f64>> {
    let b = PpsBranches::new(ctx, a, phi, gamma)?;
    let w0 = (C64::new(1.0, 0.0) - b.a_w).norm_sqr();
    let w1 = b.a_w.norm_sqr();
    Ok(b.unshifted
        .amplitudes()
        .iter()
        .zip(b.shifted.amplitudes())
        .map(|(u, s)| {
            (w0 * u.norm_sqr() + w1 * s.norm_sqr() + 2.0 * (b.cross * u.conj() * s).re) / b.n_squared
        })
        .collect())
}

/// Interference part of the post-selected profile alone (unnormalized).
pub fn pps_cross_term(ctx: &PpsContext, a: &Projector, phi: &PointerState, gamma: f64) -> Result<Vec<f64>> {
    let b = PpsBranches::new(ctx, a, phi, gamma)?;
    Ok(b.unshifted
        .amplitudes()
        .iter()
        .zip(b.shifted.amplitudes())
        .map(|(u, s)| 2.0 * (b.cross * u.conj() * s).re)
        .collect())
}

/// `N^-2 { |1-A_w|^2 <M>_phi + |A_w|^2 <S^dag M S>_phi + 2 Re[A_w (1-A_w*) <phi|M S|phi>] }`
pub fn pps_mean(
    m: &PointerObservable,
    ctx: &PpsContext,
    a: &Projector,
    phi: &PointerState,
    gamma: f64,
) -> Result<f64> {
    let b = PpsBranches::new(ctx, a, phi, gamma)?;
    let grid = phi.grid();
    let dq = grid.dq();
    let m_phi = m.apply(grid, b.unshifted.amplitudes());
    let m_shifted = m.apply(grid, b.shifted.amplitudes());
    let mean0 = inner_product(b.unshifted.amplitudes(), &m_phi, dq).re;
    let mean1 = inner_product(b.shifted.amplitudes(), &m_shifted, dq).re;
    let m_s = inner_product(&m_phi, b.shifted.amplitudes(), dq);
    let w0 = (C64::new(1.0, 0.0) - b.a_w).norm_sqr();
    let w1 = b.a_w.norm_sqr();
    Ok((w0 * mean0 + w1 * mean1 + 2.0 * (b.cross * m_s).re) / b.n_squared)
}

/// Full moment report of the post-selected pointer.
pub fn pps_moments(
    m: &PointerObservable,
    ctx: &PpsContext,
    a: &Projector,
    phi: &PointerState,
    gamma: f64,
) -> Result<MomentReport> {
    let state = pps_pointer_state(ctx, a, phi, gamma)?;
    Ok(moments(&state.pointer, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_projector, random};
    use crate::pointer::gaussian_pointer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn phi() -> PointerState {
        gaussian_pointer(&PointerGrid::for_sigma(1.0).unwrap(), 0.0, 1.0).unwrap()
    }

    fn plus() -> SystemState {
        SystemState::from_real(&[1.0, 1.0]).unwrap()
    }

    fn psi_i_omega() -> SystemState {
        SystemState::normalized(vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap()
    }

    fn p0() -> Projector {
        Projector::onto_basis(2, 0).unwrap()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_coupling_gives_product_state() {
        let joint = interaction_apply(&plus(), &phi(), &p0(), 0.0).unwrap();
        let product = JointState::product(&plus(), &phi());
        assert!(joint.max_abs_diff(&product) < 1e-15);
    }

    #[test]
    fn eigenstate_is_shifted_whole() {
        let psi = SystemState::basis(2, 0).unwrap();
        let joint = interaction_apply(&psi, &phi(), &p0(), 1.2).unwrap();
        let expected = JointState::product(&psi, &translate(&phi(), 1.2).unwrap());
        assert!(joint.max_abs_diff(&expected) < 1e-15);
        assert!((joint.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ps_profile_limits_and_humps() {
        let g = phi();
        let shifted = translate(&g, 6.0).unwrap().density();
        let unshifted = g.density();
        let e0 = SystemState::basis(2, 0).unwrap();
        let e1 = SystemState::basis(2, 1).unwrap();
        let one = ps_profile(&e0, &g, &p0(), 6.0).unwrap();
        let zero = ps_profile(&e1, &g, &p0(), 6.0).unwrap();
        let half = ps_profile(&plus(), &g, &p0(), 6.0).unwrap();
        let dq = g.grid().dq();
        for j in 0..one.len() {
            assert!((one[j] - shifted[j]).abs() < 1e-15);
            assert!((zero[j] - unshifted[j]).abs() < 1e-15);
            assert!((half[j] - 0.5 * (shifted[j] + unshifted[j])).abs() < 1e-12);
        }
        assert!((half.iter().sum::<f64>() * dq - 1.0).abs() < 1e-10);
        // Two resolved humps: the density at the midpoint is far below the peaks.
        let mid = ((3.0 - g.grid().q_min()) / dq).round() as usize;
        let peak = half.iter().cloned().fold(0.0, f64::max);
        assert!(half[mid] < 0.2 * peak);
    }

    #[test]
    fn ps_mean_examples() {
        let g = phi();
        for gamma in [0.0, 0.5, 2.0] {
            let p = ps_mean(&PointerObservable::Momentum, &plus(), &g, &p0(), gamma).unwrap();
            assert!(p.abs() < 1e-12);
        }
        let q = ps_mean(&PointerObservable::Position, &plus(), &g, &p0(), 0.5).unwrap();
        assert!((q - 0.25).abs() < 1e-12);
        let q2 = ps_mean(&PointerObservable::q_squared(), &plus(), &g, &p0(), 0.0).unwrap();
        assert!((q2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pps_unit_weak_value_shifts_by_gamma() {
        let psi_f = SystemState::basis(2, 0).unwrap();
        let ctx = PpsContext::new(&plus(), &psi_f, p0().operator()).unwrap();
        assert!((ctx.a_w.value() - c(1.0, 0.0)).norm() < 1e-15);
        let out = pps_pointer_state(&ctx, &p0(), &phi(), 0.3).unwrap();
        let expected = translate(&phi(), 0.3).unwrap().with_global_phase(ctx.chi);
        assert!(max_diff(out.pointer.amplitudes(), expected.amplitudes()) < 1e-12);
        let q = pps_mean(&PointerObservable::Position, &ctx, &p0(), &phi(), 0.3).unwrap();
        assert!((q - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pps_zero_weak_value_keeps_pointer() {
        let psi_f = SystemState::basis(2, 1).unwrap();
        let ctx = PpsContext::new(&plus(), &psi_f, p0().operator()).unwrap();
        assert_eq!(ctx.a_w.value(), c(0.0, 0.0));
        let out = pps_pointer_state(&ctx, &p0(), &phi(), 1.0).unwrap();
        let expected = phi().with_global_phase(ctx.chi);
        assert!(max_diff(out.pointer.amplitudes(), expected.amplitudes()) < 1e-15);
        let m = pps_mean(&PointerObservable::q_squared(), &ctx, &p0(), &phi(), 1.0).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pps_profile_matches_state_density() {
        let ctx = PpsContext::new(&plus(), &psi_i_omega(), p0().operator()).unwrap();
        let profile = pps_profile(&ctx, &p0(), &phi(), 1.0).unwrap();
        let state = pps_pointer_state(&ctx, &p0(), &phi(), 1.0).unwrap();
        for (a, b) in profile.iter().zip(state.pointer.density()) {
            assert!((a - b).abs() < 1e-12);
        }
        // A_w (1 - A_w*) = i/2 here, so a real pointer shows no interference.
        let cross = pps_cross_term(&ctx, &p0(), &phi(), 1.0).unwrap();
        assert!(cross.iter().all(|x| x.abs() < 1e-15));

        let psi_f = SystemState::normalized(vec![c(1.0, 0.0), C64::from_polar(1.0, 2.0)]).unwrap();
        let ctx = PpsContext::new(&plus(), &psi_f, p0().operator()).unwrap();
        let profile = pps_profile(&ctx, &p0(), &phi(), 1.0).unwrap();
        let state = pps_pointer_state(&ctx, &p0(), &phi(), 1.0).unwrap();
        for (a, b) in profile.iter().zip(state.pointer.density()) {
            assert!((a - b).abs() < 1e-12);
        }
        let cross = pps_cross_term(&ctx, &p0(), &phi(), 1.0).unwrap();
        assert!(cross.iter().any(|x| x.abs() > 1e-2));
        let flat = pps_profile(&ctx, &p0(), &phi(), 0.0).unwrap();
        for (a, b) in flat.iter().zip(phi().density()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pps_real_weak_value_without_interference() {
        // A_w = 1 makes A_w (1 - A_w*) vanish.
        let psi_f = SystemState::basis(2, 0).unwrap();
        let ctx = PpsContext::new(&plus(), &psi_f, p0().operator()).unwrap();
        let cross = pps_cross_term(&ctx, &p0(), &phi(), 2.0).unwrap();
        assert!(cross.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn pps_phase_at_zero_coupling_is_chi() {
        let ctx = PpsContext::new(&plus(), &psi_i_omega(), p0().operator()).unwrap();
        let out = pps_pointer_state(&ctx, &p0(), &phi(), 0.0).unwrap();
        let dq = phi().grid().dq();
        let ov = inner_product(phi().amplitudes(), out.pointer.amplitudes(), dq);
        assert!((ov.arg() - ctx.chi).abs() < 1e-10);
        assert!((out.normalization_n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pps_normalization_matches_direct_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = rng.random_range(2..=4);
            let rank = rng.random_range(1..d);
            let a = random::projector(&mut rng, d, rank);
            let psi_i = random::state(&mut rng, d);
            let psi_f = random::state(&mut rng, d);
            let ctx = PpsContext::new(&psi_i, &psi_f, a.operator()).unwrap();
            let gamma = rng.random_range(0.01..5.0);
            let out = pps_pointer_state(&ctx, &a, &phi(), gamma).unwrap();
            let shifted = translate(&phi(), gamma).unwrap();
            let a_w = ctx.a_w.value();
            let raw: Vec<C64> = phi()
                .amplitudes()
                .iter()
                .zip(shifted.amplitudes())
                .map(|(u, s)| (1.0 - a_w) * u + a_w * s)
                .collect();
            let direct = squared_norm(&raw, phi().grid().dq()).sqrt();
            assert!((direct - out.normalization_n).abs() < 1e-10);
            assert!((out.pointer.norm_squared() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_context_is_rejected() {
        let ctx = PpsContext::new(&plus(), &psi_i_omega(), p0().operator()).unwrap();
        let other = make_projector(&[SystemState::basis(2, 1).unwrap()]).unwrap();
        assert!(matches!(
            pps_pointer_state(&ctx, &other, &phi(), 1.0),
            Err(MeasureError::ContextMismatch { .. })
        ));
    }

    #[test]
    fn pps_momentum_is_not_conserved() {
        let ctx = PpsContext::new(&plus(), &psi_i_omega(), p0().operator()).unwrap();
        let p = pps_mean(&PointerObservable::Momentum, &ctx, &p0(), &phi(), 0.05).unwrap();
        // Closed form for a real Gaussian: gamma Delta^2 p exp(-gamma^2 Delta^2 p / 2).
        let expected = 0.05 * 0.25 * (-0.05f64.powi(2) * 0.25 / 2.0).exp();
        assert!((p - expected).abs() < 1e-12);
    }
}
