use num_complex::Complex64 as C64;
use serde::Serialize;

use super::grid::PointerGrid;
use super::observable::PointerObservable;
use super::state::{inner_product, PointerState};

/// Which product an operator bracket with `p` denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketKind {
    /// `[X, p] = X p - p X`
    Commutator,
    /// `{X, p} = X p + p X`
    Anticommutator,
}

/// Pointer moments for `q`, `p` and one requested observable `M`, all taken
/// with respect to a single pointer state.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
    /// `<q p> - <q><p>`
    pub ccv_qp: C64,
    pub mean_m: f64,
    pub var_m: f64,
    /// `<M p> - <M><p>`
    pub ccv_mp: C64,
    /// `<p M> - <p><M>`
    pub ccv_pm: C64,
    /// `<{M, p}>/2 - <M><p>`
    pub cov_mp: f64,
    /// `<{M, p}>`
    pub anticomm_mean: f64,
    /// `<[M, p]>`, purely imaginary.
    pub comm_mean: C64,
    /// `<[M^2, p]> - 2 <M> <[M, p]>`, purely imaginary.
    pub b_mp: C64,
    /// `<{M^2, p}> - 2 <M> <{M, p}>`
    pub c_mp: f64,
}

impl MomentReport {
    /// Free-particle rate `d/dt (Delta^2 q) = 2 cov(q, p) / m` for a pointer of
    /// the given mass.
    pub fn variance_rate(&self, mass: f64) -> f64 {
        2.0 * self.cov_qp / mass
    }
}

/// Raw operator products of `M` and `p` on one state. Every bracket in the
/// sensitivity formulas is assembled from these.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ProductExpectations {
    pub mean_m: f64,
    pub mean_m2: f64,
    pub mean_p: f64,
    pub mean_p2: f64,
    pub m_p: C64,
    pub p_m: C64,
    pub m2_p: C64,
    pub p_m2: C64,
}

impl ProductExpectations {
    pub fn evaluate(phi: &PointerState, m: &PointerObservable) -> Self {
        Self::evaluate_amplitudes(phi.grid(), phi.amplitudes(), m)
    }

    /// Same products for unnormalized amplitudes (one row of a joint state).
    pub fn evaluate_amplitudes(grid: &PointerGrid, psi: &[C64], m: &PointerObservable) -> Self {
        let dq = grid.dq();
        let m_psi = m.apply(grid, psi);
        let m2_psi = m.apply(grid, &m_psi);
        let p_psi = PointerObservable::Momentum.apply(grid, psi);
        Self {
            mean_m: inner_product(psi, &m_psi, dq).re,
            mean_m2: inner_product(&m_psi, &m_psi, dq).re,
            mean_p: inner_product(psi, &p_psi, dq).re,
            mean_p2: inner_product(&p_psi, &p_psi, dq).re,
            m_p: inner_product(&m_psi, &p_psi, dq),
            p_m: inner_product(&p_psi, &m_psi, dq),
            m2_p: inner_product(&m2_psi, &p_psi, dq),
            p_m2: inner_product(&p_psi, &m2_psi, dq),
        }
    }

    /// Expectations in a statistical mixture of unnormalized rows.
    pub fn evaluate_rows<'a>(
        grid: &PointerGrid,
        rows: impl IntoIterator<Item = &'a [C64]>,
        m: &PointerObservable,
    ) -> Self {
        rows.into_iter()
            .map(|row| Self::evaluate_amplitudes(grid, row, m))
            .fold(Self::zero(), |acc, e| acc.add(&e))
    }

    fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        Self { mean_m: 0.0, mean_m2: 0.0, mean_p: 0.0, mean_p2: 0.0, m_p: z, p_m: z, m2_p: z, p_m2: z }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            mean_m: self.mean_m + o.mean_m,
            mean_m2: self.mean_m2 + o.mean_m2,
            mean_p: self.mean_p + o.mean_p,
            mean_p2: self.mean_p2 + o.mean_p2,
            m_p: self.m_p + o.m_p,
            p_m: self.p_m + o.p_m,
            m2_p: self.m2_p + o.m2_p,
            p_m2: self.p_m2 + o.p_m2,
        }
    }

    /// `<[M, p]>` or `<{M, p}>`
    pub fn bracket(&self, kind: BracketKind) -> C64 {
        combine(self.m_p, self.p_m, kind)
    }

    /// `<[M^2, p]>` or `<{M^2, p}>`
    pub fn bracket_squared(&self, kind: BracketKind) -> C64 {
        combine(self.m2_p, self.p_m2, kind)
    }

    /// `<[M^2, p]> - 2<M><[M, p]>` for commutators (the `B` coefficient) and
    /// the same with anticommutators (the `C` coefficient).
    pub fn spread_bracket(&self, kind: BracketKind) -> C64 {
        self.bracket_squared(kind) - 2.0 * self.mean_m * self.bracket(kind)
    }

    pub fn variance_m(&self) -> f64 {
        (self.mean_m2 - self.mean_m * self.mean_m).max(0.0)
    }
}

fn combine(xp: C64, px: C64, kind: BracketKind) -> C64 {
    match kind {
        BracketKind::Commutator => xp - px,
        BracketKind::Anticommutator => xp + px,
    }
}

/// `<phi| X p (+/-) p X |phi>` with `X = M` or `X = M^2`.
pub fn bracket_expectation(
    phi: &PointerState,
    m: &PointerObservable,
    squared: bool,
    kind: BracketKind,
) -> C64 {
    let e = ProductExpectations::evaluate(phi, m);
    if squared {
        e.bracket_squared(kind)
    } else {
        e.bracket(kind)
    }
}

pub fn moments(phi: &PointerState, m: &PointerObservable) -> MomentReport {
    let q = ProductExpectations::evaluate(phi, &PointerObservable::Position);
    let e = ProductExpectations::evaluate(phi, m);
    MomentReport::from_products(&q, &e)
}

impl MomentReport {
    /// Assembles a report from position products `q` and products `e` of the
    /// requested observable.
    pub(crate) fn from_products(q: &ProductExpectations, e: &ProductExpectations) -> Self {
        let anticomm = e.bracket(BracketKind::Anticommutator).re;
        MomentReport {
            mean_q: q.mean_m,
            mean_p: q.mean_p,
            var_q: q.variance_m(),
            var_p: (q.mean_p2 - q.mean_p * q.mean_p).max(0.0),
            cov_qp: 0.5 * q.bracket(BracketKind::Anticommutator).re - q.mean_m * q.mean_p,
            ccv_qp: q.m_p - q.mean_m * q.mean_p,
            mean_m: e.mean_m,
            var_m: e.variance_m(),
            ccv_mp: e.m_p - e.mean_m * e.mean_p,
            ccv_pm: e.p_m - e.mean_p * e.mean_m,
            cov_mp: 0.5 * anticomm - e.mean_m * e.mean_p,
            anticomm_mean: anticomm,
            comm_mean: e.bracket(BracketKind::Commutator),
            b_mp: e.spread_bracket(BracketKind::Commutator),
            c_mp: e.spread_bracket(BracketKind::Anticommutator).re,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{gaussian_pointer, PointerGrid};

    fn gaussian(center: f64, sigma: f64) -> PointerState {
        gaussian_pointer(&PointerGrid::for_sigma(1.0).unwrap(), center, sigma).unwrap()
    }

    #[test]
    fn momentum_self_covariance_is_variance() {
        let phi = gaussian(0.3, 1.1).with_phase(|q| 0.2 * q * q - 0.5 * q);
        let r = moments(&phi, &PointerObservable::Momentum);
        assert!((r.ccv_mp - C64::new(r.var_p, 0.0)).norm() < 1e-10);
        assert!((r.mean_m - r.mean_p).abs() < 1e-12);
    }

    #[test]
    fn stationary_gaussian_position_ccv() {
        let r = moments(&gaussian(0.0, 1.0), &PointerObservable::Position);
        assert!((r.ccv_mp - C64::new(0.0, 0.5)).norm() < 1e-10);
        assert!(r.cov_qp.abs() < 1e-12);
    }

    /// Brute-force quadrature on the sampled wavefunction: cov(q,p) with the
    /// momentum density taken from the local phase gradient
    /// `Im(conj(phi) dphi/dq)`, differentiated by central differences.
    fn quadrature_cov_qp(phi: &PointerState) -> f64 {
        let g = phi.grid();
        let a = phi.amplitudes();
        let dq = g.dq();
        let n = a.len();
        let mut mean_q = 0.0;
        let mut mean_p = 0.0;
        let mut mean_qp = 0.0;
        for j in 1..n - 1 {
            let d = (a[j + 1] - a[j - 1]) / (2.0 * dq);
            let current = (a[j].conj() * d).im * g.hbar();
            let q = g.q(j);
            mean_q += a[j].norm_sqr() * q * dq;
            mean_p += current * dq;
            mean_qp += q * current * dq;
        }
        mean_qp - mean_q * mean_p
    }

    #[test]
    fn chirped_gaussian_covariance() {
        let sigma = 1.0;
        let c = 0.15;
        let phi = gaussian(0.0, sigma).with_phase(|q| c * q * q);
        let r = moments(&phi, &PointerObservable::Position);
        let oracle = quadrature_cov_qp(&phi);
        // Closed form for e^{i c q^2}: 2 c sigma^2 hbar.
        assert!((oracle - 2.0 * c * sigma * sigma).abs() < 1e-3);
        assert!((r.cov_qp - 2.0 * c * sigma * sigma).abs() < 1e-10);
        assert!((r.cov_qp - oracle).abs() < 1e-3);
    }

    #[test]
    fn covariance_identities() {
        let phi = gaussian(-0.7, 0.9).with_phase(|q| 0.3 * q * q * q / 10.0 + 0.2 * q);
        for m in [
            PointerObservable::Position,
            PointerObservable::Momentum,
            PointerObservable::q_squared(),
            PointerObservable::monomial(1, 1),
        ] {
            let r = moments(&phi, &m);
            let sum = r.ccv_mp + r.ccv_pm;
            assert!((sum - C64::new(2.0 * r.cov_mp, 0.0)).norm() < 1e-10, "{m}");
            assert!(sum.im.abs() < 1e-10);
            assert!(r.comm_mean.re.abs() < 1e-10);
            assert!(r.b_mp.re.abs() < 1e-9);
        }
        let r = moments(&phi, &PointerObservable::Position);
        let lhs = 2.0 * r.ccv_qp;
        let rhs = C64::new(2.0 * r.cov_qp, 1.0);
        assert!((lhs - rhs).norm() < 1e-10);
        assert!(r.var_q * r.var_p >= 0.25 - 1e-9);
    }

    #[test]
    fn position_b_coefficient_vanishes() {
        let phi = gaussian(1.3, 0.7).with_phase(|q| 0.25 * q * q);
        let r = moments(&phi, &PointerObservable::Position);
        assert!(r.b_mp.norm() < 1e-10);
        assert!((r.comm_mean - C64::new(0.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn commutator_swap_turns_c_into_b() {
        let phi = gaussian(0.4, 1.0).with_phase(|q| 0.05 * q * q * q);
        let m = PointerObservable::q_squared();
        let e = ProductExpectations::evaluate(&phi, &m);
        let r = moments(&phi, &m);
        assert_eq!(e.spread_bracket(BracketKind::Commutator), r.b_mp);
        assert_eq!(e.spread_bracket(BracketKind::Anticommutator).re, r.c_mp);
        let direct_b = bracket_expectation(&phi, &m, true, BracketKind::Commutator)
            - 2.0 * r.mean_m * bracket_expectation(&phi, &m, false, BracketKind::Commutator);
        assert!((direct_b - r.b_mp).norm() < 1e-12);
    }

    #[test]
    fn variance_rate_uses_covariance() {
        let phi = gaussian(0.0, 1.0).with_phase(|q| 0.1 * q * q);
        let r = moments(&phi, &PointerObservable::Position);
        assert!((r.variance_rate(2.0) - r.cov_qp).abs() < 1e-15);
    }
}
