//! First-order (weak coupling) pointer means and measurement sensitivities.
//!
//! To first order in `gamma` the interaction is `1 - (i/hbar) gamma A p`, so
//! nothing here requires `A` to be a projector. Expectations of commutators
//! and anticommutators with `p` are evaluated on the grid (position diagonal,
//! momentum Fourier-diagonal), never symbolically.
//!
//! Sensitivities are per single pointer reading. An ensemble of `n` readings
//! determines the same quantity to `delta / sqrt(n)`.

mod convergence;
mod monte_carlo;

pub use convergence::{convergence_probe, log_spaced, ConvergenceRow, ConvergenceTable, ProbeInstance, ERROR_FLOOR};
pub use monte_carlo::{
    mc_pps_re_weak_value, mc_ps_gamma, mc_ps_mean_a, sample_readings, MonteCarloCheck,
};

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{MeasureError, Result};
use crate::hilbert::{expectation, PpsContext, SystemOperator, SystemState};
use crate::pointer::{
    moments, BracketKind, PointerObservable, PointerState, ProductExpectations,
};

/// `gamma max(1, |A_w|)` above this fraction of the pointer width triggers a
/// weakness warning.
pub const WEAKNESS_RATIO: f64 = 0.1;

const COMMUTATOR_FLOOR: f64 = 1e-12;

/// `<M>_phi - (i/hbar) gamma <A> <[M, p]>_phi`
pub fn weak_ps_mean(
    m: &PointerObservable,
    psi: &SystemState,
    a: &SystemOperator,
    phi: &PointerState,
    gamma: f64,
) -> Result<f64> {
    let mean_a = expectation(psi, a)?;
    let e = ProductExpectations::evaluate(phi, m);
    let hbar = phi.grid().hbar();
    let shift = -C64::i() * (gamma / hbar) * mean_a * e.bracket(BracketKind::Commutator);
    Ok(e.mean_m + shift.re)
}

/// `<M>_phi - (i/hbar) gamma A_w* <[M, p]>_phi + 2 (gamma/hbar) Im A_w ccv(M, p)`
pub fn weak_pps_mean(
    m: &PointerObservable,
    ctx: &PpsContext,
    a: &SystemOperator,
    phi: &PointerState,
    gamma: f64,
) -> Result<f64> {
    let a_w = ctx.weak_value_for(a)?;
    warn_if_strong(gamma, a_w, phi);
    let e = ProductExpectations::evaluate(phi, m);
    let hbar = phi.grid().hbar();
    let ccv = e.m_p - e.mean_m * e.mean_p;
    let total = C64::new(e.mean_m, 0.0) - C64::i() * (gamma / hbar) * a_w.conj() * e.bracket(BracketKind::Commutator)
        + 2.0 * (gamma / hbar) * a_w.im * ccv;
    Ok(total.re)
}

/// Outcome of the heuristic weakness check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeaknessCheck {
    /// `gamma max(1, |A_w|) / Delta_phi q`
    pub ratio: f64,
    pub weak: bool,
}

pub fn weakness_check(gamma: f64, a_w: C64, phi: &PointerState) -> WeaknessCheck {
    let sigma_q = moments(phi, &PointerObservable::Position).var_q.sqrt();
    let ratio = gamma.abs() * a_w.norm().max(1.0) / sigma_q;
    WeaknessCheck { ratio, weak: ratio <= WEAKNESS_RATIO * (1.0 + 1e-9) }
}

fn warn_if_strong(gamma: f64, a_w: C64, phi: &PointerState) {
    let check = weakness_check(gamma, a_w, phi);
    if !check.weak {
        log::warn!(
            "gamma max(1,|A_w|) is {:.3} pointer widths; first-order results may be inaccurate",
            check.ratio
        );
    }
}

/// Error-propagation sensitivities for one pointer observable.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    /// `delta <psi|A|psi>`
    pub delta_mean_a: Option<f64>,
    /// `delta gamma`
    pub delta_gamma: Option<f64>,
    /// `delta Re A_w`
    pub delta_re_aw: Option<f64>,
    /// `B(M, p) = <[M^2, p]> - 2 <M> <[M, p]>`, purely imaginary.
    pub b_mp: C64,
    /// `C(M, p) = <{M^2, p}> - 2 <M> <{M, p}>`
    pub c_mp: f64,
    /// First-order variance of `M` in the final pointer state.
    pub variance_final: f64,
    /// `[C - 2 <p> (Delta^2 M - <M>^2)] Im A_w`; negative values mean the
    /// imaginary part of the weak value sharpens the estimate of `Re A_w`.
    pub im_accuracy_term: Option<f64>,
}

/// `|(i/hbar) gamma <[M, p]>|^2`, rejecting observables that commute with `p`.
fn slope_squared(m: &PointerObservable, e: &ProductExpectations, gamma: f64, hbar: f64) -> Result<f64> {
    if m.is_momentum() {
        return Err(MeasureError::UndefinedSensitivity(
            "M = p commutes with p; its mean carries no first-order signal".into(),
        ));
    }
    let comm = e.bracket(BracketKind::Commutator).norm();
    let slope = gamma.abs() / hbar * comm;
    if !(comm > COMMUTATOR_FLOOR && slope > 0.0) {
        return Err(MeasureError::UndefinedSensitivity(format!(
            "|gamma <[M,p]>| = {slope:e} vanishes for M = {m}"
        )));
    }
    Ok(slope * slope)
}

/// `delta^2 <A> = [Delta^2_phi M - (i/hbar) gamma B <A>] / |(i/hbar) gamma <[M,p]>|^2`
pub fn sensitivity_ps(
    m: &PointerObservable,
    psi: &SystemState,
    a: &SystemOperator,
    phi: &PointerState,
    gamma: f64,
) -> Result<SensitivityReport> {
    let hbar = phi.grid().hbar();
    let mean_a = expectation(psi, a)?;
    let e = ProductExpectations::evaluate(phi, m);
    let denom = slope_squared(m, &e, gamma, hbar)?;
    let b_mp = e.spread_bracket(BracketKind::Commutator);
    let c_mp = e.spread_bracket(BracketKind::Anticommutator).re;
    let variance = (C64::new(e.variance_m(), 0.0) - C64::i() * (gamma / hbar) * b_mp * mean_a).re;
    if variance < 0.0 {
        return Err(MeasureError::InvalidRegime { variance });
    }
    Ok(SensitivityReport {
        delta_mean_a: Some((variance / denom).sqrt()),
        delta_gamma: None,
        delta_re_aw: None,
        b_mp,
        c_mp,
        variance_final: variance,
        im_accuracy_term: None,
    })
}

/// `delta gamma = Delta_phi q / <A>` for a pointer centred at the origin.
pub fn sensitivity_gamma(psi: &SystemState, a: &SystemOperator, phi: &PointerState) -> Result<f64> {
    let mean_a = expectation(psi, a)?;
    if mean_a.abs() < COMMUTATOR_FLOOR {
        return Err(MeasureError::UndefinedSensitivity("<A> = 0 carries no information on gamma".into()));
    }
    let r = moments(phi, &PointerObservable::Position);
    require_centred(r.mean_q, r.var_q)?;
    Ok(r.var_q.sqrt() / mean_a.abs())
}

/// Post-selected analogue of [`sensitivity_gamma`]: the slope of the mean
/// position with respect to `gamma` is `Re A_w + 2 Im A_w cov(q,p) / hbar` and
/// the variance is the first-order `Delta^2_Psi q`. Reduces to
/// `Delta_phi q` when `A_w = 1`.
pub fn sensitivity_gamma_pps(
    ctx: &PpsContext,
    a: &SystemOperator,
    phi: &PointerState,
    gamma: f64,
) -> Result<f64> {
    let a_w = ctx.weak_value_for(a)?;
    let hbar = phi.grid().hbar();
    let r = moments(phi, &PointerObservable::Position);
    require_centred(r.mean_q, r.var_q)?;
    let slope = a_w.re + 2.0 * a_w.im * r.cov_qp / hbar;
    if slope.abs() < COMMUTATOR_FLOOR {
        return Err(MeasureError::UndefinedSensitivity("mean position does not depend on gamma".into()));
    }
    let e = ProductExpectations::evaluate(phi, &PointerObservable::Position);
    let variance = pps_variance(&e, a_w, gamma, hbar);
    if variance < 0.0 {
        return Err(MeasureError::InvalidRegime { variance });
    }
    Ok(variance.sqrt() / slope.abs())
}

fn require_centred(mean_q: f64, var_q: f64) -> Result<()> {
    if mean_q.abs() > 1e-8 * var_q.sqrt().max(1.0) {
        return Err(MeasureError::UndefinedSensitivity(format!(
            "pointer mean position {mean_q:e} is not zero"
        )));
    }
    Ok(())
}

/// `[C - 2 <p> (Delta^2 M - <M>^2)]`, the coefficient of `(gamma/hbar) Im A_w`
/// in the post-selected variance.
fn im_bracket(e: &ProductExpectations) -> f64 {
    let c_mp = e.spread_bracket(BracketKind::Anticommutator).re;
    c_mp - 2.0 * e.mean_p * (e.variance_m() - e.mean_m * e.mean_m)
}

/// `Delta^2_phi M - (i/hbar) gamma B Re A_w + (gamma/hbar) [C - 2<p>(Delta^2 M - <M>^2)] Im A_w`
fn pps_variance(e: &ProductExpectations, a_w: C64, gamma: f64, hbar: f64) -> f64 {
    let b_mp = e.spread_bracket(BracketKind::Commutator);
    let b_term = -C64::i() * (gamma / hbar) * b_mp * a_w.re;
    e.variance_m() + b_term.re + (gamma / hbar) * im_bracket(e) * a_w.im
}

/// `delta^2 Re A_w = Delta^2_Psi M / |(i/hbar) gamma <[M, p]>|^2`
pub fn sensitivity_re_weak_value(
    m: &PointerObservable,
    ctx: &PpsContext,
    a: &SystemOperator,
    phi: &PointerState,
    gamma: f64,
) -> Result<SensitivityReport> {
    let a_w = ctx.weak_value_for(a)?;
    warn_if_strong(gamma, a_w, phi);
    let hbar = phi.grid().hbar();
    let e = ProductExpectations::evaluate(phi, m);
    let denom = slope_squared(m, &e, gamma, hbar)?;
    let variance = pps_variance(&e, a_w, gamma, hbar);
    if variance < 0.0 {
        return Err(MeasureError::InvalidRegime { variance });
    }
    Ok(SensitivityReport {
        delta_mean_a: None,
        delta_gamma: None,
        delta_re_aw: Some((variance / denom).sqrt()),
        b_mp: e.spread_bracket(BracketKind::Commutator),
        c_mp: e.spread_bracket(BracketKind::Anticommutator).re,
        variance_final: variance,
        im_accuracy_term: Some(im_bracket(&e) * a_w.im),
    })
}
