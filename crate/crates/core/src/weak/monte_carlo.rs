//! Sampled pointer readings checked against the predicted sensitivities.
//!
//! Readings are drawn from the exact (all-orders) position profile on the
//! grid; each reading is inverted through the first-order mean to an
//! estimate, and the sample standard deviation of those estimates is the
//! empirical single-reading sensitivity.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use super::{sensitivity_gamma, sensitivity_ps, sensitivity_re_weak_value};
use crate::error::{MeasureError, Result};
use crate::exact::{pps_profile, ps_profile};
use crate::hilbert::{expectation, PpsContext, Projector, SystemState};
use crate::pointer::{moments, PointerGrid, PointerObservable, PointerState};

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloCheck {
    pub quantity: String,
    pub n: usize,
    pub predicted: f64,
    /// Sample standard deviation of the per-reading estimates.
    pub empirical: f64,
    /// Sample mean of the per-reading estimates.
    pub estimate_mean: f64,
    pub relative_error: f64,
}

impl MonteCarloCheck {
    fn new(quantity: &str, predicted: f64, estimates: &[f64]) -> Self {
        let n = estimates.len();
        let mean = estimates.iter().sum::<f64>() / n as f64;
        let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let empirical = var.sqrt();
        Self {
            quantity: quantity.to_string(),
            n,
            predicted,
            empirical,
            estimate_mean: mean,
            relative_error: (empirical - predicted).abs() / predicted,
        }
    }

    pub fn within(&self, tolerance: f64) -> bool {
        self.relative_error <= tolerance
    }
}

/// `n` grid positions drawn with probability proportional to `profile`.
pub fn sample_readings<R: Rng + ?Sized>(
    grid: &PointerGrid,
    profile: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let weights = profile.iter().map(|&w| w.max(0.0));
    let dist = WeightedIndex::new(weights)
        .map_err(|e| MeasureError::InvalidGrid(format!("profile cannot be sampled: {e}")))?;
    Ok((0..n).map(|_| grid.q(dist.sample(rng))).collect())
}

fn require_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(MeasureError::UndefinedSensitivity(format!("{n} samples give no spread")));
    }
    Ok(())
}

/// Each reading `q_j` estimates `<A>` as `(q_j - <q>_phi) / gamma`.
pub fn mc_ps_mean_a<R: Rng + ?Sized>(
    psi: &SystemState,
    a: &Projector,
    phi: &PointerState,
    gamma: f64,
    n: usize,
    rng: &mut R,
) -> Result<MonteCarloCheck> {
    require_samples(n)?;
    let predicted = sensitivity_ps(&PointerObservable::Position, psi, a.operator(), phi, gamma)?
        .delta_mean_a
        .expect("pre-selected report carries delta_mean_a");
    let q0 = moments(phi, &PointerObservable::Position).mean_q;
    let profile = ps_profile(psi, phi, a, gamma)?;
    let estimates: Vec<f64> = sample_readings(phi.grid(), &profile, n, rng)?
        .into_iter()
        .map(|q| (q - q0) / gamma)
        .collect();
    Ok(MonteCarloCheck::new("delta_mean_a", predicted, &estimates))
}

/// Each reading `q_j` estimates `gamma` as `q_j / <A>`.
pub fn mc_ps_gamma<R: Rng + ?Sized>(
    psi: &SystemState,
    a: &Projector,
    phi: &PointerState,
    gamma: f64,
    n: usize,
    rng: &mut R,
) -> Result<MonteCarloCheck> {
    require_samples(n)?;
    let predicted = sensitivity_gamma(psi, a.operator(), phi)?;
    let mean_a = expectation(psi, a.operator())?;
    let profile = ps_profile(psi, phi, a, gamma)?;
    let estimates: Vec<f64> = sample_readings(phi.grid(), &profile, n, rng)?
        .into_iter()
        .map(|q| q / mean_a)
        .collect();
    Ok(MonteCarloCheck::new("delta_gamma", predicted, &estimates))
}

/// Each post-selected reading `q_j` estimates `Re A_w` as
/// `(q_j - <q>_phi - 2 (gamma/hbar) Im A_w cov(q,p)) / gamma`.
pub fn mc_pps_re_weak_value<R: Rng + ?Sized>(
    ctx: &PpsContext,
    a: &Projector,
    phi: &PointerState,
    gamma: f64,
    n: usize,
    rng: &mut R,
) -> Result<MonteCarloCheck> {
    require_samples(n)?;
    let a_w = ctx.weak_value_for(a.operator())?;
    let predicted = sensitivity_re_weak_value(&PointerObservable::Position, ctx, a.operator(), phi, gamma)?
        .delta_re_aw
        .expect("post-selected report carries delta_re_aw");
    let r = moments(phi, &PointerObservable::Position);
    let offset = r.mean_q + 2.0 * gamma / phi.grid().hbar() * a_w.im * r.cov_qp;
    let profile = pps_profile(ctx, a, phi, gamma)?;
    let estimates: Vec<f64> = sample_readings(phi.grid(), &profile, n, rng)?
        .into_iter()
        .map(|q| (q - offset) / gamma)
        .collect();
    Ok(MonteCarloCheck::new("delta_re_aw", predicted, &estimates))
}
