//! Weak-formula error against the exact pointer means as `gamma` shrinks.

use rayon::prelude::*;
use serde::Serialize;

use super::{weak_pps_mean, weak_ps_mean};
use crate::error::Result;
use crate::exact::{pps_mean, ps_mean};
use crate::hilbert::{PpsContext, Projector, SystemOperator, SystemState};
use crate::oracle::{evolve_joint, oracle_post_select, oracle_ps_moments};
use crate::pointer::{moments, PointerObservable, PointerState};

/// Errors below this are indistinguishable from rounding and are left out of
/// the slope fit.
pub const ERROR_FLOOR: f64 = 1e-13;

/// One measurement setup probed at several couplings.
#[derive(Debug, Clone)]
pub enum ProbeInstance {
    PreSelected { psi: SystemState, a: SystemOperator, phi: PointerState, m: PointerObservable },
    PostSelected { ctx: PpsContext, a: SystemOperator, phi: PointerState, m: PointerObservable },
}

impl ProbeInstance {
    fn phi(&self) -> &PointerState {
        match self {
            Self::PreSelected { phi, .. } | Self::PostSelected { phi, .. } => phi,
        }
    }

    /// Exact mean: the closed forms for projectors, brute-force evolution otherwise.
    pub fn exact_mean(&self, gamma: f64) -> Result<f64> {
        match self {
            Self::PreSelected { psi, a, phi, m } => match Projector::new(a.clone()) {
                Ok(proj) => ps_mean(m, psi, phi, &proj, gamma),
                Err(_) => Ok(oracle_ps_moments(&evolve_joint(psi, phi, a, gamma)?, m).mean_m),
            },
            Self::PostSelected { ctx, a, phi, m } => match Projector::new(a.clone()) {
                Ok(proj) => pps_mean(m, ctx, &proj, phi, gamma),
                Err(_) => {
                    let joint = evolve_joint(&ctx.psi_i, phi, a, gamma)?;
                    let selected = oracle_post_select(&joint, &ctx.psi_f)?;
                    Ok(moments(&selected.pointer, m).mean_m)
                }
            },
        }
    }

    pub fn weak_mean(&self, gamma: f64) -> Result<f64> {
        match self {
            Self::PreSelected { psi, a, phi, m } => weak_ps_mean(m, psi, a, phi, gamma),
            Self::PostSelected { ctx, a, phi, m } => weak_pps_mean(m, ctx, a, phi, gamma),
        }
    }

    fn weak_value_magnitude(&self) -> f64 {
        match self {
            Self::PreSelected { .. } => 1.0,
            Self::PostSelected { ctx, .. } => ctx.a_w.value().norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub gamma: f64,
    pub exact: f64,
    pub weak: f64,
    pub error: f64,
    /// Whether `gamma` passes the weakness heuristic.
    pub weak_regime: bool,
    /// `error(previous gamma) / error(this gamma)`, absent for the first row,
    /// outside the weak regime or at rounding level.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln error` against `ln gamma` over weak-regime
    /// rows above [`ERROR_FLOOR`]; absent when fewer than two such rows exist.
    pub slope: Option<f64>,
}

impl ConvergenceTable {
    /// Every available halving ratio, rescaled to a factor-of-two step, lies
    /// in `[lo, hi]`.
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        self.rows.windows(2).all(|w| match w[1].ratio {
            Some(r) => {
                let step = (w[0].gamma / w[1].gamma).log2();
                let per_halving = r.powf(1.0 / step);
                (lo..=hi).contains(&per_halving)
            }
            None => true,
        })
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }
}

/// `|exact - weak|` along a decreasing sequence of couplings.
pub fn convergence_probe(instance: &ProbeInstance, gammas: &[f64]) -> Result<ConvergenceTable> {
    let sigma_q = moments(instance.phi(), &PointerObservable::Position).var_q.sqrt();
    let scale = instance.weak_value_magnitude().max(1.0);
    let evaluated: Vec<Result<(f64, f64)>> = gammas
        .par_iter()
        .map(|&g| Ok((instance.exact_mean(g)?, instance.weak_mean(g)?)))
        .collect();

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(gammas.len());
    for (&gamma, values) in gammas.iter().zip(evaluated) {
        let (exact, weak) = values?;
        let error = (exact - weak).abs();
        let weak_regime = gamma.abs() * scale <= super::WEAKNESS_RATIO * sigma_q * (1.0 + 1e-9);
        let ratio = rows.last().and_then(|prev| {
            (weak_regime && prev.weak_regime && prev.error > ERROR_FLOOR && error > ERROR_FLOOR)
                .then(|| prev.error / error)
        });
        rows.push(ConvergenceRow { gamma, exact, weak, error, weak_regime, ratio });
    }

    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.weak_regime && r.gamma > 0.0 && r.error > ERROR_FLOOR)
        .map(|r| (r.gamma.ln(), r.error.ln()))
        .collect();
    Ok(ConvergenceTable { rows, slope: fit_slope(&fit) })
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `count` couplings spaced evenly in `ln gamma` from `hi` down to `lo`.
pub fn log_spaced(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}
