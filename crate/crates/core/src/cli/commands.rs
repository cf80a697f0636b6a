use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ConfigError, Format};
use super::{CliError, Outputs, Run};
use crate::error::{MeasureError, Result};
use crate::exact::{pps_pointer_state, ps_mean_variance, ps_profile};
use crate::hilbert::{PpsContext, Projector};
use crate::io::{Cell, CsvTable};
use crate::oracle::{evolve_joint, oracle_post_select};
use crate::pointer::{moments, PointerObservable, PointerState};
use crate::weak::{
    mc_pps_re_weak_value, mc_ps_gamma, mc_ps_mean_a, sensitivity_gamma, sensitivity_gamma_pps, sensitivity_ps,
    sensitivity_re_weak_value, weakness_check, MonteCarloCheck, SensitivityReport,
};

/// Short machine-readable name of an error, used in status columns.
pub(crate) fn error_code(e: &MeasureError) -> &'static str {
    match e {
        MeasureError::DimensionMismatch { .. } => "dimension_mismatch",
        MeasureError::NotNormalizable { .. } => "not_normalizable",
        MeasureError::DimensionTooSmall(_) => "dimension_too_small",
        MeasureError::DegenerateInput { .. } => "degenerate_input",
        MeasureError::NotHermitian { .. } => "not_hermitian",
        MeasureError::NotIdempotent { .. } => "not_idempotent",
        MeasureError::OrthogonalPostSelection { .. } => "orthogonal_post_selection",
        MeasureError::ContextMismatch { .. } => "context_mismatch",
        MeasureError::PostSelectionFailure { .. } => "post_selection_failure",
        MeasureError::GridContainment(_) => "grid_containment",
        MeasureError::InvalidGrid(_) => "invalid_grid",
        MeasureError::UndefinedSensitivity(_) => "undefined_sensitivity",
        MeasureError::InvalidRegime { .. } => "invalid_regime",
    }
}

/// The projector, if any; a declared projector that fails the idempotency
/// check is a configuration error here.
fn projector(run: &Run) -> std::result::Result<Option<Projector>, CliError> {
    run.config.operator.projector().map_err(|e| {
        ConfigError::Field { field: "system.operator.hermitian_matrix".into(), message: e.to_string() }.into()
    })
}

fn table(run: &Run, header: Vec<String>) -> CsvTable {
    run.meta().into_iter().fold(CsvTable::new(header), |t, (k, v)| t.meta(k, v))
}

/// Means of `q`, `p`, the variance of `q` and every extra observable.
#[derive(Debug, Clone, Serialize)]
struct PointRecord {
    gamma: f64,
    mean_q: f64,
    mean_p: f64,
    var_q: f64,
    extra: Vec<f64>,
    #[serde(skip)]
    profile: Vec<f64>,
}

fn means_table(run: &Run, points: &[PointRecord]) -> CsvTable {
    let mut header: Vec<String> = ["gamma", "mean_q", "mean_p", "var_q"].map(String::from).to_vec();
    header.extend(run.config.observables.iter().map(|(l, _)| format!("mean_{l}")));
    let mut t = table(run, header);
    for p in points {
        let mut row: Vec<Cell> = vec![p.gamma.into(), p.mean_q.into(), p.mean_p.into(), p.var_q.into()];
        row.extend(p.extra.iter().map(|&x| Cell::Num(x)));
        t.push(row);
    }
    t
}

fn write_points(
    run: &Run,
    out: &mut Outputs,
    prefix: &str,
    phi: &PointerState,
    points: &[PointRecord],
) -> std::result::Result<(), CliError> {
    if run.wants(Format::Csv) {
        let positions = phi.grid().positions();
        for (k, p) in points.iter().enumerate() {
            let mut t = table(run, vec!["q".into(), format!("{prefix}_profile")]).meta("gamma", crate::io::format_number(p.gamma));
            for (q, w) in positions.iter().zip(&p.profile) {
                t.push(vec![(*q).into(), (*w).into()]);
            }
            out.write(&format!("{prefix}_profile_{k:03}.csv"), t.render().as_bytes())?;
        }
        out.write(&format!("{prefix}_means.csv"), means_table(run, points).render().as_bytes())?;
    }
    if run.wants(Format::Json) {
        #[derive(Serialize)]
        struct JsonPoint<'a> {
            #[serde(flatten)]
            record: &'a PointRecord,
            profile: &'a [f64],
        }
        #[derive(Serialize)]
        struct JsonOut<'a> {
            extra_observables: Vec<&'a str>,
            q: Vec<f64>,
            points: Vec<JsonPoint<'a>>,
        }
        let doc = JsonOut {
            extra_observables: run.config.observables.iter().map(|(l, _)| l.as_str()).collect(),
            q: phi.grid().positions(),
            points: points.iter().map(|p| JsonPoint { record: p, profile: &p.profile }).collect(),
        };
        out.write_json(&format!("{prefix}.json"), &doc)?;
    }
    Ok(())
}

fn warn_strong(run: &Run, phi: &PointerState, scale: num_complex::Complex64) {
    for &g in &run.config.gammas {
        let check = weakness_check(g, scale, phi);
        if !check.weak {
            log::info!("gamma = {g}: {:.3} pointer widths, beyond the weak regime", check.ratio);
        }
    }
}

pub(crate) fn cmd_ps(run: &Run, out: &mut Outputs) -> std::result::Result<(), CliError> {
    let c = &run.config;
    let phi = c.pointer.build()?;
    let proj = projector(run)?;
    warn_strong(run, &phi, num_complex::Complex64::new(1.0, 0.0));
    let points: Vec<PointRecord> = c
        .gammas
        .par_iter()
        .map(|&gamma| -> Result<PointRecord> {
            match &proj {
                Some(a) => {
                    let (mean_q, var_q) = ps_mean_variance(&PointerObservable::Position, &c.psi, &phi, a, gamma)?;
                    let (mean_p, _) = ps_mean_variance(&PointerObservable::Momentum, &c.psi, &phi, a, gamma)?;
                    let extra = c
                        .observables
                        .iter()
                        .map(|(_, m)| ps_mean_variance(m, &c.psi, &phi, a, gamma).map(|r| r.0))
                        .collect::<Result<_>>()?;
                    Ok(PointRecord { gamma, mean_q, mean_p, var_q, extra, profile: ps_profile(&c.psi, &phi, a, gamma)? })
                }
                None => {
                    let joint = evolve_joint(&c.psi, &phi, c.operator.operator(), gamma)?;
                    let r = joint.pointer_moments(&PointerObservable::Momentum);
                    let extra = c.observables.iter().map(|(_, m)| joint.pointer_moments(m).mean_m).collect();
                    Ok(PointRecord {
                        gamma,
                        mean_q: r.mean_q,
                        mean_p: r.mean_p,
                        var_q: r.var_q,
                        extra,
                        profile: joint.marginal(),
                    })
                }
            }
        })
        .collect::<Result<_>>()?;
    write_points(run, out, "ps", &phi, &points)
}

#[derive(Debug, Serialize)]
struct ComplexValue {
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize)]
struct PpsRow {
    gamma: f64,
    a_w: ComplexValue,
    chi: f64,
    n: f64,
    success_probability: f64,
}

#[derive(Debug, Serialize)]
struct PpsSummary {
    a_w: ComplexValue,
    chi: f64,
    overlap_probability: f64,
    rows: Vec<PpsRow>,
}

fn context(run: &Run) -> std::result::Result<PpsContext, CliError> {
    let c = &run.config;
    let psi_f = c.psi_f.as_ref().ok_or_else(|| ConfigError::Field {
        field: "system.psi_f".into(),
        message: "required for post-selected runs".into(),
    })?;
    Ok(PpsContext::new(&c.psi, psi_f, c.operator.operator())?)
}

pub(crate) fn cmd_pps(run: &Run, out: &mut Outputs) -> std::result::Result<(), CliError> {
    let c = &run.config;
    let ctx = context(run)?;
    let phi = c.pointer.build()?;
    let proj = projector(run)?;
    let a_w = ctx.a_w.value();
    warn_strong(run, &phi, a_w);
    let results: Vec<(PointRecord, PpsRow)> = c
        .gammas
        .par_iter()
        .map(|&gamma| -> Result<(PointRecord, PpsRow)> {
            // Pointer after selection and N = ||(1 - A_w + A_w S) phi||.
            let (pointer, n) = match &proj {
                Some(a) => {
                    let s = pps_pointer_state(&ctx, a, &phi, gamma)?;
                    (s.pointer, s.normalization_n)
                }
                None => {
                    let joint = evolve_joint(&ctx.psi_i, &phi, c.operator.operator(), gamma)?;
                    let s = oracle_post_select(&joint, &ctx.psi_f)?;
                    let n = s.norm / ctx.overlap.norm();
                    (s.pointer, n)
                }
            };
            let r = moments(&pointer, &PointerObservable::Momentum);
            let extra = c.observables.iter().map(|(_, m)| moments(&pointer, m).mean_m).collect();
            let record = PointRecord {
                gamma,
                mean_q: r.mean_q,
                mean_p: r.mean_p,
                var_q: r.var_q,
                extra,
                profile: pointer.density(),
            };
            let row = PpsRow {
                gamma,
                a_w: ComplexValue { re: a_w.re, im: a_w.im },
                chi: ctx.chi,
                n,
                success_probability: ctx.overlap_probability() * n * n,
            };
            Ok((record, row))
        })
        .collect::<Result<_>>()?;
    let (points, rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    write_points(run, out, "pps", &phi, &points)?;
    let summary = PpsSummary {
        a_w: ComplexValue { re: a_w.re, im: a_w.im },
        chi: ctx.chi,
        overlap_probability: ctx.overlap_probability(),
        rows,
    };
    out.write_json("pps_summary.json", &summary)
}

struct SensitivityRow {
    gamma: f64,
    label: String,
    report: Result<SensitivityReport>,
    delta_gamma: Option<Result<f64>>,
}

#[derive(Debug, Serialize)]
struct McEntry {
    gamma: f64,
    #[serde(flatten)]
    check: Option<MonteCarloCheck>,
    within_tolerance: Option<bool>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct ImAccuracy {
    gamma: f64,
    term: Option<f64>,
    /// The imaginary part of the weak value lowers the variance of the estimate.
    improves_accuracy: Option<bool>,
}

#[derive(Debug, Serialize)]
struct McReport {
    seed: u64,
    samples: usize,
    tolerance: f64,
    post_selected: bool,
    skipped: Option<String>,
    checks: Vec<McEntry>,
    im_accuracy: Vec<ImAccuracy>,
}

pub(crate) const MC_TOLERANCE: f64 = 0.1;

pub(crate) fn cmd_sensitivity(run: &Run, out: &mut Outputs) -> std::result::Result<(), CliError> {
    let c = &run.config;
    let phi = c.pointer.build()?;
    let ctx = match &c.psi_f {
        Some(_) => Some(context(run)?),
        None => None,
    };
    let a = c.operator.operator();
    let mut observables = vec![
        ("q".to_string(), PointerObservable::Position),
        ("p".to_string(), PointerObservable::Momentum),
    ];
    observables.extend(c.observables.iter().cloned());

    let mut rows = Vec::new();
    for &gamma in &c.gammas {
        for (label, m) in &observables {
            let report = match &ctx {
                Some(ctx) => sensitivity_re_weak_value(m, ctx, a, &phi, gamma),
                None => sensitivity_ps(m, &c.psi, a, &phi, gamma),
            };
            let delta_gamma = m.is_position().then(|| match &ctx {
                Some(ctx) => sensitivity_gamma_pps(ctx, a, &phi, gamma),
                None => sensitivity_gamma(&c.psi, a, &phi),
            });
            rows.push(SensitivityRow { gamma, label: label.clone(), report, delta_gamma });
        }
    }

    let header = [
        "gamma", "observable", "delta_mean_a", "delta_gamma", "delta_re_aw", "b_mp_im", "c_mp",
        "im_accuracy_term", "status",
    ];
    let mut t = table(run, header.map(String::from).to_vec());
    for r in &rows {
        let dg = match &r.delta_gamma {
            Some(Ok(x)) => Cell::Num(*x),
            _ => Cell::Empty,
        };
        let status = match (&r.report, &r.delta_gamma) {
            (Err(e), _) | (Ok(_), Some(Err(e))) => error_code(e),
            _ => "ok",
        };
        match &r.report {
            Ok(s) => t.push(vec![
                r.gamma.into(),
                r.label.as_str().into(),
                s.delta_mean_a.into(),
                dg,
                s.delta_re_aw.into(),
                s.b_mp.im.into(),
                s.c_mp.into(),
                s.im_accuracy_term.into(),
                status.into(),
            ]),
            Err(_) => t.push(vec![
                r.gamma.into(),
                r.label.as_str().into(),
                Cell::Empty,
                dg,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                status.into(),
            ]),
        }
    }
    out.write("sensitivity.csv", t.render().as_bytes())?;

    let report = monte_carlo(run, &phi, ctx.as_ref(), &rows);
    out.write_json("sensitivity_monte_carlo.json", &report)
}

fn monte_carlo(run: &Run, phi: &PointerState, ctx: Option<&PpsContext>, rows: &[SensitivityRow]) -> McReport {
    let c = &run.config;
    let mut report = McReport {
        seed: run.seed,
        samples: c.samples,
        tolerance: MC_TOLERANCE,
        post_selected: ctx.is_some(),
        skipped: None,
        checks: Vec::new(),
        im_accuracy: Vec::new(),
    };
    if ctx.is_some() {
        report.im_accuracy = rows
            .iter()
            .filter(|r| r.label == "q")
            .map(|r| {
                let term = r.report.as_ref().ok().and_then(|s| s.im_accuracy_term);
                ImAccuracy { gamma: r.gamma, term, improves_accuracy: term.map(|t| t < 0.0) }
            })
            .collect();
    }
    let proj = match c.operator.projector() {
        Ok(Some(p)) => p,
        Ok(None) => {
            report.skipped = Some("readings are sampled from the projector profiles; operator is not a projector".into());
            return report;
        }
        Err(e) => {
            report.skipped = Some(e.to_string());
            return report;
        }
    };
    // One independent stream per coupling keeps results independent of scheduling.
    let entries: Vec<Vec<McEntry>> = c
        .gammas
        .par_iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            rng.set_stream(k as u64);
            let outcomes = match ctx {
                Some(ctx) => vec![mc_pps_re_weak_value(ctx, &proj, phi, gamma, c.samples, &mut rng)],
                None => vec![
                    mc_ps_mean_a(&c.psi, &proj, phi, gamma, c.samples, &mut rng),
                    mc_ps_gamma(&c.psi, &proj, phi, gamma, c.samples, &mut rng),
                ],
            };
            outcomes
                .into_iter()
                .map(|o| match o {
                    Ok(check) => McEntry {
                        gamma,
                        within_tolerance: Some(check.within(MC_TOLERANCE)),
                        check: Some(check),
                        error: None,
                    },
                    Err(e) => McEntry { gamma, check: None, within_tolerance: None, error: Some(e.to_string()) },
                })
                .collect()
        })
        .collect();
    report.checks = entries.into_iter().flatten().collect();
    report
}
