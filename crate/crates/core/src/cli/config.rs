//! Experiment configuration: one JSON document, complex numbers as `[re, im]`.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::MeasureError;
use crate::hilbert::{make_projector, Projector, SystemOperator, SystemState};
use crate::pointer::{gaussian_pointer, PointerGrid, PointerObservable, PointerState, PolynomialTerm};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Field { field: field.to_string(), message: message.to_string() }
}

type Complex = [f64; 2];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    #[serde(default)]
    pointer: RawPointer,
    sweep: RawSweep,
    #[serde(default)]
    observables: Vec<RawObservable>,
    #[serde(default)]
    outputs: RawOutputs,
    seed: Option<u64>,
    #[serde(default)]
    monte_carlo: RawMonteCarlo,
    #[serde(default)]
    verify: RawVerify,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    dimension: usize,
    psi: Vec<Complex>,
    psi_f: Option<Vec<Complex>>,
    operator: RawOperator,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    projector_basis: Option<Vec<Vec<Complex>>>,
    hermitian_matrix: Option<Vec<Vec<Complex>>>,
    /// Asserts that `hermitian_matrix` is a projector.
    #[serde(default)]
    projector: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPointer {
    n_points: Option<usize>,
    q_range: Option<[f64; 2]>,
    sigma: Option<f64>,
    center: Option<f64>,
    hbar: Option<f64>,
    momentum: Option<f64>,
    chirp: Option<f64>,
    cubic: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    gammas: Option<Vec<f64>>,
    range: Option<[f64; 2]>,
    steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawObservable {
    Named(String),
    Polynomial { label: Option<String>, terms: Vec<PolynomialTerm> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    directory: Option<PathBuf>,
    formats: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonteCarlo {
    samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    random_instances: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

/// How the measured operator was specified.
#[derive(Debug, Clone)]
pub enum OperatorSpec {
    /// Built from an orthonormalized basis of its range.
    Projector(Projector),
    /// A Hermitian matrix, with a flag if the config claims it is a projector.
    Matrix { op: SystemOperator, declared_projector: bool },
}

impl OperatorSpec {
    pub fn operator(&self) -> &SystemOperator {
        match self {
            Self::Projector(p) => p.operator(),
            Self::Matrix { op, .. } => op,
        }
    }

    /// `Ok(Some)` for projectors, `Ok(None)` for general Hermitian operators,
    /// and the idempotency error when a declared projector is not one.
    pub fn projector(&self) -> Result<Option<Projector>, MeasureError> {
        match self {
            Self::Projector(p) => Ok(Some(p.clone())),
            Self::Matrix { op, declared_projector: true } => Projector::new(op.clone()).map(Some),
            Self::Matrix { op, declared_projector: false } => Ok(Projector::new(op.clone()).ok()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointerSpec {
    pub grid: PointerGrid,
    pub sigma: f64,
    pub center: f64,
    pub momentum: f64,
    pub chirp: f64,
    pub cubic: f64,
}

impl PointerSpec {
    /// Gaussian of width `sigma` with phase `p0 q / hbar + c (q-q0)^2 + k (q-q0)^3`.
    pub fn build(&self) -> Result<PointerState, MeasureError> {
        let base = gaussian_pointer(&self.grid, self.center, self.sigma)?;
        let hbar = self.grid.hbar();
        let (c, p0, a2, a3) = (self.center, self.momentum, self.chirp, self.cubic);
        Ok(base.with_phase(|q| p0 * q / hbar + a2 * (q - c).powi(2) + a3 * (q - c).powi(3)))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub psi: SystemState,
    pub psi_f: Option<SystemState>,
    pub operator: OperatorSpec,
    pub pointer: PointerSpec,
    pub gammas: Vec<f64>,
    /// Labelled observables beyond `q` and `p`, which are always reported.
    pub observables: Vec<(String, PointerObservable)>,
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub seed: u64,
    pub samples: usize,
    pub random_instances: usize,
    /// Hex SHA-256 of the raw config bytes.
    pub hash: String,
}

pub const DEFAULT_SEED: u64 = 0x5eed;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_RANDOM_INSTANCES: usize = 200;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_slice(bytes)?;
        let hash = hex::encode(Sha256::digest(bytes));
        let dim = raw.system.dimension;
        if dim < 2 {
            return Err(field_err("system.dimension", "must be at least 2"));
        }
        let psi = state(&raw.system.psi, dim, "system.psi")?;
        let psi_f = raw.system.psi_f.as_deref().map(|v| state(v, dim, "system.psi_f")).transpose()?;
        let operator = operator(&raw.system.operator, dim)?;
        let pointer = pointer(&raw.pointer)?;
        let gammas = sweep(&raw.sweep)?;
        let observables = observables(&raw.observables)?;
        let formats = match &raw.outputs.formats {
            None => vec![Format::Csv],
            Some(list) if list.is_empty() => return Err(field_err("outputs.formats", "must not be empty")),
            Some(list) => list
                .iter()
                .map(|s| Format::parse(s).ok_or_else(|| field_err("outputs.formats", format!("unknown format {s:?}"))))
                .collect::<Result<_, _>>()?,
        };
        let samples = raw.monte_carlo.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples < 2 {
            return Err(field_err("monte_carlo.samples", "need at least 2 samples"));
        }
        Ok(Self {
            psi,
            psi_f,
            operator,
            pointer,
            gammas,
            observables,
            directory: raw.outputs.directory,
            formats,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            samples,
            random_instances: raw.verify.random_instances.unwrap_or(DEFAULT_RANDOM_INSTANCES),
            hash,
        })
    }
}

fn complex_vec(v: &[Complex]) -> Vec<C64> {
    v.iter().map(|z| C64::new(z[0], z[1])).collect()
}

fn state(v: &[Complex], dim: usize, field: &str) -> Result<SystemState, ConfigError> {
    if v.len() != dim {
        return Err(field_err(field, format!("has {} amplitudes, dimension is {dim}", v.len())));
    }
    SystemState::normalized(complex_vec(v)).map_err(|e| field_err(field, e))
}

fn operator(raw: &RawOperator, dim: usize) -> Result<OperatorSpec, ConfigError> {
    match (&raw.projector_basis, &raw.hermitian_matrix) {
        (Some(basis), None) => {
            if raw.projector {
                return Err(field_err("system.operator.projector", "only applies to hermitian_matrix"));
            }
            if basis.is_empty() {
                return Err(field_err("system.operator.projector_basis", "must list at least one vector"));
            }
            let vectors = basis
                .iter()
                .enumerate()
                .map(|(k, v)| state(v, dim, &format!("system.operator.projector_basis[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            make_projector(&vectors)
                .map(OperatorSpec::Projector)
                .map_err(|e| field_err("system.operator.projector_basis", e))
        }
        (None, Some(rows)) => {
            let field = "system.operator.hermitian_matrix";
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(field_err(field, format!("must be {dim} x {dim}")));
            }
            let rows: Vec<Vec<C64>> = rows.iter().map(|r| complex_vec(r)).collect();
            let op = SystemOperator::from_rows(&rows).map_err(|e| field_err(field, e))?;
            Ok(OperatorSpec::Matrix { op, declared_projector: raw.projector })
        }
        (Some(_), Some(_)) => Err(field_err(
            "system.operator",
            "give either projector_basis or hermitian_matrix, not both",
        )),
        (None, None) => Err(field_err("system.operator", "needs projector_basis or hermitian_matrix")),
    }
}

fn pointer(raw: &RawPointer) -> Result<PointerSpec, ConfigError> {
    let sigma = raw.sigma.unwrap_or(1.0);
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(field_err("pointer.sigma", "must be positive"));
    }
    let center = raw.center.unwrap_or(0.0);
    let hbar = raw.hbar.unwrap_or(1.0);
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(field_err("pointer.hbar", "must be positive"));
    }
    let [q_min, q_max] = raw.q_range.unwrap_or([center - 20.0 * sigma, center + 20.0 * sigma]);
    let n = raw.n_points.unwrap_or(1024);
    let grid = PointerGrid::new(n, q_min, q_max, hbar).map_err(|e| {
        let field = if matches!(raw.n_points, Some(n) if !n.is_power_of_two() || n < 64) {
            "pointer.n_points"
        } else {
            "pointer.q_range"
        };
        field_err(field, e)
    })?;
    let spec = PointerSpec {
        grid,
        sigma,
        center,
        momentum: raw.momentum.unwrap_or(0.0),
        chirp: raw.chirp.unwrap_or(0.0),
        cubic: raw.cubic.unwrap_or(0.0),
    };
    spec.build().map_err(|e| field_err("pointer", e))?;
    Ok(spec)
}

fn sweep(raw: &RawSweep) -> Result<Vec<f64>, ConfigError> {
    let gammas = match (&raw.gammas, raw.range, raw.steps) {
        (Some(g), None, None) => g.clone(),
        (None, Some([lo, hi]), steps) => {
            let steps = steps.unwrap_or(10);
            if steps == 0 {
                return Err(field_err("sweep.steps", "must be positive"));
            }
            if steps == 1 {
                vec![lo]
            } else {
                (0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect()
            }
        }
        (Some(_), _, _) => return Err(field_err("sweep", "give either gammas or range+steps, not both")),
        (None, None, _) => return Err(field_err("sweep", "needs gammas or range")),
    };
    if gammas.is_empty() {
        return Err(field_err("sweep.gammas", "must not be empty"));
    }
    if let Some(bad) = gammas.iter().find(|g| !g.is_finite()) {
        return Err(field_err("sweep.gammas", format!("non-finite coupling {bad}")));
    }
    Ok(gammas)
}

fn observables(raw: &[RawObservable]) -> Result<Vec<(String, PointerObservable)>, ConfigError> {
    let mut out: Vec<(String, PointerObservable)> = Vec::new();
    for (k, o) in raw.iter().enumerate() {
        let field = format!("observables[{k}]");
        let (label, obs) = match o {
            RawObservable::Named(s) => {
                let obs = PointerObservable::parse(s).ok_or_else(|| field_err(&field, format!("cannot parse {s:?}")))?;
                (obs.label(), obs)
            }
            RawObservable::Polynomial { label, terms } => {
                if terms.is_empty() {
                    return Err(field_err(&field, "polynomial needs at least one term"));
                }
                let obs = PointerObservable::Polynomial(terms.clone());
                (label.clone().unwrap_or_else(|| obs.label()), obs)
            }
        };
        if label.is_empty() || label.contains([',', '\n', '"']) {
            return Err(field_err(&field, format!("label {label:?} is not usable as a column name")));
        }
        if obs.is_position() || obs.is_momentum() || out.iter().any(|(l, _)| *l == label) {
            continue;
        }
        out.push((label, obs));
    }
    Ok(out)
}
