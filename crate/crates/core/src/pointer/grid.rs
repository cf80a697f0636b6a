use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{MeasureError, Result};

pub const DEFAULT_POINTS: usize = 1024;
pub const MIN_POINTS: usize = 64;

/// Uniform periodic position grid `q_j = q_min + j dq`, `j = 0..n`, with its
/// conjugate momentum grid.
///
/// Holds shared FFT plans; transforms allocate their own scratch so a grid can
/// be used from several threads at once.
#[derive(Clone)]
pub struct PointerGrid {
    n_points: usize,
    q_min: f64,
    q_max: f64,
    hbar: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PointerGrid {
    pub fn new(n_points: usize, q_min: f64, q_max: f64, hbar: f64) -> Result<Self> {
        if n_points < MIN_POINTS || !n_points.is_power_of_two() {
            return Err(MeasureError::InvalidGrid(format!(
                "n_points must be a power of two >= {MIN_POINTS}, got {n_points}"
            )));
        }
        if !(q_min.is_finite() && q_max.is_finite() && q_max > q_min) {
            return Err(MeasureError::InvalidGrid(format!("empty range [{q_min}, {q_max}]")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(MeasureError::InvalidGrid(format!("hbar must be positive, got {hbar}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_points,
            q_min,
            q_max,
            hbar,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        })
    }

    /// Default layout for a pointer of width `sigma`: `[-20 sigma, 20 sigma]`,
    /// 1024 points, `hbar = 1`.
    pub fn for_sigma(sigma: f64) -> Result<Self> {
        Self::new(DEFAULT_POINTS, -20.0 * sigma, 20.0 * sigma, 1.0)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_points as f64
    }

    pub fn q(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.dq()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.q(j)).collect()
    }

    /// Momentum of Fourier mode `k` in FFT ordering (non-negative modes first).
    pub fn p(&self, k: usize) -> f64 {
        let n = self.n_points as i64;
        let k = k as i64;
        let signed = if k < n / 2 { k } else { k - n };
        2.0 * PI * self.hbar * signed as f64 / (n as f64 * self.dq())
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.p(k)).collect()
    }

    pub(crate) fn fft_forward(&self, data: &mut [C64]) {
        let mut scratch = vec![C64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(data, &mut scratch);
    }

    /// Inverse transform including the `1/n` factor.
    pub(crate) fn fft_inverse(&self, data: &mut [C64]) {
        let mut scratch = vec![C64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(data, &mut scratch);
        let scale = 1.0 / self.n_points as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Applies a function of momentum, `f(p)`, to position-space amplitudes.
    pub(crate) fn apply_momentum_fn(&self, amps: &[C64], f: impl Fn(f64) -> C64) -> Vec<C64> {
        let mut buf = amps.to_vec();
        self.fft_forward(&mut buf);
        for (k, z) in buf.iter_mut().enumerate() {
            *z *= f(self.p(k));
        }
        self.fft_inverse(&mut buf);
        buf
    }
}

impl PartialEq for PointerGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points
            && self.q_min == other.q_min
            && self.q_max == other.q_max
            && self.hbar == other.hbar
    }
}

impl fmt::Debug for PointerGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointerGrid")
            .field("n_points", &self.n_points)
            .field("q_min", &self.q_min)
            .field("q_max", &self.q_max)
            .field("hbar", &self.hbar)
            .finish()
    }
}
