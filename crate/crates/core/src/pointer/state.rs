use num_complex::Complex64 as C64;

use super::grid::PointerGrid;
use crate::error::{MeasureError, Result};

pub const NORM_TOLERANCE: f64 = 1e-10;
/// Maximum amplitude, relative to the peak, allowed on the two outermost
/// points at either end of the grid.
pub const EDGE_TOLERANCE: f64 = 1e-10;
/// Relative amplitude that delimits the support of a state.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
const EDGE_POINTS: usize = 2;

/// Normalized pointer wavefunction sampled on a [`PointerGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointerState {
    grid: PointerGrid,
    amps: Vec<C64>,
}

impl PointerState {
    /// Requires `sum |phi_j|^2 dq = 1` within `1e-10` and edge containment.
    pub fn new(grid: PointerGrid, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != grid.n_points() {
            return Err(MeasureError::DimensionMismatch {
                expected: grid.n_points(),
                found: amps.len(),
            });
        }
        let norm2 = squared_norm(&amps, grid.dq());
        if !((norm2 - 1.0).abs() < NORM_TOLERANCE) {
            return Err(MeasureError::NotNormalizable { norm: norm2.sqrt() });
        }
        let state = Self { grid, amps };
        state.check_edges()?;
        Ok(state)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(grid: PointerGrid, mut amps: Vec<C64>) -> Result<Self> {
        if amps.len() != grid.n_points() {
            return Err(MeasureError::DimensionMismatch {
                expected: grid.n_points(),
                found: amps.len(),
            });
        }
        let norm = squared_norm(&amps, grid.dq()).sqrt();
        if !(norm.is_finite() && norm > 1e-300) {
            return Err(MeasureError::NotNormalizable { norm });
        }
        for z in amps.iter_mut() {
            *z /= norm;
        }
        Self::new(grid, amps)
    }

    /// Samples `f(q)` on the grid and normalizes.
    pub fn from_fn(grid: PointerGrid, f: impl Fn(f64) -> C64) -> Result<Self> {
        let amps = grid.positions().into_iter().map(f).collect();
        Self::normalized(grid, amps)
    }

    /// Multiplies by the position-dependent phase `e^{i theta(q)}`.
    pub fn with_phase(&self, theta: impl Fn(f64) -> f64) -> Self {
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(j, z)| z * C64::from_polar(1.0, theta(self.grid.q(j))))
            .collect();
        Self { grid: self.grid.clone(), amps }
    }

    /// Multiplies by a constant phase `e^{i theta}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        self.with_phase(|_| theta)
    }

    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// `|phi(q_j)|^2`
    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm_squared(&self) -> f64 {
        squared_norm(&self.amps, self.grid.dq())
    }

    /// Index range `[lo, hi]` where `|phi|` reaches [`SUPPORT_THRESHOLD`] of its peak.
    pub fn support(&self) -> (usize, usize) {
        let peak = self.peak();
        let inside = |z: &C64| z.norm() >= SUPPORT_THRESHOLD * peak;
        let lo = self.amps.iter().position(inside).unwrap_or(0);
        let hi = self.amps.iter().rposition(inside).unwrap_or(self.amps.len() - 1);
        (lo, hi)
    }

    fn peak(&self) -> f64 {
        self.amps.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    fn check_edges(&self) -> Result<()> {
        let peak = self.peak();
        let n = self.amps.len();
        let edges = (0..EDGE_POINTS).chain(n - EDGE_POINTS..n);
        let worst = edges.map(|j| self.amps[j].norm()).fold(0.0_f64, f64::max);
        if worst >= EDGE_TOLERANCE * peak {
            return Err(MeasureError::GridContainment(format!(
                "edge amplitude {:.3e} of peak exceeds {EDGE_TOLERANCE:e}",
                worst / peak
            )));
        }
        Ok(())
    }

    /// Checks that shifting by `gamma` keeps the support clear of the edges.
    pub fn check_shift(&self, gamma: f64) -> Result<()> {
        let (lo, hi) = self.support();
        let shift = gamma / self.grid.dq();
        let lo = lo as f64 + shift;
        let hi = hi as f64 + shift;
        let last = (self.amps.len() - 1 - EDGE_POINTS) as f64;
        if !(lo.floor() >= EDGE_POINTS as f64 && hi.ceil() <= last) {
            return Err(MeasureError::GridContainment(format!(
                "shift {gamma} moves support to [{:.3}, {:.3}] outside [{}, {}]",
                self.grid.q_min() + lo * self.grid.dq(),
                self.grid.q_min() + hi * self.grid.dq(),
                self.grid.q(EDGE_POINTS),
                self.grid.q(self.amps.len() - 1 - EDGE_POINTS),
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(grid: PointerGrid, amps: Vec<C64>) -> Self {
        Self { grid, amps }
    }
}

pub(crate) fn squared_norm(amps: &[C64], dq: f64) -> f64 {
    amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq
}

/// `<a|b> = sum conj(a_j) b_j dq`
pub fn inner_product(a: &[C64], b: &[C64], dq: f64) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * dq
}

/// Gaussian pointer `(2 pi sigma^2)^{-1/4} exp(-(q - center)^2 / 4 sigma^2)`.
pub fn gaussian_pointer(grid: &PointerGrid, center: f64, sigma: f64) -> Result<PointerState> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MeasureError::InvalidGrid(format!("sigma must be positive, got {sigma}")));
    }
    if center - 6.0 * sigma < grid.q_min() || center + 6.0 * sigma > grid.q_max() {
        return Err(MeasureError::GridContainment(format!(
            "6-sigma support [{}, {}] leaves [{}, {}]",
            center - 6.0 * sigma,
            center + 6.0 * sigma,
            grid.q_min(),
            grid.q_max()
        )));
    }
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    PointerState::from_fn(grid.clone(), |q| {
        let x = (q - center) / sigma;
        C64::new(norm * (-0.25 * x * x).exp(), 0.0)
    })
}

/// `<q|S(gamma)|phi> = phi(q - gamma)`, applied as `e^{-i gamma p / hbar}` in
/// momentum space.
pub fn translate(phi: &PointerState, gamma: f64) -> Result<PointerState> {
    if gamma == 0.0 {
        return Ok(phi.clone());
    }
    phi.check_shift(gamma)?;
    let amps = translate_amplitudes(&phi.grid, &phi.amps, gamma);
    Ok(PointerState::from_parts_unchecked(phi.grid.clone(), amps))
}

/// Shift without containment checks; callers validate the source state.
pub(crate) fn translate_amplitudes(grid: &PointerGrid, amps: &[C64], gamma: f64) -> Vec<C64> {
    if gamma == 0.0 {
        return amps.to_vec();
    }
    let hbar = grid.hbar();
    grid.apply_momentum_fn(amps, |p| C64::from_polar(1.0, -gamma * p / hbar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{observable::PointerObservable, moments::moments};

    fn grid() -> PointerGrid {
        PointerGrid::for_sigma(1.0).unwrap()
    }

    fn analytic_gaussian(q: f64, center: f64, sigma: f64) -> f64 {
        (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25)
            * (-(q - center).powi(2) / (4.0 * sigma * sigma)).exp()
    }

    #[test]
    fn standard_gaussian_moments() {
        let phi = gaussian_pointer(&grid(), 0.0, 1.0).unwrap();
        let r = moments(&phi, &PointerObservable::Position);
        assert!(r.mean_q.abs() < 1e-9);
        assert!((r.var_q - 1.0).abs() < 1e-6);
        assert!((r.var_p - 0.25).abs() < 1e-9);
        assert!(r.mean_p.abs() < 1e-12);
    }

    #[test]
    fn displaced_narrow_gaussian() {
        let phi = gaussian_pointer(&grid(), 3.0, 0.5).unwrap();
        let r = moments(&phi, &PointerObservable::Position);
        assert!((r.mean_q - 3.0).abs() < 1e-9);
        assert!((r.var_q - 0.25).abs() < 0.25e-6);
    }

    #[test]
    fn too_wide_gaussian_is_rejected() {
        assert!(matches!(
            gaussian_pointer(&grid(), 0.0, 4.0),
            Err(MeasureError::GridContainment(_))
        ));
        // Inside the 6-sigma rule but with visible amplitude at the edge.
        assert!(matches!(
            gaussian_pointer(&grid(), 13.5, 1.0),
            Err(MeasureError::GridContainment(_))
        ));
    }

    #[test]
    fn zero_shift_is_identity() {
        let phi = gaussian_pointer(&grid(), 0.0, 1.0).unwrap();
        let out = translate(&phi, 0.0).unwrap();
        for (a, b) in phi.amplitudes().iter().zip(out.amplitudes()) {
            assert!((a - b).norm() <= 1e-15);
        }
    }

    #[test]
    fn shift_moves_gaussian_center() {
        let g = grid();
        let phi = gaussian_pointer(&g, 0.0, 1.0).unwrap();
        let shifted = translate(&phi, 1.5).unwrap();
        let expected = gaussian_pointer(&g, 1.5, 1.0).unwrap();
        for (a, b) in shifted.amplitudes().iter().zip(expected.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fractional_shift_matches_analytic_samples() {
        let g = grid();
        let phi = gaussian_pointer(&g, 0.0, 1.0).unwrap();
        let gamma = 0.3 * g.dq();
        let shifted = translate(&phi, gamma).unwrap();
        for (j, z) in shifted.amplitudes().iter().enumerate() {
            let exact = analytic_gaussian(g.q(j), gamma, 1.0);
            assert!((z - C64::new(exact, 0.0)).norm() < 1e-9, "j={j}");
        }
    }

    #[test]
    fn shift_preserves_norm_and_momentum() {
        let g = grid();
        let phi = gaussian_pointer(&g, -1.0, 1.2).unwrap().with_phase(|q| 0.3 * q * q);
        let before = moments(&phi, &PointerObservable::Position);
        let out = translate(&phi, 2.7).unwrap();
        let after = moments(&out, &PointerObservable::Position);
        assert!((out.norm_squared() - 1.0).abs() < 1e-12);
        assert!((after.mean_p - before.mean_p).abs() < 1e-12);
        assert!((after.mean_q - before.mean_q - 2.7).abs() < 1e-9);
    }

    #[test]
    fn shift_off_the_grid_is_rejected() {
        let phi = gaussian_pointer(&grid(), 0.0, 1.0).unwrap();
        assert!(translate(&phi, 5.0).is_ok());
        assert!(matches!(translate(&phi, 12.0), Err(MeasureError::GridContainment(_))));
        assert!(matches!(translate(&phi, -45.0), Err(MeasureError::GridContainment(_))));
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let g = grid();
        let phi = gaussian_pointer(&g, 0.0, 1.0).unwrap();
        let doubled: Vec<C64> = phi.amplitudes().iter().map(|z| z * 2.0).collect();
        assert!(matches!(PointerState::new(g.clone(), doubled.clone()), Err(MeasureError::NotNormalizable { .. })));
        assert!(PointerState::normalized(g, doubled).is_ok());
    }
}
