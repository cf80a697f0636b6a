use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::grid::PointerGrid;

/// `coeff * W(q^q_power p^p_power)` where `W` is Weyl symmetrization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTerm {
    pub coeff: f64,
    #[serde(rename = "q")]
    pub q_power: u32,
    #[serde(rename = "p")]
    pub p_power: u32,
}

/// Hermitian pointer observable `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerObservable {
    Position,
    Momentum,
    /// Sum of Weyl-ordered monomials with real coefficients.
    Polynomial(Vec<PolynomialTerm>),
}

impl PointerObservable {
    pub fn monomial(q_power: u32, p_power: u32) -> Self {
        Self::Polynomial(vec![PolynomialTerm { coeff: 1.0, q_power, p_power }])
    }

    pub fn q_squared() -> Self {
        Self::monomial(2, 0)
    }

    pub fn is_momentum(&self) -> bool {
        match self {
            Self::Momentum => true,
            Self::Position => false,
            Self::Polynomial(terms) => {
                !terms.is_empty() && terms.iter().all(|t| t.q_power == 0 && t.p_power == 1 && t.coeff == 1.0)
            }
        }
    }

    pub fn is_position(&self) -> bool {
        match self {
            Self::Position => true,
            Self::Momentum => false,
            Self::Polynomial(terms) => {
                !terms.is_empty() && terms.iter().all(|t| t.q_power == 1 && t.p_power == 0 && t.coeff == 1.0)
            }
        }
    }

    /// Parses `q`, `p`, `q^n`, `p^n`, `qp` (and `pq`, the same Weyl product).
    pub fn parse(spec: &str) -> Option<Self> {
        let s: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        match s.as_str() {
            "q" => return Some(Self::Position),
            "p" => return Some(Self::Momentum),
            "qp" | "pq" => return Some(Self::monomial(1, 1)),
            _ => {}
        }
        let (var, power) = s.split_once('^')?;
        let power: u32 = power.parse().ok().filter(|&n| n >= 1)?;
        match var {
            "q" => Some(Self::monomial(power, 0)),
            "p" => Some(Self::monomial(0, power)),
            _ => None,
        }
    }

    /// Short label used in file headers.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// `M phi` on the grid.
    pub fn apply(&self, grid: &PointerGrid, amps: &[C64]) -> Vec<C64> {
        match self {
            Self::Position => multiply_q_power(grid, amps, 1),
            Self::Momentum => apply_p_power(grid, amps, 1),
            Self::Polynomial(terms) => {
                let mut out = vec![C64::new(0.0, 0.0); amps.len()];
                for t in terms {
                    let part = weyl_monomial(grid, amps, t.q_power, t.p_power);
                    for (o, v) in out.iter_mut().zip(part) {
                        *o += t.coeff * v;
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for PointerObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Position => write!(f, "q"),
            Self::Momentum => write!(f, "p"),
            Self::Polynomial(terms) => {
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    if t.coeff != 1.0 {
                        write!(f, "{}*", t.coeff)?;
                    }
                    let mut wrote = false;
                    for (sym, pow) in [("q", t.q_power), ("p", t.p_power)] {
                        match pow {
                            0 => {}
                            1 => {
                                write!(f, "{sym}")?;
                                wrote = true;
                            }
                            n => {
                                write!(f, "{sym}^{n}")?;
                                wrote = true;
                            }
                        }
                    }
                    if !wrote {
                        write!(f, "1")?;
                    }
                }
                Ok(())
            }
        }
    }
}

fn multiply_q_power(grid: &PointerGrid, amps: &[C64], power: u32) -> Vec<C64> {
    if power == 0 {
        return amps.to_vec();
    }
    amps.iter()
        .enumerate()
        .map(|(j, z)| z * grid.q(j).powi(power as i32))
        .collect()
}

fn apply_p_power(grid: &PointerGrid, amps: &[C64], power: u32) -> Vec<C64> {
    if power == 0 {
        return amps.to_vec();
    }
    grid.apply_momentum_fn(amps, |p| C64::new(p.powi(power as i32), 0.0))
}

/// `W(q^a p^b) = 2^{-a} sum_k C(a, k) q^k p^b q^{a-k}`
fn weyl_monomial(grid: &PointerGrid, amps: &[C64], a: u32, b: u32) -> Vec<C64> {
    if b == 0 {
        return multiply_q_power(grid, amps, a);
    }
    if a == 0 {
        return apply_p_power(grid, amps, b);
    }
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    let scale = 0.5_f64.powi(a as i32);
    for k in 0..=a {
        let inner = multiply_q_power(grid, amps, a - k);
        let mid = apply_p_power(grid, &inner, b);
        let outer = multiply_q_power(grid, &mid, k);
        let w = scale * binomial(a, k);
        for (o, v) in out.iter_mut().zip(outer) {
            *o += w * v;
        }
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::state::{gaussian_pointer, inner_product};

    #[test]
    fn parse_and_label() {
        assert_eq!(PointerObservable::parse("q"), Some(PointerObservable::Position));
        assert_eq!(PointerObservable::parse("p"), Some(PointerObservable::Momentum));
        assert_eq!(PointerObservable::parse("q^2"), Some(PointerObservable::q_squared()));
        assert_eq!(PointerObservable::parse("q p"), Some(PointerObservable::monomial(1, 1)));
        assert_eq!(PointerObservable::parse("x"), None);
        assert_eq!(PointerObservable::parse("q^0"), None);
        assert_eq!(PointerObservable::q_squared().label(), "q^2");
        assert_eq!(PointerObservable::monomial(1, 1).label(), "qp");
    }

    #[test]
    fn symmetrized_qp_is_hermitian() {
        let g = PointerGrid::for_sigma(1.0).unwrap();
        let phi = gaussian_pointer(&g, 0.5, 1.0).unwrap().with_phase(|q| 0.4 * q * q + 0.1 * q);
        let chi = gaussian_pointer(&g, -0.3, 0.8).unwrap().with_phase(|q| -0.2 * q);
        let m = PointerObservable::monomial(1, 1);
        let lhs = inner_product(chi.amplitudes(), &m.apply(&g, phi.amplitudes()), g.dq());
        let rhs = inner_product(&m.apply(&g, chi.amplitudes()), phi.amplitudes(), g.dq());
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn q_squared_on_standard_gaussian() {
        let g = PointerGrid::for_sigma(1.0).unwrap();
        let phi = gaussian_pointer(&g, 0.0, 1.0).unwrap();
        let m = PointerObservable::q_squared();
        let mean = inner_product(phi.amplitudes(), &m.apply(&g, phi.amplitudes()), g.dq());
        assert!((mean.re - 1.0).abs() < 1e-9);
        assert!(mean.im.abs() < 1e-15);
    }
}
