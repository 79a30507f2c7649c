//! Truncated complex Taylor series.
//!
//! A jet of order `p` stores `c_0..c_p` with `c_k = f^(k)(0) / k!`. All
//! arithmetic is closed at fixed order: terms beyond `x^p` are discarded.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{LabError, Result};

/// Constant terms at or below this modulus are rejected by [`Jet::log`].
pub const LOG_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<Complex64>,
}

impl Jet {
    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); order + 1],
        }
    }

    pub fn constant(c: Complex64, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.coeffs[0] = c;
        j
    }

    /// The identity series `x`.
    pub fn variable(order: usize) -> Self {
        let mut j = Self::zero(order);
        if order >= 1 {
            j.coeffs[1] = Complex64::new(1.0, 0.0);
        }
        j
    }

    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Self { coeffs }
    }

    /// `c * exp(a x)` truncated at `order`.
    pub fn scaled_exponential(c: Complex64, a: Complex64, order: usize) -> Self {
        let mut coeffs = Vec::with_capacity(order + 1);
        let mut term = c;
        for k in 0..=order {
            if k > 0 {
                term = term * a / k as f64;
            }
            coeffs.push(term);
        }
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs[k]
    }

    pub fn set_coeff(&mut self, k: usize, c: Complex64) {
        self.coeffs[k] = c;
    }

    /// `f^(k)(0) = k! c_k`.
    pub fn derivative(&self, k: usize) -> Complex64 {
        self.coeffs[k] * factorial(k)
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    /// Substitution `x -> s x`, i.e. `c_k -> c_k s^k`.
    pub fn rescale_argument(&self, s: Complex64) -> Jet {
        let mut p = Complex64::new(1.0, 0.0);
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| {
                let out = c * p;
                p *= s;
                out
            })
            .collect();
        Jet { coeffs }
    }

    /// Adds `a * b` into `self` (fused, truncated).
    pub fn add_product(&mut self, a: &Jet, b: &Jet) {
        let p = self.order();
        for (i, &ai) in a.coeffs.iter().enumerate().take(p + 1) {
            if ai == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (j, &bj) in b.coeffs.iter().enumerate().take(p + 1 - i) {
                self.coeffs[i + j] += ai * bj;
            }
        }
    }

    pub fn add_scaled(&mut self, a: &Jet, s: f64) {
        for (c, &x) in self.coeffs.iter_mut().zip(&a.coeffs) {
            *c += x * s;
        }
    }

    pub fn exp(&self) -> Jet {
        let p = self.order();
        let mut b = vec![Complex64::new(0.0, 0.0); p + 1];
        b[0] = self.coeffs[0].exp();
        for k in 1..=p {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                s += self.coeffs[j] * b[k - j] * j as f64;
            }
            b[k] = s / k as f64;
        }
        Jet { coeffs: b }
    }

    /// Principal-branch logarithm of the constant term; higher coefficients
    /// are the formal series.
    pub fn log(&self) -> Result<Jet> {
        let a0 = self.coeffs[0];
        if a0.norm() <= LOG_THRESHOLD {
            return Err(LabError::LogOfVanishingJet(a0.norm()));
        }
        let p = self.order();
        let mut b = vec![Complex64::new(0.0, 0.0); p + 1];
        b[0] = a0.ln();
        for k in 1..=p {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 1..k {
                s += b[j] * self.coeffs[k - j] * j as f64;
            }
            b[k] = (self.coeffs[k] - s / k as f64) / a0;
        }
        Ok(Jet { coeffs: b })
    }

    pub fn checked_div(&self, other: &Jet) -> Option<Jet> {
        let b0 = other.coeffs[0];
        if b0 == Complex64::new(0.0, 0.0) {
            return None;
        }
        let p = self.order().min(other.order());
        let mut c = vec![Complex64::new(0.0, 0.0); p + 1];
        for k in 0..=p {
            let mut s = self.coeffs[k];
            for j in 1..=k {
                s -= other.coeffs[j] * c[k - j];
            }
            c[k] = s / b0;
        }
        Some(Jet { coeffs: c })
    }

    pub fn truncate(&self, order: usize) -> Jet {
        Jet {
            coeffs: self.coeffs[..=order.min(self.order())].to_vec(),
        }
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Truncated product of two jets.
pub fn jet_mul(a: &Jet, b: &Jet) -> Jet {
    a * b
}

pub fn jet_exp(a: &Jet) -> Jet {
    a.exp()
}

pub fn jet_log(a: &Jet) -> Result<Jet> {
    a.log()
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let p = self.order().min(rhs.order());
        Jet {
            coeffs: (0..=p).map(|k| self.coeffs[k] + rhs.coeffs[k]).collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let p = self.order().min(rhs.order());
        Jet {
            coeffs: (0..=p).map(|k| self.coeffs[k] - rhs.coeffs[k]).collect(),
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let p = self.order().min(rhs.order());
        let mut out = Jet::zero(p);
        out.add_product(self, rhs);
        out
    }
}

impl Div for &Jet {
    type Output = Jet;
    /// Panics when the divisor has a zero constant term.
    fn div(self, rhs: &Jet) -> Jet {
        self.checked_div(rhs).expect("division by a jet with zero constant term")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_of_one_is_zero() {
        let j = Jet::constant(c(1.0, 0.0), 5).log().unwrap();
        assert!(j.coeffs().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn exp_of_x_plus_x_squared() {
        // exp(x + x^2) = 1 + x + 3/2 x^2 + 7/6 x^3 + 25/24 x^4 + ...
        let a = Jet::from_coeffs(vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e = a.exp();
        let expected = [1.0, 1.0, 1.5, 7.0 / 6.0, 25.0 / 24.0];
        for (got, want) in e.coeffs().iter().zip(expected) {
            assert!((got - c(want, 0.0)).norm() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn vanishing_log_rejected() {
        let j = Jet::from_coeffs(vec![c(1e-14, 0.0), c(1.0, 0.0)]);
        assert!(matches!(j.log(), Err(LabError::LogOfVanishingJet(_))));
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = Jet::from_coeffs(vec![c(1.0, 0.5), c(0.3, -0.2), c(2.0, 0.0), c(-1.0, 1.0)]);
        let b = Jet::from_coeffs(vec![c(-0.7, 0.2), c(0.1, 0.1), c(0.0, 3.0), c(0.5, 0.0)]);
        let q = &(&a * &b) / &b;
        for (x, y) in q.coeffs().iter().zip(a.coeffs()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn scaled_exponential_matches_exp() {
        let a = c(0.3, -1.2);
        let direct = Jet::scaled_exponential(c(2.0, 0.0), a, 6);
        let via = Jet::from_coeffs(vec![c(2.0_f64.ln(), 0.0), a, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).exp();
        for (x, y) in direct.coeffs().iter().zip(via.coeffs()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(
            phase in 0.0..std::f64::consts::TAU,
            rest in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 6),
        ) {
            let mut coeffs = vec![Complex64::from_polar(1.0, phase)];
            coeffs.extend(rest.iter().map(|&(a, b)| c(a, b)));
            let a = Jet::from_coeffs(coeffs);
            let back = a.log().unwrap().exp();
            for (x, y) in back.coeffs().iter().zip(a.coeffs()) {
                prop_assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0));
            }
        }
    }
}
