//! Complex polynomials and probabilists' Hermite polynomials.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Complex coefficients in ascending degree. Exact trailing zeros are
/// trimmed; the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last() == Some(&ZERO) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self { coeffs: vec![ONE] }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// `c x^k`.
    pub fn monomial(c: Complex64, k: usize) -> Self {
        let mut v = vec![ZERO; k + 1];
        v[k] = c;
        Self::new(v)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, x: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * x + c)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Keeps the terms of degree `<= max_degree`.
    pub fn truncate(&self, max_degree: usize) -> Self {
        Self::new(self.coeffs.iter().take(max_degree + 1).copied().collect())
    }

    /// Largest coefficient modulus above `max_degree`, 0 if none.
    pub fn tail_max(&self, max_degree: usize) -> f64 {
        self.coeffs
            .iter()
            .skip(max_degree + 1)
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Fourier–Hermite transform: maps `sum c_s h^s` to `sum c_s (-i)^s He_s(x)`,
    /// so that
    /// `(1/2pi) ∫ e^{-i x h} e^{-h^2/2} p(h) dh = g(x) * transform(p)(x)`
    /// with `g` the standard normal density.
    pub fn hermite_transform(&self) -> Self {
        let mut out = Self::zero();
        let mut phase = ONE;
        let minus_i = Complex64::new(0.0, -1.0);
        for (s, &c) in self.coeffs.iter().enumerate() {
            if c != ZERO {
                out = out.add(&hermite(s).scale(c * phase));
            }
            phase *= minus_i;
        }
        out
    }
}

/// Probabilists' Hermite polynomial `He_k`, from
/// `He_{k+1} = x He_k - k He_{k-1}`.
pub fn hermite(k: usize) -> Polynomial {
    let mut prev = Polynomial::one();
    if k == 0 {
        return prev;
    }
    let x = Polynomial::monomial(ONE, 1);
    let mut cur = x.clone();
    for j in 1..k {
        let next = x.mul(&cur).add(&prev.scale(Complex64::new(-(j as f64), 0.0)));
        prev = cur;
        cur = next;
    }
    cur
}

/// `He_0..He_k` evaluated at `x` by the recurrence.
pub fn hermite_values(k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(x);
    }
    for j in 1..k {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// Standard normal density.
pub fn gaussian_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}
