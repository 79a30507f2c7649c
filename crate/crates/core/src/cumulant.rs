//! Derivatives of log-characteristic functions by jet propagation.
//!
//! For a phase `e^{itY}` and a formal variable `theta`, each state carries the
//! jet of `theta -> E[e^{itS_n + theta (S_n - c)} ; X_n = x]` where `c` is the
//! running sum of unconditional step means. Jets are divided by the jet of
//! the state with the largest constant term after every step and the logs of
//! these divisors are accumulated, so nothing overflows and cumulants are
//! built additively instead of from raw moments.

use num_complex::Complex64;
use serde::Serialize;

use crate::chain::{ChainSpec, PinSet};
use crate::error::{LabError, Result};
use crate::jet::{factorial, Jet};
use crate::resonance::ResonantPoint;

/// Resonant jets are refused below this base modulus.
pub const BASE_THRESHOLD: f64 = 1e-9;

/// Variances with `sigma` below this are degenerate.
pub const SIGMA_THRESHOLD: f64 = 1e-9;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Log-jet in `theta` of `E[e^{itS_N + theta (S_N - c)} ; pins]`, before pin
/// normalization, together with `c`.
fn theta_log_jet<F: Fn(usize, i64) -> Complex64>(
    spec: &ChainSpec,
    phase: F,
    order: usize,
    mask: &[Option<usize>],
) -> Result<(Jet, f64)> {
    let means = spec.step_means();
    let centering: f64 = means.iter().sum();
    let zero = Complex64::new(0.0, 0.0);
    let multiplier = |n: usize, y: usize| {
        let f = spec.values(n)[y];
        Jet::scaled_exponential(phase(n, f), Complex64::new(f as f64 - means[n - 1], 0.0), order)
    };
    let allowed = |n: usize, y: usize| mask[n - 1].is_none_or(|s| s == y);

    let mut log_acc = Jet::zero(order);
    let mut v: Vec<Jet> = (0..spec.states(1))
        .map(|x| {
            if allowed(1, x) {
                multiplier(1, x).scale(Complex64::new(spec.initial()[x], 0.0))
            } else {
                Jet::zero(order)
            }
        })
        .collect();
    normalize_jets(&mut v, &mut log_acc)?;
    for n in 2..=spec.horizon() {
        let kern = spec.kernel(n - 1);
        let mut next = Vec::with_capacity(spec.states(n));
        for y in 0..spec.states(n) {
            if !allowed(n, y) {
                next.push(Jet::zero(order));
                continue;
            }
            let mut acc = Jet::zero(order);
            for (x, vx) in v.iter().enumerate() {
                let p = kern.get(x, y);
                if p != 0.0 {
                    acc.add_scaled(vx, p);
                }
            }
            next.push(&acc * &multiplier(n, y));
        }
        v = next;
        normalize_jets(&mut v, &mut log_acc)?;
    }
    let mut total = Jet::zero(order);
    for vx in &v {
        total = &total + vx;
    }
    if total.coeff(0) == zero {
        return Err(LabError::LogOfVanishingJet(0.0));
    }
    Ok((&log_acc + &total.log()?, centering))
}

fn normalize_jets(v: &mut [Jet], log_acc: &mut Jet) -> Result<()> {
    let (best, modulus) = v
        .iter()
        .enumerate()
        .map(|(x, j)| (x, j.coeff(0).norm()))
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let scale = v
        .iter()
        .flat_map(|j| j.coeffs().iter().map(|c| c.norm()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(LabError::LogOfVanishingJet(0.0));
    }
    if modulus > 1e-150 * scale {
        let d = v[best].clone();
        for j in v.iter_mut() {
            *j = j.checked_div(&d).expect("nonzero constant term");
        }
        *log_acc = &*log_acc + &d.log()?;
    } else {
        // Constant terms cancel: fall back to a scalar rescale.
        let s = Complex64::new(1.0 / scale, 0.0);
        for j in v.iter_mut() {
            *j = j.scale(s);
        }
        let c0 = log_acc.coeff(0);
        log_acc.set_coeff(0, c0 + scale.ln());
    }
    Ok(())
}

fn pin_data(spec: &ChainSpec, pins: Option<&PinSet>) -> Result<(Vec<Option<usize>>, f64)> {
    match pins {
        Some(p) if !p.is_empty() => Ok((spec.pin_mask(p)?, spec.log_pin_probability(p)?)),
        _ => Ok((vec![None; spec.horizon()], 0.0)),
    }
}

/// Mean, variance and the normalized derivatives `Lambda_N^(j)(0)` for
/// `j = 3..=r+2`, where `Lambda_N(h) = ln E[e^{ih(S_N - a_N)/sigma_N}] + h^2/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantData {
    pub order: usize,
    pub mean: f64,
    pub variance: f64,
    pub sigma: f64,
    /// `lambda_derivs[j - 3] = Lambda_N^(j)(0)`.
    pub lambda_derivs: Vec<Complex64>,
    /// Jet of `h -> ln E[e^{ihS_N/sigma_N}]` to order `r + 2`.
    pub log_jet: Jet,
    theta_linear: Complex64,
}

#[derive(Serialize)]
struct CumulantJson {
    order: usize,
    mean: f64,
    variance: f64,
    sigma: f64,
    lambda_derivs: Vec<[f64; 2]>,
}

impl CumulantData {
    /// `Lambda_N^(j)(0)`, `3 <= j <= r + 2`.
    pub fn lambda(&self, j: usize) -> Complex64 {
        self.lambda_derivs[j - 3]
    }

    /// Scaled cumulant coefficients `s_j = sigma^j Lambda^(j+2)(0) / (j+2)!`
    /// for `j = 1..=r`.
    pub fn scaled_coefficients(&self, r: usize) -> Result<Vec<Complex64>> {
        if r > self.order {
            return Err(LabError::OrderMismatch {
                needed: r + 2,
                available: self.order + 2,
            });
        }
        Ok((1..=r)
            .map(|j| self.log_jet.coeff(j + 2) * self.sigma.powi(j as i32))
            .collect())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CumulantJson {
            order: self.order,
            mean: self.mean,
            variance: self.variance,
            sigma: self.sigma,
            lambda_derivs: self.lambda_derivs.iter().map(|&z| pair(z)).collect(),
        })
        .expect("cumulants serialize")
    }
}

/// Exact cumulant data of `S_N` (conditional on the pins if given) to order
/// `r + 2`.
pub fn cumulants_at_zero(spec: &ChainSpec, r: usize, pins: Option<&PinSet>) -> Result<CumulantData> {
    let order = r + 2;
    let (mask, log_p) = pin_data(spec, pins)?;
    let (mut g, centering) = theta_log_jet(spec, |_, _| Complex64::new(1.0, 0.0), order, &mask)?;
    g.set_coeff(0, g.coeff(0) - log_p);
    let theta_linear = g.coeff(1);
    let mean = centering + theta_linear.re;
    let variance = 2.0 * g.coeff(2).re;
    let sigma = variance.max(0.0).sqrt();
    if !(sigma >= SIGMA_THRESHOLD) {
        return Err(LabError::DegenerateVariance(sigma));
    }
    g.set_coeff(0, Complex64::new(0.0, 0.0));
    g.set_coeff(1, Complex64::new(mean, 0.0));
    let log_jet = g.rescale_argument(I / sigma);
    let lambda_derivs = (3..=order)
        .map(|j| log_jet.coeff(j) * factorial(j))
        .collect();
    Ok(CumulantData {
        order: r,
        mean,
        variance,
        sigma,
        lambda_derivs,
        log_jet,
        theta_linear,
    })
}

/// Expansion data of `h -> ln E[e^{i(t + h/sigma_N) S_N} | pins]` at a
/// resonant point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonantJetData {
    pub point: ResonantPoint,
    pub order: usize,
    /// `E[e^{itS_N} | pins]`.
    pub base: Complex64,
    /// Log-jet in `h`, constant term the principal log of `base`.
    pub log_jet: Jet,
    /// `L'(0) - i a_N / sigma_N`.
    pub d: Complex64,
    /// `L''(0) + 1`.
    pub u: Complex64,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Serialize)]
struct ResonantJson {
    l: u64,
    m: u64,
    t: f64,
    order: usize,
    base: [f64; 2],
    log_jet: Vec<[f64; 2]>,
    d: [f64; 2],
    u: [f64; 2],
    mean: f64,
    sigma: f64,
}

impl ResonantJetData {
    /// `s_j = sigma^j L_{j+2}` for `j = 1..=r`: the part of the log-jet beyond
    /// the quadratic term, scaled to be of order one.
    pub fn scaled_coefficients(&self, r: usize) -> Result<Vec<Complex64>> {
        if r > self.order {
            return Err(LabError::OrderMismatch {
                needed: r + 2,
                available: self.order + 2,
            });
        }
        Ok((1..=r)
            .map(|j| self.log_jet.coeff(j + 2) * self.sigma.powi(j as i32))
            .collect())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ResonantJson {
            l: self.point.l,
            m: self.point.m,
            t: self.point.t(),
            order: self.order,
            base: pair(self.base),
            log_jet: self.log_jet.coeffs().iter().map(|&z| pair(z)).collect(),
            d: pair(self.d),
            u: pair(self.u),
            mean: self.mean,
            sigma: self.sigma,
        })
        .expect("resonant jet serializes")
    }
}

/// Log-jet at a resonant point, to order `r + 2`.
pub fn resonant_jet(
    spec: &ChainSpec,
    point: ResonantPoint,
    r: usize,
    pins: Option<&PinSet>,
) -> Result<ResonantJetData> {
    let cums = cumulants_at_zero(spec, r, pins)?;
    resonant_jet_with(spec, point, &cums, pins)
}

/// As [`resonant_jet`], reusing already computed cumulants at zero.
pub fn resonant_jet_with(
    spec: &ChainSpec,
    point: ResonantPoint,
    cums: &CumulantData,
    pins: Option<&PinSet>,
) -> Result<ResonantJetData> {
    let order = cums.order + 2;
    let sigma = cums.sigma;
    let (mask, log_p) = pin_data(spec, pins)?;
    let degenerate = |modulus: f64| LabError::ResonantDegenerate {
        t: point.t(),
        modulus,
    };
    let (mut g, centering) =
        match theta_log_jet(spec, |_, f| point.phase(f), order, &mask) {
            Ok(v) => v,
            Err(LabError::LogOfVanishingJet(m)) => return Err(degenerate(m)),
            Err(e) => return Err(e),
        };
    let base = (g.coeff(0) - log_p).exp();
    if !(base.norm() > BASE_THRESHOLD) {
        return Err(degenerate(base.norm()));
    }
    let d = I * (g.coeff(1) - cums.theta_linear) / sigma;
    let u = Complex64::new(1.0, 0.0) - g.coeff(2) * 2.0 / (sigma * sigma);
    g.set_coeff(0, base.ln());
    g.set_coeff(1, g.coeff(1) + centering);
    Ok(ResonantJetData {
        point,
        order: cums.order,
        base,
        log_jet: g.rescale_argument(I / sigma),
        d,
        u,
        mean: cums.mean,
        sigma,
    })
}
