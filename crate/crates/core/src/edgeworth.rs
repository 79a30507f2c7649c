//! Classical and generalized (trigonometric) Edgeworth expansions.
//!
//! Probabilities are approximated by
//! `sum_{a,b} P_{a,b}(x) sigma^{-b} g(x) e^{2 pi i a k / J}` with
//! `x = (k - a_N) / sigma_N` and `g` the standard normal density. The slot
//! `a = 0` is the classical expansion; every other slot belongs to one
//! resonant frequency.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, PinSet};
use crate::cumulant::{cumulants_at_zero, resonant_jet_with, CumulantData, ResonantJetData};
use crate::error::{LabError, Result};
use crate::jet::factorial;
use crate::oracle::SumPmf;
use crate::polynomial::{gaussian_density, hermite_values, Polynomial};
use crate::resonance::{resonance_period, residue_profile, resonant_points, unit_root, MStatistic, ResonantPoint};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Tuples `(k_1..k_r)`, not all zero, with `sum_j j k_j <= r`, grouped by
/// `q = sum_j j k_j` (`groups[q - 1]`), each group in descending
/// lexicographic order.
pub fn partition_tuples(r: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(j: usize, r: usize, budget: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if j > r {
            out.push(cur.clone());
            return;
        }
        for k in (0..=budget / j).rev() {
            cur.push(k);
            rec(j + 1, r, budget - j * k, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    rec(1, r, r, &mut Vec::with_capacity(r), &mut all);
    let mut groups = vec![Vec::new(); r];
    for t in all {
        let q: usize = t.iter().enumerate().map(|(i, k)| (i + 1) * k).sum();
        if q > 0 {
            groups[q - 1].push(t);
        }
    }
    groups
}

/// `P_q(h) = sum_{k in A_q} prod_j s_j^{k_j} / k_j! * h^{sum_j (j+2) k_j}` for
/// `q = 1..=r`, given `s[j - 1] = s_j`.
pub fn partition_polynomials(s: &[Complex64], r: usize) -> Vec<Polynomial> {
    partition_tuples(r)
        .iter()
        .map(|group| {
            let mut p = Polynomial::zero();
            for t in group {
                let mut c = ONE;
                let mut deg = 0;
                for (i, &k) in t.iter().enumerate() {
                    if k > 0 {
                        c *= s[i].powu(k as u32) / factorial(k);
                        deg += (i + 3) * k;
                    }
                }
                p = p.add(&Polynomial::monomial(c, deg));
            }
            p
        })
        .collect()
}

/// `P_{1,N}..P_{r,N}` with `Q_{r,N}(h) = sum_q sigma^{-q} P_{q,N}(h)` and
/// `E[e^{ihW_N}] ~ e^{-h^2/2} (1 + Q_{r,N}(h))`.
pub fn q_polynomial(cums: &CumulantData, r: usize) -> Result<Vec<Polynomial>> {
    Ok(partition_polynomials(&cums.scaled_coefficients(r)?, r))
}

/// `Q_{r,N}(h)` at a point.
pub fn q_value(cums: &CumulantData, r: usize, h: f64) -> Result<Complex64> {
    Ok(q_polynomial(cums, r)?
        .iter()
        .enumerate()
        .map(|(i, p)| p.eval(h) * cums.sigma.powi(-(i as i32 + 1)))
        .sum())
}

/// Provenance of one slot of a generalized expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermFlag {
    Kept,
    /// Removed because `M_N(m) >= R ln V_N`.
    Dropped,
    /// `|E e^{itS_N}|` too small to expand; the slot is zero.
    DegenerateFallback,
    /// Kept, but the truncated tail exceeded its budget.
    TailOverBudget,
}

/// Drop rule for resonant slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropRule {
    #[serde(rename = "R")]
    pub threshold: f64,
    pub enabled: bool,
    pub statistic: MStatistic,
}

impl Default for DropRule {
    fn default() -> Self {
        Self {
            threshold: 10.0,
            enabled: true,
            statistic: MStatistic::SecondLargest,
        }
    }
}

impl DropRule {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }
}

/// Truncated expansion over the `e^{2 pi i a k / J}` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedExpansion {
    pub order: usize,
    pub bound: i64,
    pub period: u64,
    pub mean: f64,
    pub sigma: f64,
    /// `(a, b) -> P_{a,b}`, `1 <= b <= r`.
    pub terms: BTreeMap<(u64, usize), Polynomial>,
    pub flags: BTreeMap<u64, TermFlag>,
    /// Resonant point owning each nonzero slot.
    pub points: BTreeMap<u64, ResonantPoint>,
    /// Largest discarded coefficient per kept resonant slot.
    pub tails: BTreeMap<u64, f64>,
}

#[derive(Serialize)]
struct TermJson {
    a: u64,
    b: usize,
    coeffs: Vec<[f64; 2]>,
    flag: TermFlag,
}

#[derive(Serialize)]
struct ExpansionJson {
    r: usize,
    #[serde(rename = "K")]
    bound: i64,
    #[serde(rename = "J")]
    period: u64,
    #[serde(rename = "a_N")]
    mean: f64,
    #[serde(rename = "sigma_N")]
    sigma: f64,
    terms: Vec<TermJson>,
}

impl GeneralizedExpansion {
    pub fn standardized(&self, k: i64) -> f64 {
        (k as f64 - self.mean) / self.sigma
    }

    /// The expansion at `k`; real up to roundoff when the resonant set is
    /// closed under conjugation.
    pub fn evaluate(&self, k: i64) -> Complex64 {
        let x = self.standardized(k);
        let g = gaussian_density(x);
        let j = self.period as i128;
        let mut out = ZERO;
        for (&(a, b), p) in &self.terms {
            let r = ((a as i128 * k as i128).rem_euclid(j)) as u64;
            out += p.eval(x) * self.sigma.powi(-(b as i32)) * g * unit_root(r, self.period);
        }
        out
    }

    pub fn evaluate_real(&self, k: i64) -> f64 {
        self.evaluate(k).re
    }

    /// Only the `a = 0` slot.
    pub fn classical_part(&self) -> GeneralizedExpansion {
        let mut out = self.clone();
        out.terms.retain(|&(a, _), _| a == 0);
        out.flags.retain(|&a, _| a == 0);
        out.points.clear();
        out.tails.clear();
        out
    }

    /// Nonzero slots that carry terms.
    pub fn active_slots(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .terms
            .iter()
            .filter(|(&(a, _), p)| a != 0 && !p.is_zero())
            .map(|(&(a, _), _)| a)
            .collect();
        v.dedup();
        v
    }

    /// Evaluation window: the support of `pmf` widened to `mean +- 12 sigma`.
    pub fn window(&self, pmf: &SumPmf) -> (i64, i64) {
        let (lo, hi) = pmf.support();
        let w = 12.0 * self.sigma;
        (
            lo.min((self.mean - w).floor() as i64),
            hi.max((self.mean + w).ceil() as i64),
        )
    }

    /// `sup_k |pmf(k) - expansion(k)|` over [`Self::window`].
    pub fn sup_error(&self, pmf: &SumPmf) -> f64 {
        let (lo, hi) = self.window(pmf);
        (lo..=hi)
            .map(|k| (pmf.prob(k) - self.evaluate_real(k)).abs())
            .fold(0.0, f64::max)
    }

    /// `max_k |Im expansion(k)|` over the window.
    pub fn max_imaginary(&self, pmf: &SumPmf) -> f64 {
        let (lo, hi) = self.window(pmf);
        (lo..=hi)
            .map(|k| self.evaluate(k).im.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut terms = Vec::new();
        for (&a, &flag) in &self.flags {
            for b in 1..=self.order {
                let coeffs = self
                    .terms
                    .get(&(a, b))
                    .map(|p| p.coeffs().iter().map(|c| [c.re, c.im]).collect())
                    .unwrap_or_default();
                terms.push(TermJson { a, b, coeffs, flag });
            }
        }
        serde_json::to_value(ExpansionJson {
            r: self.order,
            bound: self.bound,
            period: self.period,
            mean: self.mean,
            sigma: self.sigma,
            terms,
        })
        .expect("expansion serializes")
    }

    /// CSV with columns `k,exact,expansion,abs_error`.
    pub fn table_csv(&self, pmf: &SumPmf, ks: &[i64]) -> String {
        let mut s = String::from("k,exact,expansion,abs_error\n");
        for &k in ks {
            let e = pmf.prob(k);
            let x = self.evaluate_real(k);
            s.push_str(&format!("{k},{e:e},{x:e},{:e}\n", (e - x).abs()));
        }
        s
    }
}

fn classical_terms(cums: &CumulantData, r: usize) -> Result<BTreeMap<(u64, usize), Polynomial>> {
    if r == 0 {
        return Err(LabError::ParameterOutOfRange("order must be >= 1".into()));
    }
    let mut terms = BTreeMap::new();
    terms.insert((0, 1), Polynomial::one());
    if r >= 2 {
        let ps = q_polynomial(cums, r - 1)?;
        for (i, p) in ps.iter().enumerate() {
            terms.insert((0, i + 2), p.hermite_transform());
        }
    }
    Ok(terms)
}

/// Classical Edgeworth expansion of order `r` (error `o(sigma_N^{-r})` on
/// aperiodic chains), conditional on the pins if given.
pub fn classical_expansion(spec: &ChainSpec, r: usize, pins: Option<&PinSet>) -> Result<GeneralizedExpansion> {
    let cums = cumulants_at_zero(spec, r, pins)?;
    classical_from_cumulants(spec.bound(), &cums, r)
}

pub fn classical_from_cumulants(bound: i64, cums: &CumulantData, r: usize) -> Result<GeneralizedExpansion> {
    let terms = classical_terms(cums, r)?;
    Ok(GeneralizedExpansion {
        order: r,
        bound,
        period: 1,
        mean: cums.mean,
        sigma: cums.sigma,
        terms,
        flags: BTreeMap::from([(0, TermFlag::Kept)]),
        points: BTreeMap::new(),
        tails: BTreeMap::new(),
    })
}

/// `[1, P~_1, .., P~_r]`: the graded pieces of `H = sum_q sigma^{-q} P~_q`.
pub fn resonant_h_graded(jdata: &ResonantJetData, r: usize) -> Result<Vec<Polynomial>> {
    let mut out = vec![Polynomial::one()];
    out.extend(partition_polynomials(&jdata.scaled_coefficients(r)?, r));
    Ok(out)
}

/// Truncated exponential of the cubic and higher part of the shifted log-jet.
pub fn resonant_h(jdata: &ResonantJetData, r: usize) -> Result<Polynomial> {
    let graded = resonant_h_graded(jdata, r)?;
    Ok(graded
        .iter()
        .enumerate()
        .fold(Polynomial::zero(), |acc, (q, p)| {
            acc.add(&p.scale(Complex64::new(jdata.sigma.powi(-(q as i32)), 0.0)))
        }))
}

/// `w_r = 5r - 2`.
pub fn w_r(r: usize) -> usize {
    5 * r - 2
}

/// `10 sigma^{-r-1}`.
pub fn default_tail_budget(sigma: f64, r: usize) -> f64 {
    10.0 * sigma.powi(-(r as i32) - 1)
}

/// `sum_{j <= 3r-2} (dh)^j / j!  *  sum_{j <= r} (u h^2 / 2)^j / j!`.
fn correction_factor(d: Complex64, u: Complex64, r: usize) -> Polynomial {
    let ed = Polynomial::new(
        (0..=3 * r - 2)
            .map(|j| d.powu(j as u32) / factorial(j))
            .collect(),
    );
    let mut eu = vec![ZERO; 2 * r + 1];
    for j in 0..=r {
        eu[2 * j] = (u / 2.0).powu(j as u32) / factorial(j);
    }
    ed.mul(&Polynomial::new(eu))
}

/// Expansion of the contribution of one resonant interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonantContribution {
    pub point: ResonantPoint,
    pub base: Complex64,
    pub mean: f64,
    pub sigma: f64,
    /// `A_1..A_{w_r}`.
    pub a_coeffs: Vec<Complex64>,
    /// Largest coefficient of the discarded tail.
    pub tail_max: f64,
}

impl ResonantContribution {
    /// `(base / sigma) e^{-itk} g(x) (1 + sum_s A_s (-i)^s He_s(x))`.
    pub fn evaluate(&self, k: i64) -> Complex64 {
        let x = (k as f64 - self.mean) / self.sigma;
        let he = hermite_values(self.a_coeffs.len(), x);
        let mut poly = ONE;
        let mut phase = ONE;
        let minus_i = Complex64::new(0.0, -1.0);
        for (s, a) in self.a_coeffs.iter().enumerate() {
            phase *= minus_i;
            poly += a * phase * he[s + 1];
        }
        self.base / self.sigma * self.point.phase(-k) * gaussian_density(x) * poly
    }
}

fn contribution_unchecked(jdata: &ResonantJetData, h: &Polynomial, r: usize) -> ResonantContribution {
    let full = correction_factor(jdata.d, jdata.u, r).mul(h);
    let w = w_r(r);
    ResonantContribution {
        point: jdata.point,
        base: jdata.base,
        mean: jdata.mean,
        sigma: jdata.sigma,
        a_coeffs: (1..=w).map(|s| full.coeff(s)).collect(),
        tail_max: full.tail_max(w),
    }
}

/// `A_s` = coefficient of `h^s` in `E_d E_u H`, `1 <= s <= w_r`.
pub fn a_coefficients(
    jdata: &ResonantJetData,
    h: &Polynomial,
    r: usize,
    tail_budget: f64,
) -> Result<ResonantContribution> {
    let c = contribution_unchecked(jdata, h, r);
    if c.tail_max > tail_budget {
        return Err(LabError::TailBudgetExceeded {
            tail: c.tail_max,
            budget: tail_budget,
        });
    }
    Ok(c)
}

/// Expanded contribution of the interval around `point`.
pub fn resonant_contribution(
    spec: &ChainSpec,
    point: ResonantPoint,
    r: usize,
    pins: Option<&PinSet>,
) -> Result<ResonantContribution> {
    let cums = cumulants_at_zero(spec, r, pins)?;
    let jdata = resonant_jet_with(spec, point, &cums, pins)?;
    let h = resonant_h(&jdata, r)?;
    a_coefficients(&jdata, &h, r, default_tail_budget(cums.sigma, r))
}

/// Generalized expansion of order `r` with `J = lcm(1..2K)`.
pub fn full_expansion(spec: &ChainSpec, r: usize, rule: DropRule) -> Result<GeneralizedExpansion> {
    full_expansion_pinned(spec, r, rule, None)
}

pub fn full_expansion_pinned(
    spec: &ChainSpec,
    r: usize,
    rule: DropRule,
    pins: Option<&PinSet>,
) -> Result<GeneralizedExpansion> {
    let cums = cumulants_at_zero(spec, r, pins)?;
    let mut exp = classical_from_cumulants(spec.bound(), &cums, r)?;
    let period = resonance_period(spec.bound())?;
    exp.period = period;

    let mut dropped = BTreeMap::new();
    if rule.enabled {
        let threshold = rule.threshold * cums.variance.ln();
        for m in 2..=(2 * spec.bound()).max(0) as usize {
            let prof = residue_profile(spec, m, pins)?;
            dropped.insert(m as u64, prof.total(rule.statistic) >= threshold);
        }
    }
    let budget = default_tail_budget(cums.sigma, r);
    let w = w_r(r);
    for point in resonant_points(spec.bound()).into_iter().filter(|p| !p.is_zero()) {
        let a = point.slot(period);
        exp.points.insert(a, point);
        if dropped.get(&point.m).copied().unwrap_or(false) {
            exp.flags.insert(a, TermFlag::Dropped);
            continue;
        }
        let jdata = match resonant_jet_with(spec, point, &cums, pins) {
            Ok(j) => j,
            Err(LabError::ResonantDegenerate { .. }) => {
                exp.flags.insert(a, TermFlag::DegenerateFallback);
                continue;
            }
            Err(e) => return Err(e),
        };
        let graded = resonant_h_graded(&jdata, r)?;
        let corr = correction_factor(jdata.d, jdata.u, r);
        let mut tail: f64 = 0.0;
        for (q, p) in graded.iter().take(r).enumerate() {
            let full = corr.mul(p);
            tail = tail.max(full.tail_max(w) * cums.sigma.powi(-(q as i32)));
            exp.terms
                .insert((a, q + 1), full.truncate(w).hermite_transform().scale(jdata.base));
        }
        exp.tails.insert(a, tail);
        exp.flags.insert(
            a,
            if tail > budget {
                TermFlag::TailOverBudget
            } else {
                TermFlag::Kept
            },
        );
    }
    Ok(exp)
}
