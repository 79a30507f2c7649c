//! Exact law of `S_N`: dynamic programming, characteristic functions, DFT
//! inversion, residue laws and the interval decomposition of the inversion
//! integral.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, ConditionedChain, PinSet};
use crate::error::{LabError, Result};
use crate::quadrature::CompositeRule;

/// Default cap on the number of lattice cells `2KN + 1`.
pub const DEFAULT_SUPPORT_CAP: usize = 10_000_000;

/// Probabilities below this value are flushed to zero.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

/// Exact lattice law: `probs[i] = P(S_N = offset + i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumPmf {
    offset: i64,
    probs: Vec<f64>,
    /// Set when entries below [`FLUSH_THRESHOLD`] were zeroed.
    trimmed: bool,
}

impl SumPmf {
    pub fn new(offset: i64, probs: Vec<f64>) -> Self {
        let mut pmf = Self {
            offset,
            probs,
            trimmed: false,
        };
        pmf.trim();
        pmf
    }

    pub fn point_mass(k: i64) -> Self {
        Self::new(k, vec![1.0])
    }

    fn trim(&mut self) {
        for p in self.probs.iter_mut() {
            if *p != 0.0 && *p < FLUSH_THRESHOLD {
                *p = 0.0;
                self.trimmed = true;
            }
        }
        let first = self.probs.iter().position(|&p| p != 0.0);
        match first {
            None => {
                self.probs.clear();
            }
            Some(first) => {
                let last = self.probs.iter().rposition(|&p| p != 0.0).unwrap();
                self.probs = self.probs[first..=last].to_vec();
                self.offset += first as i64;
            }
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn trimmed(&self) -> bool {
        self.trimmed
    }

    /// `(min, max)` of the support.
    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.probs.len() as i64 - 1)
    }

    pub fn prob(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            return 0.0;
        }
        self.probs.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.offset + i as i64, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(k, p)| k as f64 * p).sum::<f64>() / self.total()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter()
            .map(|(k, p)| (k as f64 - m).powi(2) * p)
            .sum::<f64>()
            / self.total()
    }

    /// `sup_k |self(k) - other(k)|`.
    pub fn sup_distance(&self, other: &SumPmf) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = self.support().1.max(other.support().1);
        (lo..=hi)
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .fold(0.0, f64::max)
    }

    pub fn tv_distance(&self, other: &SumPmf) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = self.support().1.max(other.support().1);
        0.5 * (lo..=hi)
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .sum::<f64>()
    }

    pub fn convolve(&self, other: &SumPmf) -> SumPmf {
        if self.probs.is_empty() || other.probs.is_empty() {
            return SumPmf::new(0, Vec::new());
        }
        let mut out = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.probs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        let mut pmf = SumPmf::new(self.offset + other.offset, out);
        pmf.trimmed |= self.trimmed || other.trimmed;
        pmf
    }

    pub fn shifted(&self, by: i64) -> SumPmf {
        SumPmf {
            offset: self.offset + by,
            probs: self.probs.clone(),
            trimmed: self.trimmed,
        }
    }

    /// `E[e^{itS}]` from the table.
    pub fn char_fn(&self, t: f64) -> Complex64 {
        self.iter()
            .map(|(k, p)| Complex64::from_polar(p, t * k as f64))
            .sum()
    }

    /// CSV with columns `k,probability`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,probability\n");
        for (k, p) in self.iter() {
            s.push_str(&format!("{k},{p:e}\n"));
        }
        s
    }
}

/// Law of `S_N mod m` with its Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueLaw {
    pub modulus: usize,
    pub masses: Vec<f64>,
    pub tv_to_uniform: f64,
    /// `fourier[b] = sum_a masses[a] e^{2 pi i a b / m}`.
    pub fourier: Vec<Complex64>,
    /// `false` when `m > 2K`, i.e. no resonant frequency has this denominator.
    pub resonant: bool,
}

#[derive(Serialize, Deserialize)]
struct ResidueLawJson {
    m: usize,
    masses: Vec<f64>,
    tv: f64,
    fourier_re: Vec<f64>,
    fourier_im: Vec<f64>,
}

impl ResidueLaw {
    pub fn from_masses(masses: Vec<f64>, resonant: bool) -> Self {
        let m = masses.len();
        let u = 1.0 / m as f64;
        let tv = 0.5 * masses.iter().map(|p| (p - u).abs()).sum::<f64>();
        let fourier = (0..m)
            .map(|b| {
                masses
                    .iter()
                    .enumerate()
                    .map(|(a, &p)| Complex64::from_polar(p, TAU * ((a * b) % m) as f64 / m as f64))
                    .sum()
            })
            .collect();
        Self {
            modulus: m,
            masses,
            tv_to_uniform: tv,
            fourier,
            resonant,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ResidueLawJson {
            m: self.modulus,
            masses: self.masses.clone(),
            tv: self.tv_to_uniform,
            fourier_re: self.fourier.iter().map(|c| c.re).collect(),
            fourier_im: self.fourier.iter().map(|c| c.im).collect(),
        })
        .expect("residue law serializes")
    }

    /// `max_{b != 0} |fourier[b]|`.
    pub fn max_nontrivial_fourier(&self) -> f64 {
        self.fourier[1..].iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn resolve_mask(spec: &ChainSpec, pins: Option<&PinSet>) -> Result<Vec<Option<usize>>> {
    match pins {
        Some(p) => spec.pin_mask(p),
        None => Ok(vec![None; spec.horizon()]),
    }
}

#[inline]
fn allowed(mask: Option<usize>, x: usize) -> bool {
    mask.is_none_or(|s| s == x)
}

/// Exact law of `S_N` (conditional on the pins if given).
pub fn sum_pmf(spec: &ChainSpec, pins: Option<&PinSet>) -> Result<SumPmf> {
    sum_pmf_with_cap(spec, pins, DEFAULT_SUPPORT_CAP)
}

pub fn sum_pmf_with_cap(spec: &ChainSpec, pins: Option<&PinSet>, cap: usize) -> Result<SumPmf> {
    let n = spec.horizon();
    let needed = 2 * spec.bound() as usize * n + 1;
    if needed > cap {
        return Err(LabError::SupportOverflow { needed, cap });
    }
    let mask = resolve_mask(spec, pins)?;

    let f1 = spec.values(1);
    let mut lo = *f1.iter().min().unwrap();
    let mut len = (*f1.iter().max().unwrap() - lo + 1) as usize;
    // dist[x][s - lo] = P(S_n = s, X_n = x), rescaled per step.
    let mut dist: Vec<Vec<f64>> = (0..f1.len())
        .map(|x| {
            let mut v = vec![0.0; len];
            if allowed(mask[0], x) {
                v[(f1[x] - lo) as usize] = spec.initial()[x];
            }
            v
        })
        .collect();

    for step in 2..=n {
        let total: f64 = dist.iter().flatten().sum();
        if total <= 0.0 {
            return Err(LabError::ImpossiblePin);
        }
        let kern = spec.kernel(step - 1);
        let f = spec.values(step);
        let fmin = *f.iter().min().unwrap();
        let fmax = *f.iter().max().unwrap();
        let new_lo = lo + fmin;
        let new_len = len + (fmax - fmin) as usize;
        let mut next = vec![vec![0.0; new_len]; f.len()];
        let mut tmp = vec![0.0; len];
        for (y, out) in next.iter_mut().enumerate() {
            if !allowed(mask[step - 1], y) {
                continue;
            }
            tmp.iter_mut().for_each(|v| *v = 0.0);
            for (x, row) in dist.iter().enumerate() {
                let p = kern.get(x, y) / total;
                if p == 0.0 {
                    continue;
                }
                for (t, &v) in tmp.iter_mut().zip(row) {
                    *t += p * v;
                }
            }
            let shift = (f[y] - fmin) as usize;
            out[shift..shift + len].copy_from_slice(&tmp);
        }
        dist = next;
        lo = new_lo;
        len = new_len;
    }
    let mut probs = vec![0.0; len];
    for row in &dist {
        for (p, &v) in probs.iter_mut().zip(row) {
            *p += v;
        }
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(LabError::ImpossiblePin);
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(SumPmf::new(lo, probs))
}

/// Law of `S_N` given the pins, assembled from the independent bridge blocks.
pub fn conditioned_sum_pmf(cond: &ConditionedChain) -> Result<SumPmf> {
    let mut acc = SumPmf::point_mass(cond.pinned_sum);
    for block in &cond.blocks {
        acc = acc.convolve(&sum_pmf(&block.chain, None)?);
    }
    Ok(acc)
}

/// Per-step phase tables `e^{i t f_n(x)}`.
fn phase_table(spec: &ChainSpec, t: f64) -> Vec<Complex64> {
    let k = spec.bound();
    (-k..=k)
        .map(|v| Complex64::from_polar(1.0, t * v as f64))
        .collect()
}

fn char_fn_masked(spec: &ChainSpec, t: f64, mask: &[Option<usize>]) -> Result<Complex64> {
    let table = phase_table(spec, t);
    let k = spec.bound();
    let phase = |v: i64| table[(v + k) as usize];
    let f1 = spec.values(1);
    // Weighted vector and the matching probability vector share one scale
    // so that the ratio is unaffected by rescaling.
    let mut v: Vec<Complex64> = Vec::with_capacity(f1.len());
    let mut w: Vec<f64> = Vec::with_capacity(f1.len());
    for (x, &fx) in f1.iter().enumerate() {
        let p = if allowed(mask[0], x) { spec.initial()[x] } else { 0.0 };
        v.push(phase(fx) * p);
        w.push(p);
    }
    for step in 2..=spec.horizon() {
        let scale: f64 = w.iter().sum();
        if scale <= 0.0 {
            return Err(LabError::ImpossiblePin);
        }
        let kern = spec.kernel(step - 1);
        let f = spec.values(step);
        let mut nv = vec![Complex64::new(0.0, 0.0); f.len()];
        let mut nw = vec![0.0; f.len()];
        for (x, (&vx, &wx)) in v.iter().zip(&w).enumerate() {
            if wx == 0.0 && vx == Complex64::new(0.0, 0.0) {
                continue;
            }
            let row = kern.row(x);
            for y in 0..f.len() {
                nv[y] += vx * row[y];
                nw[y] += wx * row[y];
            }
        }
        for y in 0..f.len() {
            if allowed(mask[step - 1], y) {
                nv[y] = nv[y] * phase(f[y]) / scale;
                nw[y] /= scale;
            } else {
                nv[y] = Complex64::new(0.0, 0.0);
                nw[y] = 0.0;
            }
        }
        v = nv;
        w = nw;
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(LabError::ImpossiblePin);
    }
    Ok(v.iter().sum::<Complex64>() / total)
}

/// `E[e^{itS_N}]`, conditional on the pins if given.
pub fn char_fn(spec: &ChainSpec, t: f64, pins: Option<&PinSet>) -> Result<Complex64> {
    let mask = resolve_mask(spec, pins)?;
    char_fn_masked(spec, t, &mask)
}

/// Recovers the law of `S_N` by an exact inverse DFT of the characteristic
/// function sampled on a grid at least as large as the support.
///
/// Roundoff can produce entries slightly below zero; they are clamped.
pub fn invert_dft(spec: &ChainSpec, pins: Option<&PinSet>) -> Result<SumPmf> {
    let needed = 2 * spec.bound() as usize * spec.horizon() + 1;
    if needed > DEFAULT_SUPPORT_CAP {
        return Err(LabError::SupportOverflow {
            needed,
            cap: DEFAULT_SUPPORT_CAP,
        });
    }
    let mask = resolve_mask(spec, pins)?;
    let (lo, hi) = spec.sum_range();
    let m = (hi - lo + 1) as usize;
    let mut buf = Vec::with_capacity(m);
    for j in 0..m {
        let t = TAU * j as f64 / m as f64;
        let phi = char_fn_masked(spec, t, &mask)?;
        let r = (j as i64 * lo).rem_euclid(m as i64);
        buf.push(phi * Complex64::from_polar(1.0, -TAU * r as f64 / m as f64));
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let probs = buf.iter().map(|c| (c.re / m as f64).max(0.0)).collect();
    Ok(SumPmf::new(lo, probs))
}

/// Value of a composite Gauss–Legendre integral with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalIntegral {
    pub value: Complex64,
    pub error_estimate: f64,
    pub nodes: usize,
}

/// Points per Gauss–Legendre panel.
const PANEL_ORDER: usize = 16;

/// `∫_{lo}^{hi} e^{-itk} E[e^{itS_N}] dt` (any interval of length at most
/// `2 pi`; the integrand is periodic) by composite Gauss–Legendre
/// quadrature, refined by panel doubling until the estimated error is below
/// `1e-10 (hi - lo)`.
///
/// The panel count starts from the oscillation bound `|k| + KN` on the
/// integrand frequency. Diagnostic only; probabilities come from
/// [`sum_pmf`] or [`invert_dft`].
pub fn interval_contribution(
    spec: &ChainSpec,
    lo: f64,
    hi: f64,
    k: i64,
    node_budget: usize,
) -> Result<IntervalIntegral> {
    interval_contribution_pinned(spec, lo, hi, k, node_budget, None)
}

pub fn interval_contribution_pinned(
    spec: &ChainSpec,
    lo: f64,
    hi: f64,
    k: i64,
    node_budget: usize,
    pins: Option<&PinSet>,
) -> Result<IntervalIntegral> {
    if !(lo < hi) || hi - lo > TAU + 1e-12 || !lo.is_finite() || !hi.is_finite() {
        return Err(LabError::ParameterOutOfRange(format!(
            "interval [{lo}, {hi}] is empty or longer than a period"
        )));
    }
    let mask = resolve_mask(spec, pins)?;
    let freq = k.unsigned_abs() as f64 + (spec.bound() as f64) * spec.horizon() as f64;
    let mut panels = ((hi - lo) * freq / 6.0).ceil().max(1.0) as usize;
    let tol = 1e-10 * (hi - lo);
    let integrate = |panels: usize| -> Result<Complex64> {
        let rule = CompositeRule::new(lo, hi, panels, PANEL_ORDER);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut err = None;
        let v = rule.integrate(|t| match char_fn_masked(spec, t, &mask) {
            Ok(phi) => phi * Complex64::from_polar(1.0, -t * k as f64),
            Err(e) => {
                err = Some(e);
                Complex64::new(0.0, 0.0)
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        acc += v;
        Ok(acc)
    };
    if 2 * panels * PANEL_ORDER > node_budget {
        return Err(LabError::NodeBudgetExceeded {
            needed: 2 * panels * PANEL_ORDER,
            budget: node_budget,
        });
    }
    let mut coarse = integrate(panels)?;
    loop {
        let fine = integrate(2 * panels)?;
        let err = (fine - coarse).norm();
        if err <= tol {
            return Ok(IntervalIntegral {
                value: fine,
                error_estimate: err,
                nodes: 2 * panels * PANEL_ORDER,
            });
        }
        panels *= 2;
        if 2 * panels * PANEL_ORDER > node_budget {
            return Err(LabError::NodeBudgetExceeded {
                needed: 2 * panels * PANEL_ORDER,
                budget: node_budget,
            });
        }
        coarse = fine;
    }
}

/// Exact law of `S_N mod m` (conditional on the pins if given).
pub fn residue_law(spec: &ChainSpec, m: usize, pins: Option<&PinSet>) -> Result<ResidueLaw> {
    if m < 2 {
        return Err(LabError::ParameterOutOfRange(format!("modulus {m} < 2")));
    }
    let mask = resolve_mask(spec, pins)?;
    let md = m as i64;
    let f1 = spec.values(1);
    let mut dist: Vec<Vec<f64>> = f1
        .iter()
        .enumerate()
        .map(|(x, &fx)| {
            let mut v = vec![0.0; m];
            if allowed(mask[0], x) {
                v[fx.rem_euclid(md) as usize] = spec.initial()[x];
            }
            v
        })
        .collect();
    for step in 2..=spec.horizon() {
        let total: f64 = dist.iter().flatten().sum();
        if total <= 0.0 {
            return Err(LabError::ImpossiblePin);
        }
        let kern = spec.kernel(step - 1);
        let f = spec.values(step);
        let mut next = vec![vec![0.0; m]; f.len()];
        for (y, out) in next.iter_mut().enumerate() {
            if !allowed(mask[step - 1], y) {
                continue;
            }
            let shift = f[y].rem_euclid(md) as usize;
            for (x, row) in dist.iter().enumerate() {
                let p = kern.get(x, y) / total;
                for (a, &v) in row.iter().enumerate() {
                    out[(a + shift) % m] += p * v;
                }
            }
        }
        dist = next;
    }
    let mut masses = vec![0.0; m];
    for row in &dist {
        for (a, &v) in row.iter().enumerate() {
            masses[a] += v;
        }
    }
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(LabError::ImpossiblePin);
    }
    masses.iter_mut().for_each(|p| *p /= total);
    Ok(ResidueLaw::from_masses(
        masses,
        m as i64 <= 2 * spec.bound(),
    ))
}

/// Forward and backward residue tables mod `m`, for pin-averaged residue
/// laws over many pin placements at once.
#[derive(Debug, Clone)]
pub struct ResidueSweep<'a> {
    spec: &'a ChainSpec,
    m: usize,
    /// `fwd[j - 1][v][b] = P(S_j = b mod m, X_j = v)`.
    fwd: Vec<Vec<Vec<f64>>>,
    /// `bwd[j - 1][v][c] = P(S_N - S_j = c mod m | X_j = v)`.
    bwd: Vec<Vec<Vec<f64>>>,
}

impl<'a> ResidueSweep<'a> {
    pub fn new(spec: &'a ChainSpec, m: usize) -> Self {
        let n = spec.horizon();
        let md = m as i64;
        let res = |step: usize, y: usize| spec.values(step)[y].rem_euclid(md) as usize;
        let mut fwd = Vec::with_capacity(n);
        fwd.push(
            (0..spec.states(1))
                .map(|x| {
                    let mut v = vec![0.0; m];
                    v[res(1, x)] = spec.initial()[x];
                    v
                })
                .collect::<Vec<_>>(),
        );
        for step in 2..=n {
            let kern = spec.kernel(step - 1);
            let prev: &Vec<Vec<f64>> = &fwd[step - 2];
            let next = (0..spec.states(step))
                .map(|y| {
                    let shift = res(step, y);
                    let mut v = vec![0.0; m];
                    for (x, row) in prev.iter().enumerate() {
                        let p = kern.get(x, y);
                        for (a, &w) in row.iter().enumerate() {
                            v[(a + shift) % m] += p * w;
                        }
                    }
                    v
                })
                .collect();
            fwd.push(next);
        }
        let mut bwd = vec![Vec::new(); n];
        bwd[n - 1] = (0..spec.states(n))
            .map(|_| {
                let mut v = vec![0.0; m];
                v[0] = 1.0;
                v
            })
            .collect();
        for j in (1..n).rev() {
            let kern = spec.kernel(j);
            bwd[j - 1] = (0..spec.states(j))
                .map(|x| {
                    let mut v = vec![0.0; m];
                    for y in 0..spec.states(j + 1) {
                        let p = kern.get(x, y);
                        let shift = res(j + 1, y);
                        for (c, &w) in bwd[j][y].iter().enumerate() {
                            v[(c + shift) % m] += p * w;
                        }
                    }
                    v
                })
                .collect();
        }
        Self { spec, m, fwd, bwd }
    }

    pub fn modulus(&self) -> usize {
        self.m
    }

    /// `joint[v][a] = P(S_N = a mod m, X_j = v)`.
    pub fn single(&self, j: usize) -> Vec<Vec<f64>> {
        let m = self.m;
        self.fwd[j - 1]
            .iter()
            .zip(&self.bwd[j - 1])
            .map(|(f, b)| {
                let mut out = vec![0.0; m];
                for (x, &fx) in f.iter().enumerate() {
                    for (c, &bc) in b.iter().enumerate() {
                        out[(x + c) % m] += fx * bc;
                    }
                }
                out
            })
            .collect()
    }

    /// For each `j2` in `targets` (increasing, all `> j1`):
    /// `joint[v1 * |S_{j2}| + v2][a] = P(S_N = a mod m, X_{j1} = v1, X_{j2} = v2)`.
    pub fn pairs_from(&self, j1: usize, targets: &[usize]) -> Vec<Vec<Vec<f64>>> {
        let spec = self.spec;
        let m = self.m;
        let md = m as i64;
        let s1 = spec.states(j1);
        // g[v1][v2][c] = P(S_{j2} - S_{j1} = c, X_{j2} = v2 | X_{j1} = v1)
        let mut g: Vec<Vec<Vec<f64>>> = (0..s1)
            .map(|v1| {
                (0..s1)
                    .map(|v2| {
                        let mut v = vec![0.0; m];
                        if v1 == v2 {
                            v[0] = 1.0;
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let mut step = j1;
        let mut out = Vec::with_capacity(targets.len());
        for &j2 in targets {
            assert!(j2 > j1 && j2 >= step, "targets must increase past j1");
            while step < j2 {
                let kern = spec.kernel(step);
                let ny = spec.states(step + 1);
                g = g
                    .iter()
                    .map(|rows| {
                        (0..ny)
                            .map(|y| {
                                let shift = spec.values(step + 1)[y].rem_euclid(md) as usize;
                                let mut v = vec![0.0; m];
                                for (x, row) in rows.iter().enumerate() {
                                    let p = kern.get(x, y);
                                    if p == 0.0 {
                                        continue;
                                    }
                                    for (c, &w) in row.iter().enumerate() {
                                        v[(c + shift) % m] += p * w;
                                    }
                                }
                                v
                            })
                            .collect()
                    })
                    .collect();
                step += 1;
            }
            let s2 = spec.states(j2);
            let mut joint = vec![vec![0.0; m]; s1 * s2];
            for v1 in 0..s1 {
                let f = &self.fwd[j1 - 1][v1];
                for v2 in 0..s2 {
                    let b = &self.bwd[j2 - 1][v2];
                    let mid = &g[v1][v2];
                    let mut fm = vec![0.0; m];
                    for (x, &fx) in f.iter().enumerate() {
                        for (c, &gc) in mid.iter().enumerate() {
                            fm[(x + c) % m] += fx * gc;
                        }
                    }
                    let out_row = &mut joint[v1 * s2 + v2];
                    for (x, &w) in fm.iter().enumerate() {
                        for (c, &bc) in b.iter().enumerate() {
                            out_row[(x + c) % m] += w * bc;
                        }
                    }
                }
            }
            out.push(joint);
        }
        out
    }
}

/// `sum_v P(v) TV(law(S_N mod m | v), uniform)` from joint masses
/// `joint[v][a] = P(S_N = a mod m, pins = v)`.
pub fn pin_averaged_tv(joint: &[Vec<f64>]) -> f64 {
    joint
        .iter()
        .map(|row| {
            let pv: f64 = row.iter().sum();
            let u = pv / row.len() as f64;
            0.5 * row.iter().map(|p| (p - u).abs()).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin(n: usize) -> ChainSpec {
        ChainSpec::iid(&[0.5, 0.5], &[0, 1], n).unwrap()
    }

    fn even(n: usize) -> ChainSpec {
        ChainSpec::homogeneous(
            &[0.4, 0.6],
            &[vec![0.7, 0.3], vec![0.2, 0.8]],
            &[0, 2],
            n,
        )
        .unwrap()
    }

    #[test]
    fn fair_coin_two_steps() {
        let pmf = sum_pmf(&coin(2), None).unwrap();
        assert_eq!(pmf.offset(), 0);
        assert_eq!(pmf.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn zero_values_give_point_mass() {
        let spec = ChainSpec::iid(&[0.3, 0.7], &[0, 0], 5).unwrap();
        let pmf = sum_pmf(&spec, None).unwrap();
        assert_eq!(pmf, SumPmf::point_mass(0));
        let inv = invert_dft(&spec, None).unwrap();
        assert_eq!(inv.support(), (0, 0));
        assert!((inv.prob(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn char_fn_special_values() {
        assert!(char_fn(&coin(1), std::f64::consts::PI, None).unwrap().norm() < 1e-16);
        let phi = char_fn(&even(9), std::f64::consts::PI, None).unwrap();
        assert!((phi - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert_eq!(char_fn(&even(9), 0.0, None).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn residue_law_examples() {
        let law = residue_law(&coin(7), 2, None).unwrap();
        assert!(law.tv_to_uniform.abs() < 1e-15);
        assert!(law.fourier[1].norm() < 1e-15);
        let law = residue_law(&even(7), 2, None).unwrap();
        assert!((law.masses[0] - 1.0).abs() < 1e-15);
        assert!((law.tv_to_uniform - 0.5).abs() < 1e-15);
        assert!((law.fourier[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn support_cap_enforced() {
        let spec = coin(20);
        assert!(matches!(
            sum_pmf_with_cap(&spec, None, 10),
            Err(LabError::SupportOverflow { needed: 41, cap: 10 })
        ));
    }

    #[test]
    fn full_circle_integral_recovers_probability() {
        let spec = even(12);
        let pmf = sum_pmf(&spec, None).unwrap();
        for k in [0, 6, 10, 11] {
            let v = interval_contribution(&spec, 0.0, TAU, k, 1 << 20).unwrap();
            assert!((v.value - Complex64::new(TAU * pmf.prob(k), 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn node_budget_error() {
        let spec = coin(400);
        assert!(matches!(
            interval_contribution(&spec, 0.0, TAU, 200, 64),
            Err(LabError::NodeBudgetExceeded { .. })
        ));
    }

    #[test]
    fn sweep_matches_pinned_residue_law() {
        let spec = ChainSpec::homogeneous(
            &[0.2, 0.5, 0.3],
            &[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4]],
            &[-1, 0, 2],
            9,
        )
        .unwrap();
        for m in [2, 3, 4] {
            let sweep = ResidueSweep::new(&spec, m);
            let joint = sweep.single(4);
            for v in 0..3 {
                let pv: f64 = joint[v].iter().sum();
                let law = residue_law(&spec, m, Some(&PinSet::from_pairs([(4, v)]))).unwrap();
                for a in 0..m {
                    assert!((joint[v][a] / pv - law.masses[a]).abs() < 1e-13);
                }
            }
            let pairs = sweep.pairs_from(2, &[3, 7, 9]);
            for (idx, &j2) in [3usize, 7, 9].iter().enumerate() {
                for v1 in 0..3 {
                    for v2 in 0..3 {
                        let row = &pairs[idx][v1 * 3 + v2];
                        let pv: f64 = row.iter().sum();
                        let pins = PinSet::from_pairs([(2, v1), (j2, v2)]);
                        let law = residue_law(&spec, m, Some(&pins)).unwrap();
                        let want = spec.log_pin_probability(&pins).unwrap().exp();
                        assert!((pv - want).abs() < 1e-14);
                        for a in 0..m {
                            assert!((row[a] / pv - law.masses[a]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn residue_json_fields() {
        let law = residue_law(&coin(3), 3, None).unwrap();
        let v = law.to_json();
        for key in ["m", "masses", "tv", "fourier_re", "fourier_im"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(!law.resonant);
    }
}
