//! Finite-state inhomogeneous Markov chains with integer step values.
//!
//! A [`ChainSpec`] fixes a horizon `N`, the law of `X_1`, the transition
//! kernels between consecutive steps and the integer scores `f_n`. Steps are
//! numbered `1..=N` in every public signature; states at a step are labelled
//! `0..states(n)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Largest admissible number of states per step unless overridden.
pub const DEFAULT_MAX_STATES: usize = 16;

/// Tolerance on row sums of kernels and on the total mass of the initial law.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Deviations below this level are treated as roundoff in the mixing fit.
pub const MIXING_FLOOR: f64 = 1e-13;

/// Largest lag used by the mixing fit.
pub const MIXING_MAX_LAG: usize = 64;

/// Minimal |correlation| of the log-linear mixing fit.
pub const MIXING_MIN_CORRELATION: f64 = 0.99;

/// Dense row-major matrix; used both for one-step kernels and their products.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(LabError::InvalidChain("kernel without rows".into()));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(LabError::InvalidChain("ragged kernel rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.cols + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|x| self.row(x).to_vec()).collect()
    }

    pub fn matmul(&self, other: &Kernel) -> Kernel {
        assert_eq!(self.cols, other.rows, "kernel dimensions");
        let mut data = vec![0.0; self.rows * other.cols];
        for x in 0..self.rows {
            for (z, &a) in self.row(x).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out = &mut data[x * other.cols..(x + 1) * other.cols];
                for (o, &b) in out.iter_mut().zip(other.row(z)) {
                    *o += a * b;
                }
            }
        }
        Kernel {
            rows: self.rows,
            cols: other.cols,
            data,
        }
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (x, &a) in v.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(x)) {
                *o += a * p;
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn right_apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|x| self.row(x).iter().zip(g).map(|(p, v)| p * v).sum())
            .collect()
    }
}

/// Finite-horizon inhomogeneous chain with integer scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    initial: Vec<f64>,
    kernels: Vec<Kernel>,
    values: Vec<Vec<i64>>,
    bound: i64,
}

/// On-disk JSON layout of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub states: Vec<usize>,
    pub initial: Vec<f64>,
    pub kernels: Vec<Vec<Vec<f64>>>,
    pub values: Vec<Vec<i64>>,
    #[serde(rename = "K")]
    pub bound: i64,
}

impl ChainSpec {
    /// Builds and structurally validates a chain with at most
    /// [`DEFAULT_MAX_STATES`] states per step.
    ///
    /// `kernels[i]` maps step `i + 1` to step `i + 2`; entry `[x][y]` is
    /// `P(X_{i+2} = y | X_{i+1} = x)`.
    pub fn new(
        initial: Vec<f64>,
        kernels: Vec<Vec<Vec<f64>>>,
        values: Vec<Vec<i64>>,
        bound: i64,
    ) -> Result<Self> {
        Self::with_max_states(initial, kernels, values, bound, DEFAULT_MAX_STATES)
    }

    pub fn with_max_states(
        initial: Vec<f64>,
        kernels: Vec<Vec<Vec<f64>>>,
        values: Vec<Vec<i64>>,
        bound: i64,
        max_states: usize,
    ) -> Result<Self> {
        let kernels = kernels
            .iter()
            .enumerate()
            .map(|(i, rows)| {
                Kernel::from_rows(rows).map_err(|e| match e {
                    LabError::InvalidChain(msg) => LabError::InvalidKernel {
                        step: i + 1,
                        row: 0,
                        reason: msg,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            initial,
            kernels,
            values,
            bound,
        };
        spec.check_structure(max_states)?;
        Ok(spec)
    }

    fn check_structure(&self, max_states: usize) -> Result<()> {
        let n = self.values.len();
        if n == 0 {
            return Err(LabError::InvalidChain("horizon must be positive".into()));
        }
        if self.bound < 0 {
            return Err(LabError::InvalidChain("K must be nonnegative".into()));
        }
        for (i, vals) in self.values.iter().enumerate() {
            if vals.is_empty() || vals.len() > max_states {
                return Err(LabError::InvalidChain(format!(
                    "step {} has {} states (allowed 1..={max_states})",
                    i + 1,
                    vals.len()
                )));
            }
            if let Some(v) = vals.iter().find(|v| v.abs() > self.bound) {
                return Err(LabError::InvalidChain(format!(
                    "value {v} at step {} exceeds K = {}",
                    i + 1,
                    self.bound
                )));
            }
        }
        if self.initial.len() != self.values[0].len() {
            return Err(LabError::InvalidChain(format!(
                "initial law has {} entries, step 1 has {} states",
                self.initial.len(),
                self.values[0].len()
            )));
        }
        if self
            .initial
            .iter()
            .any(|p| !p.is_finite() || *p < 0.0)
        {
            return Err(LabError::InvalidChain(
                "initial law has a negative or non-finite entry".into(),
            ));
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(LabError::InvalidChain(format!(
                "initial law sums to {total}"
            )));
        }
        if self.kernels.len() != n - 1 {
            return Err(LabError::InvalidChain(format!(
                "expected {} kernels for horizon {n}, found {}",
                n - 1,
                self.kernels.len()
            )));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            let step = i + 1;
            if k.rows() != self.values[i].len() || k.cols() != self.values[i + 1].len() {
                return Err(LabError::InvalidKernel {
                    step,
                    row: 0,
                    reason: format!(
                        "shape {}x{} does not match states {}x{}",
                        k.rows(),
                        k.cols(),
                        self.values[i].len(),
                        self.values[i + 1].len()
                    ),
                });
            }
            for x in 0..k.rows() {
                let row = k.row(x);
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(LabError::InvalidKernel {
                        step,
                        row: x,
                        reason: "negative or non-finite entry".into(),
                    });
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(LabError::InvalidKernel {
                        step,
                        row: x,
                        reason: format!("row sums to {s}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Chain of `n` independent copies of one step law.
    pub fn iid(law: &[f64], values: &[i64], n: usize) -> Result<Self> {
        let bound = values.iter().map(|v| v.abs()).max().unwrap_or(0);
        let rows = vec![law.to_vec(); law.len()];
        Self::new(
            law.to_vec(),
            vec![rows; n.saturating_sub(1)],
            vec![values.to_vec(); n],
            bound,
        )
    }

    /// Time-homogeneous chain with a single kernel.
    pub fn homogeneous(
        initial: &[f64],
        kernel: &[Vec<f64>],
        values: &[i64],
        n: usize,
    ) -> Result<Self> {
        let bound = values.iter().map(|v| v.abs()).max().unwrap_or(0);
        Self::new(
            initial.to_vec(),
            vec![kernel.to_vec(); n.saturating_sub(1)],
            vec![values.to_vec(); n],
            bound,
        )
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// Number of states at step `n` (1-based).
    pub fn states(&self, n: usize) -> usize {
        self.values[n - 1].len()
    }

    pub fn state_counts(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    pub fn max_states(&self) -> usize {
        self.values.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Kernel from step `n` to step `n + 1` (1-based, `n < N`).
    pub fn kernel(&self, n: usize) -> &Kernel {
        &self.kernels[n - 1]
    }

    /// Scores `f_n` at step `n` (1-based).
    pub fn values(&self, n: usize) -> &[i64] {
        &self.values[n - 1]
    }

    /// Smallest and largest achievable value of `S_N` ignoring zero-mass
    /// paths.
    pub fn sum_range(&self) -> (i64, i64) {
        self.values.iter().fold((0, 0), |(lo, hi), v| {
            (
                lo + v.iter().min().copied().unwrap_or(0),
                hi + v.iter().max().copied().unwrap_or(0),
            )
        })
    }

    /// Marginal laws `mu_1..mu_N`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon());
        out.push(self.initial.clone());
        for k in &self.kernels {
            let next = k.left_apply(out.last().unwrap());
            out.push(next);
        }
        out
    }

    /// Per-step means `E[Y_n]`.
    pub fn step_means(&self) -> Vec<f64> {
        self.marginals()
            .iter()
            .zip(&self.values)
            .map(|(mu, f)| mu.iter().zip(f).map(|(p, &v)| p * v as f64).sum())
            .collect()
    }

    /// Product of kernels from step `n` over `k` steps.
    pub fn k_step_matrix(&self, n: usize, k: usize) -> Result<Kernel> {
        let horizon = self.horizon();
        if n == 0 || k == 0 || n + k > horizon {
            return Err(LabError::LagOutOfRange {
                step: n,
                lag: k,
                horizon,
            });
        }
        let mut prod = self.kernel(n).clone();
        for j in n + 1..n + k {
            prod = prod.matmul(self.kernel(j));
        }
        Ok(prod)
    }

    /// Resolves a pin set into a per-step mask (0-based vector indexed by
    /// step − 1).
    pub fn pin_mask(&self, pins: &PinSet) -> Result<Vec<Option<usize>>> {
        let n = self.horizon();
        let marg = self.marginals();
        let mut mask = vec![None; n];
        for (&step, &state) in &pins.pins {
            if step == 0 || step > n {
                return Err(LabError::InvalidPin {
                    step,
                    reason: format!("outside 1..={n}"),
                });
            }
            if state >= self.states(step) {
                return Err(LabError::InvalidPin {
                    step,
                    reason: format!("state {state} not in 0..{}", self.states(step)),
                });
            }
            if marg[step - 1][state] <= 0.0 {
                return Err(LabError::InvalidPin {
                    step,
                    reason: format!("state {state} has zero marginal mass"),
                });
            }
            mask[step - 1] = Some(state);
        }
        Ok(mask)
    }

    /// `ln P(pins)`, computed with per-step rescaling.
    pub fn log_pin_probability(&self, pins: &PinSet) -> Result<f64> {
        let mask = self.pin_mask(pins)?;
        let mut v = self.initial.clone();
        apply_mask(&mut v, mask[0]);
        let mut log_scale = 0.0;
        for (i, k) in self.kernels.iter().enumerate() {
            let s: f64 = v.iter().sum();
            if s <= 0.0 {
                return Err(LabError::ImpossiblePin);
            }
            log_scale += s.ln();
            v.iter_mut().for_each(|p| *p /= s);
            v = k.left_apply(&v);
            apply_mask(&mut v, mask[i + 1]);
        }
        let s: f64 = v.iter().sum();
        if s <= 0.0 {
            return Err(LabError::ImpossiblePin);
        }
        Ok(log_scale + s.ln())
    }

    /// Marginal laws of `X_n` given the pins, by a forward-backward pass.
    pub fn conditional_marginals(&self, pins: &PinSet) -> Result<Vec<Vec<f64>>> {
        let mask = self.pin_mask(pins)?;
        let n = self.horizon();
        let mut alpha = Vec::with_capacity(n);
        let mut v = self.initial.clone();
        apply_mask(&mut v, mask[0]);
        normalize(&mut v).ok_or(LabError::ImpossiblePin)?;
        alpha.push(v);
        for i in 0..n - 1 {
            let mut next = self.kernels[i].left_apply(&alpha[i]);
            apply_mask(&mut next, mask[i + 1]);
            normalize(&mut next).ok_or(LabError::ImpossiblePin)?;
            alpha.push(next);
        }
        let mut beta = vec![1.0; self.states(n)];
        apply_mask(&mut beta, mask[n - 1]);
        let mut out = vec![Vec::new(); n];
        for i in (0..n).rev() {
            let mut m: Vec<f64> = alpha[i].iter().zip(&beta).map(|(a, b)| a * b).collect();
            normalize(&mut m).ok_or(LabError::ImpossiblePin)?;
            out[i] = m;
            if i > 0 {
                let mut prev = self.kernels[i - 1].right_apply(&beta);
                apply_mask(&mut prev, mask[i - 1]);
                normalize(&mut prev).ok_or(LabError::ImpossiblePin)?;
                beta = prev;
            }
        }
        Ok(out)
    }

    pub fn from_file_struct(file: ChainFile) -> Result<Self> {
        if file.values.len() != file.horizon {
            return Err(LabError::InvalidChain(format!(
                "N = {} but {} value vectors",
                file.horizon,
                file.values.len()
            )));
        }
        if file.states.len() != file.horizon {
            return Err(LabError::InvalidChain(format!(
                "N = {} but {} state counts",
                file.horizon,
                file.states.len()
            )));
        }
        for (i, (&s, v)) in file.states.iter().zip(&file.values).enumerate() {
            if s != v.len() {
                return Err(LabError::InvalidChain(format!(
                    "step {}: states = {s} but {} values",
                    i + 1,
                    v.len()
                )));
            }
        }
        Self::new(file.initial, file.kernels, file.values, file.bound)
    }

    pub fn to_file_struct(&self) -> ChainFile {
        ChainFile {
            horizon: self.horizon(),
            states: self.state_counts(),
            initial: self.initial.clone(),
            kernels: self.kernels.iter().map(Kernel::to_rows).collect(),
            values: self.values.clone(),
            bound: self.bound,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ChainFile =
            serde_json::from_str(s).map_err(|e| LabError::Parse(e.to_string()))?;
        Self::from_file_struct(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_struct()).expect("chain serializes")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| LabError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&s)
    }

    /// Restriction to steps `first..=last` (1-based) with a new initial law.
    pub(crate) fn sub_chain(
        &self,
        first: usize,
        last: usize,
        initial: Vec<f64>,
        kernels: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        Self::new(
            initial,
            kernels,
            self.values[first - 1..last].to_vec(),
            self.bound,
        )
    }
}

pub(crate) fn apply_mask(v: &mut [f64], allowed: Option<usize>) {
    if let Some(s) = allowed {
        for (x, p) in v.iter_mut().enumerate() {
            if x != s {
                *p = 0.0;
            }
        }
    }
}

fn normalize(v: &mut [f64]) -> Option<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|p| *p /= s);
        Some(s)
    } else {
        None
    }
}

/// Pinned coordinates: step (1-based) → state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinSet {
    pins: BTreeMap<usize, usize>,
}

impl PinSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        Self {
            pins: pairs.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, step: usize, state: usize) -> Option<usize> {
        self.pins.insert(step, state)
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pins.iter().map(|(&a, &b)| (a, b))
    }

    pub fn steps(&self) -> Vec<usize> {
        self.pins.keys().copied().collect()
    }

    pub fn state_at(&self, step: usize) -> Option<usize> {
        self.pins.get(&step).copied()
    }
}

/// Geometric envelope `C_1 * delta^k` of the mixing deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingFit {
    pub c1: f64,
    pub delta: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    /// Lags `k` at which the deviation was measured.
    pub lags: Vec<usize>,
    /// `max_n sup_{x,y} |p_n^(k)(x, y) - 1|` per lag.
    pub sup_deviation: Vec<f64>,
    pub fit: Option<MixingFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// Ellipticity constant `C >= 1`: all one-step densities lie in `[1/C, C]`.
    pub constant: f64,
    /// `(min, max)` one-step density per transition `n -> n + 1`.
    pub density_ranges: Vec<(f64, f64)>,
    pub mixing: MixingProfile,
}

/// Checks ellipticity relative to the computed marginals and fits the
/// geometric decay of the k-step densities.
pub fn validate_chain(spec: &ChainSpec) -> Result<EllipticityReport> {
    let marg = spec.marginals();
    for (i, mu) in marg.iter().enumerate() {
        if let Some(state) = mu.iter().position(|&p| p <= 0.0) {
            return Err(LabError::DegenerateMarginal {
                step: i + 1,
                state,
            });
        }
    }
    let mut constant: f64 = 1.0;
    let mut ranges = Vec::with_capacity(spec.horizon().saturating_sub(1));
    for n in 1..spec.horizon() {
        let k = spec.kernel(n);
        let target = &marg[n];
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for x in 0..k.rows() {
            for (y, &p) in k.row(x).iter().enumerate() {
                if p <= 0.0 {
                    return Err(LabError::EllipticityViolation {
                        step: n,
                        row: x,
                        col: y,
                    });
                }
                let d = p / target[y];
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        constant = constant.max(hi).max(1.0 / lo);
        ranges.push((lo, hi));
    }
    let mixing = mixing_profile(spec, &marg);
    Ok(EllipticityReport {
        constant,
        density_ranges: ranges,
        mixing,
    })
}

fn mixing_profile(spec: &ChainSpec, marg: &[Vec<f64>]) -> MixingProfile {
    let n = spec.horizon();
    let kmax = MIXING_MAX_LAG.min(n.saturating_sub(1));
    let mut sup = vec![0.0_f64; kmax + 1];
    for start in 1..n {
        let mut prod = spec.kernel(start).clone();
        for k in 2..=kmax.min(n - start) {
            prod = prod.matmul(spec.kernel(start + k - 1));
            let target = &marg[start + k - 1];
            let mut dev: f64 = 0.0;
            for x in 0..prod.rows() {
                for (y, &p) in prod.row(x).iter().enumerate() {
                    dev = dev.max((p / target[y] - 1.0).abs());
                }
            }
            sup[k] = sup[k].max(dev);
        }
    }
    let lags: Vec<usize> = (2..=kmax).collect();
    let sup_deviation: Vec<f64> = lags.iter().map(|&k| sup[k]).collect();
    let fit = fit_geometric(&lags, &sup_deviation, MIXING_FLOOR)
        .filter(|f| f.correlation.abs() >= MIXING_MIN_CORRELATION && f.delta < 1.0);
    MixingProfile {
        lags,
        sup_deviation,
        fit,
    }
}

/// Least-squares fit of `ln value` against `k` over values above `floor`,
/// with `c1` raised to the envelope so that `value_k <= c1 * delta^k` holds at
/// every fitted point.
pub fn fit_geometric(ks: &[usize], values: &[f64], floor: f64) -> Option<MixingFit> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > floor)
        .map(|(&k, &v)| (k as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (slope, _, corr) = linear_fit(&pts)?;
    let delta = slope.exp();
    let c1 = pts
        .iter()
        .map(|&(k, lv)| (lv - k * slope).exp())
        .fold(0.0_f64, f64::max);
    Some(MixingFit {
        c1,
        delta,
        correlation: corr,
    })
}

/// Ordinary least squares `y = intercept + slope * x`; returns
/// `(slope, intercept, correlation)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let corr = if syy == 0.0 { 1.0 } else { sxy / (sxx * syy).sqrt() };
    Some((slope, my - slope * mx, corr))
}

/// Marginals of all steps.
pub fn marginals(spec: &ChainSpec) -> Vec<Vec<f64>> {
    spec.marginals()
}

/// Transition densities `p_n^(k)(x, y)` of `X_{n+k}` given `X_n` against
/// `mu_{n+k}`.
pub fn k_step_density(spec: &ChainSpec, n: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    let prod = spec.k_step_matrix(n, k)?;
    let target = &spec.marginals()[n + k - 1];
    Ok((0..prod.rows())
        .map(|x| {
            prod.row(x)
                .iter()
                .zip(target)
                .map(|(p, m)| p / m)
                .collect()
        })
        .collect())
}

/// A maximal run of unpinned steps, as an independent chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainBlock {
    /// First step of the block in the original numbering.
    pub first_step: usize,
    pub chain: ChainSpec,
}

impl ChainBlock {
    pub fn last_step(&self) -> usize {
        self.first_step + self.chain.horizon() - 1
    }
}

/// Chain conditioned on pinned coordinates: independent bridge blocks plus
/// the deterministic contribution of the pins.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedChain {
    pub blocks: Vec<ChainBlock>,
    pub pinned_sum: i64,
    pub log_pin_probability: f64,
}

impl ConditionedChain {
    /// Conditional marginal of `X_n` for an unpinned step, `None` if pinned.
    pub fn marginal(&self, step: usize) -> Option<Vec<f64>> {
        self.blocks
            .iter()
            .find(|b| (b.first_step..=b.last_step()).contains(&step))
            .map(|b| b.chain.marginals()[step - b.first_step].clone())
    }
}

/// Exact conditioning on pinned coordinates via bridge (Doob) transforms.
///
/// Blocks between two pins are bridges from the left pin to the right pin;
/// the leading block is conditioned on its right pin only and the trailing
/// block on its left pin only.
pub fn condition_chain(spec: &ChainSpec, pins: &PinSet) -> Result<ConditionedChain> {
    let log_p = spec.log_pin_probability(pins)?;
    let n = spec.horizon();
    let pinned: Vec<(usize, usize)> = pins.iter().collect();
    let pinned_sum = pinned
        .iter()
        .map(|&(step, state)| spec.values(step)[state])
        .sum();

    // Boundaries: (left pin, right pin) around each maximal unpinned run.
    let mut runs: Vec<(Option<(usize, usize)>, usize, usize, Option<(usize, usize)>)> = Vec::new();
    let mut prev: Option<(usize, usize)> = None;
    let mut start = 1;
    for &(step, state) in &pinned {
        if step > start {
            runs.push((prev, start, step - 1, Some((step, state))));
        }
        prev = Some((step, state));
        start = step + 1;
    }
    if start <= n {
        runs.push((prev, start, n, None));
    }

    let mut blocks = Vec::with_capacity(runs.len());
    for (left, first, last, right) in runs {
        // beta[i] = P(X_right = b | X_{first+i} = x)
        let len = last - first + 1;
        let mut beta: Vec<Vec<f64>> = vec![Vec::new(); len];
        match right {
            Some((rs, rstate)) => {
                let k = spec.kernel(rs - 1);
                beta[len - 1] = (0..k.rows()).map(|x| k.get(x, rstate)).collect();
                for i in (0..len - 1).rev() {
                    beta[i] = spec.kernel(first + i).right_apply(&beta[i + 1]);
                }
            }
            None => {
                for (i, b) in beta.iter_mut().enumerate() {
                    *b = vec![1.0; spec.states(first + i)];
                }
            }
        }
        let base_initial: Vec<f64> = match left {
            Some((ls, lstate)) => spec.kernel(ls).row(lstate).to_vec(),
            None => spec.initial().to_vec(),
        };
        let mut initial: Vec<f64> = base_initial
            .iter()
            .zip(&beta[0])
            .map(|(p, b)| p * b)
            .collect();
        normalize(&mut initial).ok_or(LabError::ImpossiblePin)?;
        let mut kernels = Vec::with_capacity(len - 1);
        for i in 0..len - 1 {
            let k = spec.kernel(first + i);
            let rows = (0..k.rows())
                .map(|x| {
                    let mut row: Vec<f64> = k
                        .row(x)
                        .iter()
                        .zip(&beta[i + 1])
                        .map(|(p, b)| p * b)
                        .collect();
                    // Rows of states unreachable under the pins carry no mass;
                    // keep them stochastic.
                    if normalize(&mut row).is_none() {
                        row = k.row(x).to_vec();
                    }
                    row
                })
                .collect();
            kernels.push(rows);
        }
        let chain = spec.sub_chain(first, last, initial, kernels)?;
        blocks.push(ChainBlock {
            first_step: first,
            chain,
        });
    }
    Ok(ConditionedChain {
        blocks,
        pinned_sum,
        log_pin_probability: log_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(a: f64, n: usize) -> ChainSpec {
        ChainSpec::homogeneous(
            &[0.5, 0.5],
            &[vec![a, 1.0 - a], vec![1.0 - a, a]],
            &[0, 1],
            n,
        )
        .unwrap()
    }

    #[test]
    fn iid_chain_is_perfectly_elliptic() {
        let spec = ChainSpec::iid(&[0.5, 0.5], &[0, 1], 10).unwrap();
        let rep = validate_chain(&spec).unwrap();
        assert_eq!(rep.constant, 1.0);
        assert!(rep.mixing.sup_deviation.iter().all(|&d| d == 0.0));
        assert!(rep.mixing.fit.is_none());
    }

    #[test]
    fn symmetric_kernel_constant() {
        let spec = symmetric(0.9, 12);
        let rep = validate_chain(&spec).unwrap();
        assert!((rep.constant - 5.0).abs() < 1e-12);
        let (lo, hi) = rep.density_ranges[0];
        assert!((lo - 0.2).abs() < 1e-12 && (hi - 1.8).abs() < 1e-12);
        for mu in spec.marginals() {
            assert!((mu[0] - 0.5).abs() < 1e-15);
        }
        // p^(k) - 1 = ±0.8^k exactly for this kernel.
        let fit = rep.mixing.fit.unwrap();
        assert!((fit.delta - 0.8).abs() < 1e-9);
        assert!((fit.c1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_entry_violates_ellipticity() {
        let spec = ChainSpec::homogeneous(
            &[0.5, 0.5],
            &[vec![1.0, 0.0], vec![0.5, 0.5]],
            &[0, 1],
            3,
        )
        .unwrap();
        assert!(matches!(
            validate_chain(&spec),
            Err(LabError::EllipticityViolation { step: 1, row: 0, col: 1 })
        ));
    }

    #[test]
    fn degenerate_marginal_detected() {
        let spec = ChainSpec::homogeneous(
            &[1.0, 0.0],
            &[vec![1.0, 0.0], vec![0.5, 0.5]],
            &[0, 1],
            3,
        )
        .unwrap();
        assert!(matches!(
            validate_chain(&spec),
            Err(LabError::DegenerateMarginal { step: 1, state: 1 })
        ));
    }

    #[test]
    fn marginal_propagation() {
        let spec = ChainSpec::homogeneous(
            &[1.0, 0.0],
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[0, 1],
            2,
        )
        .unwrap();
        assert_eq!(spec.marginals()[1], vec![0.5, 0.5]);
    }

    #[test]
    fn two_step_density_of_symmetric_chain() {
        let spec = symmetric(0.9, 5);
        let d = k_step_density(&spec, 1, 2).unwrap();
        assert!((d[0][0] - 1.64).abs() < 1e-12);
        assert!((d[0][1] - 0.36).abs() < 1e-12);
        assert!(matches!(
            k_step_density(&spec, 3, 3),
            Err(LabError::LagOutOfRange { .. })
        ));
    }

    #[test]
    fn iid_densities_are_one() {
        let spec = ChainSpec::iid(&[0.2, 0.3, 0.5], &[0, 1, 2], 6);
        let spec = spec.unwrap();
        for (n, k) in [(1, 1), (2, 3), (1, 5)] {
            for row in k_step_density(&spec, n, k).unwrap() {
                assert!(row.iter().all(|&d| (d - 1.0).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn structural_errors_name_step_and_row() {
        let err = ChainSpec::new(
            vec![0.5, 0.5],
            vec![vec![vec![0.5, 0.5], vec![0.7, 0.2]]],
            vec![vec![0, 1], vec![0, 1]],
            1,
        )
        .unwrap_err();
        assert!(matches!(err, LabError::InvalidKernel { step: 1, row: 1, .. }));
        let err = ChainSpec::new(vec![1.0], vec![], vec![vec![3]], 2).unwrap_err();
        assert!(matches!(err, LabError::InvalidChain(_)));
    }

    #[test]
    fn iid_conditioning_leaves_kernels_unchanged() {
        let spec = ChainSpec::iid(&[0.3, 0.7], &[0, 1], 6).unwrap();
        let cond = condition_chain(&spec, &PinSet::from_pairs([(3, 1)])).unwrap();
        assert_eq!(cond.pinned_sum, 1);
        assert_eq!(cond.blocks.len(), 2);
        for b in &cond.blocks {
            assert_eq!(b.chain.initial(), &[0.3, 0.7]);
            for n in 1..b.chain.horizon() {
                let k = b.chain.kernel(n);
                for x in 0..2 {
                    assert!((k.get(x, 0) - 0.3).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn impossible_pin_rejected() {
        let spec = ChainSpec::homogeneous(
            &[0.5, 0.5],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0, 1],
            4,
        )
        .unwrap();
        let pins = PinSet::from_pairs([(1, 0), (3, 1)]);
        assert_eq!(condition_chain(&spec, &pins), Err(LabError::ImpossiblePin));
    }

    #[test]
    fn adjacent_pins_leave_no_empty_block() {
        let spec = symmetric(0.7, 6);
        let cond = condition_chain(&spec, &PinSet::from_pairs([(1, 0), (2, 1), (6, 0)])).unwrap();
        let covered: Vec<usize> = cond
            .blocks
            .iter()
            .flat_map(|b| b.first_step..=b.last_step())
            .collect();
        assert_eq!(covered, vec![3, 4, 5]);
    }

    #[test]
    fn json_round_trip() {
        let spec = symmetric(0.6, 4);
        let back = ChainSpec::from_json_str(&spec.to_json_string()).unwrap();
        assert_eq!(spec, back);
    }
}
