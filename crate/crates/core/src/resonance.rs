//! Resonant frequencies, residue statistics and the resonant partition of the
//! circle.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, PinSet};
use crate::cumulant::cumulants_at_zero;
use crate::error::{LabError, Result};

/// Reduced frequency `t = 2 pi l / m` with `0 <= l < m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResonantPoint {
    pub l: u64,
    pub m: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: u64, b: u64) -> Option<u64> {
    (a / gcd(a, b)).checked_mul(b)
}

impl ResonantPoint {
    /// Reduces `l / m`; `l` is taken modulo `m`.
    pub fn new(l: u64, m: u64) -> Self {
        assert!(m >= 1, "denominator must be positive");
        let l = l % m;
        if l == 0 {
            return Self { l: 0, m: 1 };
        }
        let g = gcd(l, m);
        Self { l: l / g, m: m / g }
    }

    pub fn zero() -> Self {
        Self { l: 0, m: 1 }
    }

    pub fn is_zero(&self) -> bool {
        self.l == 0
    }

    pub fn t(&self) -> f64 {
        TAU * self.l as f64 / self.m as f64
    }

    /// `e^{i t v}`, exact at multiples of a quarter turn.
    pub fn phase(&self, v: i64) -> Complex64 {
        let m = self.m as i64;
        let r = (self.l as i64 * v.rem_euclid(m)).rem_euclid(m);
        unit_root(r as u64, self.m)
    }

    /// The conjugate point `(m - l) / m`.
    pub fn conjugate(&self) -> Self {
        Self::new(self.m - self.l, self.m)
    }

    /// Index `a` with `e^{-itk} = e^{2 pi i a k / J}`; `J` must be a multiple
    /// of `m`.
    pub fn slot(&self, period: u64) -> u64 {
        debug_assert_eq!(period % self.m, 0);
        ((self.m - self.l) % self.m) * (period / self.m)
    }
}

/// `e^{2 pi i r / m}`, exact when `4r/m` is an integer.
pub fn unit_root(r: u64, m: u64) -> Complex64 {
    let r = r % m;
    if (4 * r) % m == 0 {
        return match 4 * r / m {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, TAU * r as f64 / m as f64)
}

/// All reduced `l / m` with `m <= 2K`, including `t = 0`, sorted by `t`.
pub fn resonant_points(bound: i64) -> Vec<ResonantPoint> {
    let mut pts = vec![ResonantPoint::zero()];
    for m in 2..=(2 * bound.max(0)) as u64 {
        for l in 1..m {
            if gcd(l, m) == 1 {
                pts.push(ResonantPoint { l, m });
            }
        }
    }
    pts.sort_by(|a, b| (a.l * b.m).cmp(&(b.l * a.m)));
    pts
}

/// `lcm(1, ..., 2K)`, the common period of all resonant phases.
pub fn resonance_period(bound: i64) -> Result<u64> {
    let mut j: u64 = 1;
    for m in 2..=(2 * bound.max(0)) as u64 {
        j = lcm(j, m).ok_or_else(|| {
            LabError::ParameterOutOfRange(format!("lcm(1..{}) overflows", 2 * bound))
        })?;
    }
    Ok(j)
}

/// Per-step residue statistics of `Y_n = f_n(X_n)` modulo `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueProfile {
    pub modulus: usize,
    /// `laws[n - 1][a] = P(Y_n = a mod m)`.
    pub laws: Vec<Vec<f64>>,
    /// Most likely residue per step (smallest on ties).
    pub modes: Vec<usize>,
    /// Second largest residue mass `q_n(m)` per step.
    pub second: Vec<f64>,
    /// `P(Y_n != m_n mod m)` per step.
    pub non_modal: Vec<f64>,
    /// `M_N(m) = sum_n q_n(m)`.
    pub total_second: f64,
    pub total_non_modal: f64,
}

const TIE_TOLERANCE: f64 = 1e-14;

/// Mode (smallest residue among near-ties) and second largest mass.
pub fn mode_and_second(law: &[f64]) -> (usize, f64) {
    let max = law.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mode = law
        .iter()
        .position(|&p| p >= max - TIE_TOLERANCE)
        .unwrap_or(0);
    let second = law
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != mode)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    (mode, second)
}

impl ResidueProfile {
    pub fn from_laws(modulus: usize, laws: Vec<Vec<f64>>) -> Self {
        let mut modes = Vec::with_capacity(laws.len());
        let mut second = Vec::with_capacity(laws.len());
        let mut non_modal = Vec::with_capacity(laws.len());
        for law in &laws {
            let (mode, q) = mode_and_second(law);
            modes.push(mode);
            second.push(q);
            non_modal.push((1.0 - law[mode]).max(0.0));
        }
        Self {
            modulus,
            total_second: second.iter().sum(),
            total_non_modal: non_modal.iter().sum(),
            laws,
            modes,
            second,
            non_modal,
        }
    }

    /// `M_N(m)` for the first `n` steps.
    pub fn partial_total(&self, n: usize, statistic: MStatistic) -> f64 {
        match statistic {
            MStatistic::SecondLargest => self.second[..n].iter().sum(),
            MStatistic::NonModal => self.non_modal[..n].iter().sum(),
        }
    }

    pub fn total(&self, statistic: MStatistic) -> f64 {
        match statistic {
            MStatistic::SecondLargest => self.total_second,
            MStatistic::NonModal => self.total_non_modal,
        }
    }

    /// CSV with columns `n,m,m_n,q_n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,m,m_n,q_n\n");
        for (i, (mode, q)) in self.modes.iter().zip(&self.second).enumerate() {
            s.push_str(&format!("{},{},{},{:e}\n", i + 1, self.modulus, mode, q));
        }
        s
    }
}

/// Residue profile of the per-step scores, conditional on the pins if given.
pub fn residue_profile(spec: &ChainSpec, m: usize, pins: Option<&PinSet>) -> Result<ResidueProfile> {
    if m < 2 {
        return Err(LabError::ParameterOutOfRange(format!("modulus {m} < 2")));
    }
    let marg = match pins {
        Some(p) if !p.is_empty() => spec.conditional_marginals(p)?,
        _ => spec.marginals(),
    };
    let laws = marg
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let mut law = vec![0.0; m];
            for (&p, &v) in mu.iter().zip(spec.values(i + 1)) {
                law[v.rem_euclid(m as i64) as usize] += p;
            }
            law
        })
        .collect();
    Ok(ResidueProfile::from_laws(m, laws))
}

/// Which per-step statistic drives `M_N(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MStatistic {
    #[default]
    SecondLargest,
    NonModal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusVerdict {
    pub m: usize,
    #[serde(rename = "M_N_m")]
    pub second_largest: f64,
    pub non_modal: f64,
    /// Resonant terms with denominator `m` may be dropped.
    pub drop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProkhorovReport {
    pub variance: f64,
    pub threshold: f64,
    pub statistic: MStatistic,
    pub moduli: Vec<ModulusVerdict>,
    /// `min_m M_N(m)` under the chosen statistic.
    pub m_n: f64,
    /// Every modulus can be dropped.
    pub criterion_holds: bool,
}

/// Compares `M_N(m)` with `R ln V_N` for every `2 <= m <= 2K`.
pub fn prokhorov_classify(spec: &ChainSpec, r_threshold: f64, statistic: MStatistic) -> Result<ProkhorovReport> {
    let variance = cumulants_at_zero(spec, 1, None)?.variance;
    if variance <= 1.0 {
        return Err(LabError::DegenerateVariance(variance.sqrt()));
    }
    let threshold = r_threshold * variance.ln();
    let mut moduli = Vec::new();
    for m in 2..=(2 * spec.bound()).max(0) as usize {
        let prof = residue_profile(spec, m, None)?;
        moduli.push(ModulusVerdict {
            m,
            second_largest: prof.total_second,
            non_modal: prof.total_non_modal,
            drop: prof.total(statistic) >= threshold,
        });
    }
    let m_n = moduli
        .iter()
        .map(|v| match statistic {
            MStatistic::SecondLargest => v.second_largest,
            MStatistic::NonModal => v.non_modal,
        })
        .fold(f64::INFINITY, f64::min);
    Ok(ProkhorovReport {
        variance,
        threshold,
        statistic,
        criterion_holds: moduli.iter().all(|v| v.drop),
        moduli,
        m_n,
    })
}

/// Lower and upper sides of the variance bracket for a law on `{0..m-1}`:
/// `q / 4 <= Var <= 8 (m-1)^3 q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QvBracket {
    pub q: f64,
    pub variance: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

pub fn qv_bracket(law: &[f64]) -> QvBracket {
    let total: f64 = law.iter().sum();
    let law: Vec<f64> = law.iter().map(|p| p / total).collect();
    let (_, q) = mode_and_second(&law);
    let mean: f64 = law.iter().enumerate().map(|(a, p)| a as f64 * p).sum();
    let variance: f64 = law
        .iter()
        .enumerate()
        .map(|(a, p)| (a as f64 - mean).powi(2) * p)
        .sum();
    let kz = (law.len() - 1) as f64;
    QvBracket {
        q,
        variance,
        lower_holds: q / 4.0 <= variance * (1.0 + 1e-12) + 1e-300,
        upper_holds: variance <= 8.0 * kz.powi(3) * q * (1.0 + 1e-12) + 1e-300,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// The resonant point strictly inside, if any.
    pub point: Option<ResonantPoint>,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_resonant(&self) -> bool {
        self.point.is_some()
    }
}

/// Smallest circular gap between consecutive resonant points.
pub fn min_resonant_gap(bound: i64) -> f64 {
    let pts = resonant_points(bound);
    if pts.len() < 2 {
        return TAU;
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.t()).collect();
    let mut gap = TAU - ts[ts.len() - 1] + ts[0];
    for w in ts.windows(2) {
        gap = gap.min(w[1] - w[0]);
    }
    gap
}

/// One third of the smallest resonant gap.
pub fn default_delta(bound: i64) -> f64 {
    min_resonant_gap(bound) / 3.0
}

/// Partition of the period `[-delta/2, 2 pi - delta/2)` into a width-`delta`
/// interval centred on each resonant point and non-resonant pieces of width
/// at most `delta` in between.
pub fn interval_partition(bound: i64, delta: f64) -> Result<Vec<Interval>> {
    let limit = min_resonant_gap(bound) / 2.0;
    if !(delta > 0.0 && delta < limit) {
        return Err(LabError::DeltaTooLarge { delta, limit });
    }
    let pts = resonant_points(bound);
    let mut out = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let t = p.t();
        out.push(Interval {
            lo: t - delta / 2.0,
            hi: t + delta / 2.0,
            point: Some(*p),
        });
        let next = if i + 1 < pts.len() { pts[i + 1].t() } else { TAU };
        let (lo, hi) = (t + delta / 2.0, next - delta / 2.0);
        let pieces = ((hi - lo) / delta).ceil().max(1.0) as usize;
        let w = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            out.push(Interval {
                lo: lo + k as f64 * w,
                hi: if k + 1 == pieces { hi } else { lo + (k + 1) as f64 * w },
                point: None,
            });
        }
    }
    Ok(out)
}
