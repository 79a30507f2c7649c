//! Sequential Perron–Frobenius triplets of the perturbed transfer operators
//! `R_z^(j) g(x) = E[e^{iU_{j+1} + zY_{j+1}} g(X_{j+1}) | X_j = x]`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{linear_fit, ChainSpec};
use crate::error::{LabError, Result};

/// Optional bounded phases `u[n - 1][x]` added at step `n`.
pub type Phases = Vec<Vec<f64>>;

const H_LIMIT: f64 = 1e8;
const LAMBDA_FLOOR: f64 = 1e-12;

fn weight(spec: &ChainSpec, n: usize, y: usize, z: Complex64, u: Option<&Phases>) -> Complex64 {
    let phase = u.map_or(0.0, |u| u[n - 1][y]);
    (Complex64::new(0.0, phase) + z * spec.values(n)[y] as f64).exp()
}

/// `R_z^(j) g` for `1 <= j < N`; `g` lives on the states of step `j + 1`.
pub fn transfer_apply(
    spec: &ChainSpec,
    j: usize,
    z: Complex64,
    u: Option<&Phases>,
    g: &[Complex64],
) -> Result<Vec<Complex64>> {
    if j == 0 || j >= spec.horizon() {
        return Err(LabError::StepOutOfRange {
            step: j,
            limit: spec.horizon(),
        });
    }
    let kern = spec.kernel(j);
    let w: Vec<Complex64> = (0..spec.states(j + 1))
        .map(|y| weight(spec, j + 1, y, z, u) * g[y])
        .collect();
    Ok((0..kern.rows())
        .map(|x| kern.row(x).iter().zip(&w).map(|(p, v)| v * p).sum())
        .collect())
}

/// Dual action `nu -> nu o R_z^(j)` on a measure given by its weights.
fn dual_apply(spec: &ChainSpec, j: usize, z: Complex64, u: Option<&Phases>, w: &[Complex64]) -> Vec<Complex64> {
    let kern = spec.kernel(j);
    (0..spec.states(j + 1))
        .map(|y| {
            let s: Complex64 = w.iter().enumerate().map(|(x, &wx)| wx * kern.get(x, y)).sum();
            s * weight(spec, j + 1, y, z, u)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpfTriplet {
    pub step: usize,
    #[serde(serialize_with = "ser_c")]
    pub lambda: Complex64,
    #[serde(serialize_with = "ser_cv")]
    pub h: Vec<Complex64>,
    /// Density of `nu_j` against the marginal `mu_j`.
    #[serde(serialize_with = "ser_cv")]
    pub nu: Vec<Complex64>,
}

fn ser_c<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn ser_cv<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
}

impl RpfTriplet {
    /// Weights of `nu_j` as a measure.
    pub fn nu_weights(&self, marginal: &[f64]) -> Vec<Complex64> {
        self.nu.iter().zip(marginal).map(|(d, m)| d * m).collect()
    }
}

fn pair_with(w: &[Complex64], g: &[Complex64]) -> Complex64 {
    w.iter().zip(g).map(|(a, b)| a * b).sum()
}

/// Triplets for `j = 1..=N`: `nu_1` is the initial law, `h_N = 1`,
/// `lambda_N = 1`.
pub fn rpf_triplets(spec: &ChainSpec, z: Complex64, u: Option<&Phases>) -> Result<Vec<RpfTriplet>> {
    let n = spec.horizon();
    let marg = spec.marginals();
    let bad = |step: usize, residual: f64| LabError::NoContraction { step, residual };

    let first_weight: Vec<Complex64> = (0..spec.states(1))
        .map(|x| Complex64::new(spec.initial()[x], 0.0))
        .collect();
    let mut weights = vec![first_weight];
    let mut lambdas = Vec::with_capacity(n);
    for j in 1..n {
        let w = dual_apply(spec, j, z, u, &weights[j - 1]);
        let lambda: Complex64 = w.iter().sum();
        if !(lambda.norm() >= LAMBDA_FLOOR) || !lambda.is_finite() {
            return Err(bad(j, lambda.norm()));
        }
        weights.push(w.iter().map(|v| v / lambda).collect());
        lambdas.push(lambda);
    }
    lambdas.push(Complex64::new(1.0, 0.0));

    let mut hs = vec![Vec::new(); n];
    hs[n - 1] = vec![Complex64::new(1.0, 0.0); spec.states(n)];
    for j in (1..n).rev() {
        let g = transfer_apply(spec, j, z, u, &hs[j])?;
        let c = pair_with(&weights[j - 1], &g);
        if !(c.norm() >= LAMBDA_FLOOR) || !c.is_finite() {
            return Err(bad(j, c.norm()));
        }
        let h: Vec<Complex64> = g.iter().map(|v| v / c).collect();
        let size = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(size <= H_LIMIT) {
            return Err(bad(j, size));
        }
        hs[j - 1] = h;
    }
    Ok((1..=n)
        .map(|j| RpfTriplet {
            step: j,
            lambda: lambdas[j - 1],
            h: hs[j - 1].clone(),
            nu: weights[j - 1]
                .iter()
                .zip(&marg[j - 1])
                .map(|(w, m)| w / m)
                .collect(),
        })
        .collect())
}

/// Halves `z` until the triplets can be built (at most `tries` times).
pub fn usable_radius(
    spec: &ChainSpec,
    z: Complex64,
    u: Option<&Phases>,
    tries: usize,
) -> Result<(Complex64, Vec<RpfTriplet>)> {
    let mut z = z;
    let mut last = None;
    for _ in 0..=tries {
        match rpf_triplets(spec, z, u) {
            Ok(t) => return Ok((z, t)),
            Err(e @ LabError::NoContraction { .. }) => {
                last = Some(e);
                z /= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub j: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpfReport {
    pub rows: Vec<ResidualRow>,
    /// Maxima over the middle third of the horizon.
    pub max_primal_mid: f64,
    pub max_dual_mid: f64,
    /// `max |nu_j(1) - 1|, |nu_j(h_j) - 1|` over all steps.
    pub normalization_error: f64,
    /// `n -> max_q |R^{j0,n} q / lambda_{j0,n} - nu_{j0+n}(q) h_{j0}| / |q|`.
    pub deviations: Vec<f64>,
    /// Fitted geometric ratio of the deviations, if enough points lie above
    /// roundoff.
    pub decay_ratio: Option<f64>,
    pub decay_correlation: Option<f64>,
}

impl RpfReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,primal_residual,dual_residual\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e}\n", r.j, r.primal_residual, r.dual_residual));
        }
        s
    }
}

const DECAY_FLOOR: f64 = 1e-12;
const TEST_VECTORS: usize = 4;

/// Eigen-equation residuals and the convergence of normalized products.
pub fn verify_rpf(spec: &ChainSpec, z: Complex64, u: Option<&Phases>, triplets: &[RpfTriplet]) -> Result<RpfReport> {
    let n = spec.horizon();
    let marg = spec.marginals();
    let weights: Vec<Vec<Complex64>> = triplets
        .iter()
        .map(|t| t.nu_weights(&marg[t.step - 1]))
        .collect();
    let mut rows = Vec::with_capacity(n.saturating_sub(1));
    let mut norm_err: f64 = 0.0;
    for j in 1..=n {
        let one: Complex64 = weights[j - 1].iter().sum();
        norm_err = norm_err
            .max((one - 1.0).norm())
            .max((pair_with(&weights[j - 1], &triplets[j - 1].h) - 1.0).norm());
    }
    for j in 1..n {
        let lambda = triplets[j - 1].lambda;
        let rh = transfer_apply(spec, j, z, u, &triplets[j].h)?;
        let primal = rh
            .iter()
            .zip(&triplets[j - 1].h)
            .map(|(a, b)| (a - lambda * b).norm())
            .fold(0.0, f64::max);
        let nr = dual_apply(spec, j, z, u, &weights[j - 1]);
        let dual = nr
            .iter()
            .zip(&weights[j])
            .map(|(a, b)| (a - lambda * b).norm())
            .fold(0.0, f64::max);
        rows.push(ResidualRow {
            j,
            primal_residual: primal,
            dual_residual: dual,
        });
    }
    let (lo, hi) = (n / 3, 2 * n / 3);
    let mid = rows.iter().filter(|r| r.j >= lo.max(1) && r.j <= hi);
    let (max_primal_mid, max_dual_mid) = mid.fold((0.0f64, 0.0f64), |(p, d), r| {
        (p.max(r.primal_residual), d.max(r.dual_residual))
    });

    // Convergence of R^{j0,k} q / lambda_{j0,k} towards nu_{j0+k}(q) h_{j0}.
    let j0 = (n / 3).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let max_k = n - j0;
    let mut deviations = vec![0.0f64; max_k];
    for _ in 0..TEST_VECTORS {
        for k in 1..=max_k {
            let target = j0 + k;
            let q: Vec<Complex64> = (0..spec.states(target))
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let qn = q.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let mut v = q.clone();
            for step in (j0..target).rev() {
                v = transfer_apply(spec, step, z, u, &v)?;
                let l = triplets[step - 1].lambda;
                v.iter_mut().for_each(|x| *x /= l);
            }
            let nu_q = pair_with(&weights[target - 1], &q);
            let dev = v
                .iter()
                .zip(&triplets[j0 - 1].h)
                .map(|(a, h)| (a - nu_q * h).norm())
                .fold(0.0, f64::max)
                / qn;
            deviations[k - 1] = deviations[k - 1].max(dev);
        }
    }
    let pts: Vec<(f64, f64)> = deviations
        .iter()
        .enumerate()
        .take_while(|&(_, &d)| d > DECAY_FLOOR)
        .map(|(i, &d)| ((i + 1) as f64, d.ln()))
        .collect();
    let fit = if pts.len() >= 3 { linear_fit(&pts) } else { None };
    Ok(RpfReport {
        rows,
        max_primal_mid,
        max_dual_mid,
        normalization_error: norm_err,
        deviations,
        decay_ratio: fit.map(|(slope, _, _)| slope.exp()),
        decay_correlation: fit.map(|(_, _, c)| c),
    })
}

/// `lambda_j * lambda_{j+1} * ... * lambda_{j+k-1}`.
pub fn lambda_product(triplets: &[RpfTriplet], j: usize, k: usize) -> Complex64 {
    triplets[j - 1..j - 1 + k].iter().map(|t| t.lambda).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::char_fn;

    fn chain(n: usize) -> ChainSpec {
        ChainSpec::homogeneous(
            &[0.2, 0.5, 0.3],
            &[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4]],
            &[-1, 0, 2],
            n,
        )
        .unwrap()
    }

    #[test]
    fn stochastic_at_zero() {
        let spec = chain(5);
        let one = vec![Complex64::new(1.0, 0.0); 3];
        let r = transfer_apply(&spec, 2, Complex64::new(0.0, 0.0), None, &one).unwrap();
        assert!(r.iter().all(|v| (v - 1.0).norm() < 1e-15));
        assert!(matches!(
            transfer_apply(&spec, 5, Complex64::new(0.0, 0.0), None, &one),
            Err(LabError::StepOutOfRange { step: 5, limit: 5 })
        ));
    }

    #[test]
    fn telescoping_gives_char_fn() {
        let spec = chain(9);
        let t = 0.7;
        let z = Complex64::new(0.0, t);
        let mut g = vec![Complex64::new(1.0, 0.0); 3];
        for j in (1..9).rev() {
            g = transfer_apply(&spec, j, z, None, &g).unwrap();
        }
        let total: Complex64 = g
            .iter()
            .enumerate()
            .map(|(x, v)| v * spec.initial()[x] * (z * spec.values(1)[x] as f64).exp())
            .sum();
        assert!((total - char_fn(&spec, t, None).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn trivial_triplets_at_zero() {
        let spec = chain(30);
        let tr = rpf_triplets(&spec, Complex64::new(0.0, 0.0), None).unwrap();
        for t in &tr {
            assert!((t.lambda - 1.0).norm() < 1e-14);
            assert!(t.h.iter().all(|v| (v - 1.0).norm() < 1e-14));
        }
        let rep = verify_rpf(&spec, Complex64::new(0.0, 0.0), None, &tr).unwrap();
        assert!(rep.max_primal_mid < 1e-14 && rep.max_dual_mid < 1e-14);
    }

    #[test]
    fn single_state_scalar() {
        let spec = ChainSpec::iid(&[1.0], &[3], 4).unwrap();
        let z = Complex64::new(0.1, 0.2);
        let r = transfer_apply(&spec, 1, z, None, &[Complex64::new(2.0, 0.0)]).unwrap();
        assert!((r[0] - 2.0 * (z * 3.0).exp()).norm() < 1e-15);
    }

    #[test]
    fn decay_is_geometric() {
        let spec = chain(90);
        let z = Complex64::new(0.0, 0.02);
        let tr = rpf_triplets(&spec, z, None).unwrap();
        let rep = verify_rpf(&spec, z, None, &tr).unwrap();
        assert!(rep.max_primal_mid < 1e-12);
        assert!(rep.normalization_error < 1e-10);
        assert!(rep.decay_ratio.unwrap() < 0.9);
    }
}
