//! Deterministic scenario families.
//!
//! Every generator draws its randomness step by step from one seeded stream,
//! so the chain for horizon `N` is a prefix of the chain for any larger
//! horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::ChainSpec;
use crate::error::{LabError, Result};

pub const DEFAULT_LADDER: [usize; 4] = [64, 256, 1024, 4096];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    /// Kernel entries uniform in `[eps0, 1]` then row-normalized; values
    /// uniform in `[-K, K]`.
    RandomElliptic {
        seed: u64,
        eps0: f64,
        states: usize,
        #[serde(rename = "K")]
        bound: i64,
    },
    /// Two states with values `{0, 2}` and random elliptic kernels.
    EvenLattice { seed: u64, eps0: f64 },
    /// States `{0, 1, 2}` scoring their label; the odd state has probability
    /// `min(c / n, 1/3)` at step `n`.
    SparseOdd { c: f64 },
    /// Independent `{0, 1}` steps with `P(1) = p`.
    IidCoin { p: f64 },
    /// Two-state chain staying put with probability `a`, values `{0, 1}`.
    SymmetricMarkov { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Aperiodic,
    Periodic,
    SparseOdd,
    Conditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub generator: Generator,
    pub regime: Regime,
    pub ladder: Vec<usize>,
}

/// Stay probabilities among the even states of the sparse-odd family,
/// indexed by the previous state.
const SPARSE_EVEN_WEIGHTS: [f64; 3] = [0.7, 0.5, 0.3];

fn random_law(rng: &mut ChaCha8Rng, eps0: f64, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(eps0..=1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

impl Generator {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::ParameterOutOfRange(m));
        match *self {
            Generator::RandomElliptic { eps0, states, bound, .. } => {
                if !(eps0 > 0.0 && eps0 <= 1.0) {
                    return bad(format!("eps0 = {eps0} not in (0, 1]"));
                }
                if !(1..=16).contains(&states) {
                    return bad(format!("states = {states} not in 1..=16"));
                }
                if bound < 1 {
                    return bad(format!("K = {bound} < 1"));
                }
            }
            Generator::EvenLattice { eps0, .. } => {
                if !(eps0 > 0.0 && eps0 <= 1.0) {
                    return bad(format!("eps0 = {eps0} not in (0, 1]"));
                }
            }
            Generator::SparseOdd { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad(format!("c = {c} must be positive"));
                }
            }
            Generator::IidCoin { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return bad(format!("p = {p} not in (0, 1)"));
                }
            }
            Generator::SymmetricMarkov { a } => {
                if !(a > 0.0 && a < 1.0) {
                    return bad(format!("a = {a} not in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// The chain with horizon `n`.
    pub fn generate(&self, n: usize) -> Result<ChainSpec> {
        self.check()?;
        if n == 0 {
            return Err(LabError::ParameterOutOfRange("N must be >= 1".into()));
        }
        match *self {
            Generator::RandomElliptic { seed, eps0, states, bound } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let initial = random_law(&mut rng, eps0, states);
                let mut values = Vec::with_capacity(n);
                let mut kernels = Vec::with_capacity(n - 1);
                values.push((0..states).map(|_| rng.gen_range(-bound..=bound)).collect());
                for _ in 1..n {
                    kernels.push((0..states).map(|_| random_law(&mut rng, eps0, states)).collect());
                    values.push((0..states).map(|_| rng.gen_range(-bound..=bound)).collect());
                }
                ChainSpec::new(initial, kernels, values, bound)
            }
            Generator::EvenLattice { seed, eps0 } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let initial = random_law(&mut rng, eps0, 2);
                let kernels = (1..n)
                    .map(|_| (0..2).map(|_| random_law(&mut rng, eps0, 2)).collect())
                    .collect();
                ChainSpec::new(initial, kernels, vec![vec![0, 2]; n], 2)
            }
            Generator::SparseOdd { c } => {
                let p = |step: usize| (c / step as f64).min(1.0 / 3.0);
                let p1 = p(1);
                let initial = vec![(1.0 - p1) * 0.5, p1, (1.0 - p1) * 0.5];
                let kernels = (2..=n)
                    .map(|step| {
                        let q = p(step);
                        SPARSE_EVEN_WEIGHTS
                            .iter()
                            .map(|w| vec![(1.0 - q) * w, q, (1.0 - q) * (1.0 - w)])
                            .collect()
                    })
                    .collect();
                ChainSpec::new(initial, kernels, vec![vec![0, 1, 2]; n], 2)
            }
            Generator::IidCoin { p } => ChainSpec::iid(&[1.0 - p, p], &[0, 1], n),
            Generator::SymmetricMarkov { a } => ChainSpec::homogeneous(
                &[0.5, 0.5],
                &[vec![a, 1.0 - a], vec![1.0 - a, a]],
                &[0, 1],
                n,
            ),
        }
    }
}

impl Scenario {
    pub fn new(name: &str, generator: Generator, regime: Regime) -> Self {
        Self {
            name: name.to_string(),
            generator,
            regime,
            ladder: DEFAULT_LADDER.to_vec(),
        }
    }

    pub fn with_ladder(mut self, ladder: Vec<usize>) -> Self {
        self.ladder = ladder;
        self
    }

    pub fn generate(&self, n: usize) -> Result<ChainSpec> {
        self.generator.generate(n)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.check()?;
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[0] >= w[1]) || self.ladder[0] == 0 {
            return Err(LabError::ParameterOutOfRange(format!(
                "ladder {:?} must be nonempty, positive and strictly increasing",
                self.ladder
            )));
        }
        Ok(())
    }

    /// Built-in scenarios by name.
    pub fn preset(name: &str) -> Result<Scenario> {
        let s = match name {
            "random-elliptic" => Scenario::new(
                name,
                Generator::RandomElliptic { seed: 7, eps0: 0.5, states: 3, bound: 2 },
                Regime::Aperiodic,
            ),
            "random-elliptic-b" => Scenario::new(
                name,
                Generator::RandomElliptic { seed: 11, eps0: 0.3, states: 4, bound: 1 },
                Regime::Aperiodic,
            ),
            "even-lattice" => Scenario::new(
                name,
                Generator::EvenLattice { seed: 3, eps0: 0.4 },
                Regime::Periodic,
            ),
            "sparse-odd-0.05" => Scenario::new(name, Generator::SparseOdd { c: 0.05 }, Regime::SparseOdd),
            "sparse-odd-0.5" => Scenario::new(name, Generator::SparseOdd { c: 0.5 }, Regime::SparseOdd),
            "fair-coin" => Scenario::new(name, Generator::IidCoin { p: 0.5 }, Regime::Aperiodic),
            "symmetric-markov" => Scenario::new(
                name,
                Generator::SymmetricMarkov { a: 0.6 },
                Regime::Aperiodic,
            ),
            _ => {
                return Err(LabError::ParameterOutOfRange(format!(
                    "unknown scenario '{name}' (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(s)
    }
}

pub const PRESETS: [&str; 7] = [
    "random-elliptic",
    "random-elliptic-b",
    "even-lattice",
    "sparse-odd-0.05",
    "sparse-odd-0.5",
    "fair-coin",
    "symmetric-markov",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::validate_chain;
    use crate::oracle::char_fn;
    use crate::resonance::residue_profile;

    #[test]
    fn prefix_property() {
        let g = Generator::RandomElliptic { seed: 5, eps0: 0.2, states: 3, bound: 3 };
        let a = g.generate(10).unwrap();
        let b = g.generate(25).unwrap();
        for n in 1..10 {
            assert_eq!(a.values(n), b.values(n));
            assert_eq!(a.kernel(n), b.kernel(n));
        }
        assert_eq!(a.values(10), b.values(10));
    }

    #[test]
    fn elliptic_construction_bound() {
        let g = Generator::RandomElliptic { seed: 7, eps0: 0.5, states: 3, bound: 2 };
        let rep = validate_chain(&g.generate(50).unwrap()).unwrap();
        assert!(rep.constant <= 4.0);
    }

    #[test]
    fn even_lattice_is_periodic() {
        let spec = Scenario::preset("even-lattice").unwrap().generate(33).unwrap();
        assert_eq!(char_fn(&spec, std::f64::consts::PI, None).unwrap().re, 1.0);
    }

    #[test]
    fn sparse_odd_harmonic_budget() {
        let spec = Generator::SparseOdd { c: 0.5 }.generate(1000).unwrap();
        let m = residue_profile(&spec, 2, None).unwrap().total_second;
        let target = 0.5 * 1000f64.ln();
        assert!((m - target).abs() < 0.1 * target, "{m} vs {target}");
    }

    #[test]
    fn bad_parameters() {
        assert!(Generator::SparseOdd { c: -1.0 }.generate(5).is_err());
        assert!(Generator::IidCoin { p: 1.0 }.generate(5).is_err());
        let s = Scenario::preset("fair-coin").unwrap().with_ladder(vec![4, 4]);
        assert!(s.validate().is_err());
        assert!(Scenario::preset("nope").is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = Scenario::preset("random-elliptic").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
