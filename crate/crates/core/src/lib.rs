//! Exact numerical laboratory for Edgeworth expansions of integer-valued
//! additive functionals `S_N = f_1(X_1) + ... + f_N(X_N)` of finite-state,
//! uniformly elliptic, inhomogeneous Markov chains.
//!
//! The crate is organized bottom-up:
//!
//! * [`chain`] defines chains, ellipticity diagnostics and exact conditioning.
//! * [`oracle`] computes the exact law of `S_N`, its characteristic function
//!   and residue laws. Every expansion is tested against it.
//! * [`jet`] and [`cumulant`] compute derivatives of log-characteristic
//!   functions by truncated power-series propagation.
//! * [`polynomial`] and [`edgeworth`] assemble classical and generalized
//!   (trigonometric) expansions.
//! * [`resonance`] handles resonant frequencies and residue statistics.
//! * [`rpf`] realizes sequential Perron-Frobenius triplets of the perturbed
//!   transfer operators.
//! * [`scenario`], [`experiment`] and [`report`] drive parameter sweeps.

pub mod chain;
pub mod cumulant;
pub mod edgeworth;
pub mod error;
pub mod experiment;
pub mod jet;
pub mod oracle;
pub mod polynomial;
pub mod quadrature;
pub mod report;
pub mod resonance;
pub mod rpf;
pub mod scenario;

pub use chain::{ChainSpec, ConditionedChain, EllipticityReport, PinSet};
pub use cumulant::{CumulantData, ResonantJetData};
pub use edgeworth::{GeneralizedExpansion, ResonantContribution};
pub use error::{LabError, Result};
pub use jet::Jet;
pub use oracle::{ResidueLaw, SumPmf};
pub use polynomial::Polynomial;
pub use resonance::{ResidueProfile, ResonantPoint};

pub use num_complex::Complex64;
