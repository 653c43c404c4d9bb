//! Generic-chaining machinery and truncated-chain empirical mean estimators
//! on finite discrete probability spaces.
//!
//! The crate is organised around a small pipeline:
//!
//! * [`measure`] — finite discrete probability spaces with exact expectations,
//!   `L_p(P)` norms and reproducible counter-based sampling.
//! * [`function_class`] — finite function classes over a space, their `L₂(P)`
//!   geometry, and generators (interval indicators, a heavy-tailed two-function
//!   class used to probe truncation levels).
//! * [`chaining`] — admissible sequences (nested level sets with doubly
//!   exponential budgets), γ₂/γ₁ functionals, nearest-point maps and chain
//!   increment decompositions.
//! * [`estimator`] — truncation levels, the modified functions Φₙ obtained by
//!   truncating each chain increment, the modified empirical process, exact
//!   bias computations and explicit-constant concentration bounds.
//! * [`gaussian`] — the limiting Gaussian process over a class (bridge or
//!   isonormal covariance), Monte-Carlo sup expectations and continuity moduli.
//! * [`verify`] — the experiment harness: exact enumeration oracle, coverage
//!   sweeps, CLT tests, oscillation sweeps and the truncation-level necessity
//!   sweep, all seed-deterministic and thread-count independent.
//! * [`cli`] — batch front-end used by the `empchain` binary: JSON configs in,
//!   CSV + JSON reports out.
//!
//! Every Monte-Carlo path in the crate is a pure function of an explicit seed;
//! replicate loops parallelise with derived per-replicate seeds and reduce in a
//! fixed order, so reports are byte-identical across thread counts.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod chaining;
pub mod cli;
pub mod estimator;
pub mod function_class;
pub mod gaussian;
pub mod measure;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod verify;

pub use chaining::{build_admissible, AdmissibleSequence, ChainDecomposition, Metric};
pub use estimator::{EstimatorConfig, ModifiedFunction, TruncationRule};
pub use function_class::{ADecay, FunctionClass, HeavyTailSpec};
pub use gaussian::{CovarianceMode, GaussianModel};
pub use measure::{DiscreteSpace, Lp, Sample};
