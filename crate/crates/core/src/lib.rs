//! Branching-stable point measures with negative scaling exponent `-α`.
//!
//! These are realized as Crump-Mode-Jagers populations on the half-line:
//! static, eternal individuals beget children to their right according to a
//! time-homogeneous Poisson process whose intensity is self-similar. The
//! crate bundles
//!
//! * [`measure`]: the generating finite measure `λ` and its constants,
//! * [`analytic`]: Wright function, intensity measures, Laplace transforms,
//!   asymptotics and the Legendre shape set,
//! * [`sim`]: exact window-truncated simulation with full genealogy,
//! * [`spine`]: the many-to-one spine and its Monte Carlo estimators,
//! * [`harness`]: named experiments that confront simulations with the
//!   closed forms under fixed statistical decision rules.

pub mod analytic;
pub mod error;
pub mod harness;
pub mod hull;
pub mod measure;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod spine;
pub mod stats;

pub use analytic::{ShapePoint, WrightEval};
pub use error::{Error, Result};
pub use harness::{ExperimentReport, Verdict};
pub use measure::{Alpha, Config, LambdaSpec, ModelFile, NormalizedLambda};
pub use sim::{AtomRecord, Caps, MartingaleValue, MinPosition, Population, Window};
pub use spine::{Functional, SpinePath};
pub use stats::Estimate;
