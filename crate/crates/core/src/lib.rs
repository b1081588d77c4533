//! Byzantine-resilient distributed SGD laboratory.
//!
//! Robust aggregation rules with certified resilience coefficients, the
//! classic Byzantine attacks, a deterministic parameter-server simulator with
//! worker-side momentum, closed-form convergence bounds, and auditors that
//! check the resilient-averaging property empirically.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

pub mod aggregation;
pub mod attacks;
pub mod audit;
pub mod error;
pub mod experiment;
pub mod problems;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod subsets;
pub mod theory;
pub mod vector;

pub use aggregation::{lambda_of, ResilienceCoefficient, RuleId};
pub use attacks::{AttackContext, AttackId};
pub use audit::{AuditInstance, AuditReport, Generator};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use simulator::{RunConfig, RunResult, StepMetrics};
pub use vector::{coord_median, diameter, vec_mean, ParamVector};

/// Version tag written into every JSON document the crate produces.
pub const SCHEMA_VERSION: u32 = 1;

pub type Vector = ParamVector<f64>;
pub type Vector32 = ParamVector<f32>;
pub type Problem = problems::Problem<f64>;
pub type Problem32 = problems::Problem<f32>;
pub type Instance = AuditInstance<f64>;
