//! Discrete-time control barrier functions under input constraints.
//!
//! The crate builds the recursive barrier cascade `b_0 .. b_r` for a
//! discrete-time system with a bounded input box, certifies or refutes
//! candidate class-K parameter vectors on a state grid, filters nominal
//! inputs into the admissible set, and runs closed-loop rollouts that can
//! switch between certified parameter vectors online.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below fix the scalar to `f64`, which is what the
//! command-line tool uses.

pub mod adapt;
pub mod cascade;
pub mod classk;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod validator;

pub use adapt::{AdaptState, Adapter, CertifiedSet};
pub use cascade::{AlphaVector, BarrierCascade, Membership};
pub use classk::{check_classk, ClassKFn, ClassKVerdict};
pub use dynamics::{BoxBounds, InputGrid, SystemModel};
pub use error::{Error, Result};
pub use filter::{safe_control, FilterResult};
pub use scalar::Scalar;
pub use sim::{metrics, rollout, Metrics, RolloutOptions, Shield, Terminal, TrajectoryLog};
pub use validator::{certify_candidates, validate, ValidationConfig, ValidationReport, Verdict};

pub type ClassKFnF64 = ClassKFn<f64>;
pub type AlphaVectorF64 = AlphaVector<f64>;
pub type SystemModelF64 = SystemModel<f64>;
pub type BarrierCascadeF64 = BarrierCascade<f64>;
pub type ValidationReportF64 = ValidationReport<f64>;
pub type FilterResultF64 = FilterResult<f64>;
pub type CertifiedSetF64 = CertifiedSet<f64>;
pub type AdapterF64 = Adapter<f64>;
pub type TrajectoryLogF64 = TrajectoryLog<f64>;
pub type MetricsF64 = Metrics<f64>;

pub type ClassKFnF32 = ClassKFn<f32>;
pub type AlphaVectorF32 = AlphaVector<f32>;
pub type SystemModelF32 = SystemModel<f32>;
pub type BarrierCascadeF32 = BarrierCascade<f32>;
