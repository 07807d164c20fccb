//! Simulation and diagnostics for nonconventional sums
//! `sum_{n<=t} F(X(n), X(2n), ..., X(ln))` of stationary processes.

pub mod asclt;
pub mod blocks;
pub mod covariance;
pub mod error;
pub mod functional;
pub mod gaussian;
pub mod mixing;
pub mod process;
pub mod replica;
pub mod stats;
pub mod sums;

pub use error::{Error, Result};
pub use functional::{decompose, f_bar, DecomposedFunction, EvalRule, FunctionSpec, HolderMeta};
pub use process::{
    stationary_distribution, DyadicObservable, FiniteLaw, Marginal, ModelSpec, PairLaw, PairLawKind, ProcessModel,
    Trajectory,
};
pub use covariance::CovarianceModel;
pub use blocks::BlockSchedule;
pub use mixing::MixingProfile;
