//! Fixed-confidence testing of whether a point or an interval meets the
//! convex hull of bandit arm means, with the Thompson-CHM sampling rule.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod exp_family;
pub mod oracle;
pub mod policy;
pub mod stopping;

pub use engine::{run_batch, run_once, AggregateStats, BanditInstance, BatchResult, Outcome, RunConfig, RunRecord};
pub use error::{ChmError, Result};
pub use exp_family::{ExpFamilyModel, PosteriorState};
pub use oracle::{brute_force_game, characteristic_time, feasibility, lower_bound, OracleResult, Query};
pub use policy::{PolicyConfig, PolicyKind};
pub use stopping::{Decision, StopConfig, StopOutcome, StopRule, StoppingRule};
