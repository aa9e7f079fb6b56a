//! Regularized optimal transport over doubly stochastic constraints.
//!
//! The central solver is a Bregman forward-backward splitting scheme
//! ([`solvers::solve_fb`]): with the entropy as Legendre function, each
//! iteration is a single entropic transport problem solved by Sinkhorn
//! scaling, and the step size stays constant. A generalized conditional
//! gradient baseline ([`solvers::solve_cgs`]) is provided for comparison.
//!
//! On top of the solvers, [`adaptation`] implements continuous domain
//! adaptation over a drifting stream of target batches, with class-based
//! group lasso and temporal smoothness regularizers, and [`datagen`] produces
//! the rotating two-moons benchmark.

pub mod adaptation;
pub mod datagen;
pub mod error;
pub mod measure;
pub mod objective;
pub mod plan;
pub mod regularizers;
pub mod sinkhorn;
pub mod solvers;

pub use error::{OtError, Result};
pub use measure::{pairwise_cost, CostMatrix, DiscreteMeasure, LabeledPointCloud, Metric};
pub use objective::{entropy, objective_value, ObjectiveSpec};
pub use plan::{marginal_residual, TransportPlan};
pub use regularizers::{ClassGroups, RegularizerKind, RegularizerSpec, TemporalAnchor};
pub use sinkhorn::{sinkhorn, SinkhornOptions, SinkhornOutcome};
pub use solvers::{solve_cgs, solve_fb, CgsOptions, FbOptions, SolverStatus, SolverTrace};
