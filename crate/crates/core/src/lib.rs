//! Non-autonomous linear and semilinear parabolic problems in variational form, together
//! with numerical checks for the invariance of closed convex sets under their flow.
//!
//! The discrete setting is a Gelfand triple `V ↪ H ↪ V′` given by two Gram matrices
//! ([`space`]), a time-dependent bounded H-elliptic form ([`form`]) and a θ-scheme solver
//! ([`cauchy`]). Convex sets with exact H-projections live in [`convex`]; the sufficient
//! criterion and its diagnostics in [`invariance`]; the fixed-point solver for
//! `u′ + A(t)u = F(t, u)` in [`semilinear`]; the restart-based necessity probes in
//! [`necessity`].

pub mod cauchy;
pub mod convex;
pub mod error;
pub mod form;
pub mod invariance;
mod linalg;
pub mod necessity;
pub mod semilinear;
pub mod space;

pub use cauchy::{estimate_solution_norm, solve_linear, SourceTerm, TimeGrid, Trajectory};
pub use convex::{ConvexSet, Membership, SetKind};
pub use error::{Error, Result};
pub use form::{FormConstants, NonAutonomousForm};
pub use invariance::{Forcing, Quadrature};
pub use linalg::BandMatrix;
pub use necessity::EvolutionProblem;
pub use semilinear::{ContractionPlan, PicardStart, SemilinearRhs};
pub use space::{BoundaryCondition, DiscreteSpace, DualVector, MassKind, Mesh};
