//! Lagrangian mechanics on skew-symmetric algebroids.
//!
//! The crate covers the full pipeline from a coordinate description of an
//! algebroid and a Lagrangian to Euler-Lagrange trajectories, Jacobi fields,
//! conjugate points and discretized second variations, together with the
//! tangent-lift construction and the Riemannian and Euler-Poincaré families
//! used as cross-checks.

// index loops mirror the tensor notation; negated comparisons reject NaN
#![allow(clippy::needless_range_loop, clippy::identity_op, clippy::erasing_op, clippy::neg_cmp_op_on_partial_ord)]

pub mod algebroid;
pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod jacobi;
pub mod lift;
pub mod numerics;
pub mod systems;
pub mod variation;

pub use algebroid::SkewAlgebroid;
pub use dynamics::{Lagrangian, Trajectory};
pub use error::{AmechError, Result};
pub use expr::Expression;
