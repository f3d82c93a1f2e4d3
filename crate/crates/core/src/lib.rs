//! Minimization of a helical thin-film micromagnetic energy over unit
//! vector fields, using a P1 finite element discretization and a
//! tangent-plane update followed by nodal projection.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod io;
pub mod krylov;
pub mod mesh;
pub mod minimizer;
pub mod quadrature;
pub mod sparse;
pub mod tangent;

pub use assembly::{DiscreteOperator, EnergyBreakdown, ModelParams};
pub use error::{Error, Result};
pub use fields::{NodalVectorField, Vec3};
pub use mesh::{AngleReport, Mesh};
pub use tangent::{detect_constraints, solve_tangent_update, ConstraintBasis, SolverConfig};
pub use minimizer::{minimize, MinimizeConfig, MinimizeTrace, Termination};
