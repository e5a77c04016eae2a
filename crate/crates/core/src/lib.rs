//! Symbolic-numeric analysis of sprays (second-order homogeneous ODE
//! systems): builds the associated nonlinear connection and curvatures,
//! saturates the holonomy and Landsberg distributions under Lie brackets,
//! runs the obstruction tests and jet-level feasibility search that decide
//! whether the spray can be the geodesic equation of a Finsler metric or of
//! one of Landsberg type, and verifies candidate energy functions against
//! the variational operators.
//!
//! Pipeline modules, bottom up:
//! - [`expr`]: exact symbolic expressions (parse, differentiate, simplify,
//!   evaluate);
//! - [`spraygeo`]: spray, connection, horizontal frame, curvatures;
//! - [`sample`]: deterministic sample sets on the slit tangent bundle;
//! - [`distribution`]: Lie-bracket saturation, numeric rank, membership;
//! - [`operators`]: residuals of the variational operators on energy
//!   candidates;
//! - [`jets`]: second-order jet constraint systems and the positive-definite
//!   feasibility search;
//! - [`verdict`]: orchestration into structured metrizability verdicts.

pub mod distribution;
pub mod expr;
pub mod jets;
pub mod operators;
pub mod sample;
pub mod spraygeo;
pub mod verdict;

pub use expr::{
    evaluate, parse, Coordinate, CoordKind, EvalError, Expr, ExprKind, Exponent, Func,
    ParseError, Point,
};
