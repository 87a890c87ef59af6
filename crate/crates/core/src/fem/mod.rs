//! Finite element spaces, fields, lumping and the facet upwind trace.

pub mod field;
pub mod quadrature;
pub mod space;

use thiserror::Error;

pub use field::{
    discrete_divfree_residual, exact_p1_l2_squared, facet_upwind_trace, interpolate_vertexwise, lumped_integral,
    lumped_integral_scalar, P1Field, PressureField, ScalarP1, StressFieldP0, StressFieldP1, UpwindTrace, VelocityField,
};
pub use quadrature::{gauss2, quadrature_integral, triangle_rule, vertex_rule, QuadRule};
pub use space::{check_lbb_pair, LocalFn, PressureSpace, Shape, SpaceTag, VelocitySpace, LBB_WHITELIST};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("quadrature degree {0} is not supported (max 6)")]
    UnsupportedDegree(usize),
    #[error("unknown space `{0}`")]
    UnknownSpace(String),
    #[error("space {0} is not a {1} space")]
    WrongKind(SpaceTag, &'static str),
    #[error("velocity/pressure pair ({0}, {1}) is not inf-sup stable in this crate")]
    NotWhitelisted(SpaceTag, SpaceTag),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("facet {0} is not an internal facet")]
    NotInternal(usize),
}
