//! Free-energy-stable finite element discretizations of the regularized Oldroyd-B model.
//!
//! Everything numerical is generic over [`scalar::Real`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the solvers are tuned and tested for.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod props;
pub mod scalar;
pub mod scenarios;
pub mod scheme;
pub mod stepper;
pub mod tensor;

pub use scalar::Real;

pub type SymMat2 = tensor::SymMat<f64>;
pub type RegParams64 = tensor::RegParams<f64>;
pub type Regime64 = tensor::Regime<f64>;
pub type Mesh64 = mesh::SimplicialMesh<f64>;
