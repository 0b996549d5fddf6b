//! Numerical analysis of implicitly defined, possibly unbounded domains
//! `Ω = {ρ < 0}`: signed distance, boundary-adapted norms, reach,
//! curvature propagation, plurisubharmonic defining functions and
//! collar partitions of unity.

pub mod analysis;
pub mod corpus;
pub mod curvature;
pub mod domain;
pub mod error;
pub mod expr;
pub mod field;
pub mod frame;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod norms;
pub mod psh;
pub mod registry;
pub mod sobolev;

pub use error::{Error, Result};
pub use field::{frame_derivative, validate_field, ScalarField, ValidationReport};
pub use frame::AdaptedFrame;
pub use jet::{Jet, MultiIndex};
