//! Numerical laboratory for skew products over hyperbolic toral
//! automorphisms: su-holonomy, accessibility classes, rotation numbers,
//! ergodic decompositions and translation numbers of line actions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circle;
pub mod classify;
pub mod error;
pub mod hhu;
pub mod holonomy;
pub mod plante;
pub mod report;
pub mod skew;
pub mod torus;

pub use error::{Error, Result};
