//! Permanence analysis for structured discrete-time population models.
//!
//! The crate follows a fixed pipeline: build a [`StructuredModel`] (by hand
//! or from [`zoo`]), simulate it ([`dynamics`]), estimate invasion rates of
//! missing species on boundary measures ([`invasion`]), and turn those rates
//! into a certificate or a diagnostic ([`certify`], [`robustness`]).

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod model;
pub mod zoo;
pub mod dynamics;
pub mod invasion;
pub mod certify;
pub mod robustness;

pub use error::{Error, Result};
pub use model::{
    step, validate, ExtinctionFace, PatternMode, Projection, SignPattern, StructuredModel, StructuredState, TrapBox,
};
