//! Wave-to-motion surrogate modelling for ship response in irregular seas.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod losses;
pub mod lstm;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod spectra;
pub mod svg;
pub mod trainer;

pub use error::{Error, Result};
