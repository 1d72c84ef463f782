//! Tape-based reverse-mode differentiation and its finite-difference checks.

mod gradcheck;
pub mod registry;
mod tape;

pub use gradcheck::{gradcheck, rel_error, GradCheckOptions, GradReport, ParamReport};
pub use tape::{BackwardCtx, BackwardFn, Gradients, Tape, Var};
