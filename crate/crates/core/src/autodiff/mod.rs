//! Minimal reverse-mode differentiation engine and the neural layers the
//! segmental model is built from.

pub mod check;
pub mod nn;
mod params;
mod tape;
mod tensor;

pub use check::{grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use params::{Param, ParameterSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
