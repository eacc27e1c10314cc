// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod closed_form;
pub mod criteria;
pub mod depth;
pub mod error;
pub mod fock;
pub mod moments;
pub mod phase;
pub mod sweep;

pub use error::{Error, Result};
