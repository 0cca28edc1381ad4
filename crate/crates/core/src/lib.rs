#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dexterity;
pub mod error;
pub mod kinematics;
pub mod roots;
pub mod sequencer;
pub mod statics;
pub mod workspace;

pub use error::{Error, Result};
