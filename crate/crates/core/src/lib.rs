//! Analytic Hamiltonians with unstable quasi-periodic tori: exact flows, normal forms and diffusion predicates.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod arithmetic;
pub mod diffusion;
pub mod error;
pub mod flow;
pub mod hamiltonian;
pub mod normalform;
pub mod numeric;

pub use error::{Error, Result};
pub use numeric::{LogAmplitude, DEFAULT_PREC};
