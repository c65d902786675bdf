#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decomp;
pub mod eigen;
pub mod error;
pub mod flow;
pub mod io;
pub mod plot;
pub mod signal;
pub mod sip;
pub mod spectral;
pub mod tv;

pub use error::{Error, Result};
