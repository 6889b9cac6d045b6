//! Negotiated generation-maintenance scheduling: per-unit maintenance
//! optimizers, a DC power-flow acceptance problem and the round-based
//! incentive protocol between them.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// dense numeric kernels index several parallel arrays at once
#![allow(clippy::needless_range_loop)]

pub mod agent_opt;
pub mod domain;
pub mod error;
pub mod io;
pub mod lp;
pub mod negotiation;
pub mod scenarios;
pub mod tso_opt;

pub use error::{Error, Result};
