//! Cycle counts of growing random permutations, the infinite-server queues
//! they embed into, and Monte Carlo checks of both.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod busy;
pub mod cli;
pub mod crp;
pub mod error;
pub mod mc;
pub mod mminf;
pub mod report;
pub mod specials;
pub mod tagged;
pub mod tandem;
pub mod walk;
