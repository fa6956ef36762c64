//! Learned pruning for branch-and-bound on mixed-integer resource-allocation
//! problems, with self-imitation transfer to new network settings.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bnb;
pub mod cli;
pub mod features;
pub mod imitate;
pub mod mlp;
pub mod model;
pub mod relax;
