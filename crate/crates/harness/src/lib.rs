//! Experiment harness for kmv-core: configuration, subcommands, artifact
//! emission and the acceptance suite.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accept;
pub mod commands;
pub mod config;
pub mod oracles;
pub mod output;
