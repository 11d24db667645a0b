//! Command-line front end: manifests, splits, image codecs, synthetic data
//! and the subcommands that chain them with the core library.

// Range checks are written `!(x > lo)` so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod imaging;
pub mod manifest;
pub mod pipeline;
pub mod split;
pub mod synth;

pub use commands::{run, Cli};
