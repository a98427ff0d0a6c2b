//! Library surface of the CLI crate: the experiment harness, reused by
//! the binary and the acceptance suite.

pub mod experiments;
