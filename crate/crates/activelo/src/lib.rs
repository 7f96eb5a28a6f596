//! Command-line front end and file formats for the `activelo-core` toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod poses;
pub mod velodyne;
