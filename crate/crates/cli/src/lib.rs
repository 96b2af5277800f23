//! Batch front-end for `kohn-mesh`: configuration, runners and output.

pub mod config;
pub mod output;
pub mod tasks;
