//! Std front-end for `layercl-core`: dataset files, run configuration,
//! checkpoints, reports and the commands behind the `layercl` binary.

pub mod binary;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod embeddings;
pub mod report;
pub mod run;
