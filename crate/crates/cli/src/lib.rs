//! Experiment driver: flat configuration files, in-memory experiments and
//! manifests that let any run be replayed and checked byte for byte.

pub mod commands;
pub mod config;
pub mod manifest;
