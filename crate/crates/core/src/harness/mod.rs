//! Experiment harness: configs, datasets, runners, and metric files.

pub mod config;
pub mod metrics;
pub mod mnist;
pub mod runner;
