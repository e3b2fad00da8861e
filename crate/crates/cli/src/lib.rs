//! Configuration-driven experiment runner for the `mkolmo` filtering and Kolmogorov toolkit.

pub mod config;
pub mod experiments;
pub mod output;
