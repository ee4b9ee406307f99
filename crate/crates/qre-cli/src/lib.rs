//! Configuration-driven experiment runner for the entropy-regularized
//! natural policy gradient dynamics library: seeded game generation, CSV
//! trace emission, deterministic SVG figures, and a property-suite
//! verification command.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod gamefile;
pub mod svg;
pub mod trace;

pub use error::{CliError, CliResult};
