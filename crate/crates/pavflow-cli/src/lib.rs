//! Front-end plumbing for the `pavflow` binary: scenario files and
//! presets, trajectory metrics, and one implementation function per
//! subcommand. The binary itself only parses arguments, loads the
//! scenario, and prints each command's one-line summary.

pub mod commands;
pub mod config;
pub mod metrics;
pub mod presets;
