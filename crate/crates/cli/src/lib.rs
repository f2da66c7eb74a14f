//! Command-line front end: TOML run configs, solution tables, SVG renders
//! and the `solve`, `rp`, `constants`, `sweep` and `render` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod render;
pub mod table;

pub use commands::{
    cmd_constants, cmd_render, cmd_rp, cmd_solve, cmd_sweep, FieldChoice, SweepOverrides,
};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
