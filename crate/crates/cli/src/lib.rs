//! Library side of the `qcompat` command: device files, the relations table and
//! the subcommand bodies, kept separate from argument parsing so they can be tested.

pub mod commands;
pub mod devfile;
pub mod format;
pub mod table;

pub use commands::{CliError, Output, Settings};
pub use devfile::{fixture, load_file, parse_str, DeviceFile, Entry, LoadError, FIXTURE};
