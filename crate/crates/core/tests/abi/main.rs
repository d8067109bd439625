//! The command-line binary and the interchange file formats.

mod cli;
mod formats;
