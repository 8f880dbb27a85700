//! Command-line tool and HTTP service around `teamforge-core`.

pub mod cli;
pub mod interactive;
pub mod server;
pub mod simulate;
