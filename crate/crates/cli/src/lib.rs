//! Library side of the `cra` command-line tool: SMS matrix ingestion and
//! the command implementations.

pub mod commands;
pub mod sms;
