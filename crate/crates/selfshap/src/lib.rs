//! File formats, parallel evaluation and the command-line front end for
//! `selfshap-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod container;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod oracle;
pub mod report;
pub mod table;
pub mod timing;

pub use container::{load_model, save_model, ModelBundle};
pub use error::{Error, Result};
