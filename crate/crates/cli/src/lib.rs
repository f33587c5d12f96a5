//! Command implementations behind the `dpagg` binary.

pub mod bench;
pub mod commands;
pub mod config;
pub mod report;
pub mod stats;

use dpagg_core::accountant::AccountantError;
use dpagg_core::codec::CodecError;
use dpagg_core::fedsim::FedsimError;
use dpagg_core::field::FieldError;
use dpagg_core::lwe::LweError;
use dpagg_core::protocol::ProtocolError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol aborted: {0}")]
    Abort(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Abort(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Io(_) | CodecError::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<FedsimError> for CliError {
    fn from(e: FedsimError) -> Self {
        match e {
            FedsimError::Io(e) => CliError::Io(e.to_string()),
            FedsimError::Codec(e) => e.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

macro_rules! config_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Config(e.to_string())
            }
        }
    )*};
}

config_error!(ProtocolError, LweError, AccountantError, FieldError);
