use std::fmt;

use subgroup_causal::{Error, ErrorClass};

pub const EXIT_DATA: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_CONVERGENCE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Data => EXIT_DATA,
            ErrorClass::ModelIncompatible => EXIT_MODEL,
            ErrorClass::NonConvergence => EXIT_CONVERGENCE,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::InvalidInput("x".into())).code, EXIT_DATA);
        assert_eq!(CliError::from(Error::ModelIncompatible("x".into())).code, EXIT_MODEL);
        assert_eq!(CliError::from(Error::RankDeficient("x".into())).code, EXIT_MODEL);
        assert_eq!(CliError::from(Error::NonConvergence("x".into())).code, EXIT_CONVERGENCE);
    }
}
