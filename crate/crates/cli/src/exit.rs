//! Exit-code classification.

use std::fmt;

pub const SUCCESS: u8 = 0;
pub const VALIDATION: u8 = 1;
pub const RUNTIME: u8 = 2;

/// Marks an error as bad input rather than a runtime failure.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

impl Invalid {
    pub fn msg(m: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Invalid(m.into()))
    }

    pub fn wrap(e: impl fmt::Display) -> anyhow::Error {
        Self::msg(e.to_string())
    }
}

pub fn code_for(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<Invalid>()) {
        VALIDATION
    } else {
        RUNTIME
    }
}
