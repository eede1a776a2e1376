// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Error type shared by all solver modules.

use thiserror::Error;

/// Errors produced by scenario validation, solvers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or config field failed validation. The message names the
    /// offending field.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A slot index was outside `0..num_slots`.
    #[error("slot index {slot} out of range (T = {num_slots})")]
    SlotOutOfRange { slot: usize, num_slots: usize },

    /// An operation that requires at least one participant got none.
    #[error("assignment has no participants")]
    NoParticipants,

    /// A numerical routine could not find a feasible solution. Carries
    /// diagnostics describing what was attempted.
    #[error("numerical infeasibility: {0}")]
    Infeasible(String),

    /// Config file could not be parsed.
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: &str, message: impl AsRef<str>) -> Self {
        Error::InvalidScenario(format!("{field} {}", message.as_ref()))
    }

    /// Exit code mapping used by the CLI: validation errors are 2,
    /// numerical infeasibility is 3, everything else is 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidScenario(_) | Error::Parse(_) => 2,
            Error::Infeasible(_) => 3,
            _ => 1,
        }
    }
}
