// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Doctest shim for the book.
//!
//! mdbook renders `book/` but does not run its code blocks. Including each
//! chapter as a module's documentation makes `cargo test` execute every
//! `rust` snippet as a doctest, keeping the book and the library in sync.
//! One module per chapter so a failure names its origin.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/market-model.md")]
pub mod market_model {}

#[doc = include_str!("../../../book/src/user-equilibrium.md")]
pub mod user_equilibrium {}

#[doc = include_str!("../../../book/src/contract-design.md")]
pub mod contract_design {}

#[doc = include_str!("../../../book/src/operator-pricing.md")]
pub mod operator_pricing {}

#[doc = include_str!("../../../book/src/congestion-tolerant.md")]
pub mod congestion_tolerant {}

#[doc = include_str!("../../../book/src/interaction-structures.md")]
pub mod interaction_structures {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
