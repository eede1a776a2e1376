// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Solvers for joint participation contracts and dynamic network pricing in
//! federated-learning markets.
//!
//! A server buys training effort from heterogeneous users through a screening
//! contract while a network operator prices the time slots those users upload
//! in. This crate computes the closed-form market outcomes for both the
//! sequential (operator, then server, then users) and simultaneous
//! interaction structures, plus the congestion-tolerant special case and two
//! benchmark mechanisms to compare against.
//!
//! Module map:
//!
//! - [`model`]: domain types and the three payoff functionals.
//! - [`usergame`]: the users' slot/contract equilibrium and its verification.
//! - [`contract`]: the server's optimal screening contract.
//! - [`pricing`]: the operator's demand placement and slot prices, including
//!   water-filling for congestion-tolerant users.
//! - [`horizontal`]: the simultaneous-move structure and its existence test.
//! - [`benchmarks`]: NJO / NDP reference mechanisms and the comparison suite.
//! - [`scenario`]: config and trace ingestion, table emission.
//! - [`synth`]: seeded random instances for property suites.
//!
//! The book under `book/` walks through the market story chapter by chapter
//! with runnable snippets.

pub mod benchmarks;
pub mod contract;
pub mod error;
pub mod horizontal;
pub mod model;
pub mod pricing;
pub mod scenario;
pub mod synth;
pub mod usergame;

pub use error::{Error, Result};
pub use model::{
    operator_profit, server_cost, slot_network_cost, user_payoff, Contract, ContractItem,
    DemandDistribution, PriceSchedule, Scenario, SolveReport, UserType,
};
