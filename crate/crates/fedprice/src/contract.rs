// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! The server's optimal screening contract.
//!
//! Given the common network cost `c` users face, the server picks a
//! threshold type `x`: everyone cheaper trains at the data cap, the
//! threshold type trains an interior amount, everyone more expensive is left
//! out. Rewards are the cheapest schedule satisfying incentive compatibility
//! and individual rationality: the threshold type is paid exactly its cost,
//! and each cheaper type additionally collects the information rent that
//! stops it from imitating more expensive types.
//!
//! A useful structural fact used throughout the crate: for a fixed threshold
//! `x`, the optimal data sizes do not depend on `c`, so the server's optimal
//! cost is *linear* in `c` with slope `xi * (number of incentivized users)`.
//! [`ServerCostLine`] captures that line once per threshold; everything else
//! (threshold selection, the operator's anticipation of the server, the H
//! statistic) reduces to comparing these lines.

use crate::error::{Error, Result};
use crate::model::{
    server_cost, Contract, ContractItem, DemandDistribution, PriceSchedule, Scenario,
};
use crate::usergame::common_network_cost;

/// The cheapest reward vector implementing data sizes `data` for the
/// incentivized set `incentivized` (0-based type indices, any subset) at
/// common network cost `c`.
///
/// Within the set, reindexed by ascending marginal cost, the top type gets
/// `theta d + c` and each lower type additionally collects the telescoping
/// rent `sum (theta_k - theta_{k-1}) d_k` over the set members above it.
/// Types outside the set get zero.
pub fn optimal_rewards(
    scenario: &Scenario,
    data: &[f64],
    incentivized: &[usize],
    c: f64,
) -> Vec<f64> {
    let mut rewards = vec![0.0; scenario.num_types()];
    if incentivized.is_empty() {
        return rewards;
    }
    let mut members: Vec<usize> = incentivized.to_vec();
    members.sort_unstable();
    // Walk from the top of the set downward, accumulating the rent term.
    let mut rent = 0.0;
    for (pos, &j) in members.iter().enumerate().rev() {
        let theta_j = scenario.user_types[j].theta;
        rewards[j] = theta_j * data[j] + rent + c;
        if pos > 0 {
            let below = members[pos - 1];
            let theta_below = scenario.user_types[below].theta;
            rent += (theta_j - theta_below) * data[j];
        }
    }
    rewards
}

/// Server cost for threshold `x` as a function of the common network cost:
/// `cost(c) = base + slope * c`.
#[derive(Debug, Clone, Copy)]
pub struct ServerCostLine {
    /// Threshold type, 1-based.
    pub x: usize,
    /// Cost at `c = 0`, `f64::INFINITY` if the threshold is infeasible.
    pub base: f64,
    /// `xi * (users of types 1..=x)`.
    pub slope: f64,
    /// Optimal data size for the threshold type (types below train at the
    /// cap).
    pub threshold_data: f64,
    pub feasible: bool,
}

impl ServerCostLine {
    pub fn cost_at(&self, c: f64) -> f64 {
        if self.feasible {
            self.base + self.slope * c
        } else {
            f64::INFINITY
        }
    }
}

/// Result of evaluating one threshold at a concrete common network cost.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdEval {
    pub cost: f64,
    pub threshold_data: f64,
    pub feasible: bool,
}

/// Evaluates the server's optimal cost when exactly types `1..=x` are
/// incentivized and the common network cost is `c`.
///
/// Types below `x` train at `max_data`; the threshold type's size is the
/// interior stationary point of the cost in `d_x`, clamped to
/// `(0, max_data]`. Both the clamped interior candidate and the boundary
/// `max_data` are evaluated and the cheaper one returned, so no closed-form
/// branch thresholds are needed. A nonpositive interior candidate means the
/// cap users below `x` already contribute more data than the stationary
/// point wants in total, and the configuration is infeasible (infinite
/// cost).
pub fn server_cost_at_threshold(scenario: &Scenario, x: usize, c: f64) -> Result<ThresholdEval> {
    if x == 0 || x > scenario.num_types() {
        return Err(Error::invalid("threshold", "must be in 1..=num_types"));
    }
    let line = threshold_line(scenario, x);
    Ok(ThresholdEval {
        cost: line.cost_at(c),
        threshold_data: line.threshold_data,
        feasible: line.feasible,
    })
}

/// Builds the cost line for threshold `x`. See [`server_cost_at_threshold`].
pub fn threshold_line(scenario: &Scenario, x: usize) -> ServerCostLine {
    let xi = scenario.reward_weight;
    let d_max = scenario.max_data;
    let i_x = f64::from(scenario.user_types[x - 1].count);
    let n_below = scenario.users_through(x - 1);
    let n_through = scenario.users_through(x);
    let theta_x = scenario.user_types[x - 1].theta;
    let theta_below = if x >= 2 { scenario.user_types[x - 2].theta } else { 0.0 };

    // Marginal reward weight of the threshold type's data size:
    // A = (sum_{j<=x} I_j) theta_x - (sum_{j<x} I_j) theta_{x-1}.
    let a = n_through * theta_x - n_below * theta_below;
    let interior =
        1.0 / (i_x.powf(1.0 / 3.0) * (2.0 * xi).powf(2.0 / 3.0) * a.powf(2.0 / 3.0))
            - n_below * d_max / i_x;

    let slope = xi * n_through;
    if interior <= 0.0 {
        return ServerCostLine { x, base: f64::INFINITY, slope, threshold_data: 0.0, feasible: false };
    }

    let evaluate = |d_x: f64| -> f64 {
        let mut data = vec![0.0; scenario.num_types()];
        for item in data.iter_mut().take(x - 1) {
            *item = d_max;
        }
        data[x - 1] = d_x;
        let incentivized: Vec<usize> = (0..x).collect();
        let rewards = optimal_rewards(scenario, &data, &incentivized, 0.0);
        let contract = Contract {
            items: data
                .iter()
                .zip(&rewards)
                .map(|(&d, &r)| ContractItem { data: d, reward: r })
                .collect(),
        };
        server_cost(scenario, &contract)
    };

    let clamped = interior.min(d_max);
    let (base, d_star) = {
        let at_interior = evaluate(clamped);
        let at_cap = evaluate(d_max);
        if at_cap < at_interior {
            (at_cap, d_max)
        } else {
            (at_interior, clamped)
        }
    };
    ServerCostLine { x, base, slope, threshold_data: d_star, feasible: true }
}

/// Cost lines for every threshold `1..=J`.
pub fn threshold_lines(scenario: &Scenario) -> Vec<ServerCostLine> {
    (1..=scenario.num_types()).map(|x| threshold_line(scenario, x)).collect()
}

/// The interval of common network costs over which threshold `x` attains the
/// minimum server cost among all thresholds (weakly). Returns `None` when
/// `x` itself is infeasible; bounds may be infinite.
///
/// Lines with smaller thresholds have flatter slopes, so each constraint
/// against a smaller threshold is an upper bound on `c` and each constraint
/// against a larger one is a lower bound.
pub fn threshold_optimality_interval(
    lines: &[ServerCostLine],
    x: usize,
) -> Option<(f64, f64)> {
    let line = lines[x - 1];
    if !line.feasible {
        return None;
    }
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for other in lines {
        if other.x == x || !other.feasible {
            continue;
        }
        // base + slope c <= other.base + other.slope c
        let crossing = (other.base - line.base) / (line.slope - other.slope);
        if other.slope < line.slope {
            hi = hi.min(crossing);
        } else {
            lo = lo.max(crossing);
        }
    }
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

/// The server's optimal contract against the given prices: picks the
/// threshold minimizing the cost line at the realized common network cost
/// (argmin ties to the smallest threshold) and assembles the items.
///
/// Returns the contract, the chosen threshold (1-based; 0 if no threshold is
/// feasible, which cannot happen for a valid scenario since threshold 1
/// always is), and the common cost used.
pub fn optimal_contract(
    scenario: &Scenario,
    prices: &PriceSchedule,
    demand: &DemandDistribution,
) -> (Contract, usize, f64) {
    let c = common_network_cost(scenario, prices, demand);
    let (contract, x) = optimal_contract_for_cost(scenario, c);
    (contract, x, c)
}

/// Same as [`optimal_contract`] but with the common network cost supplied
/// directly.
pub fn optimal_contract_for_cost(scenario: &Scenario, c: f64) -> (Contract, usize) {
    let lines = threshold_lines(scenario);
    let mut best: Option<&ServerCostLine> = None;
    for line in &lines {
        let cost = line.cost_at(c);
        if cost.is_finite() {
            match best {
                Some(b) if b.cost_at(c) <= cost => {}
                _ => best = Some(line),
            }
        }
    }
    match best {
        Some(line) => (assemble_contract(scenario, line, c), line.x),
        None => (Contract::zero(scenario.num_types()), 0),
    }
}

/// Builds the contract items for a chosen cost line.
pub fn assemble_contract(scenario: &Scenario, line: &ServerCostLine, c: f64) -> Contract {
    let x = line.x;
    let mut data = vec![0.0; scenario.num_types()];
    for item in data.iter_mut().take(x - 1) {
        *item = scenario.max_data;
    }
    data[x - 1] = line.threshold_data;
    let incentivized: Vec<usize> = (0..x).collect();
    let rewards = optimal_rewards(scenario, &data, &incentivized, c);
    Contract {
        items: data
            .iter()
            .zip(&rewards)
            .map(|(&d, &r)| ContractItem { data: d, reward: r })
            .collect(),
    }
}

/// Per-type equilibrium payoffs under a threshold contract: the rent
/// `sum_{k=j+1..=x} (theta_k - theta_{k-1}) d_k` for incentivized types,
/// zero above the threshold.
pub fn contract_payoffs(scenario: &Scenario, contract: &Contract, x: usize, c: f64) -> Vec<f64> {
    (0..scenario.num_types())
        .map(|j| {
            if j < x {
                contract.surplus(j, scenario.user_types[j].theta) - c
            } else {
                0.0
            }
        })
        .collect()
}

/// The server's threshold choice against an arbitrary price schedule, with
/// the induced user equilibrium.
#[derive(Debug, Clone)]
pub struct ServerResponse {
    /// Chosen threshold, 1-based.
    pub x: usize,
    /// Common network cost realized when types `1..=x` participate.
    pub common_cost: f64,
    /// Continuous equilibrium demand split of those users.
    pub counts: Vec<f64>,
    /// Whether the threshold is self-consistent: it stays optimal at the
    /// very cost level its own participation induces.
    pub consistent: bool,
}

/// Resolves the server's threshold against arbitrary prices.
///
/// The common cost users end up paying depends on how many of them the
/// contract brings in, so the response is a fixed point: threshold `x` is
/// self-consistent when `x` minimizes the server cost evaluated at the cost
/// level induced by exactly `x` participating types. The smallest
/// self-consistent threshold is returned; if none exists (the induced cost
/// always pushes the server elsewhere), the threshold minimizing its own
/// induced cost is used and flagged.
pub fn server_response_to_prices(scenario: &Scenario, prices: &PriceSchedule) -> ServerResponse {
    let lines = threshold_lines(scenario);
    let mut fallback: Option<ServerResponse> = None;
    for x in 1..=scenario.num_types() {
        if !lines[x - 1].feasible {
            continue;
        }
        let m = scenario.users_through(x);
        let (c, counts) = crate::usergame::equilibrium_cost(scenario, prices, m);
        let own_cost = lines[x - 1].cost_at(c);
        let min_cost = lines.iter().map(|l| l.cost_at(c)).fold(f64::INFINITY, f64::min);
        let argmin = lines
            .iter()
            .find(|l| l.cost_at(c) <= min_cost)
            .map(|l| l.x)
            .unwrap_or(0);
        let response = ServerResponse { x, common_cost: c, counts, consistent: argmin == x };
        if response.consistent {
            return response;
        }
        match &fallback {
            Some(f) => {
                let f_cost = lines[f.x - 1].cost_at(f.common_cost);
                if own_cost < f_cost {
                    fallback = Some(response);
                }
            }
            None => fallback = Some(response),
        }
    }
    fallback.expect("threshold 1 is always feasible for a valid scenario")
}
