// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! The two-stage market, where the operator and server move simultaneously.
//!
//! Their simultaneous game has an equilibrium exactly when both sides are
//! happy incentivizing the same users, and it then coincides with the
//! sequential (vertical) outcome. The scalar [`h_statistic`] decides this:
//! it compares the largest common cost the server tolerates before shrinking
//! its contract against the cost level the price caps let the operator push
//! to. A negative gap means the two sides pull toward different user sets
//! and no equilibrium exists.
//!
//! [`operator_best_response`] is the operator's side of that game: pricing
//! against a *fixed* contract, where each type's willingness to pay is its
//! own contract item's surplus and candidate user sets are prefixes in
//! budget order.

use crate::contract::optimal_contract;
use crate::error::{Error, Result};
use crate::model::{
    server_cost, Contract, DemandDistribution, PriceSchedule, Scenario, SolveReport,
};
use crate::pricing::{
    best_operator_candidate, cap_bounds, demand_for_mass, distribution_cost,
    optimal_operator_solution, price_schedule_for,
};

/// The operator's best response to a fixed contract.
#[derive(Debug, Clone)]
pub struct OperatorResponse {
    pub prices: PriceSchedule,
    /// Types the operator plans to serve, ascending. Empty means it prices
    /// everyone out.
    pub selected_types: Vec<usize>,
    /// Common network cost charged to the selected users; `None` when no
    /// one is served.
    pub common_cost: Option<f64>,
    pub counts: Vec<f64>,
    pub profit: f64,
}

/// Per-type willingness to pay for network access under a fixed contract:
/// the surplus `r_j - theta_j d_j` of the type's own item.
pub fn type_budgets(scenario: &Scenario, contract: &Contract) -> Vec<f64> {
    (0..scenario.num_types())
        .map(|j| contract.surplus(j, scenario.user_types[j].theta))
        .collect()
}

/// The operator's profit-maximizing prices against a fixed contract.
///
/// A user set is implementable only if every member's budget covers the
/// common cost and every non-member's falls short, so candidate sets are
/// prefixes of the budget ordering. Each candidate reuses the optimal
/// demand split for its size; the common cost is pushed to the smallest of
/// the member budgets and the price-cap bounds.
pub fn operator_best_response(scenario: &Scenario, contract: &Contract) -> OperatorResponse {
    let budgets = type_budgets(scenario, contract);
    let mut order: Vec<usize> = (0..scenario.num_types()).collect();
    order.sort_by(|&a, &b| budgets[b].partial_cmp(&budgets[a]).unwrap().then(a.cmp(&b)));

    let beta = scenario.congestion_coeff;
    let p0 = scenario.price_cap;
    let idle_floor = scenario
        .background_usage
        .iter()
        .map(|&h| p0 + beta * h * h)
        .fold(f64::INFINITY, f64::min);
    let max_budget = budgets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let empty = OperatorResponse {
        prices: PriceSchedule::uniform(scenario.num_slots, p0),
        selected_types: Vec::new(),
        common_cost: None,
        counts: vec![0.0; scenario.num_slots],
        profit: -scenario.operator_cost_coeff
            * scenario.background_usage.iter().map(|&h| h * h).sum::<f64>(),
    };
    // Serving nobody is only implementable if cap-level prices actually
    // deter every type.
    let mut best = if max_budget < idle_floor { Some(empty.clone()) } else { None };

    for k in 1..=scenario.num_types() {
        let members = &order[..k];
        let ub_budget = members.iter().map(|&j| budgets[j]).fold(f64::INFINITY, f64::min);
        let lo_budget =
            order[k..].iter().map(|&j| budgets[j]).fold(f64::NEG_INFINITY, f64::max);
        if ub_budget <= lo_budget {
            continue; // cannot separate equal-budget types
        }
        let m: f64 = members.iter().map(|&j| f64::from(scenario.user_types[j].count)).sum();
        let Ok(counts) = demand_for_mass(scenario, m) else {
            continue;
        };
        let caps = cap_bounds(scenario, &counts);
        let c = ub_budget.min(caps.ub_within).min(caps.ub_deter);
        if c < caps.lb.max(0.0) || c <= lo_budget {
            continue;
        }
        let profit = m * c - distribution_cost(scenario, &counts);
        let replace = match &best {
            None => true,
            Some(b) => profit >= b.profit,
        };
        if replace {
            let mut selected: Vec<usize> = members.to_vec();
            selected.sort_unstable();
            best = Some(OperatorResponse {
                prices: price_schedule_for(scenario, &counts, c),
                selected_types: selected,
                common_cost: Some(c),
                counts,
                profit,
            });
        }
    }
    best.unwrap_or(empty)
}

/// The H statistic and the pieces it is built from.
#[derive(Debug, Clone, Copy)]
pub struct HStatistic {
    /// Server tolerance minus the cap-level term; nonnegative means the
    /// horizontal equilibrium exists and equals the vertical outcome.
    pub value: f64,
    /// Largest common cost at which the server still prefers the vertical
    /// threshold (`+inf` when nothing undercuts it).
    pub server_tolerance: f64,
    /// The larger of the two price-cap bounds at the vertical solution.
    pub cap_level: f64,
    /// Vertical threshold the statistic is evaluated at.
    pub threshold: usize,
    /// True when the vertical common cost was fixed by the caps rather than
    /// the server-response constraint; when false the statistic falls back
    /// to the vertical threshold and should be read with care.
    pub proviso_holds: bool,
}

/// Computes the H statistic at the vertical solution.
pub fn h_statistic(scenario: &Scenario) -> Result<HStatistic> {
    let candidate = best_operator_candidate(scenario).ok_or_else(|| {
        Error::Infeasible("vertical solve admits no participation level".into())
    })?;
    let cap_level = if candidate.caps.ub_deter.is_finite() {
        candidate.caps.ub_deter.max(candidate.caps.ub_within)
    } else {
        candidate.caps.ub_within
    };
    Ok(HStatistic {
        value: candidate.server_bound - cap_level,
        server_tolerance: candidate.server_bound,
        cap_level,
        threshold: candidate.x,
        proviso_holds: candidate.cap_determined,
    })
}

/// Gap sizes observed when verifying that the vertical outcome is a mutual
/// best response of the simultaneous game.
#[derive(Debug, Clone, Copy)]
pub struct MutualBestResponse {
    /// How much the server could save by re-optimizing against the vertical
    /// prices (nonnegative means it cannot).
    pub server_cost_gap: f64,
    /// How much the operator could gain by re-pricing against the vertical
    /// contract.
    pub operator_profit_gap: f64,
}

impl MutualBestResponse {
    pub fn holds(&self, tol: f64) -> bool {
        self.server_cost_gap <= tol && self.operator_profit_gap <= tol
    }
}

/// One step of the diagnostic best-response iteration run when no
/// equilibrium exists.
#[derive(Debug, Clone)]
pub struct CycleStep {
    pub iteration: usize,
    /// Types the operator serves at this step.
    pub selected_types: Vec<usize>,
    pub common_cost: Option<f64>,
    pub operator_profit: f64,
    pub server_cost: f64,
}

/// Existence verdict and supporting evidence for the simultaneous game.
#[derive(Debug, Clone)]
pub struct HorizontalOutcome {
    pub statistic: HStatistic,
    pub exists: bool,
    /// The equilibrium outcome when it exists (the vertical report).
    pub report: Option<SolveReport>,
    /// Mutual best-response gaps, measured whenever the vertical solve
    /// succeeded.
    pub verification: Option<MutualBestResponse>,
    /// Diagnostic best-response trace when no equilibrium exists.
    pub cycle: Vec<CycleStep>,
}

const CYCLE_CAP: usize = 100;

/// Decides whether the simultaneous game has an equilibrium.
///
/// The verdict comes from the sign of the H statistic. When it is
/// nonnegative the vertical outcome is returned as the equilibrium, after
/// measuring the mutual best-response gaps that certify it. When it is
/// negative a bounded best-response iteration between the two leaders is
/// recorded for diagnosis.
pub fn horizontal_equilibrium(scenario: &Scenario) -> Result<HorizontalOutcome> {
    let statistic = h_statistic(scenario)?;
    let vertical = optimal_operator_solution(scenario)?;
    let verification = Some(mutual_best_response_gaps(scenario, &vertical));
    if statistic.value >= 0.0 {
        return Ok(HorizontalOutcome {
            statistic,
            exists: true,
            report: Some(vertical),
            verification,
            cycle: Vec::new(),
        });
    }

    let mut cycle = Vec::new();
    let mut contract = vertical.contract.clone();
    let mut seen: Vec<(Vec<usize>, f64)> = Vec::new();
    for iteration in 0..CYCLE_CAP {
        let response = operator_best_response(scenario, &contract);
        let demand = DemandDistribution::continuous(response.counts.clone());
        let (next_contract, _, _) = optimal_contract(scenario, &response.prices, &demand);
        cycle.push(CycleStep {
            iteration,
            selected_types: response.selected_types.clone(),
            common_cost: response.common_cost,
            operator_profit: response.profit,
            server_cost: server_cost(scenario, &next_contract),
        });
        let key = (response.selected_types.clone(), response.common_cost.unwrap_or(-1.0));
        if seen.iter().any(|(s, cc)| *s == key.0 && (cc - key.1).abs() <= 1e-9) {
            break;
        }
        seen.push(key);
        contract = next_contract;
    }

    Ok(HorizontalOutcome { statistic, exists: false, report: None, verification, cycle })
}

/// Measures how far the vertical outcome is from a mutual best response:
/// the server's possible cost saving against the vertical prices, and the
/// operator's possible profit gain against the vertical contract.
pub fn mutual_best_response_gaps(scenario: &Scenario, vertical: &SolveReport) -> MutualBestResponse {
    let (br_contract, _, _) = optimal_contract(scenario, &vertical.prices, &vertical.demand);
    let server_cost_gap = vertical.server_cost - server_cost(scenario, &br_contract);
    let response = operator_best_response(scenario, &vertical.contract);
    let operator_profit_gap = response.profit - vertical.operator_profit;
    MutualBestResponse { server_cost_gap, operator_profit_gap }
}
