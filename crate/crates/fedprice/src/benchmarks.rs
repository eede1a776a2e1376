// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Benchmark mechanisms and the comparison suite.
//!
//! Two reference mechanisms bracket the joint design (IJD):
//!
//! - **NJO** (no joint optimization): the server designs its contract as if
//!   the network were free, the operator then prices against that contract,
//!   and users react to what actually materializes. Types whose rewards no
//!   longer cover the realized network cost drop out.
//! - **NDP** (no dynamic pricing): the operator must charge one price in
//!   every slot and searches that scalar, with the server and users
//!   responding downstream at each candidate price.
//!
//! `compare_mechanisms` solves all three and tabulates costs, profits, and
//! user payoffs side by side.

use crate::contract::{
    assemble_contract, contract_payoffs, optimal_contract_for_cost, server_response_to_prices,
    threshold_lines,
};
use crate::error::Result;
use crate::horizontal::operator_best_response;
use crate::model::{
    operator_profit, DemandDistribution, PriceSchedule, Scenario, SolveReport,
};
use crate::pricing::optimal_operator_solution;
use crate::usergame::equilibrium_cost;

/// Realized market outcome when users face a fixed contract and fixed
/// prices.
///
/// Participation is a fixed point: the common cost rises with the number of
/// participants, and a type joins only while its best item surplus covers
/// that cost. Types enter in surplus order; the marginal type may join
/// fractionally, sitting exactly at zero payoff.
pub fn realized_outcome(
    scenario: &Scenario,
    contract: &crate::model::Contract,
    prices: &PriceSchedule,
) -> SolveReport {
    let num_types = scenario.num_types();
    // Best achievable surplus per type over nonzero items.
    let mut choices: Vec<Option<usize>> = vec![None; num_types];
    let mut surplus = vec![f64::NEG_INFINITY; num_types];
    for j in 0..num_types {
        let theta = scenario.user_types[j].theta;
        for (k, item) in contract.items.iter().enumerate() {
            if item.is_zero() {
                continue;
            }
            let s = contract.surplus(k, theta);
            if s > surplus[j] {
                surplus[j] = s;
                choices[j] = Some(k);
            }
        }
    }

    // Largest full prefix whose members can all afford the induced cost.
    let cost_at = |m: f64| equilibrium_cost(scenario, prices, m).0;
    let mut full = 0;
    for j in 1..=num_types {
        if surplus[j - 1] >= cost_at(scenario.users_through(j)) {
            full = j;
        } else {
            break;
        }
    }
    // The next type may enter partially until its payoff hits zero.
    let mut mass = scenario.users_through(full);
    let mut weights: Vec<f64> = (0..num_types)
        .map(|j| if j < full { f64::from(scenario.user_types[j].count) } else { 0.0 })
        .collect();
    if full < num_types && surplus[full] > cost_at(mass) {
        let lo_mass = mass;
        let hi_mass = scenario.users_through(full + 1);
        let target = surplus[full];
        let (mut lo, mut hi) = (lo_mass, hi_mass);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cost_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
        }
        mass = 0.5 * (lo + hi);
        weights[full] = mass - lo_mass;
    }

    let (c, counts) = equilibrium_cost(scenario, prices, mass);
    let mut total_data = 0.0;
    let mut total_rewards = 0.0;
    let mut payoffs = vec![0.0; num_types];
    let mut threshold = 0;
    for j in 0..num_types {
        if weights[j] > 0.0 {
            threshold = j + 1;
            let k = choices[j].expect("participating type has an item");
            total_data += weights[j] * contract.items[k].data;
            total_rewards += weights[j] * contract.items[k].reward;
            payoffs[j] = (surplus[j] - c).max(0.0);
        }
    }
    let server_cost = if total_data > 0.0 {
        1.0 / total_data.sqrt() + scenario.reward_weight * total_rewards
    } else {
        f64::INFINITY
    };
    let demand = DemandDistribution::continuous(counts);
    SolveReport {
        server_cost,
        operator_profit: operator_profit(scenario, prices, &demand),
        threshold_type: threshold,
        common_cost: c,
        user_payoffs: payoffs,
        contract: contract.clone(),
        prices: prices.clone(),
        demand,
    }
}

/// No-joint-optimization benchmark: contract designed at an assumed-free
/// network, operator best-responds to it, users react to the realized
/// prices.
pub fn solve_njo(scenario: &Scenario) -> Result<SolveReport> {
    let (contract, _) = optimal_contract_for_cost(scenario, 0.0);
    let response = operator_best_response(scenario, &contract);
    Ok(realized_outcome(scenario, &contract, &response.prices))
}

/// Golden-section ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximizer that reports the best point it evaluated. The
/// downstream profit is only piecewise smooth (participation thresholds
/// introduce cliffs), so the final bracket midpoint may sit on the wrong
/// side of a cliff while an earlier probe was nearly optimal.
fn golden_section_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut best = (a, f(a));
    let mut note = |x: f64, fx: f64| {
        if fx > best.1 {
            best = (x, fx);
        }
    };
    note(b, f(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    note(c, fc);
    note(d, fd);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            note(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            note(d, fd);
        }
    }
    best
}

/// No-dynamic-pricing benchmark: the operator charges a single price in all
/// slots, found by a coarse grid plus golden-section refinement. Downstream
/// of every candidate price the server re-optimizes its threshold and users
/// settle into their slot equilibrium.
pub fn solve_ndp(scenario: &Scenario, grid_points: usize) -> Result<SolveReport> {
    let grid_points = grid_points.max(2);
    let p0 = scenario.price_cap;

    let profit_at = |p: f64| -> f64 {
        let prices = PriceSchedule::uniform(scenario.num_slots, p);
        let response = server_response_to_prices(scenario, &prices);
        let demand = DemandDistribution::continuous(response.counts.clone());
        operator_profit(scenario, &prices, &demand)
    };

    let mut best_p = 0.0;
    let mut best_profit = f64::NEG_INFINITY;
    for i in 0..grid_points {
        let p = p0 * i as f64 / (grid_points - 1) as f64;
        let profit = profit_at(p);
        if profit > best_profit {
            best_profit = profit;
            best_p = p;
        }
    }
    // Refine inside the bracket around the best grid point. The profit is
    // only piecewise smooth, so keep whichever of the grid and refined
    // points wins.
    let step = p0 / (grid_points - 1) as f64;
    let lo = (best_p - step).max(0.0);
    let hi = (best_p + step).min(p0);
    let (refined_p, refined_profit) = golden_section_max(&profit_at, lo, hi, 1e-6 * p0.max(1e-9));
    if refined_profit > best_profit {
        best_p = refined_p;
    }

    let prices = PriceSchedule::uniform(scenario.num_slots, best_p);
    let response = server_response_to_prices(scenario, &prices);
    let lines = threshold_lines(scenario);
    let contract = assemble_contract(scenario, &lines[response.x - 1], response.common_cost);
    let demand = DemandDistribution::continuous(response.counts.clone());
    let payoffs = contract_payoffs(scenario, &contract, response.x, response.common_cost);
    Ok(SolveReport {
        server_cost: crate::model::server_cost(scenario, &contract),
        operator_profit: operator_profit(scenario, &prices, &demand),
        threshold_type: response.x,
        common_cost: response.common_cost,
        user_payoffs: payoffs,
        contract,
        prices,
        demand,
    })
}

/// Result of solving one mechanism; failures keep their message so the
/// others still report.
#[derive(Debug, Clone)]
pub struct MechanismOutcome {
    pub name: &'static str,
    pub report: std::result::Result<SolveReport, String>,
}

impl MechanismOutcome {
    fn run(name: &'static str, result: Result<SolveReport>) -> Self {
        MechanismOutcome { name, report: result.map_err(|e| e.to_string()) }
    }

    pub fn ok(&self) -> Option<&SolveReport> {
        self.report.as_ref().ok()
    }
}

/// Side-by-side outcomes of IJD and the two benchmarks.
#[derive(Debug, Clone)]
pub struct MechanismComparison {
    pub ijd: MechanismOutcome,
    pub njo: MechanismOutcome,
    pub ndp: MechanismOutcome,
}

/// Sum of all users' payoffs in a report, weighted by type populations.
pub fn total_user_payoff(scenario: &Scenario, report: &SolveReport) -> f64 {
    report
        .user_payoffs
        .iter()
        .zip(&scenario.user_types)
        .map(|(&w, ty)| w * f64::from(ty.count))
        .sum()
}

/// Percentage improvement of `ours` over `other` where smaller is better
/// (cost). Guarded so an infinite benchmark yields 100% rather than NaN.
pub fn cost_reduction_pct(ours: f64, other: f64) -> f64 {
    if other == 0.0 {
        return 0.0;
    }
    if other.is_infinite() {
        return if ours.is_finite() { 100.0 } else { 0.0 };
    }
    (other - ours) / other.abs() * 100.0
}

/// Percentage improvement of `ours` over `other` where larger is better
/// (profit, payoff).
pub fn profit_growth_pct(ours: f64, other: f64) -> f64 {
    if other == 0.0 {
        return if ours > 0.0 { f64::INFINITY } else { 0.0 };
    }
    if other.is_infinite() {
        return 0.0;
    }
    (ours - other) / other.abs() * 100.0
}

/// Runs IJD, NJO, and NDP on the scenario. Individual failures do not stop
/// the others.
pub fn compare_mechanisms(scenario: &Scenario) -> MechanismComparison {
    MechanismComparison {
        ijd: MechanismOutcome::run("IJD", optimal_operator_solution(scenario)),
        njo: MechanismOutcome::run("NJO", solve_njo(scenario)),
        ndp: MechanismOutcome::run("NDP", solve_ndp(scenario, 1000)),
    }
}
