// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! The network operator's problem: where users should upload, and what each
//! slot should cost.
//!
//! For a fixed number of participants `m` the operator wants the demand
//! split minimizing the sum of users' congestion costs and its own quadratic
//! network cost. The optimality conditions pick the slots with the smallest
//! `h (beta h + 2 gamma)` and load them according to a closed form in a
//! single multiplier `lambda`, found here by bisection
//! ([`optimal_demand_distribution`]).
//!
//! Prices then make that split an actual user equilibrium: every used slot
//! is priced so its total cost equals a common value `c`, and `c` itself is
//! pushed to the largest value that (a) keeps prices within `[0, p0]`,
//! (b) keeps empty slots unattractive, and (c) keeps the server's optimal
//! threshold at the operator's preferred participation level
//! ([`optimal_operator_solution`]).
//!
//! With congestion-tolerant users (`beta = 0`) the split degenerates to
//! water-filling over background usage and chosen slots share one price
//! ([`water_filling`]).

use crate::contract::{
    contract_payoffs, optimal_contract_for_cost, threshold_lines, threshold_optimality_interval,
};
use crate::error::{Error, Result};
use crate::model::{
    operator_profit, server_cost, Contract, DemandDistribution, PriceSchedule, Scenario,
    SolveReport,
};

/// Relative margin subtracted from the common cost when the server-response
/// bound is the binding one: at an exact tie the server's argmin breaks
/// toward fewer types, which would undo the operator's plan.
const TIE_MARGIN: f64 = 1e-9;

/// Solution of the operator's demand-distribution problem for a fixed
/// participant count.
#[derive(Debug, Clone)]
pub struct KktSolution {
    /// Multiplier on the mass constraint.
    pub lambda: f64,
    /// Slots carrying positive demand, ascending.
    pub selected: Vec<usize>,
    /// Continuous per-slot user counts.
    pub counts: Vec<f64>,
    /// Mass-conservation residual `|sum counts - m|`.
    pub residual: f64,
    /// Set when more than one prefix passed the optimality checks and the
    /// cheaper one was kept.
    pub diagnostic: Option<String>,
}

/// Optimal continuous demand split of `m > 0` users across slots, for
/// congestion-sensitive users (`beta > 0`).
///
/// Candidate slot sets are prefixes of the slots ordered by
/// `h (beta h + 2 gamma)` (ties grouped); for each prefix the multiplier
/// solves `sum_Q sqrt((beta h - gamma)^2 - 3 beta lambda) =
/// 3 beta m + sum_Q (2 beta h + gamma)` by bisection, and the prefix is
/// accepted if the resulting counts are positive on the prefix and the
/// multiplier separates it from the remaining slots.
pub fn optimal_demand_distribution(scenario: &Scenario, m: f64) -> Result<KktSolution> {
    let beta = scenario.congestion_coeff;
    if beta <= 0.0 {
        return Err(Error::invalid("congestion_coeff", "must be positive here; water_filling covers beta = 0"));
    }
    if m <= 0.0 {
        return Err(Error::invalid("num_users", "must be positive"));
    }
    let t_count = scenario.num_slots;

    let mut order: Vec<usize> = (0..t_count).collect();
    order.sort_by(|&a, &b| {
        scenario
            .slot_key(a)
            .partial_cmp(&scenario.slot_key(b))
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut attempts = Vec::new();
    let mut accepted: Vec<KktSolution> = Vec::new();
    let mut len = 0;
    while len < t_count {
        // Grow the prefix past any tie group: slots with equal keys enter
        // together.
        let mut next = len + 1;
        while next < t_count
            && scenario.slot_key(order[next]) == scenario.slot_key(order[next - 1])
        {
            next += 1;
        }
        len = next;
        let prefix: Vec<usize> = order[..len].to_vec();

        match solve_prefix(scenario, &prefix, m) {
            Ok(Some(solution)) => {
                let boundary = prefix
                    .iter()
                    .map(|&t| scenario.slot_key(t))
                    .fold(f64::NEG_INFINITY, f64::max);
                let outside = order[len..]
                    .iter()
                    .map(|&t| scenario.slot_key(t))
                    .fold(f64::INFINITY, f64::min);
                let neg_lambda = -solution.lambda;
                let tol = 1e-9 * neg_lambda.abs().max(1.0);
                let positive = prefix.iter().all(|&t| solution.counts[t] > 0.0);
                if positive && neg_lambda >= boundary - tol && neg_lambda <= outside + tol {
                    accepted.push(solution);
                } else {
                    attempts.push(format!(
                        "prefix of {len} slots rejected: -lambda={neg_lambda:.6e} outside [{boundary:.6e}, {outside:.6e}] or nonpositive count",
                    ));
                }
            }
            Ok(None) => attempts.push(format!("prefix of {len} slots has no multiplier root")),
            Err(e) => attempts.push(format!("prefix of {len} slots failed: {e}")),
        }

        if len == t_count {
            break;
        }
    }

    match accepted.len() {
        0 => Err(Error::Infeasible(format!(
            "no slot prefix satisfies the demand optimality conditions for m={m}: {}",
            attempts.join("; ")
        ))),
        1 => Ok(accepted.into_iter().next().unwrap()),
        n => {
            // Keep the prefix with the smaller combined congestion and
            // network cost; flag the ambiguity for diagnostics.
            let mut best = accepted
                .into_iter()
                .min_by(|a, b| {
                    let ca = distribution_cost(scenario, &a.counts);
                    let cb = distribution_cost(scenario, &b.counts);
                    ca.partial_cmp(&cb).unwrap()
                })
                .unwrap();
            best.diagnostic =
                Some(format!("{n} prefixes passed the optimality checks; kept the cheapest"));
            Ok(best)
        }
    }
}

/// Solves the multiplier equation for one candidate slot set. Returns
/// `Ok(None)` when the equation has no root in the multiplier's domain.
fn solve_prefix(scenario: &Scenario, prefix: &[usize], m: f64) -> Result<Option<KktSolution>> {
    let beta = scenario.congestion_coeff;
    let gamma = scenario.operator_cost_coeff;
    let h = &scenario.background_usage;

    let rhs: f64 = 3.0 * beta * m
        + prefix.iter().map(|&t| 2.0 * beta * h[t] + gamma).sum::<f64>();
    let lhs = |lambda: f64| -> f64 {
        prefix
            .iter()
            .map(|&t| {
                let base = beta * h[t] - gamma;
                (base * base - 3.0 * beta * lambda).max(0.0).sqrt()
            })
            .sum()
    };

    // Domain edge: the square roots stay real for lambda up to this value.
    let lambda_hi = prefix
        .iter()
        .map(|&t| {
            let base = beta * h[t] - gamma;
            base * base / (3.0 * beta)
        })
        .fold(f64::INFINITY, f64::min);

    if lhs(lambda_hi) > rhs {
        return Ok(None);
    }
    // The left side is strictly decreasing in lambda; expand the lower end
    // until it brackets the root.
    let mut hi = lambda_hi;
    let mut lo = lambda_hi - 1.0;
    let mut width = 1.0;
    while lhs(lo) < rhs {
        width *= 2.0;
        lo = lambda_hi - width;
        if !lo.is_finite() {
            return Ok(None);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) >= rhs {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);

    let mut counts = vec![0.0; scenario.num_slots];
    for &t in prefix {
        let base = beta * h[t] - gamma;
        let root = (base * base - 3.0 * beta * lambda).max(0.0).sqrt();
        counts[t] = ((root - (2.0 * beta * h[t] + gamma)) / (3.0 * beta)).max(0.0);
    }
    let residual = (counts.iter().sum::<f64>() - m).abs();
    Ok(Some(KktSolution {
        lambda,
        selected: prefix.iter().copied().filter(|&t| counts[t] > 0.0).collect(),
        counts,
        residual,
        diagnostic: None,
    }))
}

/// Combined cost the operator accounts for when placing demand: users'
/// congestion `beta sum n (n+h)^2` plus network cost `gamma sum (n+h)^2`
/// over all slots.
pub fn distribution_cost(scenario: &Scenario, counts: &[f64]) -> f64 {
    let beta = scenario.congestion_coeff;
    let gamma = scenario.operator_cost_coeff;
    let mut cost = 0.0;
    for (&n, &h) in counts.iter().zip(&scenario.background_usage) {
        let load = n + h;
        cost += beta * n * load * load + gamma * load * load;
    }
    cost
}

/// Water-filling split for congestion-tolerant users: the level `v` solves
/// `sum_t [v - h(t)]^+ = m` and slot `t` carries `[v - h(t)]^+` users.
#[derive(Debug, Clone)]
pub struct WaterFilling {
    pub level: f64,
    pub counts: Vec<f64>,
}

impl WaterFilling {
    pub fn selected_slots(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&t| self.counts[t] > 0.0).collect()
    }
}

/// Optimal demand split when users are congestion-tolerant (`beta = 0`).
/// The level is found by bisection on the piecewise-linear increasing map
/// `v -> sum [v - h]^+`. With `m = 0` the level is `min h` and no slot is
/// used.
pub fn water_filling(scenario: &Scenario, m: f64) -> Result<WaterFilling> {
    if scenario.congestion_coeff != 0.0 {
        return Err(Error::invalid("congestion_coeff", "water_filling requires beta = 0"));
    }
    if m < 0.0 {
        return Err(Error::invalid("num_users", "must be nonnegative"));
    }
    let h = &scenario.background_usage;
    let h_min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    if m == 0.0 {
        return Ok(WaterFilling { level: h_min, counts: vec![0.0; scenario.num_slots] });
    }
    let mass = |v: f64| -> f64 { h.iter().map(|&ht| (v - ht).max(0.0)).sum() };
    let mut lo = h_min;
    let mut hi = h.iter().cloned().fold(0.0f64, f64::max) + m;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let level = 0.5 * (lo + hi);
    Ok(WaterFilling {
        level,
        counts: h.iter().map(|&ht| (level - ht).max(0.0)).collect(),
    })
}

/// Continuous demand split for `m` users under either congestion regime.
pub fn demand_for_mass(scenario: &Scenario, m: f64) -> Result<Vec<f64>> {
    if scenario.congestion_coeff > 0.0 {
        Ok(optimal_demand_distribution(scenario, m)?.counts)
    } else {
        Ok(water_filling(scenario, m)?.counts)
    }
}

/// Price-cap driven bounds on the common network cost for a given demand
/// split: `lb <= c` keeps every used slot's price nonnegative, `c <=
/// ub_within` keeps used-slot prices at or below the cap, and
/// `c <= ub_deter` keeps empty slots (priced at the cap) unattractive.
#[derive(Debug, Clone, Copy)]
pub struct CapBounds {
    pub lb: f64,
    pub ub_within: f64,
    pub ub_deter: f64,
}

pub fn cap_bounds(scenario: &Scenario, counts: &[f64]) -> CapBounds {
    let beta = scenario.congestion_coeff;
    let p0 = scenario.price_cap;
    let mut lb = 0.0f64;
    let mut min_used = f64::INFINITY;
    let mut min_idle = f64::INFINITY;
    for (&n, &h) in counts.iter().zip(&scenario.background_usage) {
        if n > 0.0 {
            let load = n + h;
            let congestion = beta * load * load;
            lb = lb.max(congestion);
            min_used = min_used.min(congestion);
        } else {
            min_idle = min_idle.min(beta * h * h);
        }
    }
    CapBounds {
        lb,
        ub_within: p0 + min_used,
        // No empty slot means no deterrence constraint.
        ub_deter: if min_idle.is_finite() { p0 + min_idle } else { f64::INFINITY },
    }
}

/// One evaluated participation candidate inside the operator's optimum
/// search; exposed for the H statistic, which needs the winning candidate's
/// bound structure.
#[derive(Debug, Clone)]
pub struct OperatorCandidate {
    /// Threshold type whose population the operator plans for.
    pub x: usize,
    pub counts: Vec<f64>,
    pub common_cost: f64,
    pub objective: f64,
    /// Largest `c` the server-response constraint alone allows.
    pub server_bound: f64,
    pub caps: CapBounds,
    /// True when the cap bounds, not the server response, fixed the cost.
    pub cap_determined: bool,
}

/// Evaluates every participation threshold and returns the operator's best
/// candidate, or `None` when no threshold admits a consistent price level.
pub fn best_operator_candidate(scenario: &Scenario) -> Option<OperatorCandidate> {
    let lines = threshold_lines(scenario);
    let mut best: Option<OperatorCandidate> = None;
    for x in 1..=scenario.num_types() {
        let Some((lo_srv, hi_srv)) = threshold_optimality_interval(&lines, x) else {
            continue;
        };
        let m = scenario.users_through(x);
        let Ok(counts) = demand_for_mass(scenario, m) else {
            continue;
        };
        let caps = cap_bounds(scenario, &counts);
        let cap_ub = caps.ub_within.min(caps.ub_deter);
        let mut c = hi_srv.min(cap_ub);
        let cap_determined = cap_ub <= hi_srv;
        if !cap_determined {
            // The server is indifferent between thresholds at the bound
            // exactly; back off so it strictly prefers x.
            c -= TIE_MARGIN * c.abs().max(1.0);
        }
        let lo = caps.lb.max(lo_srv).max(0.0);
        if !c.is_finite() || c < lo {
            continue;
        }
        let objective = m * c - distribution_cost(scenario, &counts);
        let candidate = OperatorCandidate {
            x,
            counts,
            common_cost: c,
            objective,
            server_bound: hi_srv,
            caps,
            cap_determined,
        };
        // Ties go to the larger threshold: more participation.
        if best.as_ref().is_none_or(|b| candidate.objective >= b.objective) {
            best = Some(candidate);
        }
    }
    best
}

/// Solves the operator's full pricing problem and assembles the market
/// outcome: demand split, prices making it an equilibrium at the largest
/// sustainable common cost, the server's induced contract, and all payoffs.
///
/// When no participation level is price-consistent the report has
/// `threshold_type = 0`, every price at the cap, and infinite server cost.
pub fn optimal_operator_solution(scenario: &Scenario) -> Result<SolveReport> {
    let Some(candidate) = best_operator_candidate(scenario) else {
        return Ok(no_participation_report(scenario));
    };
    assemble_report(scenario, &candidate)
}

/// Report for the degenerate outcome where the operator prices everyone out.
pub fn no_participation_report(scenario: &Scenario) -> SolveReport {
    let prices = PriceSchedule::uniform(scenario.num_slots, scenario.price_cap);
    let demand = DemandDistribution::empty(scenario.num_slots);
    let c = (0..scenario.num_slots)
        .map(|t| {
            let h = scenario.background_usage[t];
            scenario.price_cap + scenario.congestion_coeff * h * h
        })
        .fold(f64::INFINITY, f64::min);
    let contract = Contract::zero(scenario.num_types());
    SolveReport {
        server_cost: server_cost(scenario, &contract),
        operator_profit: operator_profit(scenario, &prices, &demand),
        user_payoffs: vec![0.0; scenario.num_types()],
        threshold_type: 0,
        common_cost: c,
        contract,
        prices,
        demand,
    }
}

fn assemble_report(scenario: &Scenario, candidate: &OperatorCandidate) -> Result<SolveReport> {
    let mut c = candidate.common_cost;

    // The contract the prices induce must incentivize exactly the planned
    // types; at an exact server tie the margin below restores strictness.
    for _ in 0..3 {
        let prices = price_schedule_for(scenario, &candidate.counts, c);
        let (contract, x) = optimal_contract_for_cost(scenario, c);
        if x == candidate.x {
            let demand = DemandDistribution::continuous(candidate.counts.clone());
            let payoffs = contract_payoffs(scenario, &contract, x, c);
            return Ok(SolveReport {
                server_cost: server_cost(scenario, &contract),
                operator_profit: operator_profit(scenario, &prices, &demand),
                threshold_type: x,
                common_cost: c,
                user_payoffs: payoffs,
                contract,
                prices,
                demand,
            });
        }
        c -= TIE_MARGIN * c.abs().max(1.0);
    }
    Err(Error::Infeasible(format!(
        "prices for threshold {} keep inducing a different server threshold",
        candidate.x
    )))
}

/// Prices that realize the common cost `c` on the used slots of `counts`
/// and sit at the cap elsewhere.
pub fn price_schedule_for(scenario: &Scenario, counts: &[f64], c: f64) -> PriceSchedule {
    let beta = scenario.congestion_coeff;
    let p0 = scenario.price_cap;
    let prices = (0..scenario.num_slots)
        .map(|t| {
            if counts[t] > 0.0 {
                let load = counts[t] + scenario.background_usage[t];
                (c - beta * load * load).clamp(0.0, p0)
            } else {
                p0
            }
        })
        .collect();
    PriceSchedule { prices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UserType;
    use crate::usergame::{common_network_cost, verify_equal_cost_equilibrium};

    fn scenario(h: Vec<f64>, beta: f64, gamma: f64, types: Vec<(f64, u32)>) -> Scenario {
        Scenario::new(
            h,
            1000.0,
            beta,
            gamma,
            0.05,
            types.into_iter().map(|(theta, count)| UserType { theta, count }).collect(),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_two_slots() {
        let s = scenario(vec![0.0, 0.0], 1.0, 1.0, vec![(1.0, 2)]);
        let sol = optimal_demand_distribution(&s, 2.0).unwrap();
        assert!((sol.lambda - (-5.0)).abs() < 1e-9);
        assert!((sol.counts[0] - 1.0).abs() < 1e-9);
        assert!((sol.counts[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn asymmetric_two_slots() {
        // Frozen from the bisection oracle: solve sqrt(1+u) + sqrt(u) = 13
        // with u = -3 lambda, giving lambda = -(168/26)^2 / 3.
        let s = scenario(vec![0.0, 1.0], 1.0, 1.0, vec![(1.0, 3)]);
        let sol = optimal_demand_distribution(&s, 3.0).unwrap();
        let u = (168.0f64 / 26.0).powi(2);
        assert!((sol.lambda - (-u / 3.0)).abs() < 1e-6);
        assert!((sol.counts[0] - 1.8461538461).abs() < 1e-6);
        assert!((sol.counts[1] - 1.1538461538).abs() < 1e-6);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn expensive_slot_excluded() {
        let s = scenario(vec![0.0, 0.0, 100.0], 1.0, 1.0, vec![(1.0, 2)]);
        let sol = optimal_demand_distribution(&s, 2.0).unwrap();
        assert_eq!(sol.selected, vec![0, 1]);
        assert!((sol.counts[0] - 1.0).abs() < 1e-9);
        assert!((sol.counts[1] - 1.0).abs() < 1e-9);
        assert_eq!(sol.counts[2], 0.0);
    }

    #[test]
    fn kkt_stationarity_and_mass() {
        let s = scenario(vec![0.4, 1.3, 0.1, 2.6], 0.7, 0.4, vec![(1.0, 5)]);
        let m = 5.0;
        let sol = optimal_demand_distribution(&s, m).unwrap();
        assert!(sol.residual <= 1e-9);
        let beta = s.congestion_coeff;
        let gamma = s.operator_cost_coeff;
        for &t in &sol.selected {
            let h = s.background_usage[t];
            let n = sol.counts[t];
            let stationarity = 3.0 * beta * n * n
                + 2.0 * (2.0 * beta * h + gamma) * n
                + (beta * h * h + 2.0 * gamma * h + sol.lambda);
            assert!(stationarity.abs() <= 1e-6, "slot {t}: residual {stationarity}");
        }
    }

    #[test]
    fn anti_bunching_within_selection() {
        let s = scenario(vec![0.5, 1.5, 3.0], 0.8, 0.6, vec![(1.0, 6)]);
        let sol = optimal_demand_distribution(&s, 6.0).unwrap();
        for pair in sol.selected.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (ha, hb) = (s.background_usage[a], s.background_usage[b]);
            assert!(ha < hb);
            assert!(sol.counts[a] > sol.counts[b], "smaller h should load more users");
            assert!(
                sol.counts[a] + ha < sol.counts[b] + hb,
                "smaller h should still have less total usage"
            );
        }
    }

    #[test]
    fn water_filling_examples() {
        let mut s = scenario(vec![1.0, 3.0, 10.0], 0.0, 1.0, vec![(1.0, 4)]);
        s.congestion_coeff = 0.0;
        let wf = water_filling(&s, 4.0).unwrap();
        assert!((wf.level - 4.0).abs() < 1e-9);
        assert!((wf.counts[0] - 3.0).abs() < 1e-9);
        assert!((wf.counts[1] - 1.0).abs() < 1e-9);
        assert_eq!(wf.counts[2], 0.0);

        let s2 = scenario(vec![5.0, 5.0], 0.0, 1.0, vec![(1.0, 2)]);
        let wf2 = water_filling(&s2, 2.0).unwrap();
        assert!((wf2.level - 6.0).abs() < 1e-9);
        assert!((wf2.counts[0] - 1.0).abs() < 1e-9);

        let s3 = scenario(vec![0.0, 2.0, 2.0, 7.0], 0.0, 1.0, vec![(1.0, 5)]);
        let wf3 = water_filling(&s3, 5.0).unwrap();
        assert!((wf3.level - 3.0).abs() < 1e-9);
        assert!((wf3.counts[0] - 3.0).abs() < 1e-9);
        assert!((wf3.counts[1] - 1.0).abs() < 1e-9);
        assert!((wf3.counts[2] - 1.0).abs() < 1e-9);
        assert_eq!(wf3.counts[3], 0.0);
    }

    #[test]
    fn demand_solver_rejects_bad_inputs() {
        let s = scenario(vec![0.0, 1.0], 1.0, 1.0, vec![(1.0, 2)]);
        assert!(optimal_demand_distribution(&s, 0.0).is_err());
        let mut tolerant = s.clone();
        tolerant.congestion_coeff = 0.0;
        assert!(optimal_demand_distribution(&tolerant, 2.0).is_err());
        assert!(water_filling(&s, 2.0).is_err()); // beta > 0 here
        assert!(water_filling(&tolerant, -1.0).is_err());
    }

    #[test]
    fn water_filling_no_users() {
        let s = scenario(vec![2.0, 4.0], 0.0, 1.0, vec![(1.0, 1)]);
        let wf = water_filling(&s, 0.0).unwrap();
        assert_eq!(wf.level, 2.0);
        assert_eq!(wf.counts, vec![0.0, 0.0]);
    }

    #[test]
    fn constructed_prices_equalize_costs() {
        let s = scenario(vec![0.2, 0.9, 2.0], 0.5, 0.5, vec![(0.5, 3), (1.0, 3)]);
        let report = optimal_operator_solution(&s).unwrap();
        assert!(report.threshold_type >= 1);
        assert!(verify_equal_cost_equilibrium(&s, &report.prices, &report.demand, 1e-6).unwrap());
        let c = common_network_cost(&s, &report.prices, &report.demand);
        assert!((c - report.common_cost).abs() < 1e-9);
        report.prices.validate(&s).unwrap();
    }

    #[test]
    fn report_consistent_with_contract_machinery() {
        let s = scenario(vec![0.1, 0.6], 0.4, 0.3, vec![(0.4, 2), (0.9, 2), (1.5, 2)]);
        let report = optimal_operator_solution(&s).unwrap();
        let x = report.threshold_type;
        assert!(x >= 1);
        // The threshold type's payoff binds at zero; lower types earn rent.
        assert!(report.user_payoffs[x - 1].abs() < 1e-9);
        for j in 0..x - 1 {
            assert!(report.user_payoffs[j] > 0.0);
        }
        for j in x..s.num_types() {
            assert_eq!(report.user_payoffs[j], 0.0);
        }
    }
}
