// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! The users' non-cooperative game: participation, contract-item choice, and
//! slot choice.
//!
//! At equilibrium every chosen slot carries the same network cost (price plus
//! congestion) and every empty slot would cost at least as much to enter, so
//! the whole price schedule collapses into a single scalar `c` from each
//! user's point of view. `common_network_cost` extracts that scalar,
//! `contract_item_choice` resolves the item decision given `c`, and
//! `best_response_dynamics` simulates the full discrete game to an
//! equilibrium.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    slot_network_cost, user_payoff, Contract, DemandDistribution, PriceSchedule, Scenario,
};

/// One user's realized choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserChoice {
    /// Index of the chosen contract item, if participating.
    pub item: Option<usize>,
    /// Index of the chosen upload slot, if participating.
    pub slot: Option<usize>,
}

impl UserChoice {
    pub const OUT: UserChoice = UserChoice { item: None, slot: None };

    pub fn participates(&self) -> bool {
        self.item.is_some()
    }
}

/// A full strategy profile: one choice per user, users grouped by type.
#[derive(Debug, Clone, PartialEq)]
pub struct UserAssignment {
    /// `types[i]` is the type index of user `i`.
    pub types: Vec<usize>,
    pub choices: Vec<UserChoice>,
    pub num_slots: usize,
}

impl UserAssignment {
    /// All users out; user `i`'s type follows the scenario's type order.
    pub fn everyone_out(scenario: &Scenario) -> Self {
        let mut types = Vec::with_capacity(scenario.total_users() as usize);
        for (j, ty) in scenario.user_types.iter().enumerate() {
            types.extend(std::iter::repeat_n(j, ty.count as usize));
        }
        UserAssignment {
            choices: vec![UserChoice::OUT; types.len()],
            types,
            num_slots: scenario.num_slots,
        }
    }

    /// Per-slot participant counts implied by the choices.
    pub fn demand(&self) -> DemandDistribution {
        let mut counts = vec![0u32; self.num_slots];
        for choice in &self.choices {
            if let Some(t) = choice.slot {
                counts[t] += 1;
            }
        }
        DemandDistribution::from_integer(counts)
    }

    pub fn num_participants(&self) -> usize {
        self.choices.iter().filter(|c| c.participates()).count()
    }
}

/// Lowest realized slot cost `min_t (p(t) + beta (n_t + h(t))^2)`.
///
/// At user equilibrium this is the common network cost every participant
/// pays regardless of which chosen slot they sit in.
pub fn common_network_cost(
    scenario: &Scenario,
    prices: &PriceSchedule,
    demand: &DemandDistribution,
) -> f64 {
    (0..scenario.num_slots)
        .map(|t| slot_network_cost(scenario, prices, demand, t).expect("slot in range"))
        .fold(f64::INFINITY, f64::min)
}

/// Resolves each type's contract-item choice given the common network cost.
///
/// Zero items are not real offers, so the argmax runs over nonzero items
/// only. A type participates when its best surplus minus `c` is nonnegative.
/// Ties prefer the item designed for the type, then the lowest index.
/// Returns, per type, `Some((item_index, payoff))` or `None` for opting out.
pub fn contract_item_choice(
    scenario: &Scenario,
    contract: &Contract,
    c: f64,
) -> Vec<Option<(usize, f64)>> {
    scenario
        .user_types
        .iter()
        .enumerate()
        .map(|(j, ty)| {
            let mut best: Option<(usize, f64)> = None;
            for (k, item) in contract.items.iter().enumerate() {
                if item.is_zero() {
                    continue;
                }
                let surplus = contract.surplus(k, ty.theta);
                let better = match best {
                    None => true,
                    Some((bk, bs)) => {
                        surplus > bs || (surplus == bs && k == j && bk != j)
                    }
                };
                if better {
                    best = Some((k, surplus));
                }
            }
            best.and_then(|(k, surplus)| {
                let payoff = surplus - c;
                if payoff >= 0.0 {
                    Some((k, payoff))
                } else {
                    None
                }
            })
        })
        .collect()
}

/// Outcome of [`best_response_dynamics`].
#[derive(Debug, Clone)]
pub struct DynamicsOutcome {
    pub assignment: UserAssignment,
    pub converged: bool,
    pub rounds: usize,
}

const DEVIATION_TOL: f64 = 1e-9;

/// Iterates asynchronous single-user best responses until no user has a
/// strictly profitable deviation (tolerance 1e-9) or `max_rounds` is hit.
///
/// Each round visits users in a fresh seeded-random order, so the whole run
/// is deterministic given `seed`. A user's move re-decides participation,
/// item, and slot jointly; ties keep the current choice, then prefer the
/// item designed for the user's type, then the lowest item and slot index.
pub fn best_response_dynamics(
    scenario: &Scenario,
    contract: &Contract,
    prices: &PriceSchedule,
    seed: u64,
    max_rounds: usize,
) -> Result<DynamicsOutcome> {
    if max_rounds == 0 {
        return Err(Error::invalid("max_rounds", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = UserAssignment::everyone_out(scenario);
    let mut slot_counts = vec![0.0f64; scenario.num_slots];

    let nonzero_items: Vec<usize> = (0..contract.items.len())
        .filter(|&k| !contract.items[k].is_zero())
        .collect();

    let mut order: Vec<usize> = (0..assignment.types.len()).collect();
    for round in 0..max_rounds {
        order.shuffle(&mut rng);
        let mut moved = false;
        for &u in &order {
            let ty = scenario.user_types[assignment.types[u]];
            let current = assignment.choices[u];

            let current_payoff = match current {
                UserChoice { item: Some(k), slot: Some(t) } => {
                    let load = slot_counts[t] + scenario.background_usage[t];
                    contract.surplus(k, ty.theta)
                        - prices.prices[t]
                        - scenario.congestion_coeff * load * load
                }
                _ => 0.0,
            };

            // Best alternative: opting out, or any (item, slot) pair. Slot
            // load counts the user after moving there.
            let mut best_payoff = 0.0f64;
            let mut best_choice = UserChoice::OUT;
            for &k in &nonzero_items {
                let surplus = contract.surplus(k, ty.theta);
                for (t, &occupancy) in slot_counts.iter().enumerate() {
                    let here = current.slot == Some(t);
                    let load =
                        occupancy + if here { 0.0 } else { 1.0 } + scenario.background_usage[t];
                    let payoff =
                        surplus - prices.prices[t] - scenario.congestion_coeff * load * load;
                    let candidate = UserChoice { item: Some(k), slot: Some(t) };
                    if payoff > best_payoff + DEVIATION_TOL
                        || (payoff > best_payoff - DEVIATION_TOL
                            && prefer(candidate, best_choice, assignment.types[u]))
                    {
                        if payoff > best_payoff {
                            best_payoff = payoff;
                        }
                        best_choice = candidate;
                    }
                }
            }

            if best_payoff > current_payoff + DEVIATION_TOL {
                if let Some(t) = current.slot {
                    slot_counts[t] -= 1.0;
                }
                if let Some(t) = best_choice.slot {
                    slot_counts[t] += 1.0;
                }
                assignment.choices[u] = best_choice;
                moved = true;
            }
        }
        if !moved {
            return Ok(DynamicsOutcome { assignment, converged: true, rounds: round + 1 });
        }
    }
    Ok(DynamicsOutcome { assignment, converged: false, rounds: max_rounds })
}

/// Canonical preference among near-tied candidate choices: own-type item
/// first, then lower item index, then lower slot index.
fn prefer(candidate: UserChoice, incumbent: UserChoice, own_type: usize) -> bool {
    let (ck, ct) = (candidate.item.unwrap(), candidate.slot.unwrap());
    match (incumbent.item, incumbent.slot) {
        (None, _) => false, // opting out at equal payoff wins; never churn into a slot
        (Some(ik), Some(it)) => {
            let cand_own = ck == own_type;
            let inc_own = ik == own_type;
            (cand_own, std::cmp::Reverse(ck), std::cmp::Reverse(ct))
                > (inc_own, std::cmp::Reverse(ik), std::cmp::Reverse(it))
        }
        _ => unreachable!("participating choice always has a slot"),
    }
}

/// Checks the equal-cost property of user equilibria: all chosen slots agree
/// on their realized cost within `tol`, and every unchosen slot would cost at
/// least the minimum chosen cost (minus `tol`) even at zero upload load.
///
/// For continuous demand `tol = 1e-6` is appropriate; for integer
/// assignments use [`integer_cost_slack`], since exact equality across slots
/// only holds in the continuum.
pub fn verify_equal_cost_equilibrium(
    scenario: &Scenario,
    prices: &PriceSchedule,
    demand: &DemandDistribution,
    tol: f64,
) -> Result<bool> {
    let selected = demand.selected_slots();
    if selected.is_empty() {
        return Err(Error::NoParticipants);
    }
    let costs: Vec<f64> = selected
        .iter()
        .map(|&t| slot_network_cost(scenario, prices, demand, t).expect("slot in range"))
        .collect();
    let min_cost = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_cost = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_cost - min_cost > tol {
        return Ok(false);
    }
    for t in demand.unselected_slots() {
        let h = scenario.background_usage[t];
        let idle_cost = prices.prices[t] + scenario.congestion_coeff * h * h;
        if idle_cost < min_cost - tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Cost-equality slack for integer assignments: moving one user changes a
/// slot's congestion term by `beta * (2 (n_t + h_t) + 1)`, so equilibrium
/// slot costs can legitimately differ by up to that amount.
pub fn integer_cost_slack(scenario: &Scenario, demand: &DemandDistribution) -> f64 {
    let max_load = (0..scenario.num_slots)
        .map(|t| demand.counts[t] + scenario.background_usage[t])
        .fold(0.0f64, f64::max);
    scenario.congestion_coeff * (2.0 * max_load + 1.0)
}

/// Continuous user equilibrium for `m` participating users facing `prices`:
/// users spread so every used slot has the common cost `c` and no unused
/// slot is cheaper. Returns `(c, counts)`.
///
/// For `beta > 0`, slot `t` is used iff `p(t) + beta h(t)^2 < c` and then
/// carries `n_t = sqrt((c - p(t)) / beta) - h(t)` users; `c` is found by
/// bisection on the strictly increasing total-mass map. For `beta = 0` all
/// mass piles onto the cheapest-price slots; the canonical split equalizes
/// total usage across them.
pub fn equilibrium_cost(
    scenario: &Scenario,
    prices: &PriceSchedule,
    m: f64,
) -> (f64, Vec<f64>) {
    let beta = scenario.congestion_coeff;
    let t_count = scenario.num_slots;
    if m <= 0.0 {
        let c = (0..t_count)
            .map(|t| {
                let h = scenario.background_usage[t];
                prices.prices[t] + beta * h * h
            })
            .fold(f64::INFINITY, f64::min);
        return (c, vec![0.0; t_count]);
    }

    if beta == 0.0 {
        let min_price = prices.prices.iter().cloned().fold(f64::INFINITY, f64::min);
        let cheap: Vec<usize> =
            (0..t_count).filter(|&t| prices.prices[t] == min_price).collect();
        let counts = fill_to_common_level(scenario, &cheap, m);
        return (min_price, counts);
    }

    let mass = |c: f64| -> f64 {
        (0..t_count)
            .map(|t| {
                let h = scenario.background_usage[t];
                let gap = c - prices.prices[t];
                if gap <= 0.0 {
                    return 0.0;
                }
                ((gap / beta).sqrt() - h).max(0.0)
            })
            .sum()
    };

    let mut lo = (0..t_count)
        .map(|t| {
            let h = scenario.background_usage[t];
            prices.prices[t] + beta * h * h
        })
        .fold(f64::INFINITY, f64::min);
    let mut hi = lo.max(0.0) + beta;
    while mass(hi) < m {
        hi = lo + (hi - lo) * 2.0 + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let counts: Vec<f64> = (0..t_count)
        .map(|t| {
            let h = scenario.background_usage[t];
            let gap = c - prices.prices[t];
            if gap <= 0.0 {
                0.0
            } else {
                ((gap / beta).sqrt() - h).max(0.0)
            }
        })
        .collect();
    (c, counts)
}

/// Spreads `m` users across `slots` so total usage `n + h` is level, the
/// water-filling split restricted to a candidate slot set.
fn fill_to_common_level(scenario: &Scenario, slots: &[usize], m: f64) -> Vec<f64> {
    let mut counts = vec![0.0; scenario.num_slots];
    if slots.is_empty() || m <= 0.0 {
        return counts;
    }
    let mut lo = slots
        .iter()
        .map(|&t| scenario.background_usage[t])
        .fold(f64::INFINITY, f64::min);
    let mut hi = slots
        .iter()
        .map(|&t| scenario.background_usage[t])
        .fold(0.0f64, f64::max)
        + m;
    let mass = |v: f64| -> f64 {
        slots.iter().map(|&t| (v - scenario.background_usage[t]).max(0.0)).sum()
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    let v = 0.5 * (lo + hi);
    for &t in slots {
        counts[t] = (v - scenario.background_usage[t]).max(0.0);
    }
    counts
}

/// Exhaustively checks that no user has a unilateral deviation (any item,
/// any slot, or opting out) improving their payoff by more than `tol`.
/// Returns the largest improvement found.
pub fn max_unilateral_gain(
    scenario: &Scenario,
    contract: &Contract,
    prices: &PriceSchedule,
    assignment: &UserAssignment,
) -> Result<f64> {
    let demand = assignment.demand();
    let mut worst = f64::NEG_INFINITY;
    for (u, &ty_idx) in assignment.types.iter().enumerate() {
        let ty = scenario.user_types[ty_idx];
        let current = assignment.choices[u];
        let current_payoff = match current {
            UserChoice { item: Some(k), slot: Some(t) } => {
                user_payoff(scenario, contract.items[k], ty.theta, t, &demand, prices)?
            }
            _ => 0.0,
        };
        let mut best_alt = 0.0f64; // opting out
        for (k, item) in contract.items.iter().enumerate() {
            if item.is_zero() {
                continue;
            }
            for t in 0..scenario.num_slots {
                let mut load = demand.counts[t] + scenario.background_usage[t];
                if current.slot != Some(t) {
                    load += 1.0;
                }
                let payoff = contract.surplus(k, ty.theta)
                    - prices.prices[t]
                    - scenario.congestion_coeff * load * load;
                best_alt = best_alt.max(payoff);
            }
        }
        worst = worst.max(best_alt - current_payoff);
    }
    Ok(worst)
}
