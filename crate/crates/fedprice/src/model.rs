// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Domain types for the federated-learning network market, plus the three
//! payoff/cost functionals every solver builds on.
//!
//! The market has three kinds of participants:
//!
//! - **Users** train a model on local data and upload the result in one of
//!   `T` time slots. A type-`j` user has marginal data cost `theta_j`; a slot
//!   costs its network price plus a quadratic congestion term.
//! - The **server** buys training data through a menu of per-type contract
//!   items `(data_size, reward)` and pays for model inaccuracy through the
//!   bound term `1 / sqrt(total data)`.
//! - The **operator** collects slot prices and pays a quadratic network cost
//!   on total usage (uploads plus background traffic) in every slot.
//!
//! All types here are immutable values and all functions are pure, so
//! everything can be shared freely across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One user type: marginal data-usage cost and population count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserType {
    /// Marginal cost per MB of training data (`theta`).
    pub theta: f64,
    /// Number of users of this type.
    pub count: u32,
}

/// A full market instance: time structure, background traffic, cost
/// coefficients, and the user-type population.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Number of time slots `T` in one training round.
    pub num_slots: usize,
    /// Background network usage `h(t)`, one entry per slot, in normalized
    /// user-count units.
    pub background_usage: Vec<f64>,
    /// Regulatory price cap `p0` (cents). Every slot price lies in `[0, p0]`.
    pub price_cap: f64,
    /// Users' congestion sensitivity `beta`. Zero means congestion-tolerant.
    pub congestion_coeff: f64,
    /// Operator's weight `gamma` on its quadratic network cost.
    pub operator_cost_coeff: f64,
    /// Server's weight `xi` on total rewards relative to accuracy loss.
    pub reward_weight: f64,
    /// User types ordered by strictly increasing `theta`.
    pub user_types: Vec<UserType>,
    /// Maximum data size a single user can contribute per round (MB).
    pub max_data: f64,
}

impl Scenario {
    /// Builds a scenario and checks every structural invariant, returning a
    /// validation error naming the offending field otherwise.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        background_usage: Vec<f64>,
        price_cap: f64,
        congestion_coeff: f64,
        operator_cost_coeff: f64,
        reward_weight: f64,
        user_types: Vec<UserType>,
        max_data: f64,
    ) -> Result<Self> {
        let scenario = Scenario {
            num_slots: background_usage.len(),
            background_usage,
            price_cap,
            congestion_coeff,
            operator_cost_coeff,
            reward_weight,
            user_types,
            max_data,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slots == 0 || self.background_usage.len() != self.num_slots {
            return Err(Error::invalid("num_slots", "must be positive and match background_usage length"));
        }
        if self.background_usage.iter().any(|&h| !h.is_finite() || h < 0.0) {
            return Err(Error::invalid("background_usage", "entries must be finite and nonnegative"));
        }
        if !self.price_cap.is_finite() || self.price_cap < 0.0 {
            return Err(Error::invalid("price_cap", "must be finite and nonnegative"));
        }
        if !self.congestion_coeff.is_finite() || self.congestion_coeff < 0.0 {
            return Err(Error::invalid("congestion_coeff", "must be finite and nonnegative"));
        }
        if !self.operator_cost_coeff.is_finite() || self.operator_cost_coeff <= 0.0 {
            return Err(Error::invalid("operator_cost_coeff", "must be finite and positive"));
        }
        if !self.reward_weight.is_finite() || self.reward_weight <= 0.0 {
            return Err(Error::invalid("reward_weight", "must be finite and positive"));
        }
        if self.user_types.is_empty() {
            return Err(Error::invalid("user_types", "at least one type required"));
        }
        if self.user_types.iter().any(|t| !t.theta.is_finite() || t.theta <= 0.0) {
            return Err(Error::invalid("user_types.theta", "must be finite and positive"));
        }
        if self.user_types.windows(2).any(|w| w[0].theta >= w[1].theta) {
            return Err(Error::invalid("user_types.theta", "not strictly increasing"));
        }
        if self.user_types.iter().any(|t| t.count == 0) {
            return Err(Error::invalid("user_types.count", "must be positive"));
        }
        if !self.max_data.is_finite() || self.max_data <= 0.0 {
            return Err(Error::invalid("max_data", "must be finite and positive"));
        }
        Ok(())
    }

    /// Number of user types `J`.
    pub fn num_types(&self) -> usize {
        self.user_types.len()
    }

    /// Total user count `I`.
    pub fn total_users(&self) -> u32 {
        self.user_types.iter().map(|t| t.count).sum()
    }

    /// Number of users of types `1..=x` (`x` is 1-based; `x = 0` gives 0).
    pub fn users_through(&self, x: usize) -> f64 {
        self.user_types[..x].iter().map(|t| f64::from(t.count)).sum()
    }

    pub fn check_slot(&self, t: usize) -> Result<()> {
        if t < self.num_slots {
            Ok(())
        } else {
            Err(Error::SlotOutOfRange { slot: t, num_slots: self.num_slots })
        }
    }

    /// Sorting key `h(t) * (beta h(t) + 2 gamma)` that orders slots by how
    /// much the operator wants them used (smaller is better).
    pub fn slot_key(&self, t: usize) -> f64 {
        let h = self.background_usage[t];
        h * (self.congestion_coeff * h + 2.0 * self.operator_cost_coeff)
    }
}

/// One contract item: data size required and reward paid.
///
/// The zero item `(0, 0)` denotes a type that is not incentivized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractItem {
    pub data: f64,
    pub reward: f64,
}

impl ContractItem {
    pub const ZERO: ContractItem = ContractItem { data: 0.0, reward: 0.0 };

    pub fn is_zero(&self) -> bool {
        self.data == 0.0 && self.reward == 0.0
    }
}

/// A menu of contract items, one per user type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub items: Vec<ContractItem>,
}

impl Contract {
    pub fn zero(num_types: usize) -> Self {
        Contract { items: vec![ContractItem::ZERO; num_types] }
    }

    /// Surplus `reward - theta * data` a user with marginal cost `theta`
    /// gets from item `k`, before network costs.
    pub fn surplus(&self, k: usize, theta: f64) -> f64 {
        self.items[k].reward - theta * self.items[k].data
    }
}

/// Per-slot network prices over the time frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub prices: Vec<f64>,
}

impl PriceSchedule {
    pub fn uniform(num_slots: usize, price: f64) -> Self {
        PriceSchedule { prices: vec![price; num_slots] }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.prices.len() != scenario.num_slots {
            return Err(Error::invalid("prices", "length must equal num_slots"));
        }
        if self.prices.iter().any(|&p| !p.is_finite() || p < 0.0 || p > scenario.price_cap) {
            return Err(Error::invalid("prices", "entries must lie in [0, price_cap]"));
        }
        Ok(())
    }
}

/// The number of uploading users in each slot.
///
/// Solver paths hold continuous counts (the KKT solution is a continuous
/// relaxation); simulation paths hold realized integer counts. The
/// `integral` flag records which view this is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandDistribution {
    pub counts: Vec<f64>,
    pub integral: bool,
}

impl DemandDistribution {
    pub fn empty(num_slots: usize) -> Self {
        DemandDistribution { counts: vec![0.0; num_slots], integral: true }
    }

    pub fn continuous(counts: Vec<f64>) -> Self {
        DemandDistribution { counts, integral: false }
    }

    pub fn from_integer(counts: Vec<u32>) -> Self {
        DemandDistribution { counts: counts.into_iter().map(f64::from).collect(), integral: true }
    }

    /// Slots chosen by at least one user.
    pub fn selected_slots(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&t| self.counts[t] > 0.0).collect()
    }

    /// Slots no user chose.
    pub fn unselected_slots(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&t| self.counts[t] == 0.0).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Rounds continuous counts to integers by largest remainder, preserving
    /// the (rounded) total.
    pub fn round_largest_remainder(&self) -> DemandDistribution {
        let total = self.total().round() as i64;
        let mut floors: Vec<i64> = self.counts.iter().map(|&n| n.floor() as i64).collect();
        let assigned: i64 = floors.iter().sum();
        let mut remainder = total - assigned;
        // Largest fractional parts get the leftover units; ties go to the
        // lowest slot index.
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = self.counts[a] - self.counts[a].floor();
            let fb = self.counts[b] - self.counts[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &t in &order {
            if remainder <= 0 {
                break;
            }
            floors[t] += 1;
            remainder -= 1;
        }
        DemandDistribution {
            counts: floors.into_iter().map(|n| n.max(0) as f64).collect(),
            integral: true,
        }
    }
}

/// Equilibrium outcome of a full market solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub contract: Contract,
    pub prices: PriceSchedule,
    pub demand: DemandDistribution,
    /// Highest incentivized (participating) type, 1-based; 0 means nobody
    /// participates.
    pub threshold_type: usize,
    /// Common network cost `c` shared by all chosen slots at equilibrium.
    pub common_cost: f64,
    pub server_cost: f64,
    pub operator_profit: f64,
    /// Realized per-type payoff; zero for types above the threshold.
    pub user_payoffs: Vec<f64>,
}

/// Payoff of a single user of marginal cost `theta` choosing `item` and
/// uploading in slot `t`:
/// `reward - theta * data - p(t) - beta * (n_t + h(t))^2`.
///
/// `demand` must already count the evaluating user in `n_t`.
pub fn user_payoff(
    scenario: &Scenario,
    item: ContractItem,
    theta: f64,
    t: usize,
    demand: &DemandDistribution,
    prices: &PriceSchedule,
) -> Result<f64> {
    scenario.check_slot(t)?;
    let load = demand.counts[t] + scenario.background_usage[t];
    Ok(item.reward
        - theta * item.data
        - prices.prices[t]
        - scenario.congestion_coeff * load * load)
}

/// Server cost `1 / sqrt(sum I_j d_j) + xi * sum I_j r_j`.
///
/// With no data bought at all the accuracy term diverges; that case returns
/// `f64::INFINITY`, which orders above every finite cost so argmin logic
/// needs no special cases.
pub fn server_cost(scenario: &Scenario, contract: &Contract) -> f64 {
    let mut total_data = 0.0;
    let mut total_rewards = 0.0;
    for (ty, item) in scenario.user_types.iter().zip(&contract.items) {
        let count = f64::from(ty.count);
        total_data += count * item.data;
        total_rewards += count * item.reward;
    }
    if total_data <= 0.0 {
        return f64::INFINITY;
    }
    1.0 / total_data.sqrt() + scenario.reward_weight * total_rewards
}

/// Operator profit `sum_t n_t p(t) - gamma * sum_t (n_t + h(t))^2`.
///
/// The cost term runs over all `T` slots: background usage costs the
/// operator even in slots no user picked.
pub fn operator_profit(
    scenario: &Scenario,
    prices: &PriceSchedule,
    demand: &DemandDistribution,
) -> f64 {
    let mut revenue = 0.0;
    let mut cost = 0.0;
    for t in 0..scenario.num_slots {
        revenue += demand.counts[t] * prices.prices[t];
        let load = demand.counts[t] + scenario.background_usage[t];
        cost += load * load;
    }
    revenue - scenario.operator_cost_coeff * cost
}

/// Cost a user faces in slot `t` given realized demand:
/// `p(t) + beta * (n_t + h(t))^2`.
pub fn slot_network_cost(
    scenario: &Scenario,
    prices: &PriceSchedule,
    demand: &DemandDistribution,
    t: usize,
) -> Result<f64> {
    scenario.check_slot(t)?;
    let load = demand.counts[t] + scenario.background_usage[t];
    Ok(prices.prices[t] + scenario.congestion_coeff * load * load)
}
