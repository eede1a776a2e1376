// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite: end-to-end checks of every solver guarantee, each
//! printing one PASS line (run with `--nocapture` to see them).
//!
//! Random-instance families are drawn from the regimes in `fedprice::synth`:
//! dominance comparisons use server-bound markets (where the sequential
//! solution is a whole-price-space optimum) and the simultaneous-structure
//! checks also use server-tolerant markets (where its equilibrium exists).

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedprice::benchmarks::{solve_ndp, solve_njo, total_user_payoff};
use fedprice::contract::{optimal_contract_for_cost, optimal_rewards, server_response_to_prices};
use fedprice::horizontal::horizontal_equilibrium;
use fedprice::model::*;
use fedprice::pricing::{optimal_demand_distribution, optimal_operator_solution, water_filling};
use fedprice::scenario::load_scenario;
use fedprice::synth::{njo_exposed_instance, random_scenario, Regime};
use fedprice::usergame::{
    integer_cost_slack, max_unilateral_gain, verify_equal_cost_equilibrium, UserAssignment,
    UserChoice,
};

fn replication() -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/replication.toml");
    load_scenario(&path).expect("bundled replication scenario loads").0
}

/// Assigns the first `counts[t]` participating users (types `1..=x`, own
/// items) to slot `t`, in type order.
fn assignment_from_counts(scenario: &Scenario, x: usize, counts: &[f64]) -> UserAssignment {
    let mut assignment = UserAssignment::everyone_out(scenario);
    let mut remaining: Vec<u32> = counts.iter().map(|&n| n.round() as u32).collect();
    let mut slot = 0usize;
    for u in 0..assignment.types.len() {
        if assignment.types[u] >= x {
            continue;
        }
        while slot < remaining.len() && remaining[slot] == 0 {
            slot += 1;
        }
        assert!(slot < remaining.len(), "rounded counts cover all participants");
        remaining[slot] -= 1;
        assignment.choices[u] = UserChoice { item: Some(assignment.types[u]), slot: Some(slot) };
    }
    assignment
}

#[test]
fn acceptance_1_equal_cost_equilibrium() {
    let started = Instant::now();
    let scenario = replication();
    let report = optimal_operator_solution(&scenario).unwrap();

    // Continuous demand: every selected slot carries exactly the common cost.
    let selected = report.demand.selected_slots();
    assert!(!selected.is_empty());
    let costs: Vec<f64> = selected
        .iter()
        .map(|&t| slot_network_cost(&scenario, &report.prices, &report.demand, t).unwrap())
        .collect();
    let spread = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - costs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-9, "selected-slot cost spread {spread}");
    assert!(verify_equal_cost_equilibrium(&scenario, &report.prices, &report.demand, 1e-9).unwrap());

    // Integer-rounded simulation: no user can gain more than the
    // one-user-granularity slack by deviating anywhere.
    let rounded = report.demand.round_largest_remainder();
    let assignment = assignment_from_counts(&scenario, report.threshold_type, &rounded.counts);
    let gain =
        max_unilateral_gain(&scenario, &report.contract, &report.prices, &assignment).unwrap();
    let slack = integer_cost_slack(&scenario, &rounded) + 1e-9;
    assert!(gain <= slack, "deviation gain {gain} exceeds integer slack {slack}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS: equal-cost equilibrium (spread {spread:.2e}, integer gain {gain:.3} <= slack {slack:.3}, {elapsed:?})"
    );
}

#[test]
fn acceptance_2_contract_optimality_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for instance in 0..50 {
        let s = random_scenario(&mut rng, Regime::ServerBound, 3, 3);
        let c = rng.random_range(0.0..0.6) * s.price_cap;
        let (contract, x) = optimal_contract_for_cost(&s, c);
        assert!(x >= 1, "instance {instance}: nothing incentivized");
        let lib_cost = server_cost(&s, &contract);

        // Grid oracle over (threshold, threshold data size).
        let mut oracle = f64::INFINITY;
        for cand_x in 1..=s.num_types() {
            for k in 1..=50 {
                let d_x = s.max_data * k as f64 / 50.0;
                let mut data = vec![0.0; s.num_types()];
                for item in data.iter_mut().take(cand_x - 1) {
                    *item = s.max_data;
                }
                data[cand_x - 1] = d_x;
                let incentivized: Vec<usize> = (0..cand_x).collect();
                let rewards = optimal_rewards(&s, &data, &incentivized, c);
                let candidate = Contract {
                    items: data
                        .iter()
                        .zip(&rewards)
                        .map(|(&d, &r)| ContractItem { data: d, reward: r })
                        .collect(),
                };
                oracle = oracle.min(server_cost(&s, &candidate));
            }
        }
        assert!(
            lib_cost <= oracle + 1e-9,
            "instance {instance}: oracle {oracle} beats contract {lib_cost}"
        );

        // IC exact and threshold IR binding.
        for j in 0..s.num_types() {
            let theta = s.user_types[j].theta;
            let own = if j < x { contract.surplus(j, theta) - c } else { 0.0 };
            for k in 0..s.num_types() {
                if contract.items[k].is_zero() {
                    continue;
                }
                assert!(
                    own >= contract.surplus(k, theta) - c - 1e-12,
                    "instance {instance}: type {j} prefers item {k}"
                );
            }
        }
        let threshold_payoff = contract.surplus(x - 1, s.user_types[x - 1].theta) - c;
        assert!(
            threshold_payoff.abs() <= 1e-12,
            "instance {instance}: threshold IR gap {threshold_payoff}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2 PASS: contract beats 50-point grid oracle on 50 instances ({elapsed:?})");
}

#[test]
fn acceptance_3_kkt_verification() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for instance in 0..100 {
        let s = random_scenario(&mut rng, Regime::ServerBound, 3, 8);
        let m = rng.random_range(1..=s.total_users()) as f64;
        let sol = optimal_demand_distribution(&s, m)
            .unwrap_or_else(|e| panic!("instance {instance}: {e}"));

        assert!(sol.residual <= 1e-9, "instance {instance}: mass residual {}", sol.residual);
        let beta = s.congestion_coeff;
        let gamma = s.operator_cost_coeff;
        for &t in &sol.selected {
            let h = s.background_usage[t];
            let n = sol.counts[t];
            let stationarity = 3.0 * beta * n * n
                + 2.0 * (2.0 * beta * h + gamma) * n
                + (beta * h * h + 2.0 * gamma * h + sol.lambda);
            assert!(
                stationarity.abs() <= 1e-6,
                "instance {instance}: stationarity {stationarity} in slot {t}"
            );
        }

        // Multiplier sandwich between selected and unselected slot keys.
        let neg_lambda = -sol.lambda;
        let tol = 1e-9 * neg_lambda.abs().max(1.0);
        let mut max_selected = f64::NEG_INFINITY;
        let mut min_unselected = f64::INFINITY;
        for t in 0..s.num_slots {
            let key = s.slot_key(t);
            if sol.counts[t] > 0.0 {
                max_selected = max_selected.max(key);
            } else {
                min_unselected = min_unselected.min(key);
            }
        }
        assert!(max_selected <= neg_lambda + tol, "instance {instance}: lower sandwich");
        assert!(neg_lambda <= min_unselected + tol, "instance {instance}: upper sandwich");

        // Anti-bunching: quieter slots attract more users yet stay less
        // loaded in total.
        for &a in &sol.selected {
            for &b in &sol.selected {
                let (ha, hb) = (s.background_usage[a], s.background_usage[b]);
                if ha < hb - 1e-12 {
                    assert!(
                        sol.counts[a] > sol.counts[b] - 1e-9,
                        "instance {instance}: slot {a} (quieter) has fewer users"
                    );
                    assert!(
                        sol.counts[a] + ha < sol.counts[b] + hb + 1e-9,
                        "instance {instance}: slot {a} (quieter) is more loaded"
                    );
                }
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 3 PASS: demand optimality verified on 100 instances ({elapsed:?})");
}

/// Tiny two-slot market with at most four users in the server-bound regime.
fn tiny_market(rng: &mut ChaCha8Rng) -> Scenario {
    loop {
        let num_types = rng.random_range(2..=3usize);
        let mut theta = rng.random_range(0.2..1.0);
        let mut user_types = Vec::new();
        let mut total = 0u32;
        for j in 0..num_types {
            let room = 4 - total - (num_types - 1 - j) as u32;
            let count = rng.random_range(1..=room.min(2));
            total += count;
            user_types.push(UserType { theta, count });
            theta += rng.random_range(0.3..1.0);
        }
        let base = rng.random_range(0.3..1.8);
        let background: Vec<f64> = (0..2).map(|_| base * rng.random_range(0.4..1.6)).collect();
        let beta = rng.random_range(0.02..0.3);
        let gamma = rng.random_range(0.03..0.2);
        let price_cap = rng.random_range(30.0..80.0);
        let max_data = rng.random_range(1.0..5.0);
        let target = price_cap * rng.random_range(0.5..0.9);
        let total_f: f64 = user_types.iter().map(|t| f64::from(t.count)).sum();
        let top = f64::from(user_types.last().unwrap().count);
        let acc_full = 1.0 / (total_f * max_data).sqrt();
        let acc_less = 1.0 / ((total_f - top) * max_data).sqrt();
        let xi = ((acc_less - acc_full) / (top * target)).max(1e-12);
        let s = Scenario::new(background, price_cap, beta, gamma, xi, user_types, max_data)
            .expect("sampled scenario valid");
        if fedprice::synth::is_server_bound_market(&s) {
            return s;
        }
    }
}

#[test]
fn acceptance_4_operator_pricing_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    const POINTS: usize = 400;
    for instance in 0..20 {
        let s = tiny_market(&mut rng);
        let ijd = optimal_operator_solution(&s).unwrap();
        let p0 = s.price_cap;
        let step = p0 / (POINTS - 1) as f64;

        let mut grid_best = f64::NEG_INFINITY;
        let axis: Vec<f64> = (0..POINTS).map(|i| step * i as f64).collect();
        for &p1 in &axis {
            for &p2 in &axis {
                let prices = PriceSchedule { prices: vec![p1, p2] };
                let response = server_response_to_prices(&s, &prices);
                let demand = DemandDistribution::continuous(response.counts.clone());
                grid_best = grid_best.max(operator_profit(&s, &prices, &demand));
            }
        }
        let bound = f64::from(s.total_users()) * step + 1e-6;
        assert!(
            grid_best <= ijd.operator_profit + bound,
            "instance {instance}: grid {grid_best} beats solution {} by more than {bound}",
            ijd.operator_profit
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!("ACCEPTANCE 4 PASS: 400-point price grid never beats the pricing solution ({elapsed:?})");
}

#[test]
fn acceptance_5_water_filling() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut solved = 0;
    while solved < 100 {
        let s = random_scenario(&mut rng, Regime::CongestionTolerant, 3, 6);
        let report = optimal_operator_solution(&s).unwrap();
        if report.threshold_type == 0 {
            continue;
        }
        solved += 1;

        let m = s.users_through(report.threshold_type);
        let wf = water_filling(&s, m).unwrap();
        // Defining equation of the level, recomputed directly.
        let mass: f64 =
            s.background_usage.iter().map(|&h| (wf.level - h).max(0.0)).sum();
        assert!((mass - m).abs() <= 1e-9, "water mass off by {}", mass - m);
        assert!((report.demand.total() - m).abs() <= 1e-9);

        // One price for all chosen slots, and nothing anywhere is cheaper.
        let selected = report.demand.selected_slots();
        let chosen_prices: Vec<f64> =
            selected.iter().map(|&t| report.prices.prices[t]).collect();
        let spread = chosen_prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - chosen_prices.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 1e-9, "chosen-slot prices differ by {spread}");
        let min_price = report.prices.prices.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(chosen_prices[0] <= min_price + 1e-9, "participants not at the cheapest price");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("ACCEPTANCE 5 PASS: water-filling level, uniform prices on 100 instances ({elapsed:?})");
}

#[test]
fn acceptance_6_horizontal_consistency() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut h_nonneg = 0;
    let mut h_neg = 0;
    for instance in 0..50 {
        let s = if instance % 2 == 0 {
            random_scenario(&mut rng, Regime::ServerTolerant, 3, 3)
        } else {
            fedprice::synth::server_bound_instance(&mut rng, 3, 3, 4000)
        };
        let outcome = horizontal_equilibrium(&s).unwrap();
        assert_eq!(
            outcome.exists,
            outcome.statistic.value >= 0.0,
            "instance {instance}: existence flag disagrees with the statistic sign"
        );
        let verification = outcome.verification.expect("vertical solve succeeded");
        if outcome.statistic.value >= 0.0 {
            h_nonneg += 1;
            // The vertical pair must verify as a mutual best response.
            let vertical = optimal_operator_solution(&s).unwrap();
            let tol = 1e-9 * vertical.operator_profit.abs().max(1.0);
            assert!(
                verification.server_cost_gap <= 1e-9 * vertical.server_cost.abs().max(1.0),
                "instance {instance}: server deviates by {}",
                verification.server_cost_gap
            );
            assert!(
                verification.operator_profit_gap <= tol,
                "instance {instance}: operator deviates by {}",
                verification.operator_profit_gap
            );
            // Field-wise agreement of the two structures' outcomes.
            let report = outcome.report.expect("equilibrium report present");
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
            assert!(close(report.server_cost, vertical.server_cost));
            assert!(close(report.operator_profit, vertical.operator_profit));
            assert!(close(report.common_cost, vertical.common_cost));
            assert_eq!(report.threshold_type, vertical.threshold_type);
            for (a, b) in report.user_payoffs.iter().zip(&vertical.user_payoffs) {
                assert!(close(*a, *b));
            }
            for (a, b) in report.prices.prices.iter().zip(&vertical.prices.prices) {
                assert!(close(*a, *b));
            }
        } else {
            h_neg += 1;
            assert!(outcome.report.is_none());
            assert!(!outcome.cycle.is_empty(), "instance {instance}: no cycle diagnostics");
        }
    }
    assert!(h_nonneg > 0 && h_neg > 0, "both statistic signs must be exercised");

    let scenario = replication();
    let outcome = horizontal_equilibrium(&scenario).unwrap();
    assert!(
        outcome.statistic.value < 0.0,
        "replication scenario must have no simultaneous-move equilibrium"
    );
    assert!(!outcome.exists);

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE 6 PASS: existence verdicts consistent on 50 instances ({h_nonneg} with H>=0, {h_neg} with H<0), replication H = {:.4} < 0 ({elapsed:?})",
        outcome.statistic.value
    );
}

#[test]
fn acceptance_7_benchmark_dominance() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for instance in 0..50 {
        let s = njo_exposed_instance(&mut rng, 3, 3, 4000);
        let ijd = optimal_operator_solution(&s).unwrap();
        let ndp = solve_ndp(&s, 400).unwrap();
        let njo = solve_njo(&s).unwrap();
        assert!(
            ijd.operator_profit >= ndp.operator_profit - 1e-9,
            "instance {instance}: NDP profit {} beats IJD {}",
            ndp.operator_profit,
            ijd.operator_profit
        );
        assert!(
            ijd.server_cost <= njo.server_cost + 1e-9,
            "instance {instance}: NJO cost {} beats IJD {}",
            njo.server_cost,
            ijd.server_cost
        );
    }

    // Bundled scenario, with the trace provenance labeled in the bundle
    // itself. Against NJO the joint design wins strictly on every metric.
    // Against NDP the profit win is strict; server cost and total payoff
    // can only tie here, because the uniform-price search tops out at the
    // same server-tolerance level and the same incentivized set: both
    // mechanisms then pay the same rewards, so the comparisons are asserted
    // at the 1e-9 resolution of the price search.
    let scenario = replication();
    let ijd = optimal_operator_solution(&scenario).unwrap();
    let njo = solve_njo(&scenario).unwrap();
    let ndp = solve_ndp(&scenario, 1000).unwrap();
    assert!(ijd.server_cost < njo.server_cost);
    // Cost-per-unit-of-common-cost times the price search's resolution.
    let tie_tol = scenario.reward_weight
        * f64::from(scenario.total_users())
        * 1e-6
        * scenario.price_cap;
    assert!(ijd.server_cost <= ndp.server_cost + tie_tol);
    assert!(ijd.operator_profit > njo.operator_profit && ijd.operator_profit > ndp.operator_profit);
    let payoff = |r: &SolveReport| total_user_payoff(&scenario, r);
    assert!(payoff(&ijd) > payoff(&njo));
    assert!(payoff(&ijd) >= payoff(&ndp) - 1e-9);

    let bundle = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/replication.toml"),
    )
    .unwrap();
    assert!(bundle.to_lowercase().contains("synthetic"), "trace provenance must be labeled");

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE 7 PASS: IJD dominates NDP (profit) and NJO (cost) on 50 instances and strictly on the bundle ({elapsed:?})"
    );
}

#[test]
fn acceptance_8_qualitative_replication() {
    let started = Instant::now();
    let scenario = replication();
    let report = optimal_operator_solution(&scenario).unwrap();

    // The selected slots are exactly the quietest ones.
    let selected = report.demand.selected_slots();
    let mut by_background: Vec<usize> = (0..scenario.num_slots).collect();
    by_background.sort_by(|&a, &b| {
        scenario.background_usage[a].partial_cmp(&scenario.background_usage[b]).unwrap()
    });
    let mut quietest: Vec<usize> = by_background[..selected.len()].to_vec();
    quietest.sort_unstable();
    assert_eq!(selected, quietest, "selected slots are not the lowest-background ones");

    // Within the selection, the busier the slot, the lower its price.
    let mut by_total: Vec<usize> = selected.clone();
    by_total.sort_by(|&a, &b| {
        let ta = report.demand.counts[a] + scenario.background_usage[a];
        let tb = report.demand.counts[b] + scenario.background_usage[b];
        ta.partial_cmp(&tb).unwrap()
    });
    for pair in by_total.windows(2) {
        let total_gap = (report.demand.counts[pair[1]] + scenario.background_usage[pair[1]])
            - (report.demand.counts[pair[0]] + scenario.background_usage[pair[0]]);
        if total_gap > 1e-9 {
            assert!(
                report.prices.prices[pair[0]] > report.prices.prices[pair[1]],
                "price does not fall as total usage rises"
            );
        }
    }

    // The incentivized set is a prefix of types with the threshold type at
    // exactly zero payoff; on this market the three cheapest types are in.
    let x = report.threshold_type;
    assert_eq!(x, 3);
    for j in 0..scenario.num_types() {
        let item = report.contract.items[j];
        if j < x {
            assert!(item.data > 0.0 && item.reward > 0.0);
        } else {
            assert!(item.is_zero());
        }
    }
    assert!(report.user_payoffs[x - 1].abs() <= 1e-9);
    for j in 0..x - 1 {
        assert!(report.user_payoffs[j] > 0.0);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 8 PASS: quietest slots selected, prices fall with usage, threshold type {} at zero payoff ({elapsed:?})"
    , x);
}
