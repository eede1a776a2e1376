// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: solve a scenario under either interaction
//! structure, compare mechanisms, run the property suites, or sweep a
//! directory of scenarios.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fedprice::benchmarks::compare_mechanisms;
use fedprice::contract::contract_payoffs;
use fedprice::horizontal::{h_statistic, horizontal_equilibrium};
use fedprice::pricing::optimal_operator_solution;
use fedprice::scenario::{emit_comparison, emit_report, fmt_sig, load_scenario, OutputFormat};
use fedprice::synth::{random_scenario, Regime};
use fedprice::usergame::{
    best_response_dynamics, integer_cost_slack, max_unilateral_gain, verify_equal_cost_equilibrium,
};
use fedprice::{Error, Result};

#[derive(Parser)]
#[command(name = "fedprice", version, about = "Participation-contract and network-pricing solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Structure {
    /// Sequential market: operator prices first, server responds, users act.
    Vertical,
    /// Simultaneous market: operator and server move together.
    Horizontal,
    /// Congestion-tolerant analysis: solves the scenario with the users'
    /// congestion sensitivity set to zero (water-filling regime).
    Tolerant,
}

#[derive(Args)]
struct IoArgs {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for result tables.
    #[arg(long)]
    out: PathBuf,
    /// Output format: text, csv, or both.
    #[arg(long, default_value = "both")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the market under one interaction structure.
    Solve {
        structure: Structure,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Solve IJD, NJO, and NDP and tabulate them side by side.
    Compare {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Run the property suites on the scenario plus random instances.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of random instances per suite.
        #[arg(long, default_value_t = 20)]
        trials: u64,
        /// Seed for instance generation and simulations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve every scenario TOML in a directory (one worker thread each).
    Sweep {
        /// Directory of scenario files.
        #[arg(long)]
        scenarios: PathBuf,
        /// Output root; each scenario writes to a subdirectory of its stem.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "both")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { structure, io } => solve(structure, &io),
        Command::Compare { io } => compare(&io),
        Command::Verify { scenario, trials, seed } => verify(&scenario, trials, seed),
        Command::Sweep { scenarios, out, format } => sweep(&scenarios, &out, &format),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn solve(structure: Structure, io: &IoArgs) -> Result<ExitCode> {
    let format = OutputFormat::parse(&io.format)?;
    let (scenario, _settings) = load_scenario(&io.scenario)?;
    match structure {
        Structure::Vertical => {
            let report = optimal_operator_solution(&scenario)?;
            let h = h_statistic(&scenario).ok().map(|s| s.value);
            let files = emit_report(&scenario, &report, h, format, &io.out)?;
            print_summary("vertical", &report, h);
            println!("wrote {} files to {}", files.len(), io.out.display());
        }
        Structure::Horizontal => {
            let outcome = horizontal_equilibrium(&scenario)?;
            println!(
                "H statistic = {} -> equilibrium {}",
                fmt_sig(outcome.statistic.value),
                if outcome.exists { "exists (same as vertical)" } else { "does not exist" }
            );
            if let Some(report) = &outcome.report {
                let files = emit_report(
                    &scenario,
                    report,
                    Some(outcome.statistic.value),
                    format,
                    &io.out,
                )?;
                print_summary("horizontal", report, Some(outcome.statistic.value));
                println!("wrote {} files to {}", files.len(), io.out.display());
            } else {
                emit_cycle(&outcome, format, &io.out)?;
                println!(
                    "recorded {} best-response steps to {}",
                    outcome.cycle.len(),
                    io.out.display()
                );
            }
        }
        Structure::Tolerant => {
            let mut tolerant = scenario.clone();
            tolerant.congestion_coeff = 0.0;
            let report = optimal_operator_solution(&tolerant)?;
            let h = h_statistic(&tolerant).ok().map(|s| s.value);
            let files = emit_report(&tolerant, &report, h, format, &io.out)?;
            print_summary("tolerant", &report, h);
            println!("wrote {} files to {}", files.len(), io.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(label: &str, report: &fedprice::SolveReport, h: Option<f64>) {
    println!(
        "{label}: threshold type {} | common cost {} | server cost {} | operator profit {}{}",
        report.threshold_type,
        fmt_sig(report.common_cost),
        fmt_sig(report.server_cost),
        fmt_sig(report.operator_profit),
        h.map(|v| format!(" | H {}", fmt_sig(v))).unwrap_or_default(),
    );
}

fn emit_cycle(
    outcome: &fedprice::horizontal::HorizontalOutcome,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut text =
        String::from("iteration  selected_types  common_cost  operator_profit  server_cost\n");
    let mut csv = String::from("iteration,selected_types,common_cost,operator_profit,server_cost\n");
    for step in &outcome.cycle {
        let types = step
            .selected_types
            .iter()
            .map(|t| (t + 1).to_string())
            .collect::<Vec<_>>()
            .join("+");
        let types = if types.is_empty() { "-".to_string() } else { types };
        let cost = step.common_cost.map(fmt_sig).unwrap_or_else(|| "-".into());
        text.push_str(&format!(
            "{}  {}  {}  {}  {}\n",
            step.iteration,
            types,
            cost,
            fmt_sig(step.operator_profit),
            fmt_sig(step.server_cost),
        ));
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            step.iteration,
            types,
            cost,
            fmt_sig(step.operator_profit),
            fmt_sig(step.server_cost),
        ));
    }
    if matches!(format, OutputFormat::Text | OutputFormat::Both) {
        std::fs::write(out_dir.join("cycle.txt"), &text)?;
    }
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        std::fs::write(out_dir.join("cycle.csv"), &csv)?;
    }
    Ok(())
}

fn compare(io: &IoArgs) -> Result<ExitCode> {
    let format = OutputFormat::parse(&io.format)?;
    let (scenario, _) = load_scenario(&io.scenario)?;
    let comparison = compare_mechanisms(&scenario);
    let files = emit_comparison(&scenario, &comparison, format, &io.out)?;
    for outcome in [&comparison.ijd, &comparison.njo, &comparison.ndp] {
        match &outcome.report {
            Ok(r) => print_summary(outcome.name, r, None),
            Err(e) => println!("{}: failed: {e}", outcome.name),
        }
    }
    println!("wrote {} files to {}", files.len(), io.out.display());
    Ok(ExitCode::SUCCESS)
}

struct Suite {
    name: &'static str,
    failures: Vec<String>,
    runs: usize,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, failures: Vec::new(), runs: 0 }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.runs += 1;
        if !ok {
            self.failures.push(detail());
        }
    }

    fn report(&self) -> bool {
        if self.failures.is_empty() {
            println!("PASS {} ({} checks)", self.name, self.runs);
            true
        } else {
            println!(
                "FAIL {} ({} of {} checks failed)",
                self.name,
                self.failures.len(),
                self.runs
            );
            for f in self.failures.iter().take(5) {
                println!("  {f}");
            }
            false
        }
    }
}

fn verify(scenario_path: &Path, trials: u64, seed: u64) -> Result<ExitCode> {
    use rand::SeedableRng;
    let (scenario, _) = load_scenario(scenario_path)?;
    let mut all_ok = true;

    // Scenario-level equilibrium checks.
    let mut suite = Suite::new("scenario equilibrium");
    let report = optimal_operator_solution(&scenario)?;
    if report.threshold_type > 0 {
        suite.check(
            verify_equal_cost_equilibrium(&scenario, &report.prices, &report.demand, 1e-6)
                .unwrap_or(false),
            || "selected slots do not share a common cost".into(),
        );
        let sim = best_response_dynamics(&scenario, &report.contract, &report.prices, seed, 200)?;
        suite.check(sim.converged, || "best-response dynamics did not converge".into());
        let gain =
            max_unilateral_gain(&scenario, &report.contract, &report.prices, &sim.assignment)?;
        let slack = integer_cost_slack(&scenario, &sim.assignment.demand()) + 1e-9;
        suite.check(gain <= slack, || {
            format!("profitable deviation of {gain} exceeds integer slack {slack}")
        });
        let payoffs = contract_payoffs(
            &scenario,
            &report.contract,
            report.threshold_type,
            report.common_cost,
        );
        suite.check(
            payoffs[report.threshold_type - 1].abs() <= 1e-9 * report.common_cost.max(1.0),
            || "threshold type payoff does not bind at zero".into(),
        );
    }
    all_ok &= suite.report();

    // Randomized demand-optimality checks.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite::new("demand optimality (random instances)");
    for _ in 0..trials {
        let s = random_scenario(&mut rng, Regime::ServerBound, 3, 6);
        let m = f64::from(s.total_users());
        match fedprice::pricing::optimal_demand_distribution(&s, m) {
            Ok(sol) => {
                suite.check(sol.residual <= 1e-9, || format!("mass residual {}", sol.residual));
                let beta = s.congestion_coeff;
                let gamma = s.operator_cost_coeff;
                for &t in &sol.selected {
                    let h = s.background_usage[t];
                    let n = sol.counts[t];
                    let stationarity = 3.0 * beta * n * n
                        + 2.0 * (2.0 * beta * h + gamma) * n
                        + (beta * h * h + 2.0 * gamma * h + sol.lambda);
                    suite.check(stationarity.abs() <= 1e-6, || {
                        format!("stationarity residual {stationarity} in slot {t}")
                    });
                }
            }
            Err(e) => suite.check(false, || format!("demand solve failed: {e}")),
        }
        let s0 = random_scenario(&mut rng, Regime::CongestionTolerant, 3, 6);
        let m0 = f64::from(s0.total_users());
        match fedprice::pricing::water_filling(&s0, m0) {
            Ok(wf) => suite.check(
                (wf.counts.iter().sum::<f64>() - m0).abs() <= 1e-9,
                || "water level does not conserve mass".into(),
            ),
            Err(e) => suite.check(false, || format!("water filling failed: {e}")),
        }
    }
    all_ok &= suite.report();

    // Randomized contract-screening checks.
    let mut suite = Suite::new("contract screening (random instances)");
    for _ in 0..trials {
        let s = random_scenario(&mut rng, Regime::ServerBound, 3, 3);
        let c = s.price_cap * 0.3;
        let (contract, x) = fedprice::contract::optimal_contract_for_cost(&s, c);
        if x == 0 {
            continue;
        }
        for j in 0..s.num_types() {
            let theta = s.user_types[j].theta;
            let own = if j < x { contract.surplus(j, theta) - c } else { 0.0 };
            for k in 0..x {
                suite.check(own >= contract.surplus(k, theta) - c - 1e-12, || {
                    format!("type {j} prefers item {k}")
                });
            }
        }
        let threshold_payoff = contract.surplus(x - 1, s.user_types[x - 1].theta) - c;
        suite.check(threshold_payoff.abs() <= 1e-9 * c.max(1.0), || {
            format!("threshold payoff {threshold_payoff} does not bind")
        });
    }
    all_ok &= suite.report();

    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn sweep(scenarios_dir: &Path, out_root: &Path, format: &str) -> Result<ExitCode> {
    let format = OutputFormat::parse(format)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenarios_dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid("scenarios", "directory contains no .toml files"));
    }

    let results: Vec<(PathBuf, Result<()>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|path| {
                scope.spawn(move || {
                    let stem =
                        path.file_stem().unwrap_or_default().to_string_lossy().to_string();
                    let out_dir = out_root.join(stem);
                    let run = || -> Result<()> {
                        let (scenario, _) = load_scenario(path)?;
                        let report = optimal_operator_solution(&scenario)?;
                        let h = h_statistic(&scenario).ok().map(|s| s.value);
                        emit_report(&scenario, &report, h, format, &out_dir)?;
                        Ok(())
                    };
                    (path.clone(), run())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut worst = 0;
    for (path, result) in &results {
        match result {
            Ok(()) => println!("ok   {}", path.display()),
            Err(e) => {
                println!("fail {} ({e})", path.display());
                worst = worst.max(e.exit_code());
            }
        }
    }
    Ok(ExitCode::from(worst as u8))
}
