// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! Configuration ingestion, usage-trace loading, and result serialization.
//!
//! Scenarios are TOML files; background usage comes either inline or from an
//! hourly CSV trace (`hour,usage` with a header row, multiple days averaged
//! per hour) normalized so the slot usages sum to `trace_scale`. Reports are
//! emitted as aligned text and/or comma-separated tables with a fixed field
//! order and every float printed with nine significant digits, so identical
//! inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{slot_network_cost, Scenario, SolveReport, UserType};

/// Non-market knobs carried by a scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Seed for randomized simulation paths (best-response order).
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Grid size for the uniform-price benchmark search.
    #[serde(default = "default_grid")]
    pub ndp_grid_points: usize,
    /// Default output format: "text", "csv", or "both".
    #[serde(default)]
    pub format: Option<String>,
}

fn default_seed() -> u64 {
    0
}

fn default_grid() -> usize {
    1000
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { seed: default_seed(), ndp_grid_points: default_grid(), format: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserTypeConfig {
    theta: f64,
    count: u32,
}

/// On-disk scenario description. Either `background_usage` or `trace_path`
/// must be present (not both).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_slots: usize,
    #[serde(default)]
    pub background_usage: Option<Vec<f64>>,
    /// Hourly usage CSV, resolved relative to the config file.
    #[serde(default)]
    pub trace_path: Option<String>,
    /// The loaded trace is normalized so the usages sum to this value.
    #[serde(default)]
    pub trace_scale: Option<f64>,
    pub price_cap: f64,
    pub congestion_coeff: f64,
    pub operator_cost_coeff: f64,
    pub reward_weight: f64,
    pub max_data: f64,
    user_types: Vec<UserTypeConfig>,
    #[serde(default)]
    pub solver: Option<SolverSettings>,
}

/// Loads and validates a scenario file, returning the market instance and
/// the solver settings.
pub fn load_scenario(path: &Path) -> Result<(Scenario, SolverSettings)> {
    let raw = std::fs::read_to_string(path)?;
    let config: ScenarioConfig =
        toml::from_str(&raw).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    let background = match (&config.background_usage, &config.trace_path) {
        (Some(_), Some(_)) => {
            return Err(Error::invalid(
                "background_usage",
                "and trace_path are mutually exclusive",
            ))
        }
        (Some(h), None) => {
            if h.len() != config.num_slots {
                return Err(Error::invalid("background_usage", "length must equal num_slots"));
            }
            h.clone()
        }
        (None, Some(trace)) => {
            let scale = config.trace_scale.unwrap_or(1.0);
            if !scale.is_finite() || scale <= 0.0 {
                return Err(Error::invalid("trace_scale", "must be positive"));
            }
            let trace_path = path.parent().unwrap_or(Path::new(".")).join(trace);
            load_trace(&trace_path, config.num_slots, scale)?
        }
        (None, None) => {
            return Err(Error::invalid(
                "background_usage",
                "or trace_path must be provided",
            ))
        }
    };

    let scenario = Scenario::new(
        background,
        config.price_cap,
        config.congestion_coeff,
        config.operator_cost_coeff,
        config.reward_weight,
        config
            .user_types
            .iter()
            .map(|t| UserType { theta: t.theta, count: t.count })
            .collect(),
        config.max_data,
    )?;
    Ok((scenario, config.solver.unwrap_or_default()))
}

/// Loads an hourly usage trace: CSV with a `hour,usage` header, hour values
/// `0..num_slots`, multiple rows per hour averaged. The result is scaled so
/// it sums to `scale`.
pub fn load_trace(path: &Path, num_slots: usize, scale: f64) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.len() < 2
        || !headers[0].trim().eq_ignore_ascii_case("hour")
        || !headers[1].trim().eq_ignore_ascii_case("usage")
    {
        return Err(Error::invalid("trace", "header must be `hour,usage`"));
    }
    let mut sums: BTreeMap<usize, (f64, u32)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let hour: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::invalid("trace.hour", "must be an integer"))?;
        let usage: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::invalid("trace.usage", "must be a number"))?;
        if usage < 0.0 {
            return Err(Error::invalid("trace.usage", "must be nonnegative"));
        }
        let entry = sums.entry(hour).or_insert((0.0, 0));
        entry.0 += usage;
        entry.1 += 1;
    }
    if sums.len() != num_slots {
        return Err(Error::invalid(
            "trace",
            format!("aggregates to {} hours but num_slots is {num_slots}", sums.len()),
        ));
    }
    if let Some((&max_hour, _)) = sums.iter().next_back() {
        if max_hour >= num_slots {
            return Err(Error::invalid("trace.hour", "values must lie in 0..num_slots"));
        }
    }
    let averaged: Vec<f64> =
        sums.values().map(|&(sum, n)| sum / f64::from(n)).collect();
    let total: f64 = averaged.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("trace.usage", "must not be all zero"));
    }
    Ok(averaged.into_iter().map(|u| scale * u / total).collect())
}

/// Output format selector for emitted tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::Parse(format!("unknown format `{other}`"))),
        }
    }

    fn text(self) -> bool {
        matches!(self, OutputFormat::Text | OutputFormat::Both)
    }

    fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

/// Renders a float with nine significant digits, or the explicit sentinel
/// `inf` / `-inf`.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    let x = if x == 0.0 { 0.0 } else { x }; // normalize -0.0
    format!("{x:.8e}")
}

/// One table as rows of cells; rendered as aligned text or CSV.
struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        for (i, h) in self.header.iter().enumerate() {
            let _ = write!(out, "{:<width$}  ", h, width = widths[i]);
        }
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                let _ = write!(out, "{:<width$}  ", cell, width = widths[i]);
            }
            out.push('\n');
        }
        out
    }

    fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn write_table(table: &Table, format: OutputFormat, out_dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    if format.text() {
        let path = out_dir.join(format!("{}.txt", table.name));
        std::fs::write(&path, table.to_text())?;
        written.push(path);
    }
    if format.csv() {
        let path = out_dir.join(format!("{}.csv", table.name));
        std::fs::write(&path, table.to_csv())?;
        written.push(path);
    }
    Ok(())
}

fn contract_table(scenario: &Scenario, report: &SolveReport) -> Table {
    let rows = (0..scenario.num_types())
        .map(|j| {
            vec![
                (j + 1).to_string(),
                fmt_sig(scenario.user_types[j].theta),
                scenario.user_types[j].count.to_string(),
                fmt_sig(report.contract.items[j].data),
                fmt_sig(report.contract.items[j].reward),
                fmt_sig(report.user_payoffs[j]),
            ]
        })
        .collect();
    Table {
        name: "contract",
        header: vec!["type", "theta", "count", "data_mb", "reward", "payoff"],
        rows,
    }
}

fn schedule_table(scenario: &Scenario, report: &SolveReport) -> Table {
    let rows = (0..scenario.num_slots)
        .map(|t| {
            let n = report.demand.counts[t];
            let h = scenario.background_usage[t];
            let cost = slot_network_cost(scenario, &report.prices, &report.demand, t)
                .expect("slot in range");
            vec![
                t.to_string(),
                fmt_sig(h),
                fmt_sig(n),
                fmt_sig(n + h),
                fmt_sig(report.prices.prices[t]),
                fmt_sig(cost),
            ]
        })
        .collect();
    Table {
        name: "schedule",
        header: vec!["slot", "background", "fl_users", "total_usage", "price", "slot_cost"],
        rows,
    }
}

fn summary_table(scenario: &Scenario, report: &SolveReport, h_statistic: Option<f64>) -> Table {
    let total_payoff: f64 = report
        .user_payoffs
        .iter()
        .zip(&scenario.user_types)
        .map(|(&w, ty)| w * f64::from(ty.count))
        .sum();
    let mut rows = vec![
        vec!["server_cost".to_string(), fmt_sig(report.server_cost)],
        vec!["operator_profit".to_string(), fmt_sig(report.operator_profit)],
        vec!["threshold_type".to_string(), report.threshold_type.to_string()],
        vec!["common_cost".to_string(), fmt_sig(report.common_cost)],
        vec!["participants".to_string(), fmt_sig(report.demand.total())],
        vec!["total_user_payoff".to_string(), fmt_sig(total_payoff)],
    ];
    if let Some(h) = h_statistic {
        rows.push(vec!["h_statistic".to_string(), fmt_sig(h)]);
    }
    Table { name: "summary", header: vec!["metric", "value"], rows }
}

/// Writes the contract, price/usage, and summary tables for one report.
/// Returns the written paths.
pub fn emit_report(
    scenario: &Scenario,
    report: &SolveReport,
    h_statistic: Option<f64>,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    write_table(&contract_table(scenario, report), format, out_dir, &mut written)?;
    write_table(&schedule_table(scenario, report), format, out_dir, &mut written)?;
    write_table(&summary_table(scenario, report, h_statistic), format, out_dir, &mut written)?;
    Ok(written)
}

/// Writes the benchmark comparison table alongside per-mechanism summaries.
pub fn emit_comparison(
    scenario: &Scenario,
    comparison: &crate::benchmarks::MechanismComparison,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    use crate::benchmarks::{cost_reduction_pct, profit_growth_pct, total_user_payoff};
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let ijd = comparison.ijd.ok();
    let mut rows = Vec::new();
    for outcome in [&comparison.ijd, &comparison.njo, &comparison.ndp] {
        match &outcome.report {
            Ok(report) => {
                let total = total_user_payoff(scenario, report);
                let (cost_delta, profit_delta) = match (outcome.name, ijd) {
                    ("IJD", _) | (_, None) => ("-".to_string(), "-".to_string()),
                    (_, Some(ijd_report)) => (
                        fmt_sig(cost_reduction_pct(ijd_report.server_cost, report.server_cost)),
                        fmt_sig(profit_growth_pct(
                            ijd_report.operator_profit,
                            report.operator_profit,
                        )),
                    ),
                };
                rows.push(vec![
                    outcome.name.to_string(),
                    fmt_sig(report.server_cost),
                    fmt_sig(report.operator_profit),
                    fmt_sig(total),
                    cost_delta,
                    profit_delta,
                ]);
            }
            Err(message) => rows.push(vec![
                outcome.name.to_string(),
                format!("error: {message}"),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]),
        }
    }
    let table = Table {
        name: "comparison",
        header: vec![
            "mechanism",
            "server_cost",
            "operator_profit",
            "total_user_payoff",
            "ijd_cost_reduction_pct",
            "ijd_profit_growth_pct",
        ],
        rows,
    };
    write_table(&table, format, out_dir, &mut written)?;

    for (outcome, dir_name) in [
        (&comparison.ijd, "ijd"),
        (&comparison.njo, "njo"),
        (&comparison.ndp, "ndp"),
    ] {
        if let Ok(report) = &outcome.report {
            let sub = out_dir.join(dir_name);
            written.extend(emit_report(scenario, report, None, format, &sub)?);
        }
    }
    Ok(written)
}
