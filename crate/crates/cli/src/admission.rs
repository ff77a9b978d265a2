//! Deadline admission: intervals, schedule and an optional simulation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aoi_core::deadline::{
    admit, build_schedule, AdmissionReport, DeadlineSpec, PeriodicSchedule, PeriodicSchedulePolicy,
};
use aoi_core::{run_slots, TerminalSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn one() -> usize {
    1
}

fn default_seed() -> u64 {
    1
}

/// Input of `aoi admit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmitConfig {
    pub terminals: Vec<DeadlineGroup>,
    /// Schedule hyperperiod; the least common multiple of the intervals
    /// when absent.
    #[serde(default)]
    pub hyperperiod: Option<u64>,
    /// Simulate the schedule for this many slots and report measured
    /// violation frequencies.
    #[serde(default)]
    pub simulate_horizon: Option<u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadlineGroup {
    #[serde(default = "one")]
    pub count: usize,
    pub lambda: f64,
    pub deadline: u64,
    pub epsilon: f64,
}

impl AdmitConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| CliError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|source| CliError::Parse {
            path: PathBuf::from("<admit>"),
            source,
        })
    }

    pub fn specs(&self) -> Result<Vec<DeadlineSpec>> {
        let specs: Vec<DeadlineSpec> = self
            .terminals
            .iter()
            .flat_map(|g| {
                std::iter::repeat(DeadlineSpec::new(g.lambda, g.deadline, g.epsilon)).take(g.count)
            })
            .collect();
        if specs.is_empty() {
            return Err(CliError::config("at least one terminal is required"));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

/// Everything `aoi admit` reports.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmitOutcome {
    pub specs: Vec<DeadlineSpec>,
    pub report: AdmissionReport,
    /// Present when the set is feasible.
    pub schedule: Option<PeriodicSchedule>,
    /// Measured `Pr{AoI > H}` per terminal, when simulated.
    pub simulated: Option<Vec<f64>>,
}

/// Infeasible sets are a result, not an error.
pub fn run_admission(cfg: &AdmitConfig) -> Result<AdmitOutcome> {
    let specs = cfg.specs()?;
    let report = admit(&specs)?;
    let mut schedule = None;
    let mut simulated = None;
    if report.feasible {
        let intervals: Vec<u64> = report.intervals.iter().map(|b| b.gamma_max).collect();
        let sched = build_schedule(&intervals, cfg.hyperperiod)?;
        if let Some(horizon) = cfg.simulate_horizon {
            let terminals: Vec<TerminalSpec> = specs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    TerminalSpec::bernoulli(i, s.lambda).with_deadline(s.deadline, s.epsilon)
                })
                .collect();
            let mut policy = PeriodicSchedulePolicy::new(sched.clone());
            let m = run_slots(&terminals, &mut policy, horizon, cfg.seed)?;
            simulated = Some(
                m.violation_freqs()
                    .into_iter()
                    .map(|f| f.unwrap_or(0.0))
                    .collect(),
            );
        }
        schedule = Some(sched);
    }
    Ok(AdmitOutcome {
        specs,
        report,
        schedule,
        simulated,
    })
}

#[derive(Debug, Serialize)]
struct TerminalRow {
    terminal: usize,
    lambda: f64,
    deadline: u64,
    epsilon: f64,
    gamma_max: u64,
    tail: f64,
    lambert: Option<f64>,
    max_gap: Option<u64>,
    simulated_violation_freq: Option<f64>,
}

fn terminal_rows(o: &AdmitOutcome) -> Vec<TerminalRow> {
    o.specs
        .iter()
        .zip(&o.report.intervals)
        .enumerate()
        .map(|(i, (s, b))| TerminalRow {
            terminal: i,
            lambda: s.lambda,
            deadline: s.deadline,
            epsilon: s.epsilon,
            gamma_max: b.gamma_max,
            tail: b.tail,
            lambert: b.lambert,
            max_gap: o.schedule.as_ref().map(|sc| sc.max_gaps[i]),
            simulated_violation_freq: o.simulated.as_ref().map(|v| v[i]),
        })
        .collect()
}

/// One CSV row per terminal.
pub fn write_csv<W: Write>(o: &AdmitOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in terminal_rows(o) {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Human-readable report.
pub fn write_text<W: Write>(o: &AdmitOutcome, mut out: W) -> std::io::Result<()> {
    let r = &o.report;
    writeln!(out, "feasible: {}", r.feasible)?;
    writeln!(out, "utilization: {:.6}", r.utilization)?;
    if let Some(n) = r.n_mean {
        writeln!(out, "n_mean: {n:.3}")?;
    }
    if let Some(n) = r.n_deadline {
        writeln!(out, "n_deadline: {n:.3}")?;
    }
    if let Some(s) = &o.schedule {
        writeln!(out, "hyperperiod: {}", s.hyperperiod)?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "terminal  lambda  deadline  epsilon   gamma_max  tail        max_gap  simulated"
    )?;
    for t in terminal_rows(o) {
        writeln!(
            out,
            "{:<8}  {:<6}  {:<8}  {:<8}  {:<9}  {:<10.4e}  {:<7}  {}",
            t.terminal,
            t.lambda,
            t.deadline,
            t.epsilon,
            t.gamma_max,
            t.tail,
            t.max_gap
                .map(|g| g.to_string())
                .unwrap_or_else(|| "-".into()),
            t.simulated_violation_freq
                .map(|f| format!("{f:.4e}"))
                .unwrap_or_else(|| "-".into()),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_terminals_fit() {
        let cfg = AdmitConfig::from_toml(
            "simulate_horizon = 20000\n[[terminals]]\ncount = 13\nlambda = 0.5\ndeadline = 20\nepsilon = 0.001\n",
        )
        .unwrap();
        let o = run_admission(&cfg).unwrap();
        assert!(o.report.feasible);
        assert!(o.report.intervals.iter().all(|b| b.gamma_max == 13));
        assert_eq!(o.simulated.as_ref().unwrap().len(), 13);
        let mut text = Vec::new();
        write_text(&o, &mut text).unwrap();
        assert!(String::from_utf8(text)
            .unwrap()
            .starts_with("feasible: true"));
    }

    #[test]
    fn fourteen_terminals_do_not() {
        let cfg = AdmitConfig::from_toml(
            "[[terminals]]\ncount = 14\nlambda = 0.5\ndeadline = 20\nepsilon = 0.001\n",
        )
        .unwrap();
        let o = run_admission(&cfg).unwrap();
        assert!(!o.report.feasible);
        assert!(o.schedule.is_none());
        let mut csv = Vec::new();
        write_csv(&o, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 15);
    }

    #[test]
    fn rejects_bad_terminals() {
        let cfg =
            AdmitConfig::from_toml("[[terminals]]\nlambda = 1.5\ndeadline = 20\nepsilon = 0.001\n")
                .unwrap();
        assert!(run_admission(&cfg).is_err());
        assert!(AdmitConfig::from_toml("terminals = []\nextra = 1\n").is_err());
    }
}
