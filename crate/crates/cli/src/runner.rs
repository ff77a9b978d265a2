//! Executes scenarios and writes result rows.

use std::io::Write;
use std::time::Instant;

use aoi_core::access::{run_access, tune_ipra, AccessConfig, AccessProtocol, ThresholdGrid};
use aoi_core::deadline::{
    admit, build_schedule, DeadlineSpec, PeriodicSchedule, PeriodicSchedulePolicy,
};
use aoi_core::mdp::{rvi_full, FullChain, FullRvi, RviSettings};
use aoi_core::policies::MdpPolicy;
use aoi_core::{derive_seed, run_slots, RunMetrics, TerminalSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Point, RunPolicy, ScenarioConfig};
use crate::error::{CliError, Result};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "AOI_THREADS";

/// One CSV row: a single policy run at one sweep point and replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub point: usize,
    pub sweep_variable: String,
    pub sweep_value: Option<f64>,
    pub policy: String,
    pub replication: u64,
    pub seed: u64,
    pub n: usize,
    pub horizon: u64,
    pub avg_aoi: f64,
    pub normalized_aoi: Option<f64>,
    /// Optimal average cost of the truncated chain (`mdp_oracle` only).
    pub optimum: Option<f64>,
    /// IPRA index threshold in effect.
    pub threshold: Option<f64>,
    /// Per-terminal deadline violation frequencies, `;`-separated.
    pub violation_freqs: String,
    pub max_violation_freq: Option<f64>,
    pub idle_slots: u64,
    pub contention_slots: u64,
    pub collisions: u64,
    pub deliveries: u64,
    pub channel_failures: u64,
    pub wall_time_ms: u64,
}

/// Reads [`THREADS_ENV`]; `None` means "let rayon decide".
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Runs every point, policy and replication. Rows come back ordered by
/// point, then policy (in config order), then replication, whatever the
/// thread count.
pub fn run_scenario(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<Row>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("cannot start {threads:?} worker threads: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &ScenarioConfig) -> Result<Vec<Row>> {
    let policies = cfg.run_policies()?;
    let points = cfg.points()?;
    let per_point: Vec<Vec<Row>> = points
        .par_iter()
        .map(|point| run_point(cfg, &policies, point))
        .collect::<Result<_>>()?;
    let mut rows: Vec<Row> = per_point.into_iter().flatten().collect();
    if let Some(base) = &cfg.normalize_by {
        normalize(&mut rows, base);
    }
    Ok(rows)
}

/// Work shared by all runs at one point.
struct Prepared {
    oracle: Option<FullRvi>,
    schedule: Option<PeriodicSchedule>,
    access: AccessConfig,
}

fn prepare(cfg: &ScenarioConfig, policies: &[RunPolicy], point: &Point) -> Result<Prepared> {
    let oracle = if policies.contains(&RunPolicy::MdpOracle) {
        let mut chain = FullChain::from_specs(&point.specs, None, cfg.mdp.max_gap)?;
        if let Some(limit) = cfg.mdp.max_age {
            chain = chain.with_age_limit(limit);
        }
        let settings = RviSettings {
            tolerance: cfg.mdp.tolerance,
            ..RviSettings::default()
        };
        Some(rvi_full(&chain, &settings)?)
    } else {
        None
    };

    let schedule = if policies.contains(&RunPolicy::PeriodicSchedule) {
        let specs = point
            .specs
            .iter()
            .map(DeadlineSpec::from_terminal)
            .collect::<aoi_core::Result<Vec<_>>>()?;
        let report = admit(&specs)?;
        if !report.feasible {
            return Err(CliError::config(format!(
                "point {}: deadlines are not admissible (utilization {:.4})",
                point.index, report.utilization
            )));
        }
        let intervals: Vec<u64> = report.intervals.iter().map(|b| b.gamma_max).collect();
        Some(build_schedule(&intervals, None)?)
    } else {
        None
    };

    let mut access = point.access;
    let swept_threshold = cfg
        .sweep
        .as_ref()
        .is_some_and(|s| s.variable == "index_threshold");
    if cfg.access.tuned()
        && !swept_threshold
        && policies.contains(&RunPolicy::Access(AccessProtocol::Ipra))
    {
        let grid = ThresholdGrid {
            points: cfg.access.grid_points,
            ..ThresholdGrid::auto(&point.specs)
        };
        let tuned = tune_ipra(
            &point.specs,
            &access,
            &grid,
            cfg.access.tune_horizon.unwrap_or(cfg.horizon),
            cfg.access.tune_replications,
            derive_seed(cfg.seed, &[point.index as u64, u64::MAX]),
        )?;
        access = tuned.config;
    }
    Ok(Prepared {
        oracle,
        schedule,
        access,
    })
}

fn run_point(cfg: &ScenarioConfig, policies: &[RunPolicy], point: &Point) -> Result<Vec<Row>> {
    let prepared = prepare(cfg, policies, point)?;
    let jobs: Vec<(RunPolicy, u64)> = policies
        .iter()
        .flat_map(|&p| (0..cfg.replications).map(move |r| (p, r)))
        .collect();
    jobs.par_iter()
        .map(|&(policy, rep)| run_one(cfg, point, &prepared, policy, rep))
        .collect()
}

fn simulate(
    specs: &[TerminalSpec],
    prepared: &Prepared,
    policy: RunPolicy,
    horizon: u64,
    seed: u64,
) -> Result<RunMetrics> {
    let metrics = match policy {
        RunPolicy::Scheduler(kind) => run_slots(specs, kind.build().as_mut(), horizon, seed)?,
        RunPolicy::MdpOracle => {
            let sol = prepared.oracle.clone().expect("oracle solved in prepare");
            run_slots(specs, &mut MdpPolicy::new(sol), horizon, seed)?
        }
        RunPolicy::PeriodicSchedule => {
            let schedule = prepared
                .schedule
                .clone()
                .expect("schedule built in prepare");
            run_slots(
                specs,
                &mut PeriodicSchedulePolicy::new(schedule),
                horizon,
                seed,
            )?
        }
        RunPolicy::Access(protocol) => {
            run_access(specs, &prepared.access, protocol, horizon, seed)?
        }
    };
    Ok(metrics)
}

fn run_one(
    cfg: &ScenarioConfig,
    point: &Point,
    prepared: &Prepared,
    policy: RunPolicy,
    rep: u64,
) -> Result<Row> {
    // Common random numbers: every policy sees the same seed.
    let seed = derive_seed(cfg.seed, &[point.index as u64, rep]);
    let start = Instant::now();
    let m = simulate(&point.specs, prepared, policy, cfg.horizon, seed)?;
    let wall_time_ms = start.elapsed().as_millis() as u64;

    let freqs = m.violation_freqs();
    let violation_freqs = if freqs.iter().all(Option::is_none) {
        String::new()
    } else {
        freqs
            .iter()
            .map(|f| f.map(|v| v.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(";")
    };
    let max_violation_freq = freqs.iter().flatten().copied().reduce(f64::max);
    Ok(Row {
        scenario: cfg.name.clone(),
        point: point.index,
        sweep_variable: cfg
            .sweep
            .as_ref()
            .map(|s| s.variable.clone())
            .unwrap_or_default(),
        sweep_value: point.value,
        policy: policy.name().to_owned(),
        replication: rep,
        seed,
        n: point.specs.len(),
        horizon: cfg.horizon,
        avg_aoi: m.avg_weighted_aoi,
        normalized_aoi: None,
        optimum: match policy {
            RunPolicy::MdpOracle => prepared.oracle.as_ref().map(FullRvi::avg_cost),
            _ => None,
        },
        threshold: match policy {
            RunPolicy::Access(AccessProtocol::Ipra) => Some(prepared.access.index_threshold),
            _ => None,
        },
        violation_freqs,
        max_violation_freq,
        idle_slots: m.channel.idle_slots,
        contention_slots: m.channel.contention_slots,
        collisions: m.channel.collisions,
        deliveries: m.channel.deliveries,
        channel_failures: m.channel.channel_failures,
        wall_time_ms,
    })
}

fn normalize(rows: &mut [Row], base: &str) {
    let reference: Vec<(usize, u64, f64)> = rows
        .iter()
        .filter(|r| r.policy == base)
        .map(|r| (r.point, r.replication, r.avg_aoi))
        .collect();
    for row in rows.iter_mut() {
        row.normalized_aoi = reference
            .iter()
            .find(|(p, rep, _)| *p == row.point && *rep == row.replication)
            .map(|&(_, _, v)| row.avg_aoi / v);
    }
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Mean and 95% confidence half-width of `avg_aoi` over the replications
/// of `policy` at `point`.
pub fn mean_ci(rows: &[Row], point: usize, policy: &str) -> Option<(f64, f64)> {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.point == point && r.policy == policy)
        .map(|r| r.avg_aoi)
        .collect();
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, 1.96 * (var / n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig::from_toml(
            r#"
name = "small"
horizon = 2000
replications = 2
policies = ["whittle", "rr_one", "ipra"]
normalize_by = "whittle"

[[terminals]]
count = 4
rate = 0.3

[sweep]
variable = "lambda"
values = [0.2, 0.6]
"#,
        )
        .unwrap()
    }

    #[test]
    fn rows_are_ordered_and_normalized() {
        let rows = run_scenario(&small(), Some(2)).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 2);
        let keys: Vec<_> = rows
            .iter()
            .map(|r| (r.point, r.policy.clone(), r.replication))
            .collect();
        assert_eq!(keys[0], (0, "whittle".into(), 0));
        assert_eq!(keys[3], (0, "rr_one".into(), 1));
        assert_eq!(keys[6], (1, "whittle".into(), 0));
        for r in rows.iter().filter(|r| r.policy == "whittle") {
            assert_eq!(r.normalized_aoi, Some(1.0));
        }
        assert!(rows
            .iter()
            .filter(|r| r.policy == "ipra")
            .all(|r| r.threshold == Some(0.0)));
        assert_eq!(rows[0].seed, rows[2].seed);
        assert_ne!(rows[0].seed, rows[1].seed);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let strip = |mut rows: Vec<Row>| {
            rows.iter_mut().for_each(|r| r.wall_time_ms = 0);
            rows
        };
        let a = strip(run_scenario(&small(), Some(1)).unwrap());
        let b = strip(run_scenario(&small(), Some(3)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn confidence_interval() {
        let rows = run_scenario(&small(), Some(1)).unwrap();
        let (mean, half) = mean_ci(&rows, 0, "rr_one").unwrap();
        assert!(mean > 0.0 && half >= 0.0);
        assert!(mean_ci(&rows, 0, "aloha").is_none());
    }
}
