//! Scenario files: one TOML document per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use aoi_core::access::{AccessConfig, AccessProtocol};
use aoi_core::policies::PolicyKind;
use aoi_core::{Arrivals, TerminalSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn default_seed() -> u64 {
    1
}

fn default_horizon() -> u64 {
    1_000_000
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "one")]
    pub replications: u64,
    /// CSV destination; standard output when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub terminals: Vec<TerminalGroup>,
    pub policies: Vec<String>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub access: AccessSection,
    #[serde(default)]
    pub mdp: MdpSection,
    /// Policy whose average AoI (same point, same replication) divides every
    /// row's average AoI in the `normalized_aoi` column.
    #[serde(default)]
    pub normalize_by: Option<String>,
}

/// `count` identical terminals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalGroup {
    #[serde(default = "one_usize")]
    pub count: usize,
    /// Bernoulli arrival rate. Exactly one of `rate` and `period` is set.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub period: Option<u64>,
    /// Periodic phase; defaults to `id mod period`.
    #[serde(default)]
    pub phase: Option<u64>,
    #[serde(default = "unit")]
    pub weight: f64,
    #[serde(default)]
    pub error_prob: f64,
    #[serde(default)]
    pub deadline: Option<u64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl TerminalGroup {
    pub fn bernoulli(count: usize, rate: f64) -> Self {
        Self {
            count,
            rate: Some(rate),
            period: None,
            phase: None,
            weight: 1.0,
            error_prob: 0.0,
            deadline: None,
            epsilon: None,
        }
    }
}

/// One swept parameter. `variable` is `lambda`, `n`, `error_prob`, or one
/// of the access parameters `t_s`, `p`, `index_threshold`; or `lambda.K`, `error_prob.K`, `weight.K` for terminal `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: String,
    pub values: Vec<f64>,
}

/// Index threshold of IPRA: a number, or `"tune"` to search for it at every
/// sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Value(f64),
    Mode(String),
}

impl Default for ThresholdSetting {
    fn default() -> Self {
        ThresholdSetting::Value(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessSection {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "one")]
    pub t_s: u64,
    /// Defaults to `t_s`.
    #[serde(default)]
    pub t_c: Option<u64>,
    #[serde(default)]
    pub index_threshold: ThresholdSetting,
    /// Horizon of each tuning run; defaults to the scenario horizon.
    #[serde(default)]
    pub tune_horizon: Option<u64>,
    #[serde(default = "one")]
    pub tune_replications: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Start terminals from staggered ages rather than all alike.
    #[serde(default)]
    pub staggered_start: bool,
}

fn default_p() -> f64 {
    0.2
}

fn default_grid_points() -> usize {
    25
}

impl Default for AccessSection {
    fn default() -> Self {
        Self {
            p: default_p(),
            t_s: 1,
            t_c: None,
            index_threshold: ThresholdSetting::default(),
            tune_horizon: None,
            tune_replications: 1,
            grid_points: default_grid_points(),
            staggered_start: false,
        }
    }
}

impl AccessSection {
    pub fn tuned(&self) -> bool {
        matches!(&self.index_threshold, ThresholdSetting::Mode(m) if m == "tune")
    }
}

/// Truncation of the two-terminal oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    /// Upper limit on the age cap of Bernoulli terminals. The cap itself is
    /// chosen from the arrival rate so that at most `1e-6` of the age tail
    /// is cut off.
    #[serde(default)]
    pub max_age: Option<u64>,
    #[serde(default = "default_max_gap")]
    pub max_gap: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_max_gap() -> u64 {
    30
}

fn default_tolerance() -> f64 {
    1e-8
}

impl Default for MdpSection {
    fn default() -> Self {
        Self {
            max_age: None,
            max_gap: default_max_gap(),
            tolerance: default_tolerance(),
        }
    }
}

/// Everything a scenario can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunPolicy {
    Scheduler(PolicyKind),
    /// Simulates the optimal two-terminal policy; rows also carry its
    /// optimal average cost.
    MdpOracle,
    /// Serves each terminal at its longest admissible deadline interval.
    PeriodicSchedule,
    Access(AccessProtocol),
}

impl RunPolicy {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "mdp_oracle" => RunPolicy::MdpOracle,
            "periodic_schedule" => RunPolicy::PeriodicSchedule,
            "ipra" => RunPolicy::Access(AccessProtocol::Ipra),
            "aloha" => RunPolicy::Access(AccessProtocol::Aloha),
            "centralized_whittle" => RunPolicy::Access(AccessProtocol::CentralizedWhittle),
            other => RunPolicy::Scheduler(
                other
                    .parse()
                    .map_err(|_| CliError::config(format!("unknown policy `{other}`")))?,
            ),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunPolicy::Scheduler(k) => k.name(),
            RunPolicy::MdpOracle => "mdp_oracle",
            RunPolicy::PeriodicSchedule => "periodic_schedule",
            RunPolicy::Access(p) => p.name(),
        }
    }
}

/// Names accepted in `policies`.
pub const POLICY_NAMES: [&str; 10] = [
    "whittle",
    "whittle_no_buffer",
    "rr_one",
    "max_age",
    "stationary_random",
    "mdp_oracle",
    "periodic_schedule",
    "ipra",
    "aloha",
    "centralized_whittle",
];

/// One evaluated parameter combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub index: usize,
    pub value: Option<f64>,
    pub specs: Vec<TerminalSpec>,
    pub access: AccessConfig,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Parse { source, .. } => CliError::Parse {
                path: path.to_owned(),
                source,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|source| CliError::Parse {
            path: PathBuf::from("<scenario>"),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario configs always serialize")
    }

    pub fn run_policies(&self) -> Result<Vec<RunPolicy>> {
        self.policies.iter().map(|p| RunPolicy::parse(p)).collect()
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(CliError::config("`name` must not be empty"));
        }
        if self.horizon == 0 {
            return Err(CliError::config("`horizon` must be at least 1"));
        }
        if self.replications == 0 {
            return Err(CliError::config("`replications` must be at least 1"));
        }
        if self.terminals.is_empty() {
            return Err(CliError::config(
                "at least one [[terminals]] group is required",
            ));
        }
        if self.policies.is_empty() {
            return Err(CliError::config("`policies` must name at least one policy"));
        }
        let policies = self.run_policies()?;
        if let Some(base) = &self.normalize_by {
            if !self.policies.iter().any(|p| p == base) {
                return Err(CliError::config(format!(
                    "normalize_by = `{base}` is not among the policies"
                )));
            }
        }
        if let ThresholdSetting::Mode(m) = &self.access.index_threshold {
            if m != "tune" {
                return Err(CliError::config(format!(
                    "index_threshold must be a number or \"tune\", got `{m}`"
                )));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(CliError::config("sweep has no values"));
            }
        }
        for point in self.points()? {
            if policies.contains(&RunPolicy::MdpOracle) && point.specs.len() != 2 {
                return Err(CliError::config(format!(
                    "mdp_oracle needs exactly 2 terminals, point {} has {}",
                    point.index,
                    point.specs.len()
                )));
            }
            if policies.contains(&RunPolicy::PeriodicSchedule)
                && point.specs.iter().any(|s| s.deadline.is_none())
            {
                return Err(CliError::config(
                    "periodic_schedule needs a deadline and epsilon on every terminal",
                ));
            }
            if policies.iter().any(|p| matches!(p, RunPolicy::Access(_))) {
                point.access.validate()?;
            }
        }
        Ok(())
    }

    /// Expands the sweep into concrete terminal lists and access settings.
    pub fn points(&self) -> Result<Vec<Point>> {
        let values: Vec<Option<f64>> = match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        };
        values
            .into_iter()
            .enumerate()
            .map(|(index, value)| self.point(index, value))
            .collect()
    }

    fn point(&self, index: usize, value: Option<f64>) -> Result<Point> {
        let mut groups = self.terminals.clone();
        let mut access = AccessConfig {
            p: self.access.p,
            index_threshold: match self.access.index_threshold {
                ThresholdSetting::Value(v) => v,
                ThresholdSetting::Mode(_) => 0.0,
            },
            t_s: self.access.t_s,
            t_c: self.access.t_c.unwrap_or(self.access.t_s),
            delta: 1,
            staggered_start: self.access.staggered_start,
        };
        let mut per_terminal: Option<(String, usize, f64)> = None;
        if let (Some(sweep), Some(v)) = (&self.sweep, value) {
            match sweep.variable.as_str() {
                "lambda" => {
                    if !groups.iter().any(|g| g.rate.is_some()) {
                        return Err(CliError::config(
                            "sweeping lambda needs Bernoulli terminals",
                        ));
                    }
                    for g in groups.iter_mut().filter(|g| g.rate.is_some()) {
                        g.rate = Some(v);
                    }
                }
                "error_prob" => groups.iter_mut().for_each(|g| g.error_prob = v),
                "n" => {
                    if groups.len() != 1 {
                        return Err(CliError::config(
                            "sweeping n needs exactly one terminal group",
                        ));
                    }
                    groups[0].count = as_count(v)?;
                }
                "index_threshold" => access.index_threshold = v,
                "p" => access.p = v,
                "t_s" => {
                    access.t_s = as_count(v)? as u64;
                    access.t_c = self.access.t_c.unwrap_or(access.t_s);
                }
                other => {
                    let (param, id) = other
                        .split_once('.')
                        .filter(|(p, _)| matches!(*p, "lambda" | "error_prob" | "weight"))
                        .ok_or_else(|| {
                            CliError::config(format!("unknown sweep variable `{other}`"))
                        })?;
                    let id = id
                        .parse()
                        .map_err(|_| CliError::config(format!("bad terminal id in `{other}`")))?;
                    per_terminal = Some((param.to_owned(), id, v));
                }
            }
        }

        let mut specs = Vec::new();
        for g in &groups {
            for _ in 0..g.count {
                specs.push(build_spec(specs.len(), g)?);
            }
        }
        if let Some((param, id, v)) = per_terminal {
            let spec = specs.get_mut(id).ok_or_else(|| {
                CliError::config(format!("sweep names terminal {id}, which does not exist"))
            })?;
            match param.as_str() {
                "lambda" => match &mut spec.arrivals {
                    Arrivals::Bernoulli { rate } => *rate = v,
                    Arrivals::Periodic { .. } => {
                        return Err(CliError::config(format!("terminal {id} is periodic")))
                    }
                },
                "error_prob" => spec.error_prob = v,
                _ => spec.weight = v,
            }
        }
        if specs.is_empty() {
            return Err(CliError::config(format!("point {index} has no terminals")));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(Point {
            index,
            value,
            specs,
            access,
        })
    }
}

fn as_count(v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CliError::config(format!("{v} is not a positive integer")))
    }
}

fn build_spec(id: usize, g: &TerminalGroup) -> Result<TerminalSpec> {
    let mut spec = match (g.rate, g.period) {
        (Some(rate), None) => TerminalSpec::bernoulli(id, rate),
        (None, Some(period)) => {
            let s = TerminalSpec::periodic(id, period);
            match g.phase {
                Some(phase) => s.with_phase(phase),
                None => s,
            }
        }
        _ => {
            return Err(CliError::config(
                "each terminal group sets exactly one of `rate` and `period`",
            ))
        }
    };
    spec = spec.with_weight(g.weight).with_error_prob(g.error_prob);
    match (g.deadline, g.epsilon) {
        (Some(h), Some(eps)) => spec = spec.with_deadline(h, eps),
        (None, None) => {}
        _ => {
            return Err(CliError::config(
                "`deadline` and `epsilon` must be given together",
            ))
        }
    }
    Ok(spec)
}
