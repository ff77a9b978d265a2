//! Reliable AoI deadlines under deterministic service intervals.
//!
//! A Bernoulli terminal served every `Γ` slots has a closed-form stationary
//! AoI distribution. Bounding its tail gives the longest admissible interval
//! per terminal, and a set of terminals is admissible when the intervals fit
//! on one channel (`Σ 1/Γ_n <= 1`). [`build_schedule`] then lays the
//! intervals out over a hyperperiod.

use serde::{Deserialize, Serialize};

use crate::engine::{Decision, Policy, SlotView};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::terminal::{Arrivals, TerminalSpec};

fn check_rate(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(
            "lambda",
            format!("{lambda} is outside (0, 1]"),
        ));
    }
    Ok(())
}

/// `Pr{h <= x}` for a terminal with arrival rate `lambda` served every
/// `gamma` slots.
pub fn stationary_cdf(lambda: f64, gamma: u64, x: u64) -> Result<f64> {
    check_rate(lambda)?;
    if gamma == 0 {
        return Err(Error::invalid("gamma", "must be at least 1"));
    }
    if x == 0 {
        return Err(Error::invalid("x", "AoI is at least 1"));
    }
    let g = gamma as f64;
    if x <= gamma {
        let xf = x as f64;
        if lambda == 1.0 {
            return Ok(xf / g);
        }
        let q = 1.0 - lambda;
        Ok((xf - q / lambda * (1.0 - q.powf(xf))) / g)
    } else {
        Ok(1.0 - stationary_tail(lambda, gamma, x)?)
    }
}

/// `Pr{h > x}`, computed without cancellation on the upper branch.
pub fn stationary_tail(lambda: f64, gamma: u64, x: u64) -> Result<f64> {
    check_rate(lambda)?;
    if gamma == 0 {
        return Err(Error::invalid("gamma", "must be at least 1"));
    }
    if x == 0 {
        return Err(Error::invalid("x", "AoI is at least 1"));
    }
    if x <= gamma {
        return Ok(1.0 - stationary_cdf(lambda, gamma, x)?);
    }
    if lambda == 1.0 {
        return Ok(0.0);
    }
    let q = 1.0 - lambda;
    let g = gamma as f64;
    Ok(q.powf((x - gamma + 1) as f64) * (1.0 - q.powf(g)) / (lambda * g))
}

/// Lower branch `W₋₁` of the Lambert W function on `[-1/e, 0)`.
///
/// Halley iteration, seeded by the branch-point series near `-1/e` and by
/// `ln(-x) - ln(-ln(-x))` elsewhere.
pub fn lambert_w_neg1(x: f64) -> Result<f64> {
    let branch = -(-1.0f64).exp();
    if !(x >= branch && x < 0.0) {
        return Err(Error::invalid(
            "x",
            format!("{x} is outside [-1/e, 0) where W₋₁ is real"),
        ));
    }
    if x == branch {
        return Ok(-1.0);
    }
    let mut w = if x < -0.25 {
        let p = -(2.0 * (1.0 + std::f64::consts::E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).min(-1.0);
        let done = (next - w).abs() <= 1e-15 * w.abs();
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

/// Deadline requirement of one terminal: `Pr{h > H} <= ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadlineSpec {
    pub lambda: f64,
    pub deadline: u64,
    pub epsilon: f64,
}

impl DeadlineSpec {
    pub fn new(lambda: f64, deadline: u64, epsilon: f64) -> Self {
        Self {
            lambda,
            deadline,
            epsilon,
        }
    }

    /// Requirement of a Bernoulli terminal that carries a deadline.
    pub fn from_terminal(spec: &TerminalSpec) -> Result<Self> {
        let lambda = match spec.arrivals {
            Arrivals::Bernoulli { rate } => rate,
            Arrivals::Periodic { .. } => {
                return Err(Error::invalid(
                    "arrivals",
                    "deadline admission needs Bernoulli arrivals",
                ))
            }
        };
        match (spec.deadline, spec.epsilon) {
            (Some(h), Some(eps)) => Ok(Self::new(lambda, h, eps)),
            _ => Err(Error::invalid(
                "deadline",
                format!("terminal {} has no deadline and budget", spec.id),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.lambda)?;
        if self.deadline == 0 {
            return Err(Error::invalid("H", "deadline must be at least 1 slot"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("{} is outside (0, 1)", self.epsilon),
            ));
        }
        Ok(())
    }

    /// Violation probability when served every `gamma` slots.
    pub fn tail(&self, gamma: u64) -> f64 {
        stationary_tail(self.lambda, gamma, self.deadline).unwrap_or(1.0)
    }

    /// `c(λ, H) = λ / (1 - λ)^(H + 1)`.
    pub fn c(&self) -> f64 {
        self.lambda / (1.0 - self.lambda).powf(self.deadline as f64 + 1.0)
    }
}

/// `c₀(λ) = 1 + (ln(-ln(1 - λ)) - ln λ) / ln(1 - λ)` for `0 < λ < 1`.
pub fn c0(lambda: f64) -> f64 {
    let l = (1.0 - lambda).ln();
    1.0 + ((-l).ln() - lambda.ln()) / l
}

/// Longest admissible service interval of one terminal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalBound {
    /// Largest `Γ` whose exact tail is within budget.
    pub gamma_max: u64,
    /// Tail at `gamma_max`.
    pub tail: f64,
    /// High-reliability closed form `W₋₁(ln(1-λ)/(ε c)) / ln(1-λ)` before
    /// flooring; `None` for `λ = 1` or when the argument leaves the domain.
    pub lambert: Option<f64>,
}

impl IntervalBound {
    pub fn lambert_floor(&self) -> Option<u64> {
        self.lambert.map(|g| g.floor().max(0.0) as u64)
    }
}

/// Largest `Γ` with `Pr{h > H} <= ε`, by bisection on the exact tail, which
/// is nondecreasing in `Γ`.
pub fn max_interval(spec: &DeadlineSpec) -> Result<IntervalBound> {
    spec.validate()?;
    let tail1 = spec.tail(1);
    if tail1 > spec.epsilon {
        return Err(Error::Infeasible {
            deadline: spec.deadline,
            epsilon: spec.epsilon,
            tail: tail1,
        });
    }
    let (mut lo, mut hi) = (1u64, 2u64);
    while spec.tail(hi) <= spec.epsilon {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if spec.tail(mid) <= spec.epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(IntervalBound {
        gamma_max: lo,
        tail: spec.tail(lo),
        lambert: lambert_interval(spec),
    })
}

fn lambert_interval(spec: &DeadlineSpec) -> Option<f64> {
    if spec.lambda >= 1.0 {
        return None;
    }
    let l = (1.0 - spec.lambda).ln();
    let arg = l / (spec.epsilon * spec.c());
    lambert_w_neg1(arg).ok().map(|w| w / l)
}

/// Result of [`admit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionReport {
    pub feasible: bool,
    pub intervals: Vec<IntervalBound>,
    /// `Σ 1 / Γ_n`.
    pub utilization: f64,
    /// For identical specs only: `N_mean = 2H`.
    pub n_mean: Option<f64>,
    /// For identical specs with `λ < 1` only: the large-`H` bound
    /// `H - ln ε / ln(1 - λ) + c₀(λ)`.
    pub n_deadline: Option<f64>,
}

/// Checks whether all terminals fit on the channel with their longest
/// admissible intervals.
pub fn admit(specs: &[DeadlineSpec]) -> Result<AdmissionReport> {
    let intervals = specs.iter().map(max_interval).collect::<Result<Vec<_>>>()?;
    let utilization: f64 = intervals.iter().map(|b| 1.0 / b.gamma_max as f64).sum();
    let symmetric = specs
        .first()
        .filter(|first| specs.iter().all(|s| s == *first));
    let n_mean = symmetric.map(|s| 2.0 * s.deadline as f64);
    let n_deadline = symmetric
        .filter(|s| s.lambda < 1.0)
        .map(|s| s.deadline as f64 - s.epsilon.ln() / (1.0 - s.lambda).ln() + c0(s.lambda));
    Ok(AdmissionReport {
        feasible: utilization <= 1.0 + 1e-12,
        intervals,
        utilization,
        n_mean,
        n_deadline,
    })
}

/// Slot assignment over one hyperperiod.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicSchedule {
    pub intervals: Vec<u64>,
    pub hyperperiod: u64,
    /// Owner of each slot of the hyperperiod.
    pub slots: Vec<Option<usize>>,
    /// Longest realized gap between consecutive services, per terminal,
    /// counted cyclically over the hyperperiod.
    pub max_gaps: Vec<u64>,
}

impl PeriodicSchedule {
    pub fn owner(&self, slot: u64) -> Option<usize> {
        self.slots[(slot % self.hyperperiod) as usize]
    }

    /// Largest delay of a service beyond its nominal interval.
    pub fn jitter(&self, terminal: usize) -> u64 {
        self.max_gaps[terminal].saturating_sub(self.intervals[terminal])
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Longest hyperperiod [`build_schedule`] builds without an explicit one.
pub const MAX_HYPERPERIOD: u64 = 10_000_000;

/// Greedy earliest-slot schedule: terminals in order of increasing interval
/// (then id) place their `k`-th service at the first free slot at or after
/// `k Γ`, wrapping around the hyperperiod. Services are never moved
/// earlier than nominal.
///
/// `hyperperiod` defaults to the least common multiple of the intervals and
/// must be a multiple of each of them.
pub fn build_schedule(intervals: &[u64], hyperperiod: Option<u64>) -> Result<PeriodicSchedule> {
    if intervals.is_empty() {
        return Err(Error::invalid(
            "intervals",
            "at least one terminal is required",
        ));
    }
    if intervals.contains(&0) {
        return Err(Error::invalid(
            "intervals",
            "every interval must be at least 1",
        ));
    }
    let utilization: f64 = intervals.iter().map(|&g| 1.0 / g as f64).sum();
    if utilization > 1.0 + 1e-12 {
        return Err(Error::invalid(
            "intervals",
            format!("utilization {utilization:.4} exceeds one channel"),
        ));
    }
    let hp = match hyperperiod {
        Some(hp) => hp,
        None => {
            let mut l = 1u64;
            for &g in intervals {
                l = (l / gcd(l, g))
                    .checked_mul(g)
                    .filter(|&v| v <= MAX_HYPERPERIOD)
                    .ok_or_else(|| {
                        Error::invalid(
                            "hyperperiod",
                            "least common multiple is too large; pass one explicitly",
                        )
                    })?;
            }
            l
        }
    };
    if hp == 0 || intervals.iter().any(|&g| hp % g != 0) {
        return Err(Error::invalid(
            "hyperperiod",
            format!("{hp} is not a multiple of every interval"),
        ));
    }

    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&n| (intervals[n], n));
    let mut slots: Vec<Option<usize>> = vec![None; hp as usize];
    let mut served: Vec<Vec<u64>> = vec![Vec::new(); intervals.len()];
    for &n in &order {
        let g = intervals[n];
        for k in 0..hp / g {
            let nominal = k * g;
            let free = (0..hp)
                .map(|shift| (nominal + shift) % hp)
                .find(|&s| slots[s as usize].is_none())
                .ok_or(Error::ScheduleOverflow {
                    terminal: n,
                    hyperperiod: hp,
                })?;
            slots[free as usize] = Some(n);
            served[n].push(free);
        }
    }

    let max_gaps = served
        .iter_mut()
        .map(|s| {
            s.sort_unstable();
            let wrap = s[0] + hp - s[s.len() - 1];
            s.windows(2).map(|w| w[1] - w[0]).fold(wrap, u64::max)
        })
        .collect();
    Ok(PeriodicSchedule {
        intervals: intervals.to_vec(),
        hyperperiod: hp,
        slots,
        max_gaps,
    })
}

/// Serves the owner of each slot of a [`PeriodicSchedule`] when it holds a
/// packet.
#[derive(Debug, Clone)]
pub struct PeriodicSchedulePolicy {
    schedule: PeriodicSchedule,
}

impl PeriodicSchedulePolicy {
    pub fn new(schedule: PeriodicSchedule) -> Self {
        Self { schedule }
    }

    pub fn schedule(&self) -> &PeriodicSchedule {
        &self.schedule
    }
}

impl Policy for PeriodicSchedulePolicy {
    fn name(&self) -> &str {
        "periodic_schedule"
    }

    fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
        match self.schedule.owner(view.slot) {
            Some(n) if view.states.get(n).is_some_and(|s| s.has_packet) => Decision::schedule(n),
            _ => Decision::IDLE,
        }
    }
}
