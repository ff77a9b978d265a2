//! Closed-form Whittle indices and the threshold solution of the decoupled
//! single-terminal problem with service charge `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terminal::{Arrivals, TerminalSpec, TerminalState};

/// Relative slack used when rounding quantities that are integers in exact
/// arithmetic; ties resolve towards the smaller integer.
const CEIL_SLACK: f64 = 1e-9;

pub(crate) fn ceil_tol(x: f64) -> f64 {
    (x - CEIL_SLACK * x.abs().max(1.0)).ceil()
}

fn check_rate(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(
            "lambda",
            format!("{lambda} is outside (0, 1]; the index is undefined"),
        ));
    }
    Ok(())
}

fn check_weight(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::invalid("omega", format!("{omega} must be positive")));
    }
    Ok(())
}

/// Whittle index of state `(a, d)` under Bernoulli(`lambda`) arrivals on a
/// reliable channel, weighted by `omega`.
///
/// Above the boundary `d > (λ/2)a² + (1 - λ/2)a` the index is
/// `ω (x²/2 + (1/λ - 1/2) x)` with `x = (d + λ a(a-1)/2) / (1 - λ + aλ)`;
/// below it, `ω d / λ`. The two branches meet continuously at the boundary.
pub fn index_bernoulli(a: u64, d: u64, lambda: f64, omega: f64) -> Result<f64> {
    if a == 0 {
        return Err(Error::invalid("a", "packet age must be at least 1"));
    }
    check_rate(lambda)?;
    check_weight(omega)?;
    if d == 0 {
        return Ok(0.0);
    }
    let (a, d) = (a as f64, d as f64);
    let boundary = 0.5 * lambda * a * a + (1.0 - 0.5 * lambda) * a;
    let value = if d > boundary {
        let x = (d + 0.5 * a * (a - 1.0) * lambda) / (1.0 - lambda + a * lambda);
        0.5 * x * x + (1.0 / lambda - 0.5) * x
    } else {
        d / lambda
    };
    Ok(omega * value)
}

/// Whittle index under periodic arrivals every `period` slots, for a packet
/// of age `a` (`1 <= a <= period`) when `n_periods` whole periods separate it
/// from the last delivered update.
pub fn index_periodic(a: u64, n_periods: u64, period: u64, omega: f64) -> Result<f64> {
    if period == 0 {
        return Err(Error::invalid("period", "must be at least 1"));
    }
    if a == 0 || a > period {
        return Err(Error::invalid(
            "a",
            format!("{a} is outside [1, {period}] for periodic arrivals"),
        ));
    }
    check_weight(omega)?;
    let tp = period as f64;
    let k1 = n_periods as f64 * (tp - a as f64 + 1.0) / tp;
    let k1_floor = k1.floor();
    let value = tp * tp * (k1_floor + 1.0) * (k1 - (k1 / 2.0).floor());
    Ok(omega * value)
}

/// Scales a reliable-channel index by the success probability `1 - p_e`.
///
/// This is the small-`p_e` approximation of the unreliable-channel index and
/// is used as-is at every `p_e`.
pub fn index_unreliable(reliable_index: f64, p_e: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_e) {
        return Err(Error::invalid(
            "p_e",
            format!("{p_e} is outside [0, 1); the terminal could never deliver"),
        ));
    }
    if reliable_index < 0.0 {
        return Err(Error::invalid("index", "must be nonnegative"));
    }
    Ok((1.0 - p_e) * reliable_index)
}

/// Index a terminal computes from its own spec and state, picking the
/// closed form that matches its arrival process and channel. Zero for an
/// empty buffer.
pub fn terminal_index(spec: &TerminalSpec, state: &TerminalState) -> f64 {
    if !state.has_packet || state.gap == 0 || state.age == 0 {
        return 0.0;
    }
    let reliable = match spec.arrivals {
        Arrivals::Bernoulli { rate } => index_bernoulli(state.age, state.gap, rate, spec.weight),
        Arrivals::Periodic { period, .. } => index_periodic(
            state.age.min(period),
            state.periods(period),
            period,
            spec.weight,
        ),
    };
    reliable
        .and_then(|i| index_unreliable(i, spec.error_prob))
        .unwrap_or(0.0)
}

/// Action of the decoupled problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Idle,
    Schedule,
}

/// Optimal threshold policy and average cost of the decoupled problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupledSolution {
    pub lambda: f64,
    /// Service charge `m`.
    pub charge: f64,
    /// Optimal average cost `Ĵ*`.
    pub avg_cost: f64,
    /// `D_1`; thresholds are constant for `a >= D_1`.
    pub first_threshold: u64,
    /// `D_a` for `1 <= a < D_1` (index `a - 1`).
    low_thresholds: Vec<u64>,
    /// `max(1, ⌈λm⌉)`, the threshold for every `a >= D_1`.
    pub saturated_threshold: u64,
}

impl DecoupledSolution {
    /// Threshold `D_a` for packet age `a >= 1`: schedule iff `d >= D_a`.
    pub fn threshold(&self, a: u64) -> u64 {
        assert!(a >= 1, "packet age starts at 1");
        if a < self.first_threshold {
            self.low_thresholds[(a - 1) as usize]
        } else {
            self.saturated_threshold
        }
    }

    /// Smallest `a` from which `D_a` stays constant.
    pub fn saturation_age(&self) -> u64 {
        let mut a_m = self.first_threshold.max(1);
        while a_m > 1 && self.threshold(a_m - 1) == self.saturated_threshold {
            a_m -= 1;
        }
        a_m
    }

    pub fn action(&self, state: &TerminalState) -> Action {
        whittle_threshold_policy(self, state)
    }
}

/// Schedules iff `d >= D_a`.
pub fn whittle_threshold_policy(sol: &DecoupledSolution, state: &TerminalState) -> Action {
    if state.gap >= sol.threshold(state.age.max(1)) {
        Action::Schedule
    } else {
        Action::Idle
    }
}

/// Average cost consistent with a candidate first threshold `d1`.
fn avg_cost_for(lambda: f64, charge: f64, d1: f64) -> f64 {
    let inv = 1.0 / lambda;
    (charge + 0.5 * d1 * d1 - 0.5 * d1 + d1 * inv - (lambda - 1.0) * inv * inv) / (d1 - 1.0 + inv)
}

/// Solves the decoupled problem in closed form.
///
/// `D_1` is found by enumeration: for each candidate the charge equation is
/// linear in `Ĵ*`, and the first candidate with `max(1, ⌈Ĵ* - 1/λ⌉) = D_1`
/// is taken.
pub fn solve_decoupled(lambda: f64, charge: f64) -> Result<DecoupledSolution> {
    check_rate(lambda)?;
    if !(charge >= 0.0 && charge.is_finite()) {
        return Err(Error::invalid(
            "m",
            format!("{charge} must be a nonnegative number"),
        ));
    }
    let inv = 1.0 / lambda;
    // Ĵ* grows like sqrt(2m), so D_1 stays far below this bound.
    let limit = 16 + 4 * (charge.sqrt() as u64 + inv as u64);
    let mut found = None;
    for d1 in 1..=limit {
        let j = avg_cost_for(lambda, charge, d1 as f64);
        let implied = ceil_tol(j - inv).max(1.0) as u64;
        if implied == d1 {
            found = Some((d1, j));
            break;
        }
    }
    let (d1, j) = found.ok_or(Error::NoConsistentThreshold {
        lambda,
        charge,
        searched: limit,
    })?;

    let low_thresholds = (1..d1)
        .map(|a| {
            let a = a as f64;
            let v = (1.0 - lambda + a * lambda) * j - a + 1.0 - lambda * a * (a - 1.0) / 2.0 - inv;
            ceil_tol(v).max(1.0) as u64
        })
        .collect();
    let saturated_threshold = ceil_tol(lambda * charge).max(1.0) as u64;

    Ok(DecoupledSolution {
        lambda,
        charge,
        avg_cost: j,
        first_threshold: d1,
        low_thresholds,
        saturated_threshold,
    })
}
