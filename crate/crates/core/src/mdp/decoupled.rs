use serde::{Deserialize, Serialize};

use super::{solve, FiniteMdp, RviResult, RviSettings};
use crate::error::{Error, Result};
use crate::indices::{index_bernoulli, Action};

/// Arrival process of a single terminal as seen by its local chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LocalArrivals {
    Bernoulli(f64),
    /// A packet arrives at the end of the slot in which the buffered packet
    /// (or, with an empty buffer, the last delivered one) turns `period` old.
    Periodic(u64),
}

impl LocalArrivals {
    pub(crate) fn prob(&self, a: u64) -> f64 {
        match *self {
            LocalArrivals::Bernoulli(rate) => rate,
            LocalArrivals::Periodic(period) => {
                if a >= period {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            LocalArrivals::Bernoulli(rate) if !(rate > 0.0 && rate <= 1.0) => Err(Error::invalid(
                "lambda",
                format!("{rate} is outside (0, 1]"),
            )),
            LocalArrivals::Periodic(0) => Err(Error::invalid("period", "must be at least 1")),
            _ => Ok(()),
        }
    }

    /// Age cap that leaves at most `1e-12` of stationary mass beyond it.
    pub(crate) fn suggested_max_age(&self, at_least: u64) -> u64 {
        let needed = match *self {
            LocalArrivals::Bernoulli(rate) if rate < 1.0 => {
                (1e-12f64.ln() / (1.0 - rate).ln()).ceil() as u64
            }
            LocalArrivals::Bernoulli(_) => 1,
            LocalArrivals::Periodic(period) => return period.max(1),
        };
        needed.max(at_least).max(8)
    }
}

/// Single-terminal chain with service charge `m`, truncated to
/// `1 <= a <= max_age` and `0 <= d <= max_gap`. Transitions past a bound
/// stay on the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupledChain {
    pub arrivals: LocalArrivals,
    pub charge: f64,
    pub error_prob: f64,
    pub max_age: u64,
    pub max_gap: u64,
}

impl DecoupledChain {
    pub fn bernoulli(lambda: f64, charge: f64, max_age: u64, max_gap: u64) -> Self {
        Self {
            arrivals: LocalArrivals::Bernoulli(lambda),
            charge,
            error_prob: 0.0,
            max_age,
            max_gap,
        }
    }

    /// Bernoulli chain with bounds large enough that truncation does not
    /// move the thresholds: the age tail beyond the cap is below `1e-12` and
    /// the gap cap sits above every threshold (`D_a <= ⌈λm⌉`).
    pub fn with_suggested_bounds(lambda: f64, charge: f64) -> Self {
        let arrivals = LocalArrivals::Bernoulli(lambda);
        let max_age = arrivals.suggested_max_age(8);
        let max_gap = (lambda * charge).ceil() as u64 + 20;
        Self::bernoulli(lambda, charge, max_age, max_gap)
    }

    pub fn periodic(period: u64, charge: f64, max_gap: u64) -> Self {
        Self {
            arrivals: LocalArrivals::Periodic(period),
            charge,
            error_prob: 0.0,
            max_age: period,
            max_gap,
        }
    }

    pub fn with_error_prob(mut self, p_e: f64) -> Self {
        self.error_prob = p_e;
        self
    }

    /// Same chain with both bounds doubled.
    pub fn doubled(&self) -> Self {
        let mut c = self.clone();
        if !matches!(c.arrivals, LocalArrivals::Periodic(_)) {
            c.max_age *= 2;
        }
        c.max_gap *= 2;
        c
    }

    fn width(&self) -> usize {
        self.max_gap as usize + 1
    }

    pub fn n_states(&self) -> usize {
        self.max_age as usize * self.width()
    }

    pub(crate) fn state(&self, a: u64, d: u64) -> usize {
        (a.clamp(1, self.max_age) - 1) as usize * self.width() + d.min(self.max_gap) as usize
    }

    fn validate(&self) -> Result<()> {
        self.arrivals.validate()?;
        if self.max_age == 0 {
            return Err(Error::invalid("max_age", "must be at least 1"));
        }
        if !(self.charge >= 0.0 && self.charge.is_finite()) {
            return Err(Error::invalid(
                "m",
                format!("{} must be nonnegative", self.charge),
            ));
        }
        if !(0.0..1.0).contains(&self.error_prob) {
            return Err(Error::invalid(
                "p_e",
                format!("{} is outside [0, 1)", self.error_prob),
            ));
        }
        Ok(())
    }

    /// Action 0 schedules, action 1 idles (ties go to scheduling).
    pub(crate) fn build(&self) -> FiniteMdp {
        let mut b = FiniteMdp::builder(self.n_states(), 2);
        let (m, pe) = (self.charge, self.error_prob);
        for a in 1..=self.max_age {
            let p = self.arrivals.prob(a);
            let aged = a + 1;
            for d in 0..=self.max_gap {
                let idle_stay = self.state(aged, d);
                let idle_arrive = self.state(1, d + a);
                let sent_stay = self.state(aged, 0);
                let sent_arrive = self.state(1, a);
                let (af, df) = (a as f64, d as f64);
                b.push(
                    m + af + pe * df,
                    &[
                        (sent_stay, (1.0 - pe) * (1.0 - p)),
                        (sent_arrive, (1.0 - pe) * p),
                        (idle_stay, pe * (1.0 - p)),
                        (idle_arrive, pe * p),
                    ],
                );
                b.push(af + df, &[(idle_stay, 1.0 - p), (idle_arrive, p)]);
            }
        }
        b.build()
    }
}

/// Solution of a [`DecoupledChain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupledRvi {
    pub chain: DecoupledChain,
    pub result: RviResult,
}

impl DecoupledRvi {
    pub fn avg_cost(&self) -> f64 {
        self.result.avg_cost
    }

    /// Differential cost `f(a, d)` with `f(1, 0) = 0`.
    pub fn f(&self, a: u64, d: u64) -> f64 {
        self.result.values[self.chain.state(a, d)]
    }

    pub fn action(&self, a: u64, d: u64) -> Action {
        if self.result.policy[self.chain.state(a, d)] == 0 {
            Action::Schedule
        } else {
            Action::Idle
        }
    }

    /// Smallest `d >= 1` at which the greedy policy schedules for age `a`.
    pub fn threshold(&self, a: u64) -> Option<u64> {
        (1..=self.chain.max_gap).find(|&d| self.action(a, d) == Action::Schedule)
    }

    /// Whether, for age `a`, the greedy policy idles below its threshold and
    /// schedules at and above it (ignoring `d = 0`, where both actions move
    /// the chain identically).
    pub fn is_threshold_in_d(&self, a: u64) -> bool {
        match self.threshold(a) {
            Some(t) => (t..=self.chain.max_gap).all(|d| self.action(a, d) == Action::Schedule),
            None => true,
        }
    }
}

/// Solves the decoupled single-terminal problem by relative value iteration.
pub fn rvi_decoupled(chain: &DecoupledChain, settings: &RviSettings) -> Result<DecoupledRvi> {
    rvi_decoupled_warm(chain, settings, None)
}

fn rvi_decoupled_warm(
    chain: &DecoupledChain,
    settings: &RviSettings,
    warm: Option<&[f64]>,
) -> Result<DecoupledRvi> {
    chain.validate()?;
    let mdp = chain.build();
    let result = solve(&mdp, chain.state(1, 0), settings, warm)?;
    Ok(DecoupledRvi {
        chain: chain.clone(),
        result,
    })
}

/// Charge at which the optimal action at `(a, d)` flips from scheduling to
/// idling, for Bernoulli(`lambda`) arrivals: the numeric Whittle index.
///
/// Bisection to within `tol` over `[0, 4 I_b(a, d) + 10]`.
pub fn indifference_charge(lambda: f64, a: u64, d: u64, tol: f64) -> Result<f64> {
    if d == 0 {
        return Ok(0.0);
    }
    let upper = 4.0 * index_bernoulli(a, d, lambda, 1.0)? + 10.0;
    indifference_charge_with(
        LocalArrivals::Bernoulli(lambda),
        a,
        d,
        upper,
        tol,
        &RviSettings::default(),
    )
}

/// General form of [`indifference_charge`] for any local arrival process and
/// bracket `[0, upper]`.
pub fn indifference_charge_with(
    arrivals: LocalArrivals,
    a: u64,
    d: u64,
    upper: f64,
    tol: f64,
    settings: &RviSettings,
) -> Result<f64> {
    arrivals.validate()?;
    if a == 0 {
        return Err(Error::invalid("a", "packet age must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if d == 0 {
        return Ok(0.0);
    }
    let chain_at = |charge: f64| match arrivals {
        LocalArrivals::Bernoulli(rate) => DecoupledChain::bernoulli(
            rate,
            charge,
            arrivals.suggested_max_age(a + 2),
            (rate * upper).ceil() as u64 + d + 10,
        ),
        LocalArrivals::Periodic(period) => {
            DecoupledChain::periodic(period, charge, upper.ceil() as u64 + d + 10)
        }
    };

    let top = rvi_decoupled(&chain_at(upper), settings)?;
    if top.action(a, d) != Action::Idle {
        return Err(Error::NoFlip { a, d, upper });
    }
    let (mut lo, mut hi) = (0.0, upper);
    let mut warm = top.result.values;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let sol = rvi_decoupled_warm(&chain_at(mid), settings, Some(&warm))?;
        if sol.action(a, d) == Action::Schedule {
            lo = mid;
        } else {
            hi = mid;
        }
        warm = sol.result.values;
    }
    Ok(0.5 * (lo + hi))
}
