use serde::{Deserialize, Serialize};

use super::{solve, Bellman, LocalArrivals, RviResult, RviSettings};
use crate::error::{Error, Result};
use crate::terminal::{Arrivals, TerminalSpec};

/// Largest joint state space [`rvi_full`] accepts.
pub const MAX_FULL_STATES: usize = 4_000_000;

/// One terminal of the joint chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullTerminal {
    pub arrivals: LocalArrivals,
    pub weight: f64,
    pub error_prob: f64,
    pub max_age: u64,
}

/// Exact two-terminal scheduling chain over joint states
/// `((a₁, d₁), (a₂, d₂))`, truncated like the decoupled chain. The cost of a
/// slot is the post-transmission average weighted age
/// `(1/2) Σ ω (a + d (1 - u (1 - p_e)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullChain {
    pub terminals: [FullTerminal; 2],
    pub max_gap: u64,
}

impl FullChain {
    /// Builds the chain for two terminal specs. Bernoulli terminals get
    /// `max_age` (or a cap leaving `1e-6` of age tail when `None`); periodic
    /// terminals are capped at their period.
    pub fn from_specs(specs: &[TerminalSpec], max_age: Option<u64>, max_gap: u64) -> Result<Self> {
        if specs.len() != 2 {
            return Err(Error::invalid(
                "terminals",
                format!(
                    "the joint chain needs exactly 2 terminals, got {}",
                    specs.len()
                ),
            ));
        }
        let mk = |spec: &TerminalSpec| -> Result<FullTerminal> {
            spec.validate()?;
            let arrivals = match spec.arrivals {
                Arrivals::Bernoulli { rate } => LocalArrivals::Bernoulli(rate),
                Arrivals::Periodic { period, .. } => LocalArrivals::Periodic(period),
            };
            arrivals.validate()?;
            let cap = match arrivals {
                LocalArrivals::Periodic(period) => period,
                LocalArrivals::Bernoulli(rate) => max_age.unwrap_or_else(|| tail_cap(rate)),
            };
            Ok(FullTerminal {
                arrivals,
                weight: spec.weight,
                error_prob: spec.error_prob,
                max_age: cap.max(1),
            })
        };
        Ok(Self {
            terminals: [mk(&specs[0])?, mk(&specs[1])?],
            max_gap,
        })
    }

    /// Lowers the age cap of Bernoulli terminals to at most `limit`.
    pub fn with_age_limit(mut self, limit: u64) -> Self {
        for t in &mut self.terminals {
            if matches!(t.arrivals, LocalArrivals::Bernoulli(_)) {
                t.max_age = t.max_age.min(limit).max(1);
            }
        }
        self
    }

    /// Same chain with both bounds doubled.
    pub fn doubled(&self) -> Self {
        let mut c = self.clone();
        for t in &mut c.terminals {
            if matches!(t.arrivals, LocalArrivals::Bernoulli(_)) {
                t.max_age *= 2;
            }
        }
        c.max_gap *= 2;
        c
    }

    fn local_size(&self, n: usize) -> usize {
        self.terminals[n].max_age as usize * (self.max_gap as usize + 1)
    }

    pub fn n_states(&self) -> usize {
        self.local_size(0) * self.local_size(1)
    }

    fn local_state(&self, n: usize, a: u64, d: u64) -> usize {
        let cap = self.terminals[n].max_age;
        (a.clamp(1, cap) - 1) as usize * (self.max_gap as usize + 1) + d.min(self.max_gap) as usize
    }

    /// Joint index of `((a₁, d₁), (a₂, d₂))`, clamped to the bounds.
    pub fn state(&self, s: [(u64, u64); 2]) -> usize {
        self.local_state(0, s[0].0, s[0].1) * self.local_size(1)
            + self.local_state(1, s[1].0, s[1].1)
    }
}

fn tail_cap(rate: f64) -> u64 {
    if rate >= 1.0 {
        4
    } else {
        ((1e-6f64.ln() / (1.0 - rate).ln()).ceil() as u64).max(4)
    }
}

/// Per-terminal transition tables; successors of the joint chain are the
/// product of the two local ones.
struct Local {
    /// `ω (a + d)` per local state.
    idle_cost: Vec<f64>,
    /// `ω (1 - p_e) d`: expected cost saved by scheduling.
    saving: Vec<f64>,
    idle: Vec<[(u32, f64); 2]>,
    sched: Vec<[(u32, f64); 4]>,
}

struct JointModel {
    locals: [Local; 2],
    size1: usize,
}

impl Local {
    fn new(chain: &FullChain, n: usize) -> Self {
        let t = chain.terminals[n];
        let size = chain.local_size(n);
        let mut out = Local {
            idle_cost: Vec::with_capacity(size),
            saving: Vec::with_capacity(size),
            idle: Vec::with_capacity(size),
            sched: Vec::with_capacity(size),
        };
        let pe = t.error_prob;
        for a in 1..=t.max_age {
            let p = t.arrivals.prob(a);
            for d in 0..=chain.max_gap {
                let idx = |a, d| chain.local_state(n, a, d) as u32;
                let (stay, arrive) = (idx(a + 1, d), idx(1, d + a));
                let (sent_stay, sent_arrive) = (idx(a + 1, 0), idx(1, a));
                out.idle_cost.push(t.weight * (a + d) as f64);
                out.saving.push(t.weight * (1.0 - pe) * d as f64);
                out.idle.push([(stay, 1.0 - p), (arrive, p)]);
                out.sched.push([
                    (sent_stay, (1.0 - pe) * (1.0 - p)),
                    (sent_arrive, (1.0 - pe) * p),
                    (stay, pe * (1.0 - p)),
                    (arrive, pe * p),
                ]);
            }
        }
        out
    }
}

impl Bellman for JointModel {
    fn n_states(&self) -> usize {
        self.locals[0].idle.len() * self.size1
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn q_value(&self, s: usize, u: usize, f: &[f64]) -> f64 {
        let (s0, s1) = (s / self.size1, s % self.size1);
        let (l0, l1) = (&self.locals[0], &self.locals[1]);
        let cost = 0.5 * (l0.idle_cost[s0] + l1.idle_cost[s1] - self.locals[u].saving[[s0, s1][u]]);
        let mut expect = 0.0;
        let mut inner = |i: u32, p: f64, second: &[(u32, f64)]| {
            if p == 0.0 {
                return;
            }
            let base = i as usize * self.size1;
            let mut acc = 0.0;
            for &(j, q) in second {
                if q != 0.0 {
                    acc += q * f[base + j as usize];
                }
            }
            expect += p * acc;
        };
        if u == 0 {
            for &(i, p) in &l0.sched[s0] {
                inner(i, p, &l1.idle[s1]);
            }
        } else {
            for &(i, p) in &l0.idle[s0] {
                inner(i, p, &l1.sched[s1]);
            }
        }
        cost + expect
    }
}

/// Solution of a [`FullChain`]. Action `u` schedules terminal `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRvi {
    pub chain: FullChain,
    pub result: RviResult,
}

impl FullRvi {
    /// Optimal average weighted AoI per terminal.
    pub fn avg_cost(&self) -> f64 {
        self.result.avg_cost
    }

    /// Optimal terminal to schedule in joint state `s` (clamped to bounds).
    pub fn action(&self, s: [(u64, u64); 2]) -> usize {
        self.result.policy[self.chain.state(s)]
    }
}

/// Solves the two-terminal problem exactly by relative value iteration,
/// pinned at the all-fresh state `((1, 0), (1, 0))`.
pub fn rvi_full(chain: &FullChain, settings: &RviSettings) -> Result<FullRvi> {
    let states = chain.n_states();
    if states > MAX_FULL_STATES {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: MAX_FULL_STATES,
        });
    }
    for t in &chain.terminals {
        t.arrivals.validate()?;
    }
    let model = JointModel {
        locals: [Local::new(chain, 0), Local::new(chain, 1)],
        size1: chain.local_size(1),
    };
    let result = solve(&model, chain.state([(1, 0), (1, 0)]), settings, None)?;
    Ok(FullRvi {
        chain: chain.clone(),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(rate: f64) -> Vec<TerminalSpec> {
        vec![
            TerminalSpec::bernoulli(0, rate),
            TerminalSpec::bernoulli(1, rate),
        ]
    }

    #[test]
    fn deterministic_arrivals_alternate() {
        let chain = FullChain::from_specs(&pair(1.0), None, 6).unwrap();
        let sol = rvi_full(&chain, &RviSettings::default()).unwrap();
        assert!((sol.avg_cost() - 1.5).abs() < 1e-6, "{}", sol.avg_cost());
    }

    #[test]
    fn larger_gap_is_served_first() {
        let chain = FullChain::from_specs(&pair(1.0), None, 6).unwrap();
        let sol = rvi_full(&chain, &RviSettings::default()).unwrap();
        assert_eq!(sol.action([(1, 0), (1, 3)]), 1);
        assert_eq!(sol.action([(1, 3), (1, 0)]), 0);
    }

    #[test]
    fn rejects_wrong_terminal_count() {
        let specs = vec![TerminalSpec::bernoulli(0, 0.5)];
        assert!(FullChain::from_specs(&specs, None, 10).is_err());
    }

    #[test]
    fn rejects_huge_state_space() {
        let chain = FullChain::from_specs(&pair(0.5), Some(1000), 1000).unwrap();
        assert!(matches!(
            rvi_full(&chain, &RviSettings::default()),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn channel_errors_raise_the_optimum() {
        let reliable = FullChain::from_specs(&pair(0.8), None, 20).unwrap();
        let lossy = FullChain::from_specs(
            &[
                TerminalSpec::bernoulli(0, 0.8),
                TerminalSpec::bernoulli(1, 0.8).with_error_prob(0.5),
            ],
            None,
            20,
        )
        .unwrap();
        let settings = RviSettings::default();
        let j0 = rvi_full(&reliable, &settings).unwrap().avg_cost();
        let j1 = rvi_full(&lossy, &settings).unwrap().avg_cost();
        assert!(j1 > j0 + 0.05, "{j0} vs {j1}");
    }
}
