//! Relative value iteration for average-cost MDPs on truncated chains.
//!
//! Two chains are built on top of the generic solver: the single-terminal
//! problem with a service charge ([`rvi_decoupled`]) and the exact
//! two-terminal scheduling problem ([`rvi_full`]). Both serve as numeric
//! oracles for the closed forms in [`crate::indices`].

mod decoupled;
mod full;

pub use decoupled::{
    indifference_charge, indifference_charge_with, rvi_decoupled, DecoupledChain, DecoupledRvi,
    LocalArrivals,
};
pub use full::{rvi_full, FullChain, FullRvi, FullTerminal, MAX_FULL_STATES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence controls for relative value iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RviSettings {
    /// Stop once the span of the Bellman residual `Tf - f` falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Aperiodicity transform weight: `f <- (1 - τ) f + τ T f`.
    pub damping: f64,
    /// Q-values within this distance of the minimum count as ties; ties go
    /// to the lowest-numbered action.
    pub tie_tolerance: f64,
}

impl Default for RviSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 1_000_000,
            damping: 0.5,
            tie_tolerance: 1e-6,
        }
    }
}

/// Converged output of relative value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RviResult {
    /// Average cost per slot `J`.
    pub avg_cost: f64,
    /// Differential cost `f`, pinned to zero at the reference state.
    pub values: Vec<f64>,
    /// Greedy action index per state.
    pub policy: Vec<usize>,
    /// Span of `Tf - f` at termination.
    pub residual: f64,
    pub iterations: usize,
}

/// A model the solver can sweep: a fixed number of actions per state and a
/// way to evaluate `c(s, u) + Σ p(s' | s, u) f(s')`.
pub(crate) trait Bellman {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn q_value(&self, s: usize, u: usize, f: &[f64]) -> f64;

    /// `Q(s, u) - min_u Q(s, u)` for every action at one state.
    fn advantages(&self, s: usize, f: &[f64]) -> Vec<f64> {
        let qs: Vec<f64> = (0..self.n_actions())
            .map(|u| self.q_value(s, u, f))
            .collect();
        let min = qs.iter().copied().fold(f64::INFINITY, f64::min);
        qs.into_iter().map(|q| q - min).collect()
    }
}

/// Damped relative value iteration pinned at `reference`.
pub(crate) fn solve<M: Bellman + ?Sized>(
    model: &M,
    reference: usize,
    settings: &RviSettings,
    warm_start: Option<&[f64]>,
) -> Result<RviResult> {
    let n = model.n_states();
    let n_actions = model.n_actions();
    let mut f = match warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut tf = vec![0.0; n];
    let tau = settings.damping;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let mut best = f64::INFINITY;
            for u in 0..n_actions {
                let q = model.q_value(s, u, &f);
                if q < best {
                    best = q;
                }
            }
            tf[s] = best;
            let diff = best - f[s];
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        residual = hi - lo;
        if residual < settings.tolerance {
            let policy = greedy(model, &f, settings.tie_tolerance);
            return Ok(RviResult {
                avg_cost: 0.5 * (lo + hi),
                values: f,
                policy,
                residual,
                iterations,
            });
        }
        let pin = f[reference] + tau * (tf[reference] - f[reference]);
        for s in 0..n {
            f[s] += tau * (tf[s] - f[s]) - pin;
        }
    }
    Err(Error::NotConverged {
        iterations,
        residual,
    })
}

fn greedy<M: Bellman + ?Sized>(model: &M, f: &[f64], tie: f64) -> Vec<usize> {
    (0..model.n_states())
        .map(|s| {
            model
                .advantages(s, f)
                .iter()
                .position(|&gap| gap <= tie)
                .unwrap_or(0)
        })
        .collect()
}

/// A finite MDP stored as flat arrays so that one Bellman sweep is a linear
/// pass.
#[derive(Debug, Clone)]
pub(crate) struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    cost: Vec<f64>,
    /// Successor range of `(s, u)` is `start[s * n_actions + u]..start[.. + 1]`.
    start: Vec<u32>,
    next: Vec<u32>,
    prob: Vec<f64>,
}

impl Bellman for FiniteMdp {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn q_value(&self, s: usize, u: usize, f: &[f64]) -> f64 {
        let k = s * self.n_actions + u;
        let (lo, hi) = (self.start[k] as usize, self.start[k + 1] as usize);
        let mut q = self.cost[k];
        for i in lo..hi {
            q += self.prob[i] * f[self.next[i] as usize];
        }
        q
    }
}

impl FiniteMdp {
    pub(crate) fn builder(n_states: usize, n_actions: usize) -> FiniteMdpBuilder {
        let mut start = Vec::with_capacity(n_states * n_actions + 1);
        start.push(0);
        FiniteMdpBuilder {
            mdp: FiniteMdp {
                n_states,
                n_actions,
                cost: Vec::with_capacity(n_states * n_actions),
                start,
                next: Vec::new(),
                prob: Vec::new(),
            },
        }
    }

    #[cfg(test)]
    fn row_sums(&self) -> Vec<f64> {
        (0..self.n_states * self.n_actions)
            .map(|k| {
                let (lo, hi) = (self.start[k] as usize, self.start[k + 1] as usize);
                self.prob[lo..hi].iter().sum()
            })
            .collect()
    }
}

pub(crate) struct FiniteMdpBuilder {
    mdp: FiniteMdp,
}

impl FiniteMdpBuilder {
    /// Adds the next `(state, action)` row. Rows must be pushed in
    /// state-major, action-minor order.
    pub(crate) fn push(&mut self, cost: f64, successors: &[(usize, f64)]) {
        self.mdp.cost.push(cost);
        for &(s, p) in successors {
            if p > 0.0 {
                self.mdp.next.push(s as u32);
                self.mdp.prob.push(p);
            }
        }
        self.mdp.start.push(self.mdp.next.len() as u32);
    }

    pub(crate) fn build(self) -> FiniteMdp {
        debug_assert_eq!(self.mdp.cost.len(), self.mdp.n_states * self.mdp.n_actions);
        self.mdp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-state chain that alternates deterministically (periodic) with
    /// costs 1 and 3: average cost 2 regardless of periodicity.
    #[test]
    fn periodic_chain_converges_with_damping() {
        let mut b = FiniteMdp::builder(2, 1);
        b.push(1.0, &[(1, 1.0)]);
        b.push(3.0, &[(0, 1.0)]);
        let mdp = b.build();
        let r = solve(&mdp, 0, &RviSettings::default(), None).unwrap();
        assert!((r.avg_cost - 2.0).abs() < 1e-8);
        assert!((r.values[1] - 1.0).abs() < 1e-6);
        assert_eq!(mdp.row_sums(), vec![1.0, 1.0]);
    }

    #[test]
    fn reports_non_convergence() {
        // Sticky chain: mixing is slow, so three sweeps cannot converge.
        let mut b = FiniteMdp::builder(2, 1);
        b.push(1.0, &[(0, 0.99), (1, 0.01)]);
        b.push(3.0, &[(1, 0.99), (0, 0.01)]);
        let settings = RviSettings {
            max_iterations: 3,
            ..RviSettings::default()
        };
        assert!(matches!(
            solve(&b.build(), 0, &settings, None),
            Err(Error::NotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn ties_prefer_first_action() {
        let mut b = FiniteMdp::builder(1, 2);
        b.push(1.0, &[(0, 1.0)]);
        b.push(1.0, &[(0, 1.0)]);
        let r = solve(&b.build(), 0, &RviSettings::default(), None).unwrap();
        assert_eq!(r.policy, vec![0]);
    }
}
