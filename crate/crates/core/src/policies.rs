//! Centralized schedulers for the slot engine: the Whittle index policy and
//! the baselines it is compared against.
//!
//! Every policy breaks ties towards the lowest terminal id.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{BufferMode, Decision, Policy, SlotView};
use crate::error::{Error, Result};
use crate::indices::terminal_index;
use crate::mdp::FullRvi;
use crate::rng::RngStream;
use crate::terminal::{TerminalSpec, TerminalState};

/// Index of the largest positive score, lowest id on ties.
fn argmax_positive(scores: impl Iterator<Item = f64>) -> Decision {
    let mut best: Option<(usize, f64)> = None;
    for (n, s) in scores.enumerate() {
        if s > 0.0 && best.map_or(true, |(_, b)| s > b) {
            best = Some((n, s));
        }
    }
    Decision {
        scheduled: best.map(|(n, _)| n),
    }
}

/// Schedules the terminal with the largest Whittle index; idles when every
/// index is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhittlePolicy;

/// Whittle decision for one slot, usable outside the engine.
pub fn whittle_decide(states: &[TerminalState], specs: &[TerminalSpec]) -> Decision {
    argmax_positive(
        specs
            .iter()
            .zip(states)
            .map(|(sp, st)| terminal_index(sp, st)),
    )
}

impl Policy for WhittlePolicy {
    fn name(&self) -> &str {
        "whittle"
    }

    fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
        whittle_decide(view.states, view.specs)
    }
}

/// Index policy without buffering: only packets that arrived in the previous
/// slot (`a = 1`) can be sent, and unsent packets are dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoBufferPolicy;

pub fn no_buffer_decide(states: &[TerminalState], specs: &[TerminalSpec]) -> Decision {
    argmax_positive(specs.iter().zip(states).map(|(sp, st)| {
        if st.has_packet && st.age == 1 {
            terminal_index(sp, st)
        } else {
            0.0
        }
    }))
}

impl Policy for NoBufferPolicy {
    fn name(&self) -> &str {
        "whittle_no_buffer"
    }

    fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
        no_buffer_decide(view.states, view.specs)
    }

    fn buffer_mode(&self) -> BufferMode {
        BufferMode::NoBuffer
    }
}

/// Round robin over one-packet buffers: starting after the last served
/// terminal, serve the first one holding a packet. The pointer only moves
/// when somebody is served.
#[derive(Debug, Clone, Copy, Default)]
pub struct RrOnePolicy {
    next: usize,
}

impl RrOnePolicy {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for RrOnePolicy {
    fn name(&self) -> &str {
        "rr_one"
    }

    fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
        let n = view.states.len();
        for k in 0..n {
            let i = (self.next + k) % n;
            if view.states[i].has_packet {
                self.next = (i + 1) % n;
                return Decision::schedule(i);
            }
        }
        Decision::IDLE
    }
}

/// Serves the buffered terminal with the largest receiver age. A sanity
/// baseline; it ignores the age of the buffered packet.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxAgePolicy;

impl Policy for MaxAgePolicy {
    fn name(&self) -> &str {
        "max_age"
    }

    fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
        argmax_positive(view.states.iter().map(
            |st| {
                if st.has_packet {
                    st.aoi() as f64
                } else {
                    0.0
                }
            },
        ))
    }
}

/// Serves a uniformly random terminal among those holding a packet.
#[derive(Debug, Clone, Copy, Default)]
pub struct StationaryRandomPolicy;

pub fn stationary_random_decide(states: &[TerminalState], rng: &mut impl Rng) -> Decision {
    let count = states.iter().filter(|s| s.has_packet).count();
    if count == 0 {
        return Decision::IDLE;
    }
    let pick = rng.gen_range(0..count);
    let n = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.has_packet)
        .nth(pick)
        .map(|(n, _)| n);
    Decision { scheduled: n }
}

impl Policy for StationaryRandomPolicy {
    fn name(&self) -> &str {
        "stationary_random"
    }

    fn decide(&mut self, view: &SlotView<'_>, rng: &mut RngStream) -> Decision {
        stationary_random_decide(view.states, rng)
    }
}

/// Plays the optimal two-terminal policy from [`crate::mdp::rvi_full`].
/// States outside the truncated chain use the action of the nearest
/// boundary state.
#[derive(Debug, Clone)]
pub struct MdpPolicy {
    solution: FullRvi,
}

impl MdpPolicy {
    pub fn new(solution: FullRvi) -> Self {
        Self { solution }
    }
}

impl Policy for MdpPolicy {
    fn name(&self) -> &str {
        "mdp_oracle"
    }

    fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
        let s = [
            (view.states[0].age, view.states[0].gap),
            (view.states[1].age, view.states[1].gap),
        ];
        let u = self.solution.action(s);
        // Serving `d = 0` changes nothing, which the chain treats as idling.
        if view.states[u].has_packet && view.states[u].gap > 0 {
            Decision::schedule(u)
        } else {
            Decision::IDLE
        }
    }
}

/// Policies that need no precomputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Whittle,
    #[serde(alias = "no_buffer")]
    WhittleNoBuffer,
    RrOne,
    MaxAge,
    StationaryRandom,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Whittle,
        PolicyKind::WhittleNoBuffer,
        PolicyKind::RrOne,
        PolicyKind::MaxAge,
        PolicyKind::StationaryRandom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Whittle => "whittle",
            PolicyKind::WhittleNoBuffer => "whittle_no_buffer",
            PolicyKind::RrOne => "rr_one",
            PolicyKind::MaxAge => "max_age",
            PolicyKind::StationaryRandom => "stationary_random",
        }
    }

    pub fn build(&self) -> Box<dyn Policy + Send> {
        match self {
            PolicyKind::Whittle => Box::new(WhittlePolicy),
            PolicyKind::WhittleNoBuffer => Box::new(NoBufferPolicy),
            PolicyKind::RrOne => Box::new(RrOnePolicy::new()),
            PolicyKind::MaxAge => Box::new(MaxAgePolicy),
            PolicyKind::StationaryRandom => Box::new(StationaryRandomPolicy),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "no_buffer" {
            return Ok(PolicyKind::WhittleNoBuffer);
        }
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("policy", format!("unknown policy `{s}`")))
    }
}
