//! Slot-level simulation engine for centrally scheduled access.
//!
//! Every slot runs the same sequence: increment all ages, ask the policy for
//! a decision, transmit (success with probability `1 - p_e`), sample the
//! metrics, then draw arrivals for every terminal in id order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsCollector, RunMetrics, DEFAULT_HISTOGRAM_BINS};
use crate::rng::{RngStream, RunRng};
use crate::terminal::{TerminalSpec, TerminalState};

/// Outcome of a scheduling decision: at most one terminal per slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub scheduled: Option<usize>,
}

impl Decision {
    pub const IDLE: Decision = Decision { scheduled: None };

    pub fn schedule(terminal: usize) -> Self {
        Decision {
            scheduled: Some(terminal),
        }
    }
}

/// What happens to a buffered packet that is not sent in the slot it was
/// received.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    /// Keep the newest packet until it is delivered or replaced.
    #[default]
    OnePacket,
    /// Discard any packet still buffered at the end of its arrival slot.
    NoBuffer,
}

/// Read-only snapshot handed to a policy.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub slot: u64,
    pub states: &'a [TerminalState],
    pub specs: &'a [TerminalSpec],
}

/// A centralized scheduler.
pub trait Policy {
    fn name(&self) -> &str;

    fn decide(&mut self, view: &SlotView<'_>, rng: &mut RngStream) -> Decision;

    fn buffer_mode(&self) -> BufferMode {
        BufferMode::OnePacket
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&mut self, view: &SlotView<'_>, rng: &mut RngStream) -> Decision {
        (**self).decide(view, rng)
    }

    fn buffer_mode(&self) -> BufferMode {
        (**self).buffer_mode()
    }
}

/// What happened on the channel in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub decision: Decision,
    pub delivered: bool,
}

pub(crate) fn validate_specs(specs: &[TerminalSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid(
            "terminals",
            "at least one terminal is required",
        ));
    }
    for (i, spec) in specs.iter().enumerate() {
        spec.validate()?;
        if spec.id != i {
            return Err(Error::invalid(
                "terminal id",
                format!("terminal at position {i} has id {}", spec.id),
            ));
        }
    }
    Ok(())
}

/// Draws this slot's arrivals for all terminals, in id order.
pub(crate) fn draw_arrivals(
    specs: &[TerminalSpec],
    slot: u64,
    rng: &mut RngStream,
    mut apply: impl FnMut(usize, bool),
) {
    for (n, spec) in specs.iter().enumerate() {
        let u: f64 = rng.gen();
        apply(n, spec.arrives(slot, u));
    }
}

/// Stepwise simulator; [`run_slots`] drives it for a fixed horizon.
#[derive(Debug)]
pub struct SlotEngine<'a> {
    specs: &'a [TerminalSpec],
    states: Vec<TerminalState>,
    slot: u64,
    rng: RunRng,
    buffer_mode: BufferMode,
    collector: MetricsCollector,
}

impl<'a> SlotEngine<'a> {
    pub fn new(specs: &'a [TerminalSpec], seed: u64, buffer_mode: BufferMode) -> Result<Self> {
        validate_specs(specs)?;
        Ok(Self {
            specs,
            states: vec![TerminalState::default(); specs.len()],
            slot: 0,
            rng: RunRng::new(seed),
            buffer_mode,
            collector: MetricsCollector::new(specs.len(), DEFAULT_HISTOGRAM_BINS),
        })
    }

    pub fn states(&self) -> &[TerminalState] {
        &self.states
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Runs one slot.
    pub fn step<P: Policy + ?Sized>(&mut self, policy: &mut P) -> Result<SlotOutcome> {
        for st in &mut self.states {
            st.slot_begin();
        }

        let view = SlotView {
            slot: self.slot,
            states: &self.states,
            specs: self.specs,
        };
        let decision = policy.decide(&view, &mut self.rng.policy);

        let mut delivered = false;
        match decision.scheduled {
            Some(n) => {
                let count = self.states.len();
                let st = self
                    .states
                    .get_mut(n)
                    .ok_or(Error::UnknownTerminal { terminal: n, count })?;
                if !st.has_packet {
                    return Err(Error::EmptyBuffer { terminal: n });
                }
                self.collector.channel.attempts += 1;
                self.collector.channel.transmission_slots += 1;
                let u: f64 = self.rng.channel.gen();
                if u >= self.specs[n].error_prob {
                    st.apply_delivery(n)?;
                    delivered = true;
                    self.collector.record_delivery(n);
                } else {
                    self.collector.channel.channel_failures += 1;
                }
            }
            None => self.collector.channel.idle_slots += 1,
        }

        self.collector.sample(self.specs, &self.states);

        if self.buffer_mode == BufferMode::NoBuffer {
            for st in &mut self.states {
                st.drop_packet();
            }
        }
        let states = &mut self.states;
        draw_arrivals(
            self.specs,
            self.slot,
            &mut self.rng.arrivals,
            |n, arrived| states[n].apply_arrival(arrived),
        );

        let outcome = SlotOutcome {
            slot: self.slot,
            decision,
            delivered,
        };
        self.slot += 1;
        Ok(outcome)
    }

    pub fn finish(self) -> RunMetrics {
        self.collector.finish(self.specs)
    }
}

/// Simulates `horizon` slots of `policy` over `specs`.
pub fn run_slots<P: Policy + ?Sized>(
    specs: &[TerminalSpec],
    policy: &mut P,
    horizon: u64,
    seed: u64,
) -> Result<RunMetrics> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let mut engine = SlotEngine::new(specs, seed, policy.buffer_mode())?;
    for _ in 0..horizon {
        engine.step(policy)?;
    }
    Ok(engine.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Always;
    impl Policy for Always {
        fn name(&self) -> &str {
            "always"
        }
        fn decide(&mut self, view: &SlotView<'_>, _: &mut RngStream) -> Decision {
            if view.states[0].has_packet {
                Decision::schedule(0)
            } else {
                Decision::IDLE
            }
        }
    }

    struct Fixed(Decision);
    impl Policy for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn decide(&mut self, _: &SlotView<'_>, _: &mut RngStream) -> Decision {
            self.0
        }
    }

    #[test]
    fn zero_horizon_rejected() {
        let specs = [TerminalSpec::bernoulli(0, 1.0)];
        assert_eq!(
            run_slots(&specs, &mut Always, 0, 1).unwrap_err(),
            Error::ZeroHorizon
        );
    }

    #[test]
    fn bad_decisions_are_errors() {
        let specs = [TerminalSpec::bernoulli(0, 1.0)];
        let err = run_slots(&specs, &mut Fixed(Decision::schedule(3)), 5, 1).unwrap_err();
        assert_eq!(
            err,
            Error::UnknownTerminal {
                terminal: 3,
                count: 1
            }
        );
        // Slot 0 has no packet yet.
        let err = run_slots(&specs, &mut Fixed(Decision::schedule(0)), 5, 1).unwrap_err();
        assert_eq!(err, Error::EmptyBuffer { terminal: 0 });
    }

    #[test]
    fn fresh_update_every_slot() {
        let specs = [TerminalSpec::bernoulli(0, 1.0)];
        let m = run_slots(&specs, &mut Always, 100_000, 3).unwrap();
        // Only slot 0 (no packet yet) deviates from h = 1.
        assert!(
            (m.avg_weighted_aoi - 1.0).abs() < 1e-4,
            "{}",
            m.avg_weighted_aoi
        );
        assert_eq!(m.channel.deliveries, 99_999);
    }

    #[test]
    fn ids_must_match_positions() {
        let specs = [TerminalSpec::bernoulli(1, 1.0)];
        assert!(run_slots(&specs, &mut Always, 5, 1).is_err());
    }
}
