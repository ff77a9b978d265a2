//! Terminal parameters and per-terminal age bookkeeping.
//!
//! A terminal keeps a one-packet buffer. Its state is the pair `(a, d)`:
//! `a` is the queuing delay of the buffered packet and `d = h - a` is the
//! amount by which delivering that packet would lower the receiver-side age
//! `h`. With an empty buffer `d = 0` and `a` simply tracks `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Packet generation process of a terminal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrivals {
    /// One packet per slot with probability `rate`.
    Bernoulli { rate: f64 },
    /// One packet every `period` slots, in the arrival stage of every slot
    /// `t` with `t % period == phase`.
    Periodic { period: u64, phase: u64 },
}

impl Arrivals {
    /// Long-run packet rate per slot.
    pub fn rate(&self) -> f64 {
        match *self {
            Arrivals::Bernoulli { rate } => rate,
            Arrivals::Periodic { period, .. } => 1.0 / period as f64,
        }
    }
}

/// Static description of one terminal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub id: usize,
    pub arrivals: Arrivals,
    /// Importance weight `ω > 0` of this terminal's age.
    pub weight: f64,
    /// Probability that a transmission of this terminal is lost.
    pub error_prob: f64,
    /// AoI deadline `H` in slots.
    pub deadline: Option<u64>,
    /// Budget for the long-run fraction of slots with `h > H`.
    pub epsilon: Option<f64>,
}

impl TerminalSpec {
    pub fn bernoulli(id: usize, rate: f64) -> Self {
        Self {
            id,
            arrivals: Arrivals::Bernoulli { rate },
            weight: 1.0,
            error_prob: 0.0,
            deadline: None,
            epsilon: None,
        }
    }

    /// Periodic arrivals with the default phase `id mod period`.
    pub fn periodic(id: usize, period: u64) -> Self {
        let phase = if period == 0 { 0 } else { id as u64 % period };
        Self {
            id,
            arrivals: Arrivals::Periodic { period, phase },
            weight: 1.0,
            error_prob: 0.0,
            deadline: None,
            epsilon: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_error_prob(mut self, error_prob: f64) -> Self {
        self.error_prob = error_prob;
        self
    }

    pub fn with_phase(mut self, new_phase: u64) -> Self {
        if let Arrivals::Periodic { ref mut phase, .. } = self.arrivals {
            *phase = new_phase;
        }
        self
    }

    pub fn with_deadline(mut self, deadline: u64, epsilon: f64) -> Self {
        self.deadline = Some(deadline);
        self.epsilon = Some(epsilon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.arrivals {
            Arrivals::Bernoulli { rate } => {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::invalid(
                        "lambda",
                        format!("{rate} is outside [0, 1]"),
                    ));
                }
            }
            Arrivals::Periodic { period, phase } => {
                if period == 0 {
                    return Err(Error::invalid("period", "must be at least 1"));
                }
                if phase >= period {
                    return Err(Error::invalid(
                        "phase",
                        format!("{phase} is not below the period {period}"),
                    ));
                }
            }
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::invalid(
                "omega",
                format!("{} must be positive", self.weight),
            ));
        }
        if !(0.0..1.0).contains(&self.error_prob) {
            return Err(Error::invalid(
                "p_e",
                format!("{} is outside [0, 1)", self.error_prob),
            ));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::invalid(
                    "epsilon",
                    format!("{eps} is outside (0, 1)"),
                ));
            }
        }
        Ok(())
    }

    /// Whether a packet arrives at this terminal in slot `slot`, given a
    /// uniform draw `u` in `[0, 1)` (ignored for periodic sources).
    pub fn arrives(&self, slot: u64, u: f64) -> bool {
        match self.arrivals {
            Arrivals::Bernoulli { rate } => u < rate,
            Arrivals::Periodic { period, phase } => slot % period == phase,
        }
    }
}

/// Age bookkeeping of one terminal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TerminalState {
    /// Queuing delay `a` of the buffered packet (or `h` when empty).
    pub age: u64,
    /// Age reduction `d = h - a` a delivery would achieve.
    pub gap: u64,
    pub has_packet: bool,
}

impl TerminalState {
    /// A state with a buffered packet of age `age` and reduction `gap`.
    pub fn buffered(age: u64, gap: u64) -> Self {
        Self {
            age,
            gap,
            has_packet: true,
        }
    }

    /// An empty buffer with receiver age `aoi`.
    pub fn empty(aoi: u64) -> Self {
        Self {
            age: aoi,
            gap: 0,
            has_packet: false,
        }
    }

    /// Receiver-side age of information `h = a + d`.
    pub fn aoi(&self) -> u64 {
        self.age + self.gap
    }

    /// Number of whole arrival periods contained in `d`.
    pub fn periods(&self, period: u64) -> u64 {
        self.gap / period
    }

    /// Start-of-slot increment of both `a` and `h`.
    pub fn slot_begin(&mut self) {
        self.age += 1;
    }

    /// Successful delivery of the buffered packet: the receiver age drops to
    /// `a` and the buffer empties.
    pub fn apply_delivery(&mut self, terminal: usize) -> Result<()> {
        if !self.has_packet {
            return Err(Error::EmptyBuffer { terminal });
        }
        self.gap = 0;
        self.has_packet = false;
        Ok(())
    }

    /// Delivery of a packet of age `packet_age` that may no longer be the one
    /// in the buffer (frame-based access, where newer packets can arrive while
    /// an older one is in flight). The receiver age becomes `packet_age`; a
    /// newer buffered packet stays buffered.
    pub fn deliver_packet_of_age(&mut self, packet_age: u64) {
        if self.has_packet && self.age == packet_age {
            self.gap = 0;
            self.has_packet = false;
            return;
        }
        if packet_age >= self.aoi() {
            return;
        }
        if self.has_packet && self.age < packet_age {
            self.gap = packet_age - self.age;
        } else {
            self.age = packet_age;
            self.gap = 0;
            self.has_packet = false;
        }
    }

    /// End-of-slot arrival stage. A new packet replaces whatever is buffered;
    /// it will have `a = 1` after the next increment.
    pub fn apply_arrival(&mut self, arrived: bool) {
        if arrived {
            self.gap = self.aoi();
            self.age = 0;
            self.has_packet = true;
        }
    }

    /// Discards the buffered packet without touching the receiver age.
    pub fn drop_packet(&mut self) {
        if self.has_packet {
            self.age += self.gap;
            self.gap = 0;
            self.has_packet = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increment_stage() {
        let mut s = TerminalState::buffered(1, 0);
        s.slot_begin();
        assert_eq!((s.age, s.gap), (2, 0));

        let mut s = TerminalState::buffered(3, 5);
        s.slot_begin();
        assert_eq!((s.age, s.gap), (4, 5));

        let mut s = TerminalState::empty(7);
        s.slot_begin();
        assert_eq!((s.age, s.gap, s.aoi()), (8, 0, 8));
        assert!(!s.has_packet);
    }

    #[test]
    fn delivery_resets_gap() {
        let mut s = TerminalState::buffered(2, 7);
        assert_eq!(s.aoi(), 9);
        s.apply_delivery(0).unwrap();
        assert_eq!((s.age, s.gap, s.aoi()), (2, 0, 2));
        assert!(!s.has_packet);

        let mut s = TerminalState::buffered(1, 0);
        s.apply_delivery(0).unwrap();
        assert_eq!((s.age, s.gap), (1, 0));

        let mut s = TerminalState::buffered(4, 0);
        s.apply_delivery(0).unwrap();
        assert_eq!((s.age, s.gap), (4, 0));
    }

    #[test]
    fn delivery_from_empty_buffer_is_an_error() {
        let mut s = TerminalState::empty(5);
        assert_eq!(s.apply_delivery(3), Err(Error::EmptyBuffer { terminal: 3 }));
    }

    #[test]
    fn arrival_then_increment() {
        let mut s = TerminalState::buffered(3, 2);
        s.apply_arrival(true);
        s.slot_begin();
        assert_eq!((s.age, s.gap), (1, 5));

        let mut s = TerminalState::buffered(3, 2);
        s.apply_arrival(false);
        s.slot_begin();
        assert_eq!((s.age, s.gap), (4, 2));

        let mut s = TerminalState::empty(6);
        s.apply_arrival(true);
        assert_eq!(s.aoi(), 6);
        s.slot_begin();
        assert_eq!((s.age, s.gap), (1, 6));
        assert!(s.has_packet);
    }

    #[test]
    fn dropping_keeps_receiver_age() {
        let mut s = TerminalState::buffered(1, 6);
        s.drop_packet();
        assert_eq!(s, TerminalState::empty(7));
    }

    #[test]
    fn aged_delivery_with_newer_packet_buffered() {
        // In-flight packet of age 5; a newer packet (age 2) arrived meanwhile.
        let mut s = TerminalState::buffered(2, 10);
        s.deliver_packet_of_age(5);
        assert_eq!(s.aoi(), 5);
        assert_eq!((s.age, s.gap, s.has_packet), (2, 3, true));

        let mut s = TerminalState::buffered(5, 10);
        s.deliver_packet_of_age(5);
        assert_eq!(s, TerminalState::empty(5));

        let mut s = TerminalState::buffered(4, 0);
        s.deliver_packet_of_age(4);
        assert_eq!(s, TerminalState::empty(4));
    }

    #[test]
    fn spec_validation() {
        assert!(TerminalSpec::bernoulli(0, 0.5).validate().is_ok());
        assert!(TerminalSpec::bernoulli(0, 1.5).validate().is_err());
        assert!(TerminalSpec::bernoulli(0, 0.5)
            .with_weight(0.0)
            .validate()
            .is_err());
        assert!(TerminalSpec::bernoulli(0, 0.5)
            .with_error_prob(1.0)
            .validate()
            .is_err());
        assert!(TerminalSpec::periodic(0, 0).validate().is_err());
        assert!(TerminalSpec::periodic(5, 3).validate().is_ok());
        assert_eq!(
            TerminalSpec::periodic(5, 3).arrivals,
            Arrivals::Periodic {
                period: 3,
                phase: 2
            }
        );
    }
}
