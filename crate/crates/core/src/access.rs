//! Frame-based channel access: index-prioritized random access (IPRA), the
//! equal-probability random access baseline, and a centralized Whittle
//! scheduler with the same frame structure for normalization.
//!
//! The channel alternates between contention mini-slots and frames. In a
//! contention slot every terminal whose local index reaches the public
//! threshold transmits with probability `p`. A lone transmitter wins a
//! transmission frame of `T_s` slots, delivered (subject to `p_e`) at the
//! end of the frame. Two or more transmitters waste a collision frame of
//! `T_c` slots. Ages keep growing during frames, including the age of the
//! packet in flight.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{draw_arrivals, validate_specs};
use crate::error::{Error, Result};
use crate::indices::terminal_index;
use crate::metrics::{MetricsCollector, RunMetrics, DEFAULT_HISTOGRAM_BINS};
use crate::policies::whittle_decide;
use crate::rng::{derive_seed, RngStream, RunRng};
use crate::terminal::{TerminalSpec, TerminalState};

/// Random access parameters. All lengths are in slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessConfig {
    /// Per-contention-slot transmission probability.
    pub p: f64,
    pub index_threshold: f64,
    /// Transmission frame length.
    pub t_s: u64,
    /// Collision frame length.
    pub t_c: u64,
    /// Contention mini-slot length; only one slot is supported.
    #[serde(default = "one")]
    pub delta: u64,
    /// Start terminal `n` with an empty buffer and AoI `1 + n (T_s + 1)`
    /// instead of all terminals in the same state. Identical starting
    /// states make every terminal cross the index threshold together, and
    /// with a fixed `p` the resulting pile-up of contenders need not clear.
    #[serde(default)]
    pub staggered_start: bool,
}

fn one() -> u64 {
    1
}

impl Default for AccessConfig {
    fn default() -> Self {
        Self {
            p: 0.2,
            index_threshold: 0.0,
            t_s: 1,
            t_c: 1,
            delta: 1,
            staggered_start: false,
        }
    }
}

impl AccessConfig {
    /// Config with `T_c = T_s`.
    pub fn new(p: f64, index_threshold: f64, t_s: u64) -> Self {
        Self {
            p,
            index_threshold,
            t_s,
            t_c: t_s,
            delta: 1,
            staggered_start: false,
        }
    }

    pub fn staggered(mut self) -> Self {
        self.staggered_start = true;
        self
    }

    /// Starting states implied by [`AccessConfig::staggered_start`].
    pub fn initial_states(&self, n: usize) -> Vec<TerminalState> {
        (0..n as u64)
            .map(|i| {
                if self.staggered_start {
                    TerminalState::empty(1 + i * (self.t_s + 1))
                } else {
                    TerminalState::default()
                }
            })
            .collect()
    }

    pub fn with_threshold(mut self, index_threshold: f64) -> Self {
        self.index_threshold = index_threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid("p", format!("{} is outside (0, 1]", self.p)));
        }
        if !(self.index_threshold >= 0.0) {
            return Err(Error::invalid(
                "index_threshold",
                format!("{} must be nonnegative", self.index_threshold),
            ));
        }
        if self.t_s == 0 || self.t_c == 0 {
            return Err(Error::invalid("T_s, T_c", "frames last at least one slot"));
        }
        if self.delta != 1 {
            return Err(Error::invalid(
                "delta",
                "contention slots last exactly one slot",
            ));
        }
        Ok(())
    }
}

/// How the channel is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessProtocol {
    /// Terminals contend only when their own index reaches the threshold.
    Ipra,
    /// Every terminal with a packet contends.
    Aloha,
    /// A controller assigns each free slot to the largest Whittle index; the
    /// frame starts in that slot and no contention slot is spent.
    CentralizedWhittle,
}

impl AccessProtocol {
    pub fn name(&self) -> &'static str {
        match self {
            AccessProtocol::Ipra => "ipra",
            AccessProtocol::Aloha => "aloha",
            AccessProtocol::CentralizedWhittle => "centralized_whittle",
        }
    }
}

/// State of the shared channel at a slot boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPhase {
    Contention,
    Transmission {
        owner: usize,
        /// Slots left in the frame, including the coming one.
        remaining: u64,
        /// Current age of the packet in flight.
        packet_age: u64,
    },
    Collision {
        remaining: u64,
    },
}

/// Whether terminal `spec` joins contention. Reads only the terminal's own
/// spec and state and the public configuration.
pub fn wants_channel(
    protocol: AccessProtocol,
    cfg: &AccessConfig,
    spec: &TerminalSpec,
    state: &TerminalState,
) -> bool {
    state.has_packet
        && match protocol {
            AccessProtocol::Ipra => terminal_index(spec, state) >= cfg.index_threshold,
            AccessProtocol::Aloha => true,
            AccessProtocol::CentralizedWhittle => false,
        }
}

/// Result of one contention slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Contention {
    Idle,
    Success(usize),
    Collision(Vec<usize>),
}

/// Runs one contention slot. One coin per terminal is drawn in id order
/// whether or not the terminal contends, so the coin sequence does not
/// depend on the threshold.
pub fn contend(
    protocol: AccessProtocol,
    cfg: &AccessConfig,
    specs: &[TerminalSpec],
    states: &[TerminalState],
    rng: &mut RngStream,
) -> Contention {
    let mut senders = Vec::new();
    for (n, (spec, st)) in specs.iter().zip(states).enumerate() {
        let u: f64 = rng.gen();
        if u < cfg.p && wants_channel(protocol, cfg, spec, st) {
            senders.push(n);
        }
    }
    match senders.len() {
        0 => Contention::Idle,
        1 => Contention::Success(senders[0]),
        _ => Contention::Collision(senders),
    }
}

/// Stepwise frame-based simulator.
#[derive(Debug)]
pub struct AccessEngine<'a> {
    specs: &'a [TerminalSpec],
    cfg: AccessConfig,
    protocol: AccessProtocol,
    states: Vec<TerminalState>,
    phase: ChannelPhase,
    slot: u64,
    rng: RunRng,
    collector: MetricsCollector,
}

impl<'a> AccessEngine<'a> {
    pub fn new(
        specs: &'a [TerminalSpec],
        cfg: AccessConfig,
        protocol: AccessProtocol,
        seed: u64,
    ) -> Result<Self> {
        validate_specs(specs)?;
        cfg.validate()?;
        Ok(Self {
            specs,
            cfg,
            protocol,
            states: cfg.initial_states(specs.len()),
            phase: ChannelPhase::Contention,
            slot: 0,
            rng: RunRng::new(seed),
            collector: MetricsCollector::new(specs.len(), DEFAULT_HISTOGRAM_BINS),
        })
    }

    /// Replaces the all-empty starting states, e.g. to begin from staggered
    /// ages instead of a synchronized start.
    pub fn with_initial_states(mut self, states: Vec<TerminalState>) -> Result<Self> {
        if states.len() != self.specs.len() {
            return Err(Error::invalid(
                "states",
                format!("{} states for {} terminals", states.len(), self.specs.len()),
            ));
        }
        self.states = states;
        Ok(self)
    }

    pub fn states(&self) -> &[TerminalState] {
        &self.states
    }

    pub fn phase(&self) -> ChannelPhase {
        self.phase
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Runs one slot and returns the terminal whose packet was delivered in
    /// it, if any.
    pub fn step(&mut self) -> Option<usize> {
        for st in &mut self.states {
            st.slot_begin();
        }
        if let ChannelPhase::Transmission { packet_age, .. } = &mut self.phase {
            *packet_age += 1;
        }

        if self.phase == ChannelPhase::Contention {
            self.phase = self.free_slot();
        }
        let delivered = self.advance_frame();

        self.collector.sample(self.specs, &self.states);
        let states = &mut self.states;
        draw_arrivals(
            self.specs,
            self.slot,
            &mut self.rng.arrivals,
            |n, arrived| states[n].apply_arrival(arrived),
        );
        self.slot += 1;
        delivered
    }

    /// Handles a slot in which no frame is running; returns the phase for
    /// the remainder of this slot.
    fn free_slot(&mut self) -> ChannelPhase {
        let ch = &mut self.collector.channel;
        if self.protocol == AccessProtocol::CentralizedWhittle {
            return match whittle_decide(&self.states, self.specs).scheduled {
                Some(owner) => {
                    ch.attempts += 1;
                    ChannelPhase::Transmission {
                        owner,
                        remaining: self.cfg.t_s,
                        packet_age: self.states[owner].age,
                    }
                }
                None => {
                    ch.contention_slots += 1;
                    ch.idle_slots += 1;
                    ChannelPhase::Contention
                }
            };
        }
        ch.contention_slots += 1;
        let outcome = contend(
            self.protocol,
            &self.cfg,
            self.specs,
            &self.states,
            &mut self.rng.contention,
        );
        // Frames won in contention start with the next slot, so the frame
        // counter is one above its length here.
        match outcome {
            Contention::Idle => {
                ch.idle_slots += 1;
                ChannelPhase::Contention
            }
            Contention::Success(owner) => {
                ch.attempts += 1;
                ChannelPhase::Transmission {
                    owner,
                    remaining: self.cfg.t_s + 1,
                    packet_age: self.states[owner].age,
                }
            }
            Contention::Collision(_) => {
                ch.collisions += 1;
                ChannelPhase::Collision {
                    remaining: self.cfg.t_c + 1,
                }
            }
        }
    }

    fn advance_frame(&mut self) -> Option<usize> {
        let ch = &mut self.collector.channel;
        match self.phase {
            ChannelPhase::Contention => None,
            ChannelPhase::Transmission {
                owner,
                remaining,
                packet_age,
            } => {
                if remaining > self.cfg.t_s {
                    // Contention slot that won the frame.
                    self.phase = ChannelPhase::Transmission {
                        owner,
                        remaining: remaining - 1,
                        packet_age,
                    };
                    return None;
                }
                ch.transmission_slots += 1;
                if remaining > 1 {
                    self.phase = ChannelPhase::Transmission {
                        owner,
                        remaining: remaining - 1,
                        packet_age,
                    };
                    return None;
                }
                self.phase = ChannelPhase::Contention;
                let u: f64 = self.rng.channel.gen();
                if u >= self.specs[owner].error_prob {
                    self.states[owner].deliver_packet_of_age(packet_age);
                    self.collector.record_delivery(owner);
                    Some(owner)
                } else {
                    ch.channel_failures += 1;
                    None
                }
            }
            ChannelPhase::Collision { remaining } => {
                if remaining > self.cfg.t_c {
                    self.phase = ChannelPhase::Collision {
                        remaining: remaining - 1,
                    };
                    return None;
                }
                ch.collision_slots += 1;
                self.phase = if remaining > 1 {
                    ChannelPhase::Collision {
                        remaining: remaining - 1,
                    }
                } else {
                    ChannelPhase::Contention
                };
                None
            }
        }
    }

    pub fn finish(self) -> RunMetrics {
        self.collector.finish(self.specs)
    }
}

/// Simulates `horizon` slots of frame-based access.
pub fn run_access(
    specs: &[TerminalSpec],
    cfg: &AccessConfig,
    protocol: AccessProtocol,
    horizon: u64,
    seed: u64,
) -> Result<RunMetrics> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let mut engine = AccessEngine::new(specs, *cfg, protocol, seed)?;
    for _ in 0..horizon {
        engine.step();
    }
    Ok(engine.finish())
}

/// Candidate thresholds for [`tune_ipra`]: zero followed by `points`
/// log-spaced values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl ThresholdGrid {
    /// Grid spanning six decades upwards from the smallest index a fresh
    /// packet can have (`a = 1`, `d = 1`).
    pub fn auto(specs: &[TerminalSpec]) -> Self {
        let base = specs
            .iter()
            .map(|s| terminal_index(s, &TerminalState::buffered(1, 1)))
            .filter(|&i| i > 0.0)
            .fold(f64::INFINITY, f64::min);
        let min = if base.is_finite() { base } else { 1.0 };
        Self {
            min,
            max: min * 1e6,
            points: 49,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) || self.points == 0 {
            return Err(Error::DegenerateGrid(format!(
                "need 0 < min <= max and at least one point, got {self:?}"
            )));
        }
        let mut v = vec![0.0];
        if self.points == 1 {
            v.push(self.min);
        } else {
            let ratio = (self.max / self.min).ln() / (self.points - 1) as f64;
            v.extend((0..self.points).map(|i| self.min * (ratio * i as f64).exp()));
        }
        Ok(v)
    }
}

/// Golden-section steps after the grid scan of [`tune_ipra`].
const REFINE_STEPS: usize = 6;

/// Outcome of [`tune_ipra`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub config: AccessConfig,
    /// Mean simulated AoI at the chosen threshold.
    pub avg_aoi: f64,
    /// Every `(threshold, mean AoI)` evaluated, sorted by threshold.
    pub evaluations: Vec<(f64, f64)>,
}

/// Mean IPRA AoI at one threshold over `replications` runs. Replication `r`
/// uses the seed `derive_seed(seed, [r])` at every threshold.
pub fn ipra_aoi(
    specs: &[TerminalSpec],
    cfg: &AccessConfig,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<f64> {
    let reps = replications.max(1);
    let mut sum = 0.0;
    for r in 0..reps {
        let m = run_access(
            specs,
            cfg,
            AccessProtocol::Ipra,
            horizon,
            derive_seed(seed, &[r]),
        )?;
        sum += m.avg_weighted_aoi;
    }
    Ok(sum / reps as f64)
}

/// Picks the IPRA threshold for a fixed `p`: evaluates every grid value,
/// then narrows the bracket around the best one by golden-section search on
/// the log threshold.
///
/// The AoI is unimodal in the threshold only above the point where too many
/// terminals contend at once; below it the channel drowns in collisions and
/// the AoI curve is a flat plateau, which would stall a golden-section search
/// started on the whole grid. The full scan finds the right valley first.
pub fn tune_ipra(
    specs: &[TerminalSpec],
    template: &AccessConfig,
    grid: &ThresholdGrid,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<TuneResult> {
    template.validate()?;
    let values = grid.values()?;
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut eval = |thr: f64| -> Result<f64> {
        if let Some(&(_, y)) = evals.iter().find(|(t, _)| *t == thr) {
            return Ok(y);
        }
        let y = ipra_aoi(
            specs,
            &template.with_threshold(thr),
            horizon,
            replications,
            seed,
        )?;
        evals.push((thr, y));
        Ok(y)
    };

    let mut best = 0;
    let mut best_aoi = f64::INFINITY;
    for (i, &v) in values.iter().enumerate() {
        let y = eval(v)?;
        if y < best_aoi {
            best = i;
            best_aoi = y;
        }
    }
    let mut best_thr = values[best];

    // Golden-section refinement between the neighbours of the best grid
    // value (zero has no logarithm, so the bracket then starts at `min`).
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let lo = values[best.saturating_sub(1)].max(grid.min);
    let hi = values[(best + 1).min(values.len() - 1)];
    if hi > lo {
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let (mut y1, mut y2) = (eval(x1.exp())?, eval(x2.exp())?);
        for _ in 0..REFINE_STEPS {
            if y1 <= y2 {
                b = x2;
                (x2, y2) = (x1, y1);
                x1 = b - INV_PHI * (b - a);
                y1 = eval(x1.exp())?;
            } else {
                a = x1;
                (x1, y1) = (x2, y2);
                x2 = a + INV_PHI * (b - a);
                y2 = eval(x2.exp())?;
            }
        }
        for &(t, y) in &evals {
            if y < best_aoi {
                best_thr = t;
                best_aoi = y;
            }
        }
    }

    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(TuneResult {
        config: template.with_threshold(best_thr),
        avg_aoi: best_aoi,
        evaluations: evals,
    })
}
