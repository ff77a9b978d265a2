//! Run statistics: time-average weighted age, per-terminal age histograms,
//! deadline violations and channel usage counters.

use serde::{Deserialize, Serialize};

use crate::terminal::{TerminalSpec, TerminalState};

/// Default number of histogram bins kept per terminal; larger ages are
/// counted in an overflow bin.
pub const DEFAULT_HISTOGRAM_BINS: usize = 4096;

/// Counts of sampled AoI values `h = 1, 2, ...` for one terminal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoiHistogram {
    counts: Vec<u64>,
    overflow: u64,
    total: u64,
}

impl AoiHistogram {
    pub fn new(bins: usize) -> Self {
        Self {
            counts: vec![0; bins + 1],
            overflow: 0,
            total: 0,
        }
    }

    pub fn record(&mut self, aoi: u64) {
        self.total += 1;
        match self.counts.get_mut(aoi as usize) {
            Some(c) => *c += 1,
            None => self.overflow += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Samples above the largest tracked bin.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// Largest AoI value with its own bin.
    pub fn max_bin(&self) -> u64 {
        self.counts.len() as u64 - 1
    }

    pub fn count(&self, aoi: u64) -> u64 {
        self.counts.get(aoi as usize).copied().unwrap_or(0)
    }

    /// Empirical `Pr{h <= x}`. Exact for `x <= max_bin()`.
    pub fn cdf(&self, x: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let upto = (x as usize).min(self.counts.len() - 1);
        let below: u64 = self.counts[..=upto].iter().sum();
        below as f64 / self.total as f64
    }

    /// Empirical `Pr{h > x}`.
    pub fn tail(&self, x: u64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Bins with nonzero counts, as `(aoi, count)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(h, &c)| (h as u64, c))
    }
}

/// Per-terminal results of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalMetrics {
    pub id: usize,
    /// Unweighted time-average AoI of this terminal.
    pub mean_aoi: f64,
    pub histogram: AoiHistogram,
    /// Number of sampled slots with `h > H`.
    pub violations: u64,
    /// `violations / horizon`, or `None` when the terminal has no deadline.
    pub violation_freq: Option<f64>,
    pub deliveries: u64,
}

/// Channel usage counters. In frame-based access a frame contributes its
/// full length to `transmission_slots` or `collision_slots`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Slots in which nobody used the channel (scheduled access) or nobody
    /// transmitted during contention (random access).
    pub idle_slots: u64,
    /// Contention mini-slots, including the idle ones.
    pub contention_slots: u64,
    pub transmission_slots: u64,
    pub collision_slots: u64,
    /// Transmission attempts that reached the channel alone.
    pub attempts: u64,
    pub deliveries: u64,
    /// Attempts lost to the per-terminal channel error.
    pub channel_failures: u64,
    pub collisions: u64,
}

/// Everything measured by one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub horizon: u64,
    /// `(1 / (T N)) Σ_t Σ_n ω_n h_n(t)`.
    pub avg_weighted_aoi: f64,
    pub terminals: Vec<TerminalMetrics>,
    pub channel: ChannelStats,
}

impl RunMetrics {
    pub fn violation_freqs(&self) -> Vec<Option<f64>> {
        self.terminals.iter().map(|t| t.violation_freq).collect()
    }
}

/// Accumulates samples slot by slot.
#[derive(Debug, Clone)]
pub(crate) struct MetricsCollector {
    slots: u64,
    weighted_sum: f64,
    aoi_sums: Vec<u64>,
    histograms: Vec<AoiHistogram>,
    violations: Vec<u64>,
    deliveries: Vec<u64>,
    pub(crate) channel: ChannelStats,
}

impl MetricsCollector {
    pub(crate) fn new(n: usize, bins: usize) -> Self {
        Self {
            slots: 0,
            weighted_sum: 0.0,
            aoi_sums: vec![0; n],
            histograms: vec![AoiHistogram::new(bins); n],
            violations: vec![0; n],
            deliveries: vec![0; n],
            channel: ChannelStats::default(),
        }
    }

    pub(crate) fn record_delivery(&mut self, terminal: usize) {
        self.deliveries[terminal] += 1;
        self.channel.deliveries += 1;
    }

    pub(crate) fn sample(&mut self, specs: &[TerminalSpec], states: &[TerminalState]) {
        self.slots += 1;
        let mut slot_sum = 0.0;
        for (n, (spec, st)) in specs.iter().zip(states).enumerate() {
            let h = st.aoi();
            slot_sum += spec.weight * h as f64;
            self.aoi_sums[n] += h;
            self.histograms[n].record(h);
            if matches!(spec.deadline, Some(deadline) if h > deadline) {
                self.violations[n] += 1;
            }
        }
        self.weighted_sum += slot_sum;
    }

    pub(crate) fn finish(self, specs: &[TerminalSpec]) -> RunMetrics {
        let t = self.slots.max(1) as f64;
        let n = specs.len().max(1) as f64;
        let terminals = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| TerminalMetrics {
                id: spec.id,
                mean_aoi: self.aoi_sums[i] as f64 / t,
                histogram: self.histograms[i].clone(),
                violations: self.violations[i],
                violation_freq: spec.deadline.map(|_| self.violations[i] as f64 / t),
                deliveries: self.deliveries[i],
            })
            .collect();
        RunMetrics {
            horizon: self.slots,
            avg_weighted_aoi: self.weighted_sum / (t * n),
            terminals,
            channel: self.channel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_cdf_and_overflow() {
        let mut h = AoiHistogram::new(4);
        for x in [1, 2, 2, 3, 9] {
            h.record(x);
        }
        assert_eq!(h.total(), 5);
        assert_eq!(h.overflow(), 1);
        assert_eq!(h.count(2), 2);
        assert!((h.cdf(2) - 0.6).abs() < 1e-12);
        assert!((h.tail(4) - 0.2).abs() < 1e-12);
        assert_eq!(h.iter().collect::<Vec<_>>(), vec![(1, 1), (2, 2), (3, 1)]);
    }
}
