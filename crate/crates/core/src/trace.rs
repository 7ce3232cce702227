// SPDX-License-Identifier: Apache-2.0

//! Fixed-interval time series produced by both the packet simulator and the
//! fluid model. Counters are cumulative from t=0 so any window can be
//! reduced by differencing two samples.

use std::fmt;

use crate::config::CcaKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    Packetsim,
    Fluid,
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceSource::Packetsim => "packetsim",
            TraceSource::Fluid => "fluid",
        })
    }
}

/// Cumulative per-flow counters, bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowCounters {
    /// Unique payload delivered to the receiver (goodput).
    pub delivered: f64,
    /// Every transmission, retransmissions included.
    pub sent: f64,
    pub dropped: f64,
    /// Sent but neither delivered nor dropped yet.
    pub in_network: f64,
    /// Everything that reached the receiver, duplicates included.
    pub received: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub flows: Vec<FlowCounters>,
    pub queue_bytes: f64,
    /// ∫ queue_bytes dt from 0 to `t`, byte-seconds.
    pub queue_integral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub source: TraceSource,
    pub flow_ids: Vec<u32>,
    pub ccas: Vec<CcaKind>,
    pub samples: Vec<Sample>,
    pub buffer_bytes: f64,
    pub capacity: f64,
    /// Events dispatched (packet engine) or integration steps (fluid).
    pub events: u64,
    /// Controller state transitions, when recording was requested.
    pub state_changes: Vec<StateChange>,
    /// Invariant violations observed during the run; empty when healthy.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateChange {
    pub t: f64,
    pub flow_id: u32,
    pub state: &'static str,
    /// Packet-timed round count of the flow at the transition.
    pub round: u64,
}

impl SimTrace {
    pub fn empty(source: TraceSource, buffer_bytes: f64, capacity: f64) -> Self {
        Self {
            source,
            flow_ids: Vec::new(),
            ccas: Vec::new(),
            samples: Vec::new(),
            buffer_bytes,
            capacity,
            events: 0,
            state_changes: Vec::new(),
            violations: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Index of the first sample at or after `t` (within a nanosecond).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let i = self.samples.partition_point(|s| s.t < t - 1e-9);
        (i < self.samples.len()).then_some(i)
    }

    /// Rows of the per-run time-series CSV: `t_s,flow_id,cum_bytes,queue_bytes,drops`.
    pub fn csv_rows(&self) -> impl Iterator<Item = (f64, u32, f64, f64, f64)> + '_ {
        self.samples.iter().flat_map(move |s| {
            s.flows
                .iter()
                .zip(&self.flow_ids)
                .map(move |(c, id)| (s.t, *id, c.delivered, s.queue_bytes, c.dropped))
        })
    }
}
