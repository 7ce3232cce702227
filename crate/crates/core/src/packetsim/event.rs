// SPDX-License-Identifier: Apache-2.0

//! Time-ordered event set with a total, reproducible order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Simulation time in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(s: f64) -> Self {
        debug_assert!(s >= 0.0 && s.is_finite(), "bad time {s}");
        SimTime((s * 1e9).round() as u64)
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn add_secs(self, s: f64) -> Self {
        SimTime(self.0 + (s.max(0.0) * 1e9).round() as u64)
    }
}

/// Ordering key: timestamp, then flow id, then insertion sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventKey {
    pub time: SimTime,
    pub flow: u32,
    pub seq: u64,
}

struct Entry<E> {
    key: EventKey,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the smallest key pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `event` at `time`; times in the past are clamped to now.
    pub fn schedule(&mut self, time: SimTime, flow: u32, event: E) -> EventKey {
        let key = EventKey {
            time: time.max(self.now),
            flow,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.heap.push(Entry { key, event });
        key
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.key.time)
    }

    pub fn pop(&mut self) -> Option<(EventKey, E)> {
        let Entry { key, event } = self.heap.pop()?;
        debug_assert!(key.time >= self.now);
        self.now = key.time;
        Some((key, event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_flow_then_sequence_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(20), 0, "late");
        q.schedule(SimTime(10), 2, "flow2");
        q.schedule(SimTime(10), 1, "flow1-a");
        q.schedule(SimTime(10), 1, "flow1-b");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ["flow1-a", "flow1-b", "flow2", "late"]);
    }

    #[test]
    fn past_events_clamp_to_now() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(100), 0, ());
        q.pop();
        let k = q.schedule(SimTime(5), 0, ());
        assert_eq!(k.time, SimTime(100));
    }

    #[test]
    fn time_conversions() {
        assert_eq!(SimTime::from_secs(0.0012).0, 1_200_000);
        assert!((SimTime(1_500_000_000).secs() - 1.5).abs() < 1e-15);
        assert_eq!(SimTime(5).add_secs(1e-9), SimTime(6));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dispatch_is_nondecreasing(items in proptest::collection::vec((0u64..1000, 0u32..4), 1..200)) {
                let mut q = EventQueue::new();
                for (i, (t, f)) in items.iter().enumerate() {
                    q.schedule(SimTime(*t), *f, i);
                }
                let mut last: Option<EventKey> = None;
                while let Some((k, _)) = q.pop() {
                    if let Some(prev) = last {
                        prop_assert!(prev < k);
                    }
                    last = Some(k);
                }
            }
        }
    }
}
