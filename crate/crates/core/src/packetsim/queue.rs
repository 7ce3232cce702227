// SPDX-License-Identifier: Apache-2.0

//! Droptail FIFO in front of a constant-rate server.
//!
//! This stands in for an egress token-bucket shaper with a byte-limited
//! queue: a packet is admitted only if it fits entirely, and admitted packets
//! leave back to back at the service rate. The packet being serialized still
//! counts toward occupancy until its last bit is sent.

use super::event::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// Time the last bit leaves the server.
    Accepted { departure: SimTime },
    Dropped,
}

#[derive(Debug, Clone)]
pub struct BottleneckQueue {
    occupancy: u64,
    limit: u64,
    service_rate: f64,
    /// Departure time of the most recently admitted packet.
    last_departure: SimTime,
    drops: u64,
    /// ∫ occupancy dt up to `integral_at`, byte-seconds.
    integral: f64,
    integral_at: SimTime,
}

impl BottleneckQueue {
    pub fn new(limit_bytes: u64, service_rate: f64) -> Self {
        Self {
            occupancy: 0,
            limit: limit_bytes,
            service_rate,
            last_departure: SimTime::ZERO,
            drops: 0,
            integral: 0.0,
            integral_at: SimTime::ZERO,
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn transmission_time(&self, size: u32) -> f64 {
        f64::from(size) * 8.0 / self.service_rate
    }

    pub fn enqueue(&mut self, size: u32, now: SimTime) -> Admission {
        if self.occupancy + u64::from(size) > self.limit {
            self.drops += 1;
            return Admission::Dropped;
        }
        self.advance_integral(now);
        self.occupancy += u64::from(size);
        let start = self.last_departure.max(now);
        let departure = start.add_secs(self.transmission_time(size));
        self.last_departure = departure;
        Admission::Accepted { departure }
    }

    /// Called when a previously admitted packet has been fully serialized.
    pub fn depart(&mut self, size: u32, now: SimTime) {
        self.advance_integral(now);
        debug_assert!(self.occupancy >= u64::from(size));
        self.occupancy -= u64::from(size);
    }

    /// Occupancy integral up to `now`.
    pub fn integral(&mut self, now: SimTime) -> f64 {
        self.advance_integral(now);
        self.integral
    }

    fn advance_integral(&mut self, now: SimTime) {
        if now > self.integral_at {
            self.integral += self.occupancy as f64 * (now.0 - self.integral_at.0) as f64 * 1e-9;
            self.integral_at = now;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_queue_serializes_one_packet() {
        let mut q = BottleneckQueue::new(15_000, 10e6);
        let now = SimTime::from_secs(1.0);
        match q.enqueue(1500, now) {
            Admission::Accepted { departure } => {
                assert_eq!(departure.0 - now.0, 1_200_000);
            }
            Admission::Dropped => panic!("dropped"),
        }
        assert_eq!(q.occupancy(), 1500);
    }

    #[test]
    fn full_queue_drops() {
        let mut q = BottleneckQueue::new(3000, 10e6);
        assert!(matches!(q.enqueue(1500, SimTime::ZERO), Admission::Accepted { .. }));
        assert!(matches!(q.enqueue(1500, SimTime::ZERO), Admission::Accepted { .. }));
        assert_eq!(q.enqueue(1500, SimTime::ZERO), Admission::Dropped);
        assert_eq!(q.drops(), 1);
        assert_eq!(q.occupancy(), 3000);
    }

    #[test]
    fn same_instant_arrivals_serialize_back_to_back() {
        let mut q = BottleneckQueue::new(15_000, 10e6);
        let a = q.enqueue(1500, SimTime::ZERO);
        let b = q.enqueue(1500, SimTime::ZERO);
        match (a, b) {
            (Admission::Accepted { departure: da }, Admission::Accepted { departure: db }) => {
                assert_eq!(db.0 - da.0, 1_200_000);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn integral_tracks_occupancy() {
        let mut q = BottleneckQueue::new(15_000, 10e6);
        q.enqueue(1500, SimTime::ZERO);
        q.depart(1500, SimTime::from_secs(0.5));
        assert!((q.integral(SimTime::from_secs(2.0)) - 750.0).abs() < 1e-6);
    }
}
