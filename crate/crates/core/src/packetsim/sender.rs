// SPDX-License-Identifier: Apache-2.0

//! Reliable-transport half of a sender.
//!
//! Every transmission gets a fresh packet number; payload is identified by
//! a segment id so retransmissions carry the same segment under a new
//! number. Loss is declared when a packet is three numbers behind the
//! largest acknowledged one, or when it is older than 9/8 of the RTT while
//! a later packet has been acknowledged; a retransmission timer covers the
//! tail. Delivery rate is estimated per ACK in the style of the
//! delivery-rate-estimation draft used by BBR.

use std::collections::VecDeque;

use super::cca::{AckInfo, CongestionControl, LossInfo};

const PACKET_THRESHOLD: u64 = 3;
const TIME_THRESHOLD: f64 = 9.0 / 8.0;
const MIN_RTO: f64 = 0.2;
const INITIAL_RTO: f64 = 1.0;
const MAX_RTO: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PktState {
    InFlight,
    Acked,
    Lost,
}

#[derive(Debug, Clone)]
struct SentPacket {
    seg: u64,
    size: u32,
    sent_time: f64,
    delivered: u64,
    delivered_time: f64,
    first_sent_time: f64,
    tx_in_flight: u64,
    lost_at_send: u64,
    state: PktState,
}

/// A packet handed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outgoing {
    pub pn: u64,
    pub seg: u64,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SendDecision {
    Now,
    /// Pacing holds the next packet until this time.
    At(f64),
    /// Window-limited until an ACK or loss frees room.
    Blocked,
}

#[derive(Debug)]
pub struct Sender {
    pub cca: Box<dyn CongestionControl>,
    mtu: u32,
    max_window: u64,

    packets: VecDeque<SentPacket>,
    base_pn: u64,
    next_pn: u64,
    next_seg: u64,
    retx: VecDeque<u64>,
    seg_acked: Vec<bool>,

    inflight: u64,
    delivered: u64,
    delivered_time: f64,
    first_sent_time: f64,
    lost: u64,
    next_round_delivered: u64,
    round_count: u64,

    srtt: Option<f64>,
    rttvar: f64,
    latest_rtt: f64,
    min_rtt: f64,
    last_delivery_rate: Option<f64>,
    largest_acked: Option<u64>,
    rto_backoff: u32,
    rto_base: f64,
    loss_time: Option<f64>,

    next_send_time: f64,
    pub sent_bytes: u64,
    pub retransmits: u64,
    pub rto_count: u64,
}

impl Sender {
    pub fn new(cca: Box<dyn CongestionControl>, mtu: u32, max_window: u64) -> Self {
        Self {
            cca,
            mtu,
            max_window,
            packets: VecDeque::new(),
            base_pn: 0,
            next_pn: 0,
            next_seg: 0,
            retx: VecDeque::new(),
            seg_acked: Vec::new(),
            inflight: 0,
            delivered: 0,
            delivered_time: 0.0,
            first_sent_time: 0.0,
            lost: 0,
            next_round_delivered: 0,
            round_count: 0,
            srtt: None,
            rttvar: 0.0,
            latest_rtt: 0.0,
            min_rtt: f64::INFINITY,
            last_delivery_rate: None,
            largest_acked: None,
            rto_backoff: 0,
            rto_base: 0.0,
            loss_time: None,
            next_send_time: 0.0,
            sent_bytes: 0,
            retransmits: 0,
            rto_count: 0,
        }
    }

    pub fn inflight(&self) -> u64 {
        self.inflight
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn last_delivery_rate(&self) -> Option<f64> {
        self.last_delivery_rate
    }

    pub fn round_count(&self) -> u64 {
        self.round_count
    }

    /// Effective window: the smaller of cwnd and the receiver window.
    pub fn window(&self) -> u64 {
        self.cca.cwnd().min(self.max_window)
    }

    pub fn can_send(&self, now: f64) -> SendDecision {
        if self.inflight + u64::from(self.mtu) > self.window() {
            return SendDecision::Blocked;
        }
        if self.cca.pacing_rate().is_some() && self.next_send_time > now + 1e-9 {
            return SendDecision::At(self.next_send_time);
        }
        SendDecision::Now
    }

    pub fn send(&mut self, now: f64) -> Outgoing {
        let seg = loop {
            match self.retx.pop_front() {
                Some(s) if self.seg_acked[s as usize] => continue,
                Some(s) => {
                    self.retransmits += 1;
                    break s;
                }
                None => {
                    let s = self.next_seg;
                    self.next_seg += 1;
                    self.seg_acked.push(false);
                    break s;
                }
            }
        };
        if self.inflight == 0 {
            self.first_sent_time = now;
            self.delivered_time = now;
            self.rto_base = now;
        }
        let size = self.mtu;
        self.inflight += u64::from(size);
        self.sent_bytes += u64::from(size);
        let pn = self.next_pn;
        self.next_pn += 1;
        self.packets.push_back(SentPacket {
            seg,
            size,
            sent_time: now,
            delivered: self.delivered,
            delivered_time: self.delivered_time,
            first_sent_time: self.first_sent_time,
            tx_in_flight: self.inflight,
            lost_at_send: self.lost,
            state: PktState::InFlight,
        });
        if let Some(rate) = self.cca.pacing_rate() {
            if rate > 0.0 {
                self.next_send_time = self.next_send_time.max(now) + f64::from(size) * 8.0 / rate;
            }
        }
        Outgoing { pn, seg, size }
    }

    fn rto(&self) -> f64 {
        let base = match self.srtt {
            Some(s) => (s + 4.0 * self.rttvar).max(MIN_RTO),
            None => INITIAL_RTO,
        };
        (base * f64::from(1u32 << self.rto_backoff.min(16))).min(MAX_RTO)
    }

    /// Next instant the sender needs a timer callback.
    pub fn timer_deadline(&self) -> Option<f64> {
        let rto = (self.inflight > 0).then(|| self.rto_base + self.rto());
        match (self.loss_time, rto) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn update_rtt(&mut self, rtt: f64) {
        self.latest_rtt = rtt;
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = rtt / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - rtt).abs();
                self.srtt = Some(0.875 * s + 0.125 * rtt);
            }
        }
    }

    fn mark_lost(&mut self, idx: usize, now: f64) {
        let p = &mut self.packets[idx];
        debug_assert_eq!(p.state, PktState::InFlight);
        p.state = PktState::Lost;
        let (size, seg, sent_time, tx, lost_at_send) =
            (p.size, p.seg, p.sent_time, p.tx_in_flight, p.lost_at_send);
        self.inflight -= u64::from(size);
        self.lost += u64::from(size);
        self.retx.push_back(seg);
        self.cca.on_loss(&LossInfo {
            now,
            lost_bytes: u64::from(size),
            sent_time,
            tx_in_flight: tx,
            lost_since_send: self.lost - lost_at_send,
            inflight: self.inflight,
        });
    }

    fn detect_losses(&mut self, now: f64) {
        self.loss_time = None;
        let Some(largest) = self.largest_acked else {
            return;
        };
        let delay = (TIME_THRESHOLD * self.srtt.unwrap_or(0.0).max(self.latest_rtt)).max(1e-3);
        for idx in 0..self.packets.len() {
            let pn = self.base_pn + idx as u64;
            if pn >= largest {
                break;
            }
            let p = &self.packets[idx];
            if p.state != PktState::InFlight {
                continue;
            }
            if largest - pn >= PACKET_THRESHOLD || p.sent_time + delay <= now + 1e-9 {
                self.mark_lost(idx, now);
            } else {
                // Later packets were sent later and are closer to `largest`.
                self.loss_time = Some(p.sent_time + delay);
                break;
            }
        }
    }

    fn trim(&mut self) {
        while let Some(p) = self.packets.front() {
            if p.state == PktState::InFlight {
                break;
            }
            self.packets.pop_front();
            self.base_pn += 1;
        }
    }

    /// Processes the acknowledgement of packet `pn` carrying segment `seg`.
    pub fn on_ack(&mut self, now: f64, pn: u64, seg: u64) {
        if let Some(a) = self.seg_acked.get_mut(seg as usize) {
            *a = true;
        }
        if pn < self.base_pn {
            return;
        }
        let idx = (pn - self.base_pn) as usize;
        let prior_inflight = self.inflight;
        let p = &mut self.packets[idx];
        if p.state != PktState::InFlight {
            // Declared lost earlier but arrived after all.
            return;
        }
        p.state = PktState::Acked;
        let p = p.clone();

        self.inflight -= u64::from(p.size);
        self.delivered += u64::from(p.size);
        self.delivered_time = now;
        let rtt = now - p.sent_time;
        self.update_rtt(rtt);
        self.rto_backoff = 0;
        self.rto_base = now;

        let send_elapsed = p.sent_time - p.first_sent_time;
        let ack_elapsed = now - p.delivered_time;
        self.first_sent_time = p.sent_time;
        let interval = send_elapsed.max(ack_elapsed);
        let sample_delivered = self.delivered - p.delivered;
        self.min_rtt = self.min_rtt.min(rtt);
        // Intervals shorter than the path RTT overstate the rate.
        let delivery_rate = (interval >= self.min_rtt && interval > 0.0)
            .then(|| sample_delivered as f64 * 8.0 / interval);
        self.last_delivery_rate = delivery_rate;

        let round_start = p.delivered >= self.next_round_delivered;
        if round_start {
            self.next_round_delivered = self.delivered;
            self.round_count += 1;
        }

        self.largest_acked = Some(self.largest_acked.map_or(pn, |l| l.max(pn)));
        self.detect_losses(now);

        let info = AckInfo {
            now,
            rtt: Some(rtt),
            srtt: self.srtt.unwrap_or(rtt),
            acked_bytes: u64::from(p.size),
            sent_time: p.sent_time,
            delivery_rate,
            sample_delivered,
            prior_inflight,
            inflight: self.inflight,
            delivered: self.delivered,
            round_start,
            round_count: self.round_count,
            tx_in_flight: p.tx_in_flight,
            app_limited: false,
        };
        self.cca.on_ack(&info);
        self.trim();
    }

    /// Timer callback; returns true if a retransmission timeout fired.
    pub fn on_timer(&mut self, now: f64) -> bool {
        if let Some(t) = self.loss_time {
            if t <= now + 1e-9 {
                self.detect_losses(now);
                self.trim();
                return false;
            }
        }
        if self.inflight > 0 && self.rto_base + self.rto() <= now + 1e-9 {
            for idx in 0..self.packets.len() {
                if self.packets[idx].state == PktState::InFlight {
                    self.mark_lost(idx, now);
                }
            }
            self.trim();
            self.loss_time = None;
            self.cca.on_rto(now);
            self.rto_count += 1;
            self.rto_backoff += 1;
            self.rto_base = now;
            self.next_send_time = now;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packetsim::cca::Reno;

    fn sender() -> Sender {
        Sender::new(Box::new(Reno::new(1500, 10 * 1500)), 1500, 1 << 26)
    }

    #[test]
    fn window_limits_sending() {
        let mut s = sender();
        let mut n = 0;
        while s.can_send(0.0) == SendDecision::Now {
            s.send(0.0);
            n += 1;
        }
        assert_eq!(n, 10);
        assert_eq!(s.inflight(), 15_000);
    }

    #[test]
    fn third_later_ack_declares_loss() {
        let mut s = sender();
        for _ in 0..5 {
            s.send(0.0);
        }
        s.on_ack(0.04, 1, 1);
        s.on_ack(0.041, 2, 2);
        assert_eq!(s.retx.len(), 0);
        s.on_ack(0.042, 3, 3);
        assert_eq!(s.retx.iter().copied().collect::<Vec<_>>(), vec![0]);
        // 5 sent, 3 acked, 1 lost.
        assert_eq!(s.inflight(), 1500);
        // Retransmission reuses the segment under a new packet number.
        let out = s.send(0.05);
        assert_eq!((out.pn, out.seg), (5, 0));
    }

    #[test]
    fn rto_declares_everything_lost() {
        let mut s = sender();
        s.send(0.0);
        s.send(0.0);
        let deadline = s.timer_deadline().unwrap();
        assert_eq!(deadline, INITIAL_RTO);
        assert!(s.on_timer(deadline));
        assert_eq!(s.inflight(), 0);
        assert_eq!(s.rto_count, 1);
        assert_eq!(s.cca.cwnd(), 1500);
    }

    #[test]
    fn delivery_rate_matches_ack_spacing() {
        let mut s = sender();
        for _ in 0..10 {
            s.send(0.0);
        }
        // ACKs arrive 1.2 ms apart after a 40 ms RTT, as from a 10 Mbps
        // bottleneck; each ACK releases one new packet.
        let mut t = 0.04;
        for i in 0..40u64 {
            s.on_ack(t, i, i);
            s.send(t);
            t += 0.0012;
        }
        let rate = s.last_delivery_rate().unwrap();
        assert!((rate - 10e6).abs() / 10e6 < 0.02, "{rate}");
    }
}
