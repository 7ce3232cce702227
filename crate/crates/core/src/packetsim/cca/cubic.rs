// SPDX-License-Identifier: Apache-2.0

//! CUBIC window growth.
//!
//! Between loss events the window follows `W(t) = C (t - K)^3 + W_max`
//! with `K = cbrt(W_max (1 - beta) / C)`, windows in packets and `t` in
//! seconds since the epoch began. The epoch starts on the first ACK for
//! data sent after the reduction. Fast convergence and the TCP-friendly
//! region are not modeled.

use super::{AckInfo, CongestionControl, LossInfo};
use crate::config::CcaKind;

pub const CUBIC_C: f64 = 0.4;
pub const CUBIC_BETA: f64 = 0.7;

/// `K` for a given `W_max` in packets.
pub fn cubic_k(w_max_pkts: f64) -> f64 {
    (w_max_pkts * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt()
}

/// `W(t)` in packets.
pub fn cubic_window(w_max_pkts: f64, t: f64) -> f64 {
    let k = cubic_k(w_max_pkts);
    CUBIC_C * (t - k).powi(3) + w_max_pkts
}

#[derive(Debug, Clone)]
pub struct Cubic {
    mtu: f64,
    cwnd: f64,
    ssthresh: f64,
    /// Packets.
    w_max: f64,
    epoch_start: Option<f64>,
    recovery_start: f64,
}

impl Cubic {
    pub fn new(mtu: u32, initial_cwnd: u64) -> Self {
        Self {
            mtu: f64::from(mtu),
            cwnd: initial_cwnd as f64,
            ssthresh: f64::INFINITY,
            w_max: 0.0,
            epoch_start: None,
            recovery_start: f64::NEG_INFINITY,
        }
    }

    pub fn w_max_packets(&self) -> f64 {
        self.w_max
    }

    pub fn epoch_start(&self) -> Option<f64> {
        self.epoch_start
    }

    fn reduce(&mut self, now: f64) {
        self.w_max = self.cwnd / self.mtu;
        self.cwnd = (self.cwnd * CUBIC_BETA).max(2.0 * self.mtu);
        self.ssthresh = self.cwnd;
        self.epoch_start = None;
        self.recovery_start = now;
    }
}

impl CongestionControl for Cubic {
    fn kind(&self) -> CcaKind {
        CcaKind::Cubic
    }

    fn on_ack(&mut self, ack: &AckInfo) {
        if ack.sent_time <= self.recovery_start {
            return;
        }
        let acked = ack.acked_bytes as f64;
        if self.cwnd < self.ssthresh {
            self.cwnd += acked;
            return;
        }
        let start = *self.epoch_start.get_or_insert_with(|| {
            // Entering avoidance without a prior loss: the curve starts at
            // its plateau.
            if self.w_max < self.cwnd / self.mtu && self.ssthresh.is_infinite() {
                self.w_max = self.cwnd / self.mtu;
            }
            ack.now
        });
        let target = cubic_window(self.w_max, ack.now - start) * self.mtu;
        // Growth per ACK is bounded to keep bursts sane when the curve is
        // steep far from W_max.
        let limit = self.cwnd + acked / 2.0;
        self.cwnd = target.min(limit).max(self.cwnd);
    }

    fn on_loss(&mut self, loss: &LossInfo) {
        if loss.sent_time <= self.recovery_start {
            return;
        }
        self.reduce(loss.now);
    }

    fn on_rto(&mut self, now: f64) {
        self.reduce(now);
        self.cwnd = self.mtu;
    }

    fn cwnd(&self) -> u64 {
        self.cwnd as u64
    }

    fn pacing_rate(&self) -> Option<f64> {
        None
    }

    fn state_name(&self) -> &'static str {
        if self.cwnd < self.ssthresh {
            "slow_start"
        } else {
            "congestion_avoidance"
        }
    }
}
