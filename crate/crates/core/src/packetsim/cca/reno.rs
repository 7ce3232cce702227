// SPDX-License-Identifier: Apache-2.0

//! NewReno-style AIMD with byte counting.

use super::{AckInfo, CongestionControl, LossInfo};
use crate::config::CcaKind;

#[derive(Debug, Clone)]
pub struct Reno {
    mtu: f64,
    cwnd: f64,
    ssthresh: f64,
    /// Packets sent at or before this instant belong to the current
    /// recovery episode and trigger no further reduction.
    recovery_start: f64,
}

impl Reno {
    pub fn new(mtu: u32, initial_cwnd: u64) -> Self {
        Self {
            mtu: f64::from(mtu),
            cwnd: initial_cwnd as f64,
            ssthresh: f64::INFINITY,
            recovery_start: f64::NEG_INFINITY,
        }
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    fn in_recovery(&self, sent_time: f64) -> bool {
        sent_time <= self.recovery_start
    }
}

impl CongestionControl for Reno {
    fn kind(&self) -> CcaKind {
        CcaKind::Reno
    }

    fn on_ack(&mut self, ack: &AckInfo) {
        if self.in_recovery(ack.sent_time) {
            return;
        }
        let acked = ack.acked_bytes as f64;
        if self.cwnd < self.ssthresh {
            self.cwnd += acked;
        } else {
            self.cwnd += self.mtu * acked / self.cwnd;
        }
    }

    fn on_loss(&mut self, loss: &LossInfo) {
        if self.in_recovery(loss.sent_time) {
            return;
        }
        self.ssthresh = (self.cwnd / 2.0).max(2.0 * self.mtu);
        self.cwnd = self.ssthresh;
        self.recovery_start = loss.now;
    }

    fn on_rto(&mut self, now: f64) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0 * self.mtu);
        self.cwnd = self.mtu;
        self.recovery_start = now;
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

#[cfg(test)]
mod tests {
    use super::*;

    const MTU: u32 = 1500;

    fn ack(now: f64, sent: f64, bytes: u64) -> AckInfo {
        AckInfo {
            now,
            sent_time: sent,
            acked_bytes: bytes,
            ..AckInfo::default()
        }
    }

    #[test]
    fn loss_halves_into_ssthresh() {
        let mut r = Reno::new(MTU, 80 * 1500);
        r.on_loss(&LossInfo {
            now: 1.0,
            sent_time: 0.9,
            lost_bytes: 1500,
            ..LossInfo::default()
        });
        assert_eq!(r.ssthresh(), 40.0 * 1500.0);
        assert_eq!(r.cwnd(), 40 * 1500);
    }

    #[test]
    fn one_loss_per_window() {
        let mut r = Reno::new(MTU, 80 * 1500);
        let loss = |sent| LossInfo {
            now: 1.0,
            sent_time: sent,
            lost_bytes: 1500,
            ..LossInfo::default()
        };
        r.on_loss(&loss(0.9));
        r.on_loss(&loss(0.95));
        assert_eq!(r.cwnd(), 40 * 1500);
    }

    #[test]
    fn slow_start_then_linear() {
        let mut r = Reno::new(MTU, 10 * 1500);
        r.on_ack(&ack(0.1, 0.05, 1500));
        assert_eq!(r.cwnd(), 11 * 1500);

        r.ssthresh = 10.0 * 1500.0;
        r.cwnd = 20.0 * 1500.0;
        for _ in 0..20 {
            r.on_ack(&ack(0.2, 0.15, 1500));
        }
        // One cwnd of ACKs adds about one MSS.
        let grown = r.cwnd as f64 / 1500.0 - 20.0;
        assert!((grown - 1.0).abs() < 0.05, "{grown}");
    }

    #[test]
    fn acks_for_pre_recovery_data_do_not_grow() {
        let mut r = Reno::new(MTU, 20 * 1500);
        r.on_loss(&LossInfo {
            now: 1.0,
            sent_time: 0.9,
            ..LossInfo::default()
        });
        let before = r.cwnd();
        r.on_ack(&ack(1.01, 0.95, 1500));
        assert_eq!(r.cwnd(), before);
        r.on_ack(&ack(1.1, 1.05, 1500));
        assert!(r.cwnd() > before);
    }
}
