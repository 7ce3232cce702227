// SPDX-License-Identifier: Apache-2.0

//! BBRv1 following the Linux state machine.
//!
//! Omitted relative to the kernel: packet conservation during loss
//! recovery, the TSO quantization budget in the cwnd target, the pacing
//! margin, and ACK-aggregation compensation. Drain keeps a cwnd gain of 2
//! so the in-flight cap holds from the moment Startup ends.

use super::filter::MaxFilter;
use super::{flow_jitter, AckInfo, CongestionControl, LossInfo};
use crate::config::CcaKind;

pub const HIGH_GAIN: f64 = 2.885_390_081_777_927; // 2 / ln 2
pub const CWND_GAIN: f64 = 2.0;
pub const PACING_GAINS: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
pub const BTLBW_WINDOW_ROUNDS: f64 = 10.0;
pub const MIN_RTT_WINDOW: f64 = 10.0;
pub const PROBE_RTT_DURATION: f64 = 0.2;
pub const MIN_CWND_PACKETS: f64 = 4.0;
const FULL_BW_THRESH: f64 = 1.25;
const FULL_BW_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbrMode {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

#[derive(Debug, Clone)]
pub struct BbrV1 {
    mtu: f64,
    flow_id: u32,
    mode: BbrMode,
    btlbw: MaxFilter,
    min_rtt: f64,
    min_rtt_stamp: f64,
    pacing_gain: f64,
    cwnd_gain: f64,
    pacing_rate: f64,
    cwnd: f64,
    prior_cwnd: f64,
    full_bw: f64,
    full_bw_cnt: u32,
    full_bw_reached: bool,
    /// Round count at which Startup ended.
    startup_exit_round: Option<u64>,
    cycle_idx: usize,
    cycle_stamp: f64,
    probe_bw_entries: u64,
    probe_rtt_done_stamp: Option<f64>,
    probe_rtt_round_done: bool,
    probe_rtt_entered: f64,
    loss_in_ack: bool,
    initial_cwnd: f64,
}

impl BbrV1 {
    pub fn new(mtu: u32, initial_cwnd: u64, flow_id: u32) -> Self {
        let mtu = f64::from(mtu);
        let cwnd = initial_cwnd as f64;
        Self {
            mtu,
            flow_id,
            mode: BbrMode::Startup,
            btlbw: MaxFilter::new(BTLBW_WINDOW_ROUNDS),
            min_rtt: f64::INFINITY,
            min_rtt_stamp: 0.0,
            pacing_gain: HIGH_GAIN,
            cwnd_gain: HIGH_GAIN,
            // No RTT sample yet: assume 1 ms as the kernel does.
            pacing_rate: HIGH_GAIN * cwnd * 8.0 / 1e-3,
            cwnd,
            prior_cwnd: cwnd,
            full_bw: 0.0,
            full_bw_cnt: 0,
            full_bw_reached: false,
            startup_exit_round: None,
            cycle_idx: 0,
            cycle_stamp: 0.0,
            probe_bw_entries: 0,
            probe_rtt_done_stamp: None,
            probe_rtt_round_done: false,
            probe_rtt_entered: 0.0,
            loss_in_ack: false,
            initial_cwnd: cwnd,
        }
    }

    pub fn mode(&self) -> BbrMode {
        self.mode
    }

    /// Bottleneck bandwidth estimate, bits per second.
    pub fn btlbw(&self) -> f64 {
        self.btlbw.get()
    }

    pub fn min_rtt(&self) -> f64 {
        self.min_rtt
    }

    pub fn min_rtt_stamp(&self) -> f64 {
        self.min_rtt_stamp
    }

    pub fn pacing_gain(&self) -> f64 {
        self.pacing_gain
    }

    pub fn full_bw_reached(&self) -> bool {
        self.full_bw_reached
    }

    pub fn startup_exit_round(&self) -> Option<u64> {
        self.startup_exit_round
    }

    pub fn probe_rtt_entered(&self) -> f64 {
        self.probe_rtt_entered
    }

    /// `gain × btlbw × min_rtt` in bytes.
    pub fn bdp(&self, gain: f64) -> f64 {
        if !self.min_rtt.is_finite() || self.btlbw() <= 0.0 {
            return self.initial_cwnd;
        }
        gain * self.btlbw() * self.min_rtt / 8.0
    }

    fn min_cwnd(&self) -> f64 {
        MIN_CWND_PACKETS * self.mtu
    }

    fn update_bw(&mut self, ack: &AckInfo) {
        if let Some(rate) = ack.delivery_rate {
            if !ack.app_limited || rate >= self.btlbw() {
                self.btlbw.update(ack.round_count as f64, rate);
            }
        }
    }

    fn enter_probe_bw(&mut self, now: f64) {
        self.mode = BbrMode::ProbeBw;
        self.cwnd_gain = CWND_GAIN;
        let j = flow_jitter(self.flow_id, self.probe_bw_entries);
        self.probe_bw_entries += 1;
        // Start in one of the phases 1..=7 and advance at once, so the
        // first phase is never the drain phase.
        self.cycle_idx = 1 + ((j * 7.0) as usize).min(6);
        self.advance_cycle(now);
    }

    fn advance_cycle(&mut self, now: f64) {
        self.cycle_idx = (self.cycle_idx + 1) % PACING_GAINS.len();
        self.cycle_stamp = now;
        self.pacing_gain = PACING_GAINS[self.cycle_idx];
    }

    fn update_cycle_phase(&mut self, ack: &AckInfo) {
        if self.mode != BbrMode::ProbeBw {
            return;
        }
        let full_length = ack.now - self.cycle_stamp > self.min_rtt;
        let next = if self.pacing_gain == 1.0 {
            full_length
        } else if self.pacing_gain > 1.0 {
            full_length
                && (self.loss_in_ack || ack.prior_inflight as f64 >= self.bdp(self.pacing_gain))
        } else {
            full_length || ack.prior_inflight as f64 <= self.bdp(1.0)
        };
        if next {
            self.advance_cycle(ack.now);
        }
    }

    fn check_full_bw_reached(&mut self, ack: &AckInfo) {
        if self.full_bw_reached || !ack.round_start || ack.app_limited {
            return;
        }
        let bw = self.btlbw();
        if bw >= self.full_bw * FULL_BW_THRESH {
            self.full_bw = bw;
            self.full_bw_cnt = 0;
            return;
        }
        self.full_bw_cnt += 1;
        if self.full_bw_cnt >= FULL_BW_ROUNDS {
            self.full_bw_reached = true;
            self.startup_exit_round = Some(ack.round_count);
        }
    }

    fn check_drain(&mut self, ack: &AckInfo) {
        if self.mode == BbrMode::Startup && self.full_bw_reached {
            self.mode = BbrMode::Drain;
            self.pacing_gain = 1.0 / HIGH_GAIN;
            self.cwnd_gain = CWND_GAIN;
        }
        if self.mode == BbrMode::Drain && ack.inflight as f64 <= self.bdp(1.0) {
            self.enter_probe_bw(ack.now);
        }
    }

    fn update_min_rtt(&mut self, ack: &AckInfo) {
        let expired = ack.now > self.min_rtt_stamp + MIN_RTT_WINDOW;
        if let Some(rtt) = ack.rtt {
            if rtt <= self.min_rtt || expired {
                self.min_rtt = rtt;
                self.min_rtt_stamp = ack.now;
            }
        }
        if expired && self.mode != BbrMode::ProbeRtt {
            self.mode = BbrMode::ProbeRtt;
            self.pacing_gain = 1.0;
            self.cwnd_gain = 1.0;
            self.prior_cwnd = self.cwnd;
            self.probe_rtt_done_stamp = None;
            self.probe_rtt_entered = ack.now;
        }
        if self.mode == BbrMode::ProbeRtt {
            match self.probe_rtt_done_stamp {
                None if ack.inflight as f64 <= self.min_cwnd() => {
                    self.probe_rtt_done_stamp = Some(ack.now + PROBE_RTT_DURATION);
                    self.probe_rtt_round_done = false;
                }
                Some(done) => {
                    if ack.round_start {
                        self.probe_rtt_round_done = true;
                    }
                    if self.probe_rtt_round_done && ack.now >= done {
                        self.min_rtt_stamp = ack.now;
                        self.cwnd = self.cwnd.max(self.prior_cwnd);
                        if self.full_bw_reached {
                            self.enter_probe_bw(ack.now);
                        } else {
                            self.mode = BbrMode::Startup;
                            self.pacing_gain = HIGH_GAIN;
                            self.cwnd_gain = HIGH_GAIN;
                        }
                    }
                }
                None => {}
            }
        }
    }

    fn set_pacing_rate(&mut self) {
        let bw = self.btlbw();
        if bw <= 0.0 {
            return;
        }
        let rate = self.pacing_gain * bw;
        if self.full_bw_reached || rate > self.pacing_rate {
            self.pacing_rate = rate;
        }
    }

    fn set_cwnd(&mut self, ack: &AckInfo) {
        let acked = ack.acked_bytes as f64;
        let target = self.bdp(self.cwnd_gain);
        if self.full_bw_reached {
            self.cwnd = (self.cwnd + acked).min(target);
        } else if self.cwnd < target || (ack.delivered as f64) < self.initial_cwnd {
            self.cwnd += acked;
        }
        self.cwnd = self.cwnd.max(self.min_cwnd());
        if self.mode == BbrMode::ProbeRtt {
            self.cwnd = self.cwnd.min(self.min_cwnd());
        }
    }
}

impl CongestionControl for BbrV1 {
    fn kind(&self) -> CcaKind {
        CcaKind::BbrV1
    }

    fn on_ack(&mut self, ack: &AckInfo) {
        self.update_bw(ack);
        self.update_cycle_phase(ack);
        self.check_full_bw_reached(ack);
        self.check_drain(ack);
        self.update_min_rtt(ack);
        self.set_pacing_rate();
        self.set_cwnd(ack);
        self.loss_in_ack = false;
    }

    fn on_loss(&mut self, _loss: &LossInfo) {
        // Loss does not feed the model; it only shortens a probing phase.
        self.loss_in_ack = true;
    }

    fn on_rto(&mut self, _now: f64) {
        self.prior_cwnd = self.cwnd;
        self.cwnd = self.min_cwnd();
    }

    fn cwnd(&self) -> u64 {
        self.cwnd as u64
    }

    fn pacing_rate(&self) -> Option<f64> {
        Some(self.pacing_rate)
    }

    fn inflight_cap(&self) -> Option<f64> {
        if self.full_bw_reached {
            Some(self.bdp(CWND_GAIN).max(self.min_cwnd()))
        } else {
            None
        }
    }

    fn state_name(&self) -> &'static str {
        match self.mode {
            BbrMode::Startup => "startup",
            BbrMode::Drain => "drain",
            BbrMode::ProbeBw => "probe_bw",
            BbrMode::ProbeRtt => "probe_rtt",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(now: f64, rtt: f64, rate: f64, round: u64, inflight: u64) -> AckInfo {
        AckInfo {
            now,
            rtt: Some(rtt),
            srtt: rtt,
            acked_bytes: 1500,
            sent_time: now - rtt,
            delivery_rate: Some(rate),
            prior_inflight: inflight + 1500,
            inflight,
            delivered: 1_000_000,
            round_start: true,
            round_count: round,
            ..AckInfo::default()
        }
    }

    #[test]
    fn lower_rtt_sample_updates_rtprop() {
        let mut b = BbrV1::new(1500, 15_000, 0);
        b.on_ack(&ack(0.05, 0.05, 1e6, 1, 0));
        assert_eq!(b.min_rtt(), 0.05);
        b.on_ack(&ack(0.1, 0.041, 1e6, 2, 0));
        assert_eq!(b.min_rtt(), 0.041);
        b.on_ack(&ack(0.15, 0.06, 1e6, 3, 0));
        assert_eq!(b.min_rtt(), 0.041);
    }

    #[test]
    fn loss_leaves_model_untouched() {
        let mut b = BbrV1::new(1500, 15_000, 0);
        b.on_ack(&ack(0.05, 0.04, 5e6, 1, 0));
        let (bw, rtt, rate) = (b.btlbw(), b.min_rtt(), b.pacing_rate());
        b.on_loss(&LossInfo {
            now: 0.06,
            lost_bytes: 1500,
            ..LossInfo::default()
        });
        assert_eq!((b.btlbw(), b.min_rtt(), b.pacing_rate()), (bw, rtt, rate));
    }

    #[test]
    fn stale_rtprop_enters_probe_rtt_and_dwells() {
        let mut b = BbrV1::new(1500, 15_000, 0);
        // Plateaued bandwidth ends Startup after three rounds.
        let mut round = 1;
        let mut t = 0.04;
        for _ in 0..6 {
            b.on_ack(&ack(t, 0.04, 10e6, round, 30_000));
            round += 1;
            t += 0.04;
        }
        assert!(b.full_bw_reached());
        assert_eq!(b.mode(), BbrMode::ProbeBw);

        // The stamp was set at t=0.04; 10.1 s later the estimate is stale.
        let t_stale = b.min_rtt_stamp() + 10.1;
        let mut a = ack(t_stale, 0.05, 10e6, round, 3000);
        a.round_start = false;
        b.on_ack(&a);
        assert_eq!(b.mode(), BbrMode::ProbeRtt);
        assert!(b.cwnd() <= 4 * 1500);

        // Still in ProbeRTT just before the 200 ms dwell ends.
        let mut a = ack(t_stale + 0.19, 0.04, 10e6, round + 1, 3000);
        b.on_ack(&a);
        assert_eq!(b.mode(), BbrMode::ProbeRtt);
        a.now = t_stale + 0.2;
        a.round_count = round + 2;
        b.on_ack(&a);
        assert_eq!(b.mode(), BbrMode::ProbeBw);
    }

    #[test]
    fn cwnd_capped_outside_startup() {
        let mut b = BbrV1::new(1500, 15_000, 3);
        let mut t = 0.0;
        for round in 1..40 {
            t += 0.04;
            b.on_ack(&ack(t, 0.04, 10e6, round, 60_000));
        }
        let cap = 2.0 * 10e6 * 0.04 / 8.0;
        assert!(b.cwnd() as f64 <= cap + 1.0);
        assert_eq!(b.inflight_cap().unwrap(), cap);
    }
}
