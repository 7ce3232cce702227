// SPDX-License-Identifier: Apache-2.0

//! BBRv2 and BBRv3.
//!
//! Both versions share one state machine (Startup, Drain, ProbeBW with
//! Down/Cruise/Refill/Up, ProbeRTT) and differ in constants and in the rule
//! for leaving Up. ECN is not modeled.
//!
//! Bandwidth model: `bw = min(max_bw, bw_lo)`, with `max_bw` a windowed max
//! over the last two probe cycles. Volume model: `inflight_hi` is the
//! long-term bound learned from loss while probing; `inflight_lo` and
//! `bw_lo` are short-term bounds cut by `beta` on every lossy round spent
//! outside probing.

use super::filter::MaxFilter;
use super::{flow_jitter, AckInfo, CongestionControl, LossInfo};
use crate::config::CcaKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Bbr2Params {
    pub kind: CcaKind,
    pub startup_pacing_gain: f64,
    pub startup_cwnd_gain: f64,
    pub drain_pacing_gain: f64,
    pub down_pacing_gain: f64,
    pub up_pacing_gain: f64,
    pub up_cwnd_gain: f64,
    pub cwnd_gain: f64,
    pub loss_thresh: f64,
    pub beta: f64,
    pub headroom: f64,
    pub full_loss_cnt: u32,
    pub probe_rtt_interval: f64,
    pub probe_rtt_duration: f64,
    pub probe_rtt_cwnd_gain: f64,
    /// Base wait between bandwidth probes; a per-flow offset in `[0, 1)` s
    /// is added.
    pub probe_wait_base: f64,
    /// Upper bound on rounds between probes when competing with Reno.
    pub reno_rounds_cap: u64,
    /// Leave Up on a three-round bandwidth plateau instead of after one
    /// min RTT at 1.25 BDP.
    pub up_until_plateau: bool,
}

impl Bbr2Params {
    pub fn v2() -> Self {
        Self {
            kind: CcaKind::BbrV2,
            startup_pacing_gain: super::bbr::HIGH_GAIN,
            startup_cwnd_gain: super::bbr::HIGH_GAIN,
            drain_pacing_gain: 1.0 / super::bbr::HIGH_GAIN,
            down_pacing_gain: 0.75,
            up_pacing_gain: 1.25,
            up_cwnd_gain: 2.0,
            cwnd_gain: 2.0,
            loss_thresh: 0.02,
            beta: 0.7,
            headroom: 0.15,
            full_loss_cnt: 8,
            probe_rtt_interval: 10.0,
            probe_rtt_duration: 0.2,
            probe_rtt_cwnd_gain: 0.5,
            probe_wait_base: 2.0,
            reno_rounds_cap: 63,
            up_until_plateau: false,
        }
    }

    pub fn v3() -> Self {
        Self {
            kind: CcaKind::BbrV3,
            startup_pacing_gain: 2.77,
            startup_cwnd_gain: 2.0,
            drain_pacing_gain: 0.35,
            down_pacing_gain: 0.9,
            up_cwnd_gain: 2.25,
            full_loss_cnt: 6,
            up_until_plateau: true,
            ..Self::v2()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeBwPhase {
    Down,
    Cruise,
    Refill,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bbr2State {
    Startup,
    Drain,
    ProbeBw(ProbeBwPhase),
    ProbeRtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AckPhase {
    Init,
    ProbeStarting,
    ProbeFeedback,
    ProbeStopping,
    Refilling,
}

#[derive(Debug, Clone)]
pub struct Bbr2 {
    p: Bbr2Params,
    mtu: f64,
    flow_id: u32,
    state: Bbr2State,
    pacing_gain: f64,
    cwnd_gain: f64,
    pacing_rate: f64,
    cwnd: f64,
    prior_cwnd: f64,
    initial_cwnd: f64,

    max_bw: MaxFilter,
    cycle_count: u64,
    bw_lo: f64,
    bw_latest: f64,
    inflight_hi: f64,
    inflight_lo: f64,
    inflight_latest: f64,
    min_rtt: f64,
    min_rtt_stamp: f64,

    filled_pipe: bool,
    full_bw: f64,
    full_bw_cnt: u32,
    full_bw_now: bool,

    loss_in_round: bool,
    loss_events_in_round: u32,
    bw_probe_samples: bool,
    probe_up_cnt: f64,
    probe_up_acks: f64,
    bw_probe_up_rounds: u32,
    rounds_since_bw_probe: u64,
    bw_probe_wait: f64,
    cycle_stamp: f64,
    ack_phase: AckPhase,
    probe_waits: u64,

    probe_rtt_done_stamp: Option<f64>,
    probe_rtt_round_done: bool,
    /// Inflight over the latest ACK, for decisions made before it updates.
    inflight: f64,
}

impl Bbr2 {
    pub fn new(p: Bbr2Params, mtu: u32, initial_cwnd: u64, flow_id: u32) -> Self {
        let mtu = f64::from(mtu);
        let cwnd = initial_cwnd as f64;
        Self {
            pacing_gain: p.startup_pacing_gain,
            cwnd_gain: p.startup_cwnd_gain,
            pacing_rate: p.startup_pacing_gain * cwnd * 8.0 / 1e-3,
            p,
            mtu,
            flow_id,
            state: Bbr2State::Startup,
            cwnd,
            prior_cwnd: cwnd,
            initial_cwnd: cwnd,
            max_bw: MaxFilter::new(2.0),
            cycle_count: 0,
            bw_lo: f64::INFINITY,
            bw_latest: 0.0,
            inflight_hi: f64::INFINITY,
            inflight_lo: f64::INFINITY,
            inflight_latest: 0.0,
            min_rtt: f64::INFINITY,
            min_rtt_stamp: 0.0,
            filled_pipe: false,
            full_bw: 0.0,
            full_bw_cnt: 0,
            full_bw_now: false,
            loss_in_round: false,
            loss_events_in_round: 0,
            bw_probe_samples: false,
            probe_up_cnt: f64::INFINITY,
            probe_up_acks: 0.0,
            bw_probe_up_rounds: 0,
            rounds_since_bw_probe: 0,
            bw_probe_wait: 0.0,
            cycle_stamp: 0.0,
            ack_phase: AckPhase::Init,
            probe_waits: 0,
            probe_rtt_done_stamp: None,
            probe_rtt_round_done: false,
            inflight: 0.0,
        }
    }

    pub fn state(&self) -> Bbr2State {
        self.state
    }

    pub fn inflight_hi(&self) -> f64 {
        self.inflight_hi
    }

    pub fn inflight_lo(&self) -> f64 {
        self.inflight_lo
    }

    pub fn bw(&self) -> f64 {
        self.max_bw.get().min(self.bw_lo)
    }

    pub fn max_bw(&self) -> f64 {
        self.max_bw.get()
    }

    pub fn min_rtt(&self) -> f64 {
        self.min_rtt
    }

    pub fn filled_pipe(&self) -> bool {
        self.filled_pipe
    }

    /// Forces the state machine into ProbeBW Up with the given bounds, for
    /// unit tests of the loss response.
    #[cfg(test)]
    fn force_probe_up(&mut self, inflight_hi: f64) {
        self.filled_pipe = true;
        self.inflight_hi = inflight_hi;
        self.bw_probe_samples = true;
        self.set_state(Bbr2State::ProbeBw(ProbeBwPhase::Up));
    }

    fn bdp(&self, gain: f64) -> f64 {
        let bw = self.bw();
        if !self.min_rtt.is_finite() || bw <= 0.0 || !bw.is_finite() {
            return self.initial_cwnd;
        }
        gain * bw * self.min_rtt / 8.0
    }

    fn min_cwnd(&self) -> f64 {
        4.0 * self.mtu
    }

    fn target_inflight(&self) -> f64 {
        self.bdp(1.0).min(self.cwnd)
    }

    fn inflight_with_headroom(&self) -> f64 {
        if self.inflight_hi.is_infinite() {
            return f64::INFINITY;
        }
        let headroom = (self.p.headroom * self.inflight_hi).max(self.mtu);
        (self.inflight_hi - headroom).max(self.min_cwnd())
    }

    fn is_probing_bw(&self) -> bool {
        matches!(
            self.state,
            Bbr2State::Startup | Bbr2State::ProbeBw(ProbeBwPhase::Refill | ProbeBwPhase::Up)
        )
    }

    fn set_state(&mut self, s: Bbr2State) {
        self.state = s;
        let (pg, cg) = match s {
            Bbr2State::Startup => (self.p.startup_pacing_gain, self.p.startup_cwnd_gain),
            Bbr2State::Drain => (self.p.drain_pacing_gain, self.p.cwnd_gain),
            Bbr2State::ProbeBw(ProbeBwPhase::Down) => (self.p.down_pacing_gain, self.p.cwnd_gain),
            Bbr2State::ProbeBw(ProbeBwPhase::Cruise | ProbeBwPhase::Refill) => {
                (1.0, self.p.cwnd_gain)
            }
            Bbr2State::ProbeBw(ProbeBwPhase::Up) => (self.p.up_pacing_gain, self.p.up_cwnd_gain),
            Bbr2State::ProbeRtt => (1.0, self.p.probe_rtt_cwnd_gain),
        };
        self.pacing_gain = pg;
        self.cwnd_gain = cg;
    }

    fn reset_congestion_signals(&mut self) {
        self.loss_in_round = false;
        self.loss_events_in_round = 0;
        self.bw_latest = 0.0;
        self.inflight_latest = 0.0;
    }

    fn reset_lower_bounds(&mut self) {
        self.bw_lo = f64::INFINITY;
        self.inflight_lo = f64::INFINITY;
    }

    fn reset_full_bw(&mut self) {
        self.full_bw = 0.0;
        self.full_bw_cnt = 0;
        self.full_bw_now = false;
    }

    fn start_round_phase(&mut self, now: f64) {
        self.cycle_stamp = now;
    }

    fn start_down(&mut self, now: f64) {
        self.reset_congestion_signals();
        self.probe_up_cnt = f64::INFINITY;
        let j = flow_jitter(self.flow_id, 0x5EED ^ self.probe_waits);
        self.probe_waits += 1;
        self.rounds_since_bw_probe = (j * 2.0) as u64;
        self.bw_probe_wait = self.p.probe_wait_base + j;
        self.bw_probe_samples = false;
        self.ack_phase = AckPhase::ProbeStopping;
        self.start_round_phase(now);
        self.set_state(Bbr2State::ProbeBw(ProbeBwPhase::Down));
    }

    fn start_cruise(&mut self) {
        self.set_state(Bbr2State::ProbeBw(ProbeBwPhase::Cruise));
    }

    fn start_refill(&mut self, now: f64) {
        self.reset_lower_bounds();
        self.bw_probe_up_rounds = 0;
        self.probe_up_acks = 0.0;
        self.ack_phase = AckPhase::Refilling;
        self.start_round_phase(now);
        self.set_state(Bbr2State::ProbeBw(ProbeBwPhase::Refill));
    }

    fn start_up(&mut self, ack: &AckInfo) {
        self.ack_phase = AckPhase::ProbeStarting;
        self.start_round_phase(ack.now);
        self.reset_full_bw();
        self.full_bw = ack.delivery_rate.unwrap_or(0.0);
        self.set_state(Bbr2State::ProbeBw(ProbeBwPhase::Up));
        self.raise_inflight_hi_slope();
    }

    fn raise_inflight_hi_slope(&mut self) {
        let growth = f64::from(1u32 << self.bw_probe_up_rounds.min(30));
        self.bw_probe_up_rounds = (self.bw_probe_up_rounds + 1).min(30);
        self.probe_up_cnt = (self.cwnd / self.mtu / growth).max(1.0);
    }

    fn probe_inflight_hi_upward(&mut self, ack: &AckInfo) {
        let cwnd_limited = ack.prior_inflight as f64 + self.mtu >= self.cwnd;
        if !cwnd_limited || self.cwnd < self.inflight_hi {
            return;
        }
        self.probe_up_acks += ack.acked_bytes as f64 / self.mtu;
        if self.probe_up_acks >= self.probe_up_cnt {
            let delta = (self.probe_up_acks / self.probe_up_cnt).floor();
            self.probe_up_acks -= delta * self.probe_up_cnt;
            self.inflight_hi += delta * self.mtu;
        }
        if ack.round_start {
            self.raise_inflight_hi_slope();
        }
    }

    fn adapt_upper_bounds(&mut self, ack: &AckInfo) {
        if self.ack_phase == AckPhase::ProbeStarting && ack.round_start {
            self.ack_phase = AckPhase::ProbeFeedback;
        }
        if self.ack_phase == AckPhase::ProbeStopping && ack.round_start {
            if matches!(self.state, Bbr2State::ProbeBw(_)) && !ack.app_limited {
                self.cycle_count += 1;
            }
        }
        if self.inflight_hi.is_infinite() {
            return;
        }
        // No excessive loss in this sample (losses were handled per packet).
        let tx = ack.tx_in_flight as f64;
        if tx > self.inflight_hi {
            self.inflight_hi = tx;
        }
        if self.state == Bbr2State::ProbeBw(ProbeBwPhase::Up) {
            self.probe_inflight_hi_upward(ack);
        }
    }

    fn has_elapsed_in_phase(&self, now: f64, interval: f64) -> bool {
        now > self.cycle_stamp + interval
    }

    fn is_reno_coexistence_probe_time(&self) -> bool {
        let reno_rounds = (self.target_inflight() / self.mtu) as u64;
        self.rounds_since_bw_probe >= reno_rounds.min(self.p.reno_rounds_cap)
    }

    fn is_time_to_probe_bw(&mut self, now: f64) -> bool {
        if self.has_elapsed_in_phase(now, self.bw_probe_wait) || self.is_reno_coexistence_probe_time()
        {
            self.start_refill(now);
            return true;
        }
        false
    }

    fn is_time_to_cruise(&self) -> bool {
        if self.inflight > self.inflight_with_headroom() {
            return false;
        }
        self.inflight <= self.bdp(1.0)
    }

    fn is_time_to_go_down(&mut self, ack: &AckInfo) -> bool {
        if self.p.up_until_plateau {
            let cwnd_limited = ack.prior_inflight as f64 + self.mtu >= self.cwnd;
            if cwnd_limited && self.cwnd >= self.inflight_hi {
                self.reset_full_bw();
                self.full_bw = ack.delivery_rate.unwrap_or(0.0);
            } else if self.full_bw_now {
                return true;
            }
            false
        } else {
            self.has_elapsed_in_phase(ack.now, self.min_rtt)
                && ack.prior_inflight as f64 >= self.bdp(self.p.up_pacing_gain)
        }
    }

    fn update_probe_bw_cycle_phase(&mut self, ack: &AckInfo) {
        if !self.filled_pipe {
            return;
        }
        self.adapt_upper_bounds(ack);
        let Bbr2State::ProbeBw(phase) = self.state else {
            return;
        };
        match phase {
            ProbeBwPhase::Down => {
                if self.is_time_to_probe_bw(ack.now) {
                    return;
                }
                if self.is_time_to_cruise() {
                    self.start_cruise();
                }
            }
            ProbeBwPhase::Cruise => {
                self.is_time_to_probe_bw(ack.now);
            }
            ProbeBwPhase::Refill => {
                if ack.round_start {
                    self.bw_probe_samples = true;
                    self.start_up(ack);
                }
            }
            ProbeBwPhase::Up => {
                if self.is_time_to_go_down(ack) {
                    self.start_down(ack.now);
                }
            }
        }
    }

    fn check_full_bw_reached(&mut self, ack: &AckInfo) {
        if self.full_bw_now || !ack.round_start || ack.app_limited {
            return;
        }
        let rate = self.max_bw.get();
        if rate >= self.full_bw * 1.25 {
            self.full_bw = rate;
            self.full_bw_cnt = 0;
            return;
        }
        self.full_bw_cnt += 1;
        self.full_bw_now = self.full_bw_cnt >= 3;
        if self.full_bw_now {
            self.filled_pipe = true;
        }
    }

    fn check_startup_high_loss(&mut self, ack: &AckInfo) {
        if self.state != Bbr2State::Startup || !ack.round_start || !self.loss_in_round {
            return;
        }
        if self.loss_events_in_round >= self.p.full_loss_cnt {
            self.filled_pipe = true;
            self.inflight_hi = self.bdp(1.0).max(self.inflight_latest);
        }
    }

    fn check_startup_and_drain(&mut self, ack: &AckInfo) {
        if self.state == Bbr2State::Startup && self.filled_pipe {
            self.set_state(Bbr2State::Drain);
        }
        if self.state == Bbr2State::Drain && ack.inflight as f64 <= self.bdp(1.0) {
            self.start_down(ack.now);
        }
    }

    fn update_min_rtt(&mut self, ack: &AckInfo) {
        let expired = ack.now > self.min_rtt_stamp + self.p.probe_rtt_interval;
        if let Some(rtt) = ack.rtt {
            if rtt <= self.min_rtt || expired {
                self.min_rtt = rtt;
                self.min_rtt_stamp = ack.now;
            }
        }
        if expired && self.state != Bbr2State::ProbeRtt {
            self.prior_cwnd = self.cwnd;
            self.set_state(Bbr2State::ProbeRtt);
            self.probe_rtt_done_stamp = None;
        }
        if self.state != Bbr2State::ProbeRtt {
            return;
        }
        let probe_cwnd = self.probe_rtt_cwnd();
        match self.probe_rtt_done_stamp {
            None if (ack.inflight as f64) <= probe_cwnd => {
                self.probe_rtt_done_stamp = Some(ack.now + self.p.probe_rtt_duration);
                self.probe_rtt_round_done = false;
            }
            Some(done) => {
                if ack.round_start {
                    self.probe_rtt_round_done = true;
                }
                if self.probe_rtt_round_done && ack.now >= done {
                    self.min_rtt_stamp = ack.now;
                    self.cwnd = self.cwnd.max(self.prior_cwnd);
                    self.reset_lower_bounds();
                    if self.filled_pipe {
                        self.start_down(ack.now);
                        self.start_cruise();
                    } else {
                        self.set_state(Bbr2State::Startup);
                    }
                }
            }
            None => {}
        }
    }

    fn probe_rtt_cwnd(&self) -> f64 {
        self.bdp(self.p.probe_rtt_cwnd_gain).max(self.min_cwnd())
    }

    fn adapt_lower_bounds(&mut self) {
        if self.is_probing_bw() || !self.loss_in_round {
            return;
        }
        if self.bw_lo.is_infinite() {
            self.bw_lo = self.max_bw.get();
        }
        if self.inflight_lo.is_infinite() {
            self.inflight_lo = self.cwnd;
        }
        self.bw_lo = self.bw_latest.max(self.p.beta * self.bw_lo);
        self.inflight_lo = self.inflight_latest.max(self.p.beta * self.inflight_lo);
    }

    fn set_pacing_rate(&mut self) {
        let bw = self.bw();
        if bw <= 0.0 || !bw.is_finite() {
            return;
        }
        let rate = self.pacing_gain * bw;
        if self.filled_pipe || rate > self.pacing_rate {
            self.pacing_rate = rate;
        }
    }

    fn set_cwnd(&mut self, ack: &AckInfo) {
        let acked = ack.acked_bytes as f64;
        let max_inflight = self.bdp(self.cwnd_gain);
        if self.filled_pipe {
            self.cwnd = (self.cwnd + acked).min(max_inflight);
        } else if self.cwnd < max_inflight || (ack.delivered as f64) < self.initial_cwnd {
            self.cwnd += acked;
        }
        self.cwnd = self.cwnd.max(self.min_cwnd());
        if self.state == Bbr2State::ProbeRtt {
            self.cwnd = self.cwnd.min(self.probe_rtt_cwnd());
        }
        self.bound_cwnd_for_model();
    }

    fn bound_cwnd_for_model(&mut self) {
        let mut cap = f64::INFINITY;
        match self.state {
            Bbr2State::ProbeBw(ProbeBwPhase::Cruise) | Bbr2State::ProbeRtt => {
                cap = self.inflight_with_headroom();
            }
            Bbr2State::ProbeBw(_) => cap = self.inflight_hi,
            _ => {}
        }
        cap = cap.min(self.inflight_lo).max(self.min_cwnd());
        self.cwnd = self.cwnd.min(cap);
    }
}

impl CongestionControl for Bbr2 {
    fn kind(&self) -> CcaKind {
        self.p.kind
    }

    fn on_ack(&mut self, ack: &AckInfo) {
        self.inflight = ack.inflight as f64;
        if let Some(rate) = ack.delivery_rate {
            self.bw_latest = self.bw_latest.max(rate);
            if rate >= self.max_bw.get() || !ack.app_limited {
                self.max_bw.update(self.cycle_count as f64, rate);
            }
        }
        self.inflight_latest = self.inflight_latest.max(ack.sample_delivered as f64);
        if ack.round_start {
            if matches!(self.state, Bbr2State::ProbeBw(_)) {
                self.rounds_since_bw_probe += 1;
            }
            self.adapt_lower_bounds();
        }
        self.check_full_bw_reached(ack);
        self.check_startup_high_loss(ack);
        self.check_startup_and_drain(ack);
        self.update_probe_bw_cycle_phase(ack);
        self.update_min_rtt(ack);
        if ack.round_start {
            self.loss_in_round = false;
            self.loss_events_in_round = 0;
            self.bw_latest = ack.delivery_rate.unwrap_or(0.0);
            self.inflight_latest = ack.sample_delivered as f64;
        }
        self.set_pacing_rate();
        self.set_cwnd(ack);
    }

    fn on_loss(&mut self, loss: &LossInfo) {
        self.loss_in_round = true;
        self.loss_events_in_round += 1;
        if !self.bw_probe_samples {
            return;
        }
        let tx = loss.tx_in_flight as f64;
        if loss.lost_since_send as f64 > self.p.loss_thresh * tx {
            self.bw_probe_samples = false;
            self.inflight_hi = tx.max(self.target_inflight() * self.p.beta);
            if self.state == Bbr2State::ProbeBw(ProbeBwPhase::Up) {
                self.start_down(loss.now);
            }
        }
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

    fn state_name(&self) -> &'static str {
        match self.state {
            Bbr2State::Startup => "startup",
            Bbr2State::Drain => "drain",
            Bbr2State::ProbeBw(ProbeBwPhase::Down) => "probe_bw_down",
            Bbr2State::ProbeBw(ProbeBwPhase::Cruise) => "probe_bw_cruise",
            Bbr2State::ProbeBw(ProbeBwPhase::Refill) => "probe_bw_refill",
            Bbr2State::ProbeBw(ProbeBwPhase::Up) => "probe_bw_up",
            Bbr2State::ProbeRtt => "probe_rtt",
        }
    }
}
