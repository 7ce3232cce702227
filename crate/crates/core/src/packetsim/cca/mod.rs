// SPDX-License-Identifier: Apache-2.0

//! Sender-side congestion control.
//!
//! The transport feeds every controller the same per-ACK and per-loss
//! signals; each controller decides its own window and, for the BBR family,
//! a pacing rate. Windows are in bytes and rates in bits per second.

pub mod bbr;
pub mod bbr2;
pub mod cubic;
mod filter;
pub mod reno;

use std::fmt;

pub use bbr::{BbrMode, BbrV1};
pub use bbr2::{Bbr2, Bbr2Params, Bbr2State, ProbeBwPhase};
pub use cubic::Cubic;
pub use filter::{MaxFilter, MinFilter};
pub use reno::Reno;

use crate::config::CcaKind;

/// What one ACK tells the sender.
#[derive(Debug, Clone, Copy, Default)]
pub struct AckInfo {
    pub now: f64,
    /// RTT of the newest packet this ACK covers.
    pub rtt: Option<f64>,
    pub srtt: f64,
    pub acked_bytes: u64,
    /// Send time of the newest packet this ACK covers.
    pub sent_time: f64,
    /// Delivery-rate sample, bits per second.
    pub delivery_rate: Option<f64>,
    /// Bytes delivered over the interval of the rate sample.
    pub sample_delivered: u64,
    /// Sender in-flight bytes before and after this ACK.
    pub prior_inflight: u64,
    pub inflight: u64,
    /// Cumulative delivered bytes.
    pub delivered: u64,
    /// Set on the first ACK of a new packet-timed round trip.
    pub round_start: bool,
    pub round_count: u64,
    /// In-flight bytes when the newest acked packet was sent.
    pub tx_in_flight: u64,
    pub app_limited: bool,
}

/// One packet declared lost.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossInfo {
    pub now: f64,
    pub lost_bytes: u64,
    pub sent_time: f64,
    /// In-flight bytes when the lost packet was sent.
    pub tx_in_flight: u64,
    /// Bytes the connection lost since this packet was sent, itself included.
    pub lost_since_send: u64,
    pub inflight: u64,
}

impl LossInfo {
    /// Loss rate over the lost packet's flight.
    pub fn loss_fraction(&self) -> f64 {
        if self.tx_in_flight == 0 {
            1.0
        } else {
            self.lost_since_send as f64 / self.tx_in_flight as f64
        }
    }
}

pub trait CongestionControl: fmt::Debug + Send {
    fn kind(&self) -> CcaKind;

    fn on_ack(&mut self, ack: &AckInfo);

    fn on_loss(&mut self, loss: &LossInfo);

    /// Retransmission timeout; all outstanding data was declared lost.
    fn on_rto(&mut self, now: f64);

    /// Congestion window, bytes.
    fn cwnd(&self) -> u64;

    /// `None` for ACK-clocked senders.
    fn pacing_rate(&self) -> Option<f64>;

    /// BBRv1-style in-flight cap, when the controller is outside Startup.
    fn inflight_cap(&self) -> Option<f64> {
        None
    }

    fn state_name(&self) -> &'static str;
}

/// Tunables that differ between otherwise identical runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaParams {
    pub mtu: u32,
    pub initial_cwnd_packets: u32,
    pub bbrv2: Bbr2Params,
    pub bbrv3: Bbr2Params,
}

impl CcaParams {
    pub fn new(mtu: u32) -> Self {
        Self {
            mtu,
            initial_cwnd_packets: 10,
            bbrv2: Bbr2Params::v2(),
            bbrv3: Bbr2Params::v3(),
        }
    }
}

/// Builds the controller for `kind`. `flow_id` seeds the BBR family's
/// deterministic per-flow phase offsets.
pub fn build(kind: CcaKind, params: &CcaParams, flow_id: u32) -> Box<dyn CongestionControl> {
    let init = u64::from(params.initial_cwnd_packets) * u64::from(params.mtu);
    match kind {
        CcaKind::Reno => Box::new(Reno::new(params.mtu, init)),
        CcaKind::Cubic => Box::new(Cubic::new(params.mtu, init)),
        CcaKind::BbrV1 => Box::new(BbrV1::new(params.mtu, init, flow_id)),
        CcaKind::BbrV2 => Box::new(Bbr2::new(params.bbrv2.clone(), params.mtu, init, flow_id)),
        CcaKind::BbrV3 => Box::new(Bbr2::new(params.bbrv3.clone(), params.mtu, init, flow_id)),
    }
}

/// Deterministic value in `[0, 1)` derived from a flow id.
pub(crate) fn flow_jitter(flow_id: u32, salt: u64) -> f64 {
    // splitmix64 finalizer
    let mut z = (u64::from(flow_id) ^ salt).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
