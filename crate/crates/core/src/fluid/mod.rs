// SPDX-License-Identifier: Apache-2.0

//! Fluid model of BBR flows sharing a droptail bottleneck with fluid
//! Reno/CUBIC flows.
//!
//! A BBR flow sends at
//!
//! ```text
//! x = m · w_prt / τ + (1 − m) · x_pbw
//! ```
//!
//! where `m ∈ [0, 1]` is a smoothed ProbeRTT indicator, `w_prt` the
//! ProbeRTT in-flight limit and `x_pbw = g(t) · b` the ProbeBW rate with a
//! logistic-blended pacing-gain cycle. Only that rate law is fixed; the
//! remaining dynamics are a reconstruction from standard BBR behaviour:
//!
//! * the bandwidth estimate rises quickly toward the delivered rate and
//!   decays slowly, standing in for the windowed max filter;
//! * RTprop tracks the running minimum of the RTT and is reset to the
//!   current RTT at each ProbeRTT entry, which happens a fixed interval
//!   after the last entry or the last strictly lower RTT;
//! * outside Startup, BBRv1 in-flight is capped at `2 · b · RTprop`, and
//!   BBRv2/v3 additionally at `inflight_hi`, which is cut by
//!   `beta_inflight_hi` when the loss rate exceeds the threshold and
//!   regrows only in the probe-up phase (after a pause for BBRv2);
//! * loss-based flows grow their window per RTT (Reno) or along the cubic
//!   curve, and count lost packets; each whole lost packet, at most one per
//!   RTT, triggers a multiplicative decrease;
//! * the queue is a droptail fluid buffer whose departures are split in
//!   proportion to the arrival mix.
//!
//! Integration is fixed-step RK4. Discrete events are applied between
//! steps; level-crossing events (queue full or empty, a whole lost packet)
//! and scheduled ProbeRTT entries split the step at their located instant.
//! Identical inputs give bit-identical output.

mod integrator;
pub mod model;
mod params;

pub use integrator::Rk4;
pub use model::{pacing_gain, queue_balance, FluidModel, QueueBalance};
pub use params::FluidParams;

use crate::config::{CcaKind, ScenarioConfig};
use crate::error::Result;
use crate::metrics::{self, FractionMode, MetricsSummary};
use crate::trace::{FlowCounters, Sample, SimTrace, TraceSource};

#[derive(Debug, Clone, PartialEq)]
pub struct FluidFlowState {
    pub id: u32,
    pub cca: CcaKind,
    /// Bits per second.
    pub sending_rate: f64,
    /// Bits per second; the window rate for loss-based flows.
    pub probe_bw_rate: f64,
    /// Bits per second; zero for loss-based flows.
    pub btlbw_estimate: f64,
    /// Seconds; the propagation RTT for loss-based flows.
    pub rtprop_estimate: f64,
    pub rtt: f64,
    pub mode_probe_rtt: f64,
    /// Bytes.
    pub probertt_inflight_cap: f64,
    /// Seconds since the last ProbeRTT entry (or the flow start).
    pub phase_clock: f64,
    /// Bytes; BBRv2/v3 only.
    pub inflight_hi: Option<f64>,
    /// Bytes; loss-based flows only.
    pub cwnd_fluid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidSystemState {
    pub time: f64,
    pub queue_bytes: f64,
    pub loss_rate: f64,
    pub flows: Vec<FluidFlowState>,
}

/// Convex combination of the ProbeRTT and ProbeBW rates, bits per second.
pub fn blend_rate(m: f64, w_prt: f64, tau: f64, x_pbw: f64) -> f64 {
    m * (w_prt * 8.0 / tau) + (1.0 - m) * x_pbw
}

/// Sending rate of `flow` from its mode, ProbeRTT limit, RTT and ProbeBW rate.
pub fn sending_rate(flow: &FluidFlowState) -> f64 {
    blend_rate(flow.mode_probe_rtt, flow.probertt_inflight_cap, flow.rtt, flow.probe_bw_rate)
}

/// ProbeBW rate `t` seconds into a gain cycle whose phases last the flow's
/// RTprop estimate.
pub fn probe_bw_rate(flow: &FluidFlowState, params: &FluidParams, t: f64) -> f64 {
    pacing_gain(params, t / flow.rtprop_estimate) * flow.btlbw_estimate
}

/// Result of one fluid run.
#[derive(Debug, Clone)]
pub struct FluidRun {
    /// Cumulative counters at every output sample, shared with the packet
    /// engine so the same metrics apply.
    pub trace: SimTrace,
    /// Full state at every output sample when `record_states` is set.
    pub states: Vec<FluidSystemState>,
    pub analysis_window: f64,
}

impl FluidRun {
    pub fn summary(&self, mode: FractionMode) -> Result<MetricsSummary> {
        metrics::summarize(&self.trace, self.analysis_window, mode)
    }
}

/// Integrates `scenario` from 0 to its duration.
pub fn simulate(scenario: &ScenarioConfig, params: &FluidParams) -> Result<FluidRun> {
    simulate_trial(scenario, params, 0)
}

/// Like [`simulate`], drawing randomized per-flow delays for `trial`.
pub fn simulate_trial(
    scenario: &ScenarioConfig,
    params: &FluidParams,
    trial: u32,
) -> Result<FluidRun> {
    let mut model = FluidModel::new(scenario, params, trial)?;
    let p = model.params().clone();
    let total_steps = (scenario.duration / p.integrator_step).round() as u64;
    let every = ((p.output_interval / p.integrator_step).round() as u64).max(1);

    let mut trace = SimTrace::empty(TraceSource::Fluid, model.buffer_bytes(), model.capacity());
    trace.flow_ids = scenario.flows.iter().map(|f| f.id).collect();
    trace.ccas = scenario.flows.iter().map(|f| f.cca).collect();
    let mut states = Vec::new();
    let mut record = |model: &FluidModel, trace: &mut SimTrace| {
        let flows = (0..scenario.flows.len())
            .map(|i| {
                let (sent, delivered, dropped) = model.counters(i);
                FlowCounters {
                    delivered,
                    sent,
                    dropped,
                    in_network: (sent - delivered - dropped).max(0.0),
                    received: delivered,
                }
            })
            .collect();
        let st = model.state();
        trace.samples.push(Sample {
            t: st.time,
            flows,
            queue_bytes: st.queue_bytes,
            queue_integral: model.queue_integral(),
        });
        if p.record_states {
            states.push(st);
        }
    };

    record(&model, &mut trace);
    for n in 1..=total_steps {
        model.step()?;
        if n % every == 0 || n == total_steps {
            record(&model, &mut trace);
        }
    }
    trace.events = model.steps();
    Ok(FluidRun {
        trace,
        states,
        analysis_window: scenario.analysis_window,
    })
}
