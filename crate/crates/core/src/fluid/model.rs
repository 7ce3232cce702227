// SPDX-License-Identifier: Apache-2.0

//! State vector, right-hand side and discrete events of the fluid model.
//!
//! Continuous state per flow occupies seven slots. For BBR flows these are
//! the bandwidth estimate, RTprop, gain-cycle phase and `inflight_hi`; for
//! loss-based flows the window, `W_max`, CUBIC epoch clock and a lost-packet
//! accumulator. Three cumulative byte counters follow. Everything that is a
//! jump in the real protocol (RTprop reset at ProbeRTT entry, window
//! reductions, `inflight_hi` cuts, leaving Startup) is applied between RK4
//! sub-steps.

use super::integrator::Rk4;
use super::params::FluidParams;
use super::{FluidFlowState, FluidSystemState};
use crate::config::{CcaKind, ScenarioConfig};
use crate::error::{Error, Result};
use crate::packetsim::cca::bbr::HIGH_GAIN;
use crate::packetsim::cca::cubic::{cubic_k, CUBIC_BETA, CUBIC_C};

const QUEUE: usize = 0;
const QUEUE_INT: usize = 1;
const GLOBAL_SLOTS: usize = 2;
const FLOW_SLOTS: usize = 7;

// BBR slots
const BW: usize = 0;
const RTPROP: usize = 1;
const PHASE: usize = 2;
const HI: usize = 3;
// loss-based slots
const CWND: usize = 0;
const WMAX: usize = 1;
const EPOCH: usize = 2;
const LOSSES: usize = 3;
// shared
const SENT: usize = 4;
const DELIVERED: usize = 5;
const DROPPED: usize = 6;

const BBR_MIN_PACKETS: f64 = 4.0;
const RENO_BETA: f64 = 0.5;
/// Upper bound on event splits within one integrator step.
const MAX_SPLITS: usize = 8;
const LOCATE_ITERATIONS: usize = 40;

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smooth indicator of `[0, 1]` in units of the window length.
fn window(u: f64, steepness: f64) -> f64 {
    sigmoid(steepness * u) * sigmoid(steepness * (1.0 - u))
}

/// Pacing gain at continuous cycle position `phase` (in phases; one phase
/// lasts one RTprop).
pub fn pacing_gain(params: &FluidParams, phase: f64) -> f64 {
    let n = params.pacing_gain_cycle.len() as f64;
    let p = phase.rem_euclid(n);
    let k = params.sigmoid_steepness;
    params
        .pacing_gain_cycle
        .iter()
        .enumerate()
        .filter(|(_, &g)| g != 1.0)
        .map(|(i, &g)| {
            let u = p - i as f64;
            (g - 1.0) * (window(u, k) + window(u - n, k) + window(u + n, k))
        })
        .sum::<f64>()
        + 1.0
}

/// Rate balance of a droptail queue holding `queue` of `buffer` bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueBalance {
    /// d(queue)/dt, bytes per second.
    pub dq: f64,
    /// Fraction of the inflow dropped.
    pub loss: f64,
    /// Departure rate, bits per second.
    pub delivered: f64,
}

pub fn queue_balance(queue: f64, buffer: f64, inflow: f64, capacity: f64) -> QueueBalance {
    let accepted = if queue >= buffer { inflow.min(capacity) } else { inflow };
    let loss = if inflow > 0.0 { 1.0 - accepted / inflow } else { 0.0 };
    let delivered = if queue > 0.0 { capacity } else { accepted.min(capacity) };
    QueueBalance {
        dq: (accepted - delivered) / 8.0,
        loss,
        delivered,
    }
}

#[derive(Debug, Clone)]
struct Flow {
    id: u32,
    cca: CcaKind,
    start: f64,
    /// Base RTT plus the flow's extra delay in both directions.
    prop_rtt: f64,
    max_window: f64,
    /// Startup (BBR) or slow start (loss-based).
    startup: bool,
    /// RTprop stamp: last ProbeRTT entry or last strictly lower RTT.
    stamp: f64,
    last_entry: Option<f64>,
    last_cut: f64,
    probe_wait: f64,
}

impl Flow {
    fn is_v2(&self) -> bool {
        matches!(self.cca, CcaKind::BbrV2 | CcaKind::BbrV3)
    }
}

/// Instantaneous per-flow quantities derived from the state vector.
#[derive(Debug, Clone, Copy, Default)]
struct FlowRate {
    x: f64,
    x_pbw: f64,
    tau: f64,
    m: f64,
    w_prt: f64,
}

#[derive(Debug, Clone)]
pub struct FluidModel {
    params: FluidParams,
    capacity: f64,
    buffer: f64,
    mtu: f64,
    flows: Vec<Flow>,
    y: Vec<f64>,
    step_index: u64,
    rk: Rk4,
}

impl FluidModel {
    pub fn new(scenario: &ScenarioConfig, params: &FluidParams, trial: u32) -> Result<Self> {
        crate::config::validate(scenario).map_err(Error::InvalidScenario)?;
        let params = params.clone().validated()?;
        for f in &scenario.flows {
            if f.cca == CcaKind::BbrV3 && !params.enable_v3 {
                return Err(Error::UnsupportedCca {
                    engine: "fluid",
                    cca: f.cca,
                });
            }
        }
        let link = &scenario.link;
        let mtu = f64::from(link.mtu);
        let extra = scenario.extra_delays(trial);
        let mut y = vec![0.0; GLOBAL_SLOTS + FLOW_SLOTS * scenario.flows.len()];
        let mut flows = Vec::with_capacity(scenario.flows.len());
        for (i, (spec, extra)) in scenario.flows.iter().zip(extra).enumerate() {
            let prop_rtt = link.base_rtt + 2.0 * extra;
            let j = crate::packetsim::cca::flow_jitter(spec.id, 0);
            let s = &mut y[GLOBAL_SLOTS + FLOW_SLOTS * i..][..FLOW_SLOTS];
            if spec.cca.is_bbr() {
                s[BW] = 10.0 * mtu * 8.0 / prop_rtt;
                s[RTPROP] = prop_rtt;
                s[PHASE] = 1.0 + (j * 7.0).floor();
                s[HI] = spec.max_window as f64;
            } else {
                s[CWND] = 10.0 * mtu;
            }
            flows.push(Flow {
                id: spec.id,
                cca: spec.cca,
                start: spec.start_time,
                prop_rtt,
                max_window: spec.max_window as f64,
                startup: true,
                stamp: spec.start_time,
                last_entry: None,
                last_cut: f64::NEG_INFINITY,
                probe_wait: params.bbr2_probe_wait * (1.0 + 0.5 * j),
            });
        }
        Ok(Self {
            params,
            capacity: link.capacity,
            buffer: link.buffer_bytes() as f64,
            mtu,
            flows,
            y,
            step_index: 0,
            rk: Rk4::default(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.params.integrator_step
    }

    pub fn steps(&self) -> u64 {
        self.step_index
    }

    fn slot(i: usize, k: usize) -> usize {
        GLOBAL_SLOTS + FLOW_SLOTS * i + k
    }

    fn queue(&self, y: &[f64]) -> f64 {
        y[QUEUE].clamp(0.0, self.buffer)
    }

    /// ProbeRTT indicator: the window after the last entry plus the rising
    /// edge of the next scheduled one.
    fn mode(&self, f: &Flow, t: f64) -> f64 {
        let d = self.params.probertt_duration;
        let k = self.params.sigmoid_steepness;
        let next = f.stamp + self.params.probertt_interval;
        let mut m = window((t - next) / d, k);
        if let Some(e) = f.last_entry {
            m += window((t - e) / d, k);
        }
        m.min(1.0)
    }

    fn flow_rate(&self, i: usize, t: f64, y: &[f64]) -> FlowRate {
        let f = &self.flows[i];
        let tau = f.prop_rtt + self.queue(y) * 8.0 / self.capacity;
        if t < f.start {
            return FlowRate {
                tau,
                ..FlowRate::default()
            };
        }
        let s = &y[Self::slot(i, 0)..][..FLOW_SLOTS];
        let wnd_rate = f.max_window * 8.0 / tau;
        if !f.cca.is_bbr() {
            let x = (s[CWND].max(self.mtu) * 8.0 / tau).min(wnd_rate);
            return FlowRate {
                x,
                x_pbw: x,
                tau,
                ..FlowRate::default()
            };
        }
        let b = s[BW].max(0.0);
        let r = s[RTPROP].clamp(1e-6, tau);
        let mut x_pbw;
        if f.startup {
            x_pbw = HIGH_GAIN * b;
        } else {
            x_pbw = pacing_gain(&self.params, s[PHASE]) * b;
            let mut cap = 2.0 * b * r / 8.0;
            if f.is_v2() {
                cap = cap.min(s[HI]);
            }
            x_pbw = x_pbw.min(cap.max(BBR_MIN_PACKETS * self.mtu) * 8.0 / tau);
        }
        let w_prt = if f.is_v2() {
            (0.5 * b * r / 8.0).max(BBR_MIN_PACKETS * self.mtu)
        } else {
            BBR_MIN_PACKETS * self.mtu
        };
        let m = self.mode(f, t);
        let x = super::blend_rate(m, w_prt, tau, x_pbw).min(wnd_rate);
        FlowRate {
            x,
            x_pbw,
            tau,
            m,
            w_prt,
        }
    }

    fn total_inflow(&self, t: f64, y: &[f64]) -> f64 {
        (0..self.flows.len()).map(|i| self.flow_rate(i, t, y).x).sum()
    }

    fn probing_allowed(&self, f: &Flow, t: f64) -> bool {
        f.cca == CcaKind::BbrV3 || t - f.last_cut >= f.probe_wait
    }

    fn derivative(&self, t: f64, y: &[f64], d: &mut [f64]) {
        d.fill(0.0);
        let q = self.queue(y);
        let inflow = self.total_inflow(t, y);
        let bal = queue_balance(q, self.buffer, inflow, self.capacity);
        d[QUEUE] = bal.dq;
        d[QUEUE_INT] = q;
        let probe_up = |phase: f64| {
            let n = self.params.pacing_gain_cycle.len() as f64;
            let p = phase.rem_euclid(n);
            let k = self.params.sigmoid_steepness;
            window(p, k) + window(p - n, k)
        };
        for (i, f) in self.flows.iter().enumerate() {
            let fr = self.flow_rate(i, t, y);
            if t < f.start {
                continue;
            }
            let base = Self::slot(i, 0);
            let s = &y[base..][..FLOW_SLOTS];
            let ds = &mut d[base..][..FLOW_SLOTS];
            let delivered = if inflow > 0.0 { bal.delivered * fr.x / inflow } else { 0.0 };
            ds[SENT] = fr.x / 8.0;
            ds[DROPPED] = fr.x * bal.loss / 8.0;
            ds[DELIVERED] = delivered / 8.0;
            if f.cca.is_bbr() {
                let b = s[BW];
                let r = s[RTPROP].clamp(1e-6, fr.tau);
                ds[BW] = self.params.btlbw_up_rate * (delivered - b).max(0.0)
                    - self.params.btlbw_decay_rate * (b - delivered).max(0.0);
                ds[PHASE] = 1.0 / r;
                if f.is_v2() && !f.startup && self.probing_allowed(f, t) {
                    let inflight = fr.x * fr.tau / 8.0;
                    if s[HI] < 1.5 * inflight {
                        ds[HI] = probe_up(s[PHASE]) * self.params.inflight_hi_growth.ln() * s[HI] / r;
                    }
                }
            } else {
                let w = s[CWND];
                if w < f.max_window {
                    ds[CWND] = if f.startup {
                        delivered / 8.0
                    } else if f.cca == CcaKind::Reno {
                        self.mtu / fr.tau
                    } else {
                        let k = cubic_k(s[WMAX]);
                        let curve = 3.0 * CUBIC_C * (s[EPOCH] - k).powi(2) * self.mtu;
                        curve.min(0.5 * delivered / 8.0)
                    };
                }
                ds[EPOCH] = 1.0;
                ds[LOSSES] = (fr.x * bal.loss / (8.0 * self.mtu)).min(1.0 / fr.tau);
            }
        }
    }

    /// Advances one integrator step. Events that fall inside the step (a
    /// lost-packet accumulator reaching one, the queue reaching either
    /// boundary, a scheduled ProbeRTT entry) split it at their located
    /// instant, so their timing does not depend on the step size.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.params.integrator_step;
        let t_end = (self.step_index + 1) as f64 * dt;
        let mut t = self.time();
        let mut rk = std::mem::take(&mut self.rk);
        let mut y = std::mem::take(&mut self.y);
        let mut y0 = y.clone();
        for split in 0..=MAX_SPLITS {
            let h = t_end - t;
            y0.copy_from_slice(&y);
            rk.step(|t, y, d| self.derivative(t, y, d), t, &mut y, h);
            let crossing = (split < MAX_SPLITS).then(|| self.first_crossing(t, h, &y0, &y)).flatten();
            let Some((mut theta, level)) = crossing else {
                break;
            };
            if let Some((k, target)) = level {
                theta = self.locate(&mut rk, t, h, &y0, y[k], k, target);
            }
            y.copy_from_slice(&y0);
            rk.step(|t, y, d| self.derivative(t, y, d), t, &mut y, theta * h);
            if let Some((k, target)) = level {
                y[k] = target;
            }
            let t0 = t;
            t += theta * h;
            self.y = y;
            self.apply_events(t, t0, &y0)?;
            y = std::mem::take(&mut self.y);
        }
        self.y = y;
        self.rk = rk;
        self.step_index += 1;
        self.apply_events(t_end, t, &y0)
    }

    /// Fraction of `[t, t + h]` at which slot `k` reaches `target`, by
    /// Illinois regula falsi on re-integrated sub-steps. `end` is the slot's
    /// value after the full step.
    #[allow(clippy::too_many_arguments)]
    fn locate(&self, rk: &mut Rk4, t: f64, h: f64, y0: &[f64], end: f64, k: usize, target: f64) -> f64 {
        let tol = 1e-9 * target.abs().max(1.0);
        let (mut lo, mut hi) = (0.0, 1.0);
        let (mut f_lo, mut f_hi) = (y0[k] - target, end - target);
        let mut y = y0.to_vec();
        let mut theta = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        for _ in 0..LOCATE_ITERATIONS {
            y.copy_from_slice(y0);
            rk.step(|t, y, d| self.derivative(t, y, d), t, &mut y, theta * h);
            let g = y[k] - target;
            if g.abs() <= tol {
                break;
            }
            if g.signum() == f_lo.signum() {
                lo = theta;
                f_lo = g;
                f_hi *= 0.5;
            } else {
                hi = theta;
                f_hi = g;
                f_lo *= 0.5;
            }
            theta = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        }
        theta
    }

    /// Linear estimate of the fraction of the step `[t, t + h]` at which the
    /// earliest event occurs, if one happens strictly inside it, with the
    /// slot and level that define it when it is a level crossing.
    fn first_crossing(
        &self,
        t: f64,
        h: f64,
        y0: &[f64],
        y1: &[f64],
    ) -> Option<(f64, Option<(usize, f64)>)> {
        let cross = |k: usize, level: f64| {
            let (a, b) = (y0[k], y1[k]);
            ((a < level && b >= level) || (a > level && b <= level))
                .then(|| ((level - a) / (b - a), Some((k, level))))
        };
        let queue = [
            (y0[QUEUE] < self.buffer).then(|| cross(QUEUE, self.buffer)).flatten(),
            (y0[QUEUE] > 0.0).then(|| cross(QUEUE, 0.0)).flatten(),
        ];
        let flows = self.flows.iter().enumerate().filter(|(_, f)| t + h > f.start).map(|(i, f)| {
            if f.cca.is_bbr() {
                let next = f.stamp + self.params.probertt_interval;
                (next > t && next < t + h).then(|| ((next - t) / h, None))
            } else {
                let k = Self::slot(i, LOSSES);
                cross(k, 1.0).filter(|_| y1[k] > y0[k])
            }
        });
        queue
            .into_iter()
            .chain(flows)
            .flatten()
            .filter(|&(th, _)| th > 1e-6 && th < 1.0 - 1e-6)
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    fn apply_loss_events(&mut self, t: f64) {
        for i in 0..self.flows.len() {
            let base = Self::slot(i, 0);
            let f = &mut self.flows[i];
            if f.cca.is_bbr() || t < f.start {
                continue;
            }
            let s = &mut self.y[base..base + FLOW_SLOTS];
            if s[LOSSES] < 1.0 - 1e-9 {
                continue;
            }
            s[LOSSES] = (s[LOSSES] - 1.0).max(0.0).fract();
            f.startup = false;
            let floor = 2.0 * self.mtu;
            if f.cca == CcaKind::Reno {
                s[CWND] = (s[CWND] * RENO_BETA).max(floor);
            } else {
                s[WMAX] = s[CWND] / self.mtu;
                s[CWND] = (s[CWND] * CUBIC_BETA).max(floor);
                s[EPOCH] = 0.0;
            }
        }
    }

    /// Queue minimum inside `[t0, t1]` from the end values and slopes, as
    /// `(time, bytes)`, when the queue turns from falling to rising there.
    fn queue_minimum(&self, t0: f64, y0: &[f64], t1: f64) -> Option<(f64, f64)> {
        let slope = |t: f64, y: &[f64]| {
            queue_balance(self.queue(y), self.buffer, self.total_inflow(t, y), self.capacity).dq
        };
        let (d0, d1) = (slope(t0, y0), slope(t1, &self.y));
        if !(d0 < 0.0 && d1 > 0.0) {
            return None;
        }
        let h = t1 - t0;
        let u = d0 / (d0 - d1);
        let (q0, q1) = (self.queue(y0), self.queue(&self.y));
        // Cubic Hermite interpolant at u.
        let (u2, u3) = (u * u, u * u * u);
        let q = (2.0 * u3 - 3.0 * u2 + 1.0) * q0
            + (u3 - 2.0 * u2 + u) * h * d0
            + (-2.0 * u3 + 3.0 * u2) * q1
            + (u3 - u2) * h * d1;
        Some((t0 + u * h, q.clamp(0.0, q0.min(q1))))
    }

    /// Applies discrete events at the current time; `t0` and `y0` are the
    /// start of the (sub)step just taken.
    fn apply_events(&mut self, t: f64, t0: f64, y0: &[f64]) -> Result<()> {
        self.y[QUEUE] = self.y[QUEUE].clamp(0.0, self.buffer);
        let low = self.queue_minimum(t0, y0, t);
        let inflow = self.total_inflow(t, &self.y);
        let bal = queue_balance(self.y[QUEUE], self.buffer, inflow, self.capacity);
        for i in 0..self.flows.len() {
            let fr = self.flow_rate(i, t, &self.y);
            let base = Self::slot(i, 0);
            let f = &mut self.flows[i];
            if t < f.start {
                continue;
            }
            let s = &mut self.y[base..base + FLOW_SLOTS];
            if f.cca.is_bbr() {
                let d = self.params.probertt_duration;
                let in_window = f.last_entry.is_some_and(|e| t - e < d);
                let (when, tau_min) = match low {
                    Some((tm, q)) => (tm, f.prop_rtt + q * 8.0 / self.capacity),
                    None => (t, fr.tau),
                };
                if tau_min < s[RTPROP] - 1e-12 {
                    s[RTPROP] = tau_min;
                    if !in_window {
                        f.stamp = when;
                    }
                }
                let next = f.stamp + self.params.probertt_interval;
                if t >= next - 1e-9 {
                    f.last_entry = Some(next);
                    f.stamp = next;
                    s[RTPROP] = fr.tau;
                }
                let delivered = if inflow > 0.0 { bal.delivered * fr.x / inflow } else { 0.0 };
                if f.startup && t >= f.start + f.prop_rtt {
                    let saturated = delivered < 0.8 * fr.x;
                    let lossy = f.is_v2() && bal.loss > self.params.loss_threshold;
                    if saturated || lossy {
                        f.startup = false;
                    }
                }
                if f.is_v2() && bal.loss > self.params.loss_threshold && t - f.last_cut >= fr.tau {
                    let inflight = fr.x * fr.tau / 8.0;
                    s[HI] = (self.params.beta_inflight_hi * s[HI].min(inflight))
                        .max(BBR_MIN_PACKETS * self.mtu);
                    f.last_cut = t;
                }
                s[BW] = s[BW].max(0.0);
            }
        }
        self.apply_loss_events(t);
        if let Some(k) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time: t,
                what: format!("state slot {k}"),
            });
        }
        Ok(())
    }

    /// Snapshot of the current state.
    pub fn state(&self) -> FluidSystemState {
        let t = self.time();
        let y = &self.y;
        let inflow = self.total_inflow(t, y);
        let bal = queue_balance(self.queue(y), self.buffer, inflow, self.capacity);
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let fr = self.flow_rate(i, t, y);
                let s = &y[Self::slot(i, 0)..][..FLOW_SLOTS];
                let bbr = f.cca.is_bbr();
                FluidFlowState {
                    id: f.id,
                    cca: f.cca,
                    sending_rate: fr.x,
                    probe_bw_rate: fr.x_pbw,
                    btlbw_estimate: if bbr { s[BW] } else { 0.0 },
                    rtprop_estimate: if bbr { s[RTPROP].min(fr.tau) } else { f.prop_rtt },
                    rtt: fr.tau,
                    mode_probe_rtt: fr.m,
                    probertt_inflight_cap: fr.w_prt,
                    phase_clock: t - f.last_entry.unwrap_or(f.start),
                    inflight_hi: (bbr && f.is_v2()).then_some(s[HI]),
                    cwnd_fluid: (!bbr).then_some(s[CWND]),
                }
            })
            .collect();
        FluidSystemState {
            time: t,
            queue_bytes: self.queue(y),
            loss_rate: bal.loss,
            flows,
        }
    }

    /// Cumulative `(sent, delivered, dropped)` bytes of flow `i`.
    pub(crate) fn counters(&self, i: usize) -> (f64, f64, f64) {
        let s = &self.y[Self::slot(i, 0)..][..FLOW_SLOTS];
        (s[SENT], s[DELIVERED], s[DROPPED])
    }

    pub(crate) fn queue_integral(&self) -> f64 {
        self.y[QUEUE_INT]
    }

    pub(crate) fn buffer_bytes(&self) -> f64 {
        self.buffer
    }

    pub(crate) fn capacity(&self) -> f64 {
        self.capacity
    }

    pub(crate) fn params(&self) -> &FluidParams {
        &self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_plateaus() {
        let p = FluidParams::default();
        assert!((pacing_gain(&p, 0.5) - 1.25).abs() < 0.0125);
        assert!((pacing_gain(&p, 1.5) - 0.75).abs() < 0.0075);
        assert!((pacing_gain(&p, 4.5) - 1.0).abs() < 1e-6);
        // Periodic.
        assert!((pacing_gain(&p, 8.5) - pacing_gain(&p, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn queue_balance_regimes() {
        // Filling: all accepted, line rate out.
        let b = queue_balance(1000.0, 10_000.0, 12e6, 10e6);
        assert_eq!(b.loss, 0.0);
        assert!((b.dq - 0.25e6).abs() < 1e-6);
        // Full: excess dropped, queue flat.
        let b = queue_balance(10_000.0, 10_000.0, 12e6, 10e6);
        assert!((b.loss - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(b.dq, 0.0);
        // Empty and underloaded: passes straight through.
        let b = queue_balance(0.0, 10_000.0, 4e6, 10e6);
        assert_eq!((b.dq, b.loss, b.delivered), (0.0, 0.0, 4e6));
    }
}
