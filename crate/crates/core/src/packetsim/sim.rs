// SPDX-License-Identifier: Apache-2.0

//! The dumbbell event loop.
//!
//! Path of a data packet: sender, extra one-way delay, bottleneck queue,
//! `base_rtt / 2` to the receiver. ACKs return over `base_rtt / 2` plus the
//! sender's extra delay and are never lost or queued.

use std::io::Write;

use super::cca::{self, CcaParams};
use super::event::{EventQueue, SimTime};
use super::queue::{Admission, BottleneckQueue};
use super::sender::{Outgoing, SendDecision, Sender};
use super::SimOptions;
use crate::config::{CcaKind, ScenarioConfig};
use crate::error::{Error, Result};
use crate::trace::{FlowCounters, Sample, SimTrace, StateChange, TraceSource};

/// Tie-break id for sampling events, so a sample sees every event that
/// shares its timestamp.
const SAMPLE_FLOW: u32 = u32::MAX;
const MAX_VIOLATIONS: usize = 32;

#[derive(Debug)]
enum Event {
    Start(usize),
    SendWake(usize),
    AtQueue(usize, Outgoing),
    Departed(usize, Outgoing),
    AtReceiver(usize, Outgoing),
    Ack(usize, Vec<(u64, u64)>),
    DelayedAck(usize),
    Timer(usize),
    Sample,
}

impl Event {
    fn name(&self) -> &'static str {
        match self {
            Event::Start(_) => "start",
            Event::SendWake(_) => "send_wake",
            Event::AtQueue(..) => "arrive_queue",
            Event::Departed(..) => "depart",
            Event::AtReceiver(..) => "arrive_receiver",
            Event::Ack(..) => "ack",
            Event::DelayedAck(_) => "delayed_ack",
            Event::Timer(_) => "timer",
            Event::Sample => "sample",
        }
    }

    fn flow(&self) -> Option<usize> {
        match *self {
            Event::Start(i)
            | Event::SendWake(i)
            | Event::AtQueue(i, _)
            | Event::Departed(i, _)
            | Event::AtReceiver(i, _)
            | Event::Ack(i, _)
            | Event::DelayedAck(i)
            | Event::Timer(i) => Some(i),
            Event::Sample => None,
        }
    }
}

#[derive(Debug, Default)]
struct Receiver {
    seen: Vec<bool>,
    pending: Vec<(u64, u64)>,
    delack_armed: bool,
}

struct Flow {
    id: u32,
    kind: CcaKind,
    start: f64,
    extra: f64,
    sender: Option<Sender>,
    receiver: Receiver,
    counters: FlowCounters,
    wake_at: Option<SimTime>,
    timer_at: Option<SimTime>,
    last_state: &'static str,
}

pub(crate) struct Simulation<'a> {
    scenario: &'a ScenarioConfig,
    opts: &'a SimOptions,
    cca_params: CcaParams,
    events: EventQueue<Event>,
    queue: BottleneckQueue,
    flows: Vec<Flow>,
    trace: SimTrace,
    half_rtt: f64,
    dispatched: u64,
    log: Option<&'a mut dyn Write>,
}

impl<'a> Simulation<'a> {
    pub(crate) fn new(
        scenario: &'a ScenarioConfig,
        trial: u32,
        opts: &'a SimOptions,
        log: Option<&'a mut dyn Write>,
    ) -> Self {
        let link = &scenario.link;
        let buffer = link.buffer_bytes();
        let delays = scenario.extra_delays(trial);
        let flows = scenario
            .flows
            .iter()
            .zip(delays)
            .map(|(f, extra)| Flow {
                id: f.id,
                kind: f.cca,
                start: f.start_time,
                extra,
                sender: None,
                receiver: Receiver::default(),
                counters: FlowCounters::default(),
                wake_at: None,
                timer_at: None,
                last_state: "",
            })
            .collect::<Vec<_>>();
        let mut trace = SimTrace::empty(TraceSource::Packetsim, buffer as f64, link.capacity);
        trace.flow_ids = flows.iter().map(|f| f.id).collect();
        trace.ccas = flows.iter().map(|f| f.kind).collect();
        let mut cca_params = opts.cca.clone();
        cca_params.mtu = link.mtu;
        Self {
            scenario,
            opts,
            cca_params,
            events: EventQueue::new(),
            queue: BottleneckQueue::new(buffer, link.capacity),
            flows,
            trace,
            half_rtt: link.base_rtt / 2.0,
            dispatched: 0,
            log,
        }
    }

    pub(crate) fn run(mut self) -> Result<SimTrace> {
        let end = SimTime::from_secs(self.scenario.duration);
        for (i, f) in self.flows.iter().enumerate() {
            self.events
                .schedule(SimTime::from_secs(f.start), f.id, Event::Start(i));
        }
        self.events.schedule(SimTime::ZERO, SAMPLE_FLOW, Event::Sample);
        let mut next_sample = 1u64;

        while let Some(t) = self.events.peek_time() {
            if t > end {
                break;
            }
            let (key, ev) = self.events.pop().expect("peeked");
            self.dispatched += 1;
            let now = key.time;
            if let Some(log) = self.log.as_deref_mut() {
                let flow = ev.flow().map_or(-1, |i| i64::from(self.flows[i].id));
                let _ = writeln!(
                    log,
                    "{:.9} {} {} {}",
                    now.secs(),
                    flow,
                    ev.name(),
                    self.queue.occupancy()
                );
            }
            match ev {
                Event::Sample => {
                    self.sample(now);
                    let t_next = self.sample_time(next_sample);
                    next_sample += 1;
                    if now < end {
                        self.events.schedule(t_next.min(end), SAMPLE_FLOW, Event::Sample);
                    }
                    if self.events.len() == 1 && self.any_active() {
                        return Err(Error::Livelock {
                            time: now.secs(),
                            active: self.flows.iter().filter(|f| f.sender.is_some()).count(),
                        });
                    }
                }
                Event::Start(i) => {
                    let f = &mut self.flows[i];
                    let cc = cca::build(f.kind, &self.cca_params, f.id);
                    let max_window = self.scenario.flows[i].max_window;
                    f.sender = Some(Sender::new(cc, self.scenario.link.mtu, max_window));
                    self.try_send(i, now);
                }
                Event::SendWake(i) => {
                    if self.flows[i].wake_at == Some(now) {
                        self.flows[i].wake_at = None;
                    }
                    self.try_send(i, now);
                }
                Event::AtQueue(i, pkt) => match self.queue.enqueue(pkt.size, now) {
                    Admission::Accepted { departure } => {
                        self.events.schedule(departure, self.flows[i].id, Event::Departed(i, pkt));
                    }
                    Admission::Dropped => {
                        let c = &mut self.flows[i].counters;
                        c.dropped += f64::from(pkt.size);
                        c.in_network -= f64::from(pkt.size);
                    }
                },
                Event::Departed(i, pkt) => {
                    self.queue.depart(pkt.size, now);
                    let at = now.add_secs(self.half_rtt);
                    self.events.schedule(at, self.flows[i].id, Event::AtReceiver(i, pkt));
                }
                Event::AtReceiver(i, pkt) => self.receive(i, pkt, now),
                Event::DelayedAck(i) => {
                    self.flows[i].receiver.delack_armed = false;
                    self.flush_acks(i, now);
                }
                Event::Ack(i, acks) => {
                    let t = now.secs();
                    if let Some(s) = self.flows[i].sender.as_mut() {
                        for (pn, seg) in acks {
                            s.on_ack(t, pn, seg);
                        }
                    }
                    self.after_sender_update(i, now);
                }
                Event::Timer(i) => {
                    if self.flows[i].timer_at == Some(now) {
                        self.flows[i].timer_at = None;
                    }
                    if let Some(s) = self.flows[i].sender.as_mut() {
                        s.on_timer(now.secs());
                    }
                    self.after_sender_update(i, now);
                }
            }
        }
        if self.trace.samples.last().map_or(true, |s| s.t < self.scenario.duration - 1e-9) {
            self.sample(end);
        }
        self.trace.events = self.dispatched;
        Ok(self.trace)
    }

    fn sample_time(&self, k: u64) -> SimTime {
        SimTime::from_secs(k as f64 * self.opts.sample_interval)
    }

    fn any_active(&self) -> bool {
        self.flows.iter().any(|f| f.sender.is_some())
    }

    fn after_sender_update(&mut self, i: usize, now: SimTime) {
        self.record_state(i, now);
        self.try_send(i, now);
        self.arm_timer(i, now);
    }

    fn record_state(&mut self, i: usize, now: SimTime) {
        if !self.opts.record_states {
            return;
        }
        let f = &mut self.flows[i];
        let Some(s) = f.sender.as_ref() else { return };
        let state = s.cca.state_name();
        if state != f.last_state {
            f.last_state = state;
            self.trace.state_changes.push(StateChange {
                t: now.secs(),
                flow_id: f.id,
                state,
                round: s.round_count(),
            });
        }
    }

    fn arm_timer(&mut self, i: usize, now: SimTime) {
        let f = &mut self.flows[i];
        let Some(deadline) = f.sender.as_ref().and_then(|s| s.timer_deadline()) else {
            return;
        };
        let at = SimTime((deadline * 1e9).ceil() as u64).max(now);
        if f.timer_at.map_or(true, |t| at < t) {
            f.timer_at = Some(at);
            self.events.schedule(at, f.id, Event::Timer(i));
        }
    }

    fn try_send(&mut self, i: usize, now: SimTime) {
        let t = now.secs();
        let mtu = f64::from(self.scenario.link.mtu);
        let f = &mut self.flows[i];
        let Some(s) = f.sender.as_mut() else { return };
        loop {
            match s.can_send(t) {
                SendDecision::Now => {
                    let pkt = s.send(t);
                    f.counters.sent += f64::from(pkt.size);
                    f.counters.in_network += f64::from(pkt.size);
                    if self.opts.check_invariants {
                        let inflight = s.inflight() as f64;
                        if inflight > s.window() as f64 + 0.5 && self.trace.violations.len() < MAX_VIOLATIONS {
                            self.trace.violations.push(format!(
                                "t={t:.6} flow {}: inflight {inflight} exceeds window {}",
                                f.id,
                                s.window()
                            ));
                        }
                        if let Some(cap) = s.cca.inflight_cap() {
                            let bound = cap.max(4.0 * mtu) + mtu;
                            if inflight > bound && self.trace.violations.len() < MAX_VIOLATIONS {
                                self.trace.violations.push(format!(
                                    "t={t:.6} flow {}: inflight {inflight} exceeds BBR cap {bound:.0}",
                                    f.id
                                ));
                            }
                        }
                    }
                    let at = now.add_secs(f.extra);
                    self.events.schedule(at, f.id, Event::AtQueue(i, pkt));
                }
                SendDecision::At(when) => {
                    // Round up so the wake-up never lands before `when`.
                    let at = SimTime((when * 1e9).ceil() as u64).max(SimTime(now.0 + 1));
                    if f.wake_at.map_or(true, |w| at < w) {
                        f.wake_at = Some(at);
                        self.events.schedule(at, f.id, Event::SendWake(i));
                    }
                    break;
                }
                SendDecision::Blocked => break,
            }
        }
        self.arm_timer(i, now);
    }

    fn receive(&mut self, i: usize, pkt: Outgoing, now: SimTime) {
        let f = &mut self.flows[i];
        let size = f64::from(pkt.size);
        f.counters.in_network -= size;
        f.counters.received += size;
        let seg = pkt.seg as usize;
        if f.receiver.seen.len() <= seg {
            f.receiver.seen.resize(seg + 1, false);
        }
        if !f.receiver.seen[seg] {
            f.receiver.seen[seg] = true;
            f.counters.delivered += size;
        }
        f.receiver.pending.push((pkt.pn, pkt.seg));
        let every = self.opts.ack_every.max(1) as usize;
        if f.receiver.pending.len() >= every {
            self.flush_acks(i, now);
        } else if !f.receiver.delack_armed {
            f.receiver.delack_armed = true;
            let at = now.add_secs(self.opts.delayed_ack_timeout);
            self.events.schedule(at, f.id, Event::DelayedAck(i));
        }
    }

    fn flush_acks(&mut self, i: usize, now: SimTime) {
        let f = &mut self.flows[i];
        if f.receiver.pending.is_empty() {
            return;
        }
        let acks = std::mem::take(&mut f.receiver.pending);
        let at = now.add_secs(self.half_rtt + f.extra);
        self.events.schedule(at, f.id, Event::Ack(i, acks));
    }

    fn sample(&mut self, now: SimTime) {
        let t = now.secs();
        let flows: Vec<FlowCounters> = self.flows.iter().map(|f| f.counters).collect();
        if self.opts.check_invariants {
            for (f, c) in self.flows.iter().zip(&flows) {
                let balance = c.sent - c.received - c.dropped - c.in_network;
                if balance.abs() > 0.5 && self.trace.violations.len() < MAX_VIOLATIONS {
                    self.trace.violations.push(format!(
                        "t={t:.6} flow {}: sent {} != received {} + dropped {} + in network {}",
                        f.id, c.sent, c.received, c.dropped, c.in_network
                    ));
                }
            }
            if self.queue.occupancy() > self.queue.limit() && self.trace.violations.len() < MAX_VIOLATIONS {
                self.trace
                    .violations
                    .push(format!("t={t:.6}: queue {} over limit", self.queue.occupancy()));
            }
        }
        let queue_integral = self.queue.integral(now);
        self.trace.samples.push(Sample {
            t,
            flows,
            queue_bytes: self.queue.occupancy() as f64,
            queue_integral,
        });
    }
}
