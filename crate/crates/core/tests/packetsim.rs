// SPDX-License-Identifier: Apache-2.0

use bbrlab_core::metrics::{self, FractionMode, Window};
use bbrlab_core::packetsim::{self, SimOptions};
use bbrlab_core::{CcaKind, ExtraDelay, FlowSpec, LinkConfig, ScenarioConfig, SimTrace};
use proptest::prelude::*;

fn scenario(buffer_bdp: f64, flows: Vec<FlowSpec>, duration: f64, window: f64) -> ScenarioConfig {
    ScenarioConfig {
        link: LinkConfig::from_mbps_ms(10.0, 40.0, buffer_bdp).unwrap(),
        flows,
        duration,
        analysis_window: window,
        trials: 1,
        seed: 11,
    }
}

fn flows(kinds: &[CcaKind]) -> Vec<FlowSpec> {
    kinds.iter().enumerate().map(|(i, &k)| FlowSpec::new(i as u32, k)).collect()
}

/// Checks the trace-level invariants; returns the first one broken.
fn trace_problem(trace: &SimTrace, link: &LinkConfig) -> Option<String> {
    if let Some(v) = trace.violations.first() {
        return Some(v.clone());
    }
    for w in trace.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if !(b.t > a.t) {
            return Some(format!("samples out of order at {}", b.t));
        }
        let delivered: f64 = a.flows.iter().zip(&b.flows).map(|(x, y)| y.delivered - x.delivered).sum();
        // One packet of slack for a departure straddling the sample instant.
        if delivered * 8.0 > link.capacity * (b.t - a.t) + f64::from(link.mtu) * 8.0 {
            return Some(format!("more than capacity delivered in ({}, {}]", a.t, b.t));
        }
        for (x, y) in a.flows.iter().zip(&b.flows) {
            if y.delivered < x.delivered || y.sent < x.sent || y.dropped < x.dropped {
                return Some(format!("cumulative counter fell at {}", b.t));
            }
        }
    }
    for s in &trace.samples {
        if s.queue_bytes > link.buffer_bytes() as f64 {
            return Some(format!("queue {} over limit at {}", s.queue_bytes, s.t));
        }
        for c in &s.flows {
            if (c.sent - c.received - c.dropped - c.in_network).abs() > 0.5 || c.delivered > c.received {
                return Some(format!("bytes not conserved at {}: {c:?}", s.t));
            }
        }
    }
    None
}

#[test]
fn lone_reno_keeps_one_bdp_link_busy() {
    let s = scenario(1.0, flows(&[CcaKind::Reno]), 60.0, 30.0);
    let trace = packetsim::run(&s, 0).unwrap();
    let w = Window::suffix(&trace, 30.0).unwrap();
    let u = metrics::utilization(&trace, w);
    assert!(u >= 0.75, "{u}");
}

#[test]
fn bbrv1_takes_more_than_half_at_one_bdp() {
    let s = scenario(1.0, flows(&[CcaKind::BbrV1, CcaKind::Cubic]), 60.0, 30.0);
    let trace = packetsim::run(&s, 0).unwrap();
    let m = metrics::summarize(&trace, 30.0, FractionMode::OfCapacity).unwrap();
    assert!(m.bbr_fraction.unwrap() > 0.5, "{:?}", m.bbr_fraction);
}

#[test]
fn no_flows_no_throughput() {
    let s = scenario(1.0, vec![], 2.0, 1.0);
    let trace = packetsim::run(&s, 0).unwrap();
    assert!(trace.flow_ids.is_empty());
    assert!(trace.samples.iter().all(|s| s.flows.is_empty() && s.queue_bytes == 0.0));
}

#[test]
fn lone_bbrv1_leaves_startup_once_delivery_plateaus() {
    let s = scenario(4.0, flows(&[CcaKind::BbrV1]), 3.0, 1.0);
    let opts = SimOptions {
        record_states: true,
        ..SimOptions::default()
    };
    let trace = packetsim::run_with(&s, 0, &opts).unwrap();
    let exit = trace.state_changes.iter().find(|c| c.state != "startup").unwrap();
    assert_eq!(exit.state, "drain");
    // Delivery doubles from the 10-packet initial window until it covers the
    // BDP, then three rounds without 25% growth end Startup.
    let saturated = 1 + (s.link.bdp_packets() / 10.0).log2().ceil() as u64;
    assert!(exit.round <= saturated + 3 + 1, "left startup in round {}", exit.round);
    assert!(exit.t < 1.0, "left startup at {} s", exit.t);
}

#[test]
fn lone_bbrv1_probe_rtt_spacing_and_dwell() {
    let s = scenario(2.0, flows(&[CcaKind::BbrV1]), 45.0, 10.0);
    let opts = SimOptions {
        record_states: true,
        ..SimOptions::default()
    };
    let trace = packetsim::run_with(&s, 0, &opts).unwrap();
    let changes = &trace.state_changes;
    let entries: Vec<usize> = (0..changes.len()).filter(|&i| changes[i].state == "probe_rtt").collect();
    assert!(!entries.is_empty());
    assert!(changes[entries[0]].t >= 10.0);
    for w in entries.windows(2) {
        assert!(changes[w[1]].t - changes[w[0]].t >= 10.0, "{changes:?}");
    }
    for &i in &entries {
        let dwell = changes[i + 1].t - changes[i].t;
        // 200 ms plus at most a couple of (empty-queue) round trips.
        assert!((0.2..0.3).contains(&dwell), "dwell {dwell}");
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let mut s = scenario(
        2.0,
        flows(&[CcaKind::BbrV1, CcaKind::BbrV2, CcaKind::Cubic, CcaKind::Reno]),
        20.0,
        10.0,
    );
    for f in &mut s.flows {
        f.sender_extra_delay = ExtraDelay::Uniform { lo: 0.0, hi: 0.005 };
    }
    let a = packetsim::run(&s, 3).unwrap();
    let b = packetsim::run(&s, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let c = packetsim::run(&s, 4).unwrap();
    assert_ne!(a.samples, c.samples, "trials should draw different delays");
}

#[test]
fn loss_based_delays_ignore_removed_bbr_flows() {
    let delay = ExtraDelay::Uniform { lo: 0.0, hi: 0.005 };
    let all: Vec<FlowSpec> = [CcaKind::BbrV1, CcaKind::Cubic, CcaKind::BbrV2, CcaKind::Reno]
        .iter()
        .enumerate()
        .map(|(i, &k)| FlowSpec::new(i as u32, k).with_extra_delay(delay))
        .collect();
    let loss_only: Vec<FlowSpec> = all.iter().filter(|f| !f.cca.is_bbr()).cloned().collect();
    let full = scenario(2.0, all, 10.0, 5.0);
    let reduced = scenario(2.0, loss_only.clone(), 10.0, 5.0);
    for trial in 0..5 {
        let (a, b) = (full.extra_delays(trial), reduced.extra_delays(trial));
        let kept: Vec<f64> = full
            .flows
            .iter()
            .zip(&a)
            .filter(|(f, _)| !f.cca.is_bbr())
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(kept, b);
    }
    let x = packetsim::run(&reduced, 2).unwrap();
    let y = packetsim::run(&scenario(2.0, loss_only, 10.0, 5.0), 2).unwrap();
    assert_eq!(x, y);
}

#[test]
fn bbrv2_stays_below_half_against_cubic() {
    let s = scenario(8.0, flows(&[CcaKind::BbrV2, CcaKind::Cubic]), 60.0, 30.0);
    let trace = packetsim::run(&s, 0).unwrap();
    let m = metrics::summarize(&trace, 30.0, FractionMode::OfCapacity).unwrap();
    assert!(m.bbr_fraction.unwrap() < 0.5, "{:?}", m.bbr_fraction);
}

fn cca() -> impl Strategy<Value = CcaKind> {
    prop_oneof![
        Just(CcaKind::Reno),
        Just(CcaKind::Cubic),
        Just(CcaKind::BbrV1),
        Just(CcaKind::BbrV2),
        Just(CcaKind::BbrV3),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn invariants_hold_for_random_dumbbells(
        kinds in prop::collection::vec(cca(), 1..5),
        buffer in 0.25f64..8.0,
        starts in prop::collection::vec(0.0f64..2.0, 4),
        trial in 0u32..4,
    ) {
        let mut s = scenario(buffer, flows(&kinds), 6.0, 3.0);
        for (f, t) in s.flows.iter_mut().zip(&starts) {
            f.start_time = *t;
            f.sender_extra_delay = ExtraDelay::Uniform { lo: 0.0, hi: 0.01 };
        }
        let trace = packetsim::run(&s, trial).unwrap();
        prop_assert_eq!(trace_problem(&trace, &s.link), None);
        let w = Window::suffix(&trace, 3.0).unwrap();
        prop_assert!(metrics::utilization(&trace, w) <= 1.0 + 1e-9);
    }
}
