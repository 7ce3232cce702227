// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` scenario files.
//!
//! ```text
//! capacity_mbps = 10
//! base_rtt_ms = 40
//! buffer_bdp = 1
//! mtu_bytes = 1500
//! duration_s = 100
//! analysis_window_s = 40
//! trials = 3
//! seed = 1
//!
//! [flow]
//! cca = bbrv1
//! start_s = 0
//! extra_delay_ms = 0
//! max_window_bytes = 67108864
//! ```
//!
//! `extra_delay_ms` also accepts `lo..hi`, a per-trial uniform draw. Flow ids
//! are assigned in section order. `#` starts a comment.

use std::fmt::Write as _;

use crate::config::{
    CcaKind, ExtraDelay, FlowSpec, LinkConfig, ScenarioConfig, DEFAULT_MAX_WINDOW, DEFAULT_MTU,
};
use crate::error::{Error, Result};

const TOP_KEYS: [&str; 8] = [
    "capacity_mbps",
    "base_rtt_ms",
    "buffer_bdp",
    "mtu_bytes",
    "duration_s",
    "analysis_window_s",
    "trials",
    "seed",
];

#[derive(Default)]
struct FlowDraft {
    line: usize,
    cca: Option<CcaKind>,
    start: f64,
    extra: ExtraDelay,
    max_window: u64,
}

pub fn parse(text: &str) -> Result<ScenarioConfig> {
    let mut top: [Option<(usize, String)>; 8] = Default::default();
    let mut flows: Vec<FlowDraft> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[flow]" {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown section {content}"),
                });
            }
            flows.push(FlowDraft {
                line,
                max_window: DEFAULT_MAX_WINDOW,
                ..Default::default()
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected key = value, got '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());

        match flows.last_mut() {
            None => {
                let slot = TOP_KEYS
                    .iter()
                    .position(|k| *k == key)
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("unknown key '{key}'"),
                    })?;
                if top[slot].is_some() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("duplicate key '{key}'"),
                    });
                }
                top[slot] = Some((line, value.to_string()));
            }
            Some(flow) => match key {
                "cca" => {
                    flow.cca = Some(value.parse().map_err(|e: Error| Error::Parse {
                        line,
                        msg: e.to_string(),
                    })?)
                }
                "start_s" => flow.start = num(line, value)?,
                "extra_delay_ms" => flow.extra = delay(line, value)?,
                "max_window_bytes" => flow.max_window = num(line, value)?,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown flow key '{key}'"),
                    })
                }
            },
        }
    }

    let get = |i: usize| -> Result<(usize, &str)> {
        top[i]
            .as_ref()
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing key '{}'", TOP_KEYS[i]),
            })
    };
    let f = |i: usize| -> Result<f64> {
        let (l, v) = get(i)?;
        num(l, v)
    };

    let mtu = match &top[3] {
        Some((l, v)) => num(*l, v)?,
        None => DEFAULT_MTU,
    };
    let link = LinkConfig {
        capacity: f(0)? * 1e6,
        base_rtt: f(1)? * 1e-3,
        buffer_bdp: f(2)?,
        mtu,
    };

    let flows = flows
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let cca = d.cca.ok_or_else(|| Error::Parse {
                line: d.line,
                msg: "flow section without 'cca'".into(),
            })?;
            Ok(FlowSpec {
                id: i as u32,
                cca,
                sender_extra_delay: d.extra,
                start_time: d.start,
                max_window: d.max_window,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let scenario = ScenarioConfig {
        link,
        flows,
        duration: f(4)?,
        analysis_window: f(5)?,
        trials: {
            let (l, v) = get(6)?;
            num(l, v)?
        },
        seed: {
            let (l, v) = get(7)?;
            num(l, v)?
        },
    };
    scenario.validated()
}

pub fn to_string(s: &ScenarioConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "capacity_mbps = {}", s.link.capacity / 1e6);
    let _ = writeln!(out, "base_rtt_ms = {}", s.link.base_rtt * 1e3);
    let _ = writeln!(out, "buffer_bdp = {}", s.link.buffer_bdp);
    let _ = writeln!(out, "mtu_bytes = {}", s.link.mtu);
    let _ = writeln!(out, "duration_s = {}", s.duration);
    let _ = writeln!(out, "analysis_window_s = {}", s.analysis_window);
    let _ = writeln!(out, "trials = {}", s.trials);
    let _ = writeln!(out, "seed = {}", s.seed);
    for flow in &s.flows {
        let _ = writeln!(out, "\n[flow]");
        let _ = writeln!(out, "cca = {}", flow.cca);
        let _ = writeln!(out, "start_s = {}", flow.start_time);
        match flow.sender_extra_delay {
            ExtraDelay::Fixed(d) => {
                let _ = writeln!(out, "extra_delay_ms = {}", d * 1e3);
            }
            ExtraDelay::Uniform { lo, hi } => {
                let _ = writeln!(out, "extra_delay_ms = {}..{}", lo * 1e3, hi * 1e3);
            }
        }
        let _ = writeln!(out, "max_window_bytes = {}", flow.max_window);
    }
    out
}

fn num<T: std::str::FromStr>(line: usize, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse '{v}' as a number"),
    })
}

fn delay(line: usize, v: &str) -> Result<ExtraDelay> {
    match v.split_once("..") {
        Some((lo, hi)) => Ok(ExtraDelay::Uniform {
            lo: num::<f64>(line, lo.trim())? * 1e-3,
            hi: num::<f64>(line, hi.trim())? * 1e-3,
        }),
        None => Ok(ExtraDelay::Fixed(num::<f64>(line, v)? * 1e-3)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# ware setting
capacity_mbps = 10
base_rtt_ms = 40
buffer_bdp = 8
mtu_bytes = 1500
duration_s = 100
analysis_window_s = 40
trials = 3
seed = 7

[flow]
cca = bbrv1
start_s = 0
extra_delay_ms = 0

[flow]
cca = cubic
start_s = 0.5
extra_delay_ms = 5..10
max_window_bytes = 1000000
";

    #[test]
    fn parses_sample() {
        let s = parse(SAMPLE).unwrap();
        assert_eq!(s.link.buffer_packets(), 267);
        assert_eq!(s.flows.len(), 2);
        assert_eq!(s.flows[0].cca, CcaKind::BbrV1);
        assert_eq!(s.flows[0].max_window, DEFAULT_MAX_WINDOW);
        assert_eq!(s.flows[1].id, 1);
        assert_eq!(s.flows[1].max_window, 1_000_000);
        match s.flows[1].sender_extra_delay {
            ExtraDelay::Uniform { lo, hi } => {
                assert!((lo - 0.005).abs() < 1e-12 && (hi - 0.010).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.seed, 7);
    }

    #[test]
    fn round_trips_through_text() {
        let s = parse(SAMPLE).unwrap();
        let again = parse(&to_string(&s)).unwrap();
        assert_eq!(s.flows, again.flows);
        assert_eq!(s.link.buffer_packets(), again.link.buffer_packets());
        assert!((s.link.capacity - again.link.capacity).abs() < 1e-6);
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let err = parse("capacity_mbps = 10\nbogus = 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rejects_invalid_scenario() {
        let text = SAMPLE.replace("analysis_window_s = 40", "analysis_window_s = 400");
        assert!(matches!(parse(&text), Err(Error::InvalidScenario(_))));
    }
}
