// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::execute::{read_summary, slug, write_atomic, RunRecord, SUMMARY_FILE};
use super::matrix::Engine;
use super::preset::nominal_duration;
use super::svg::{self, Panel, Series};
use crate::metrics::{mean_stderr, score_model, ModelScore};

pub const REPORT_FILE: &str = "report.md";

/// Pairs scored against the packet-level measurements.
const SCORED: [(Engine, Engine); 2] = [(Engine::SteadyState, Engine::Packetsim), (Engine::Fluid, Engine::Packetsim)];

#[derive(Debug, Clone)]
pub struct Report {
    /// Contents of `report.md`.
    pub text: String,
    /// Every file written, report first.
    pub files: Vec<PathBuf>,
    pub scores: Vec<PresetScore>,
}

#[derive(Debug, Clone)]
pub struct PresetScore {
    pub preset: String,
    pub model: Engine,
    pub reference: Engine,
    pub score: ModelScore,
}

type Metric = fn(&RunRecord) -> Option<f64>;

const METRICS: [(&str, Metric); 4] = [
    ("jfi", |r| r.jfi),
    ("loss_rate", |r| r.loss_rate),
    ("utilization", |r| r.utilization),
    ("buffer_occupancy", |r| r.buffer_occupancy),
];

/// Rows of one preset label, indexed by engine and buffer.
struct Group<'a> {
    label: &'a str,
    rows: Vec<&'a RunRecord>,
    engines: Vec<Engine>,
    buffers: Vec<f64>,
}

impl<'a> Group<'a> {
    fn new(label: &'a str, rows: Vec<&'a RunRecord>) -> Self {
        let mut engines: Vec<Engine> = rows.iter().map(|r| r.engine).collect();
        engines.sort_by_key(|e| Engine::ALL.iter().position(|a| a == e));
        engines.dedup();
        let mut buffers: Vec<f64> = rows.iter().map(|r| r.buffer_bdp).collect();
        buffers.sort_by(f64::total_cmp);
        buffers.dedup();
        Self {
            label,
            rows,
            engines,
            buffers,
        }
    }

    fn base_preset(&self) -> &str {
        self.label.split(':').next().unwrap_or(self.label)
    }

    /// Mean and standard error of `metric` over the trials of one cell.
    fn stat(&self, engine: Engine, buffer: f64, metric: Metric) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.engine == engine && r.buffer_bdp == buffer)
            .filter_map(|r| metric(r))
            .collect();
        mean_stderr(&values)
    }

    fn curve(&self, engine: Engine, metric: Metric) -> Vec<(f64, f64, f64)> {
        self.buffers
            .iter()
            .filter_map(|&b| self.stat(engine, b, metric).map(|(m, e)| (b, m, e)))
            .collect()
    }

    fn trials(&self, engine: Engine) -> usize {
        let mut t: Vec<u32> = self.rows.iter().filter(|r| r.engine == engine).map(|r| r.trial).collect();
        t.sort_unstable();
        t.dedup();
        t.len()
    }

    /// Distinct `(duration, analysis window)` pairs of an engine's rows.
    fn windows(&self, engine: Engine) -> Vec<(f64, f64)> {
        let mut w: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.engine == engine)
            .map(|r| (r.duration, r.analysis_window))
            .collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        w.dedup();
        w
    }

    fn time_scale(&self) -> Option<f64> {
        let nominal = nominal_duration(self.base_preset())?;
        match self.windows(Engine::Packetsim).as_slice() {
            [(d, _)] => Some(d / nominal),
            _ => None,
        }
    }
}

fn cell(s: Option<(f64, f64)>) -> String {
    match s {
        Some((m, e)) if e > 0.0 => format!("{m:.4} ± {e:.4}"),
        Some((m, _)) => format!("{m:.4}"),
        None => "".into(),
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

/// Reads `summary.csv` in `dir` and writes `report.md` plus one plot per
/// preset label (and the four-metric grid for the ten-sender preset).
/// Output depends only on the CSV contents.
pub fn report(dir: &Path) -> crate::error::Result<Report> {
    let records = read_summary(&dir.join(SUMMARY_FILE))?;
    let mut by_label: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in &records {
        by_label.entry(r.preset.as_str()).or_default().push(r);
    }

    let mut text = String::from("# Results\n");
    let mut files = vec![dir.join(REPORT_FILE)];
    let mut scores = Vec::new();
    let mut plots: Vec<(PathBuf, String)> = Vec::new();

    for (label, rows) in by_label {
        let g = Group::new(label, rows);
        let _ = writeln!(text, "\n## {label}\n");
        for &e in &g.engines {
            let windows = g.windows(e);
            let spans: Vec<String> = windows
                .iter()
                .map(|&(d, w)| match e {
                    Engine::SteadyState => format!("d = {} s", num(w)),
                    _ => format!("{} s runs, final {} s analyzed", num(d), num(w)),
                })
                .collect();
            let scale = match (e, g.time_scale()) {
                (Engine::Packetsim, Some(s)) => format!(", time scale {}", num(s)),
                _ => String::new(),
            };
            let _ = writeln!(text, "- {e}: {}{scale}, {} trial(s)", spans.join("; "), g.trials(e));
        }

        let frac = |r: &RunRecord| r.bbr_fraction;
        let has_fraction = g.rows.iter().any(|r| r.bbr_fraction.is_some());
        if has_fraction {
            let _ = writeln!(text, "\n### BBR share of capacity (mean ± standard error)\n");
            table(&mut text, &g, &g.engines, |e, b| cell(g.stat(e, b, frac)));

            let mut lines = Vec::new();
            for (model, reference) in SCORED {
                if !(g.engines.contains(&model) && g.engines.contains(&reference)) {
                    continue;
                }
                let (m, r) = (g.curve(model, frac), g.curve(reference, frac));
                let common: Vec<f64> = m.iter().map(|p| p.0).filter(|b| r.iter().any(|q| q.0 == *b)).collect();
                let pick = |c: &[(f64, f64, f64)]| -> Vec<(f64, f64)> {
                    c.iter().filter(|p| common.contains(&p.0)).map(|p| (p.0, p.1)).collect()
                };
                if let Ok(score) = score_model(&pick(&m), &pick(&r)) {
                    let res: Vec<String> = score.residuals.iter().map(|(b, d)| format!("{}: {d:+.4}", num(*b))).collect();
                    lines.push(format!(
                        "- {model} vs {reference}: MSE {:.4}, RMSE {:.4} over {} buffers (residuals {})",
                        score.mse,
                        score.rmse,
                        score.residuals.len(),
                        res.join(", ")
                    ));
                    scores.push(PresetScore {
                        preset: label.to_owned(),
                        model,
                        reference,
                        score,
                    });
                }
            }
            if !lines.is_empty() {
                let _ = writeln!(text, "\n### Model scores\n");
                for l in lines {
                    let _ = writeln!(text, "{l}");
                }
            }

            let series = g
                .engines
                .iter()
                .map(|&e| Series {
                    name: e.to_string(),
                    points: g.curve(e, frac),
                    analytic: e == Engine::SteadyState,
                })
                .filter(|s| !s.points.is_empty())
                .collect();
            let title = match g.time_scale() {
                Some(s) => format!("{label} (packetsim time scale {})", num(s)),
                None => label.to_owned(),
            };
            let p = Panel {
                title: "BBR share of link capacity".into(),
                x_label: "buffer (BDP)".into(),
                y_label: "BBR fraction".into(),
                series,
                y_range: Some((0.0, 1.0)),
                references: vec![(0.5, "fair share".into())],
            };
            plots.push((dir.join(format!("fraction_{}.svg", slug(label))), svg::render(&title, &[p], 1)));
        }

        let simulated: Vec<Engine> = g.engines.iter().copied().filter(|&e| e != Engine::SteadyState).collect();
        for &e in &simulated {
            let _ = writeln!(text, "\n### {e} metrics (mean ± standard error)\n");
            let _ = writeln!(text, "| buffer_bdp | {} |", METRICS.map(|m| m.0).join(" | "));
            let _ = writeln!(text, "|---|{}", "---|".repeat(METRICS.len()));
            for &b in &g.buffers {
                let cells: Vec<String> = METRICS.iter().map(|(_, f)| cell(g.stat(e, b, *f))).collect();
                let _ = writeln!(text, "| {} | {} |", num(b), cells.join(" | "));
            }
        }

        if g.base_preset().starts_with("scherrer") && !simulated.is_empty() {
            let titles = ["Jain's fairness index", "loss rate", "link utilization", "buffer occupancy"];
            let panels: Vec<Panel> = METRICS
                .iter()
                .zip(titles)
                .map(|((name, f), title)| Panel {
                    title: title.into(),
                    x_label: "buffer (BDP)".into(),
                    y_label: (*name).into(),
                    series: simulated
                        .iter()
                        .map(|&e| Series {
                            name: e.to_string(),
                            points: g.curve(e, *f),
                            analytic: false,
                        })
                        .filter(|s| !s.points.is_empty())
                        .collect(),
                    y_range: (*name != "loss_rate").then_some((0.0, 1.0)),
                    references: Vec::new(),
                })
                .collect();
            plots.push((dir.join(format!("panels_{}.svg", slug(label))), svg::render(label, &panels, 4)));
        }
    }

    write_atomic(&dir.join(REPORT_FILE), text.as_bytes())?;
    for (path, body) in plots {
        write_atomic(&path, body.as_bytes())?;
        files.push(path);
    }
    Ok(Report { text, files, scores })
}

fn table(text: &mut String, g: &Group<'_>, engines: &[Engine], cell: impl Fn(Engine, f64) -> String) {
    let names: Vec<&str> = engines.iter().map(|e| e.name()).collect();
    let _ = writeln!(text, "| buffer_bdp | {} |", names.join(" | "));
    let _ = writeln!(text, "|---|{}", "---|".repeat(engines.len()));
    for &b in &g.buffers {
        let cells: Vec<String> = engines.iter().map(|&e| cell(e, b)).collect();
        let _ = writeln!(text, "| {} | {} |", num(b), cells.join(" | "));
    }
}
