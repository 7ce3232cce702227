// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::convergence::convergence_time;
use super::matrix::{Engine, ExperimentMatrix};
use crate::error::{Error, Result};
use crate::fluid::{self, FluidParams};
use crate::metrics::{self, FractionMode};
use crate::packetsim;
use crate::steady_state::{predict_bbr_fraction, SteadyStateInputs};
use crate::trace::SimTrace;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: [&str; 12] = [
    "preset",
    "engine",
    "buffer_bdp",
    "trial",
    "bbr_fraction",
    "jfi",
    "loss_rate",
    "utilization",
    "buffer_occupancy",
    "seed",
    "duration_s",
    "analysis_window_s",
];
pub const TIMESERIES_HEADER: [&str; 5] = ["t_s", "flow_id", "cum_bytes", "queue_bytes", "drops"];

/// Crate version stamped on every record produced in this process.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One `(preset, engine, buffer, trial)` cell's result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub preset: String,
    pub engine: Engine,
    pub buffer_bdp: f64,
    pub trial: u32,
    pub bbr_fraction: Option<f64>,
    pub jfi: Option<f64>,
    pub loss_rate: Option<f64>,
    pub utilization: Option<f64>,
    pub buffer_occupancy: Option<f64>,
    pub seed: u64,
    pub duration: f64,
    pub analysis_window: f64,
    /// Known for records produced in this process, not for ones read back.
    pub wall_time: Option<Duration>,
    pub version: Option<&'static str>,
}

impl RunRecord {
    fn key(&self) -> (String, Engine, u64, u32) {
        (self.preset.clone(), self.engine, self.buffer_bdp.to_bits(), self.trial)
    }

    fn sort_key(&self) -> (&str, &str, f64, u32) {
        (&self.preset, self.engine.name(), self.buffer_bdp, self.trial)
    }

    fn to_fields(&self) -> [String; 12] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.preset.clone(),
            self.engine.to_string(),
            self.buffer_bdp.to_string(),
            self.trial.to_string(),
            opt(self.bbr_fraction),
            opt(self.jfi),
            opt(self.loss_rate),
            opt(self.utilization),
            opt(self.buffer_occupancy),
            self.seed.to_string(),
            self.duration.to_string(),
            self.analysis_window.to_string(),
        ]
    }
}

/// A cell that did not produce a record.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub engine: Engine,
    pub buffer_bdp: f64,
    pub trial: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// This sweep's records, in summary order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
    pub summary_path: PathBuf,
}

enum Task {
    /// The analytic model, evaluated once and reported for every trial.
    Analytic { buffer: f64 },
    Run { engine: Engine, buffer: f64, trial: u32 },
}

/// Runs every cell of `matrix` on up to `matrix.jobs` threads, writes one
/// time series per simulated run and merges the records into the output
/// directory's `summary.csv`, replacing rows with the same coordinates.
pub fn execute(matrix: &ExperimentMatrix) -> Result<SweepOutcome> {
    let matrix = matrix.clone().validated()?;
    let ts_dir = matrix.out_dir.join("timeseries").join(slug(&matrix.label()));
    fs::create_dir_all(&ts_dir)?;

    let mut tasks = Vec::new();
    for &buffer in &matrix.buffers {
        for &engine in &matrix.engines {
            if engine == Engine::SteadyState {
                tasks.push(Task::Analytic { buffer });
            } else {
                tasks.extend((0..matrix.template.trials).map(|trial| Task::Run { engine, buffer, trial }));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(matrix.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<std::result::Result<Vec<RunRecord>, Vec<CellFailure>>> =
        pool.install(|| tasks.par_iter().map(|t| run_task(&matrix, t, &ts_dir)).collect());

    let mut outcome = SweepOutcome {
        summary_path: matrix.out_dir.join(SUMMARY_FILE),
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(mut recs) => outcome.records.append(&mut recs),
            Err(mut f) => outcome.failures.append(&mut f),
        }
    }
    outcome.records.sort_by(|a, b| cmp_records(a, b));

    let mut merged: BTreeMap<_, RunRecord> = BTreeMap::new();
    if outcome.summary_path.exists() {
        for r in read_summary(&outcome.summary_path)? {
            merged.insert(r.key(), r);
        }
    }
    let label = matrix.label();
    for f in &outcome.failures {
        merged.remove(&(label.clone(), f.engine, f.buffer_bdp.to_bits(), f.trial));
    }
    for r in &outcome.records {
        merged.insert(r.key(), r.clone());
    }
    let mut all: Vec<RunRecord> = merged.into_values().collect();
    all.sort_by(cmp_records);
    write_summary(&outcome.summary_path, &all)?;
    Ok(outcome)
}

fn cmp_records(a: &RunRecord, b: &RunRecord) -> std::cmp::Ordering {
    let (x, y) = (a.sort_key(), b.sort_key());
    x.0.cmp(y.0)
        .then(x.1.cmp(y.1))
        .then(x.2.total_cmp(&y.2))
        .then(x.3.cmp(&y.3))
}

fn run_task(
    m: &ExperimentMatrix,
    task: &Task,
    ts_dir: &Path,
) -> std::result::Result<Vec<RunRecord>, Vec<CellFailure>> {
    let started = Instant::now();
    let fail = |engine, buffer, trials: &[u32], e: String| {
        trials
            .iter()
            .map(|&trial| CellFailure {
                engine,
                buffer_bdp: buffer,
                trial,
                error: e.clone(),
            })
            .collect::<Vec<_>>()
    };
    match *task {
        Task::Analytic { buffer } => {
            let trials: Vec<u32> = (0..m.template.trials).collect();
            let s = m.packet_scenario(buffer);
            let inputs = SteadyStateInputs::from_link(&s.link, m.mix.bbr_count(), s.analysis_window)
                .map_err(|e| fail(Engine::SteadyState, buffer, &trials, e.to_string()))?;
            let pred = predict_bbr_fraction(&inputs);
            let wall = started.elapsed();
            Ok(trials
                .iter()
                .map(|&trial| RunRecord {
                    preset: m.label(),
                    engine: Engine::SteadyState,
                    buffer_bdp: buffer,
                    trial,
                    bbr_fraction: Some(pred.bbr_fraction),
                    jfi: None,
                    loss_rate: None,
                    utilization: None,
                    buffer_occupancy: None,
                    seed: s.seed,
                    duration: s.duration,
                    analysis_window: s.analysis_window,
                    wall_time: Some(wall),
                    version: Some(ARTIFACT_VERSION),
                })
                .collect())
        }
        Task::Run { engine, buffer, trial } => {
            let caught = std::panic::catch_unwind(|| simulate_cell(m, engine, buffer, trial, ts_dir));
            let result = caught.unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<&str>()
                    .map(|s| (*s).to_owned())
                    .or_else(|| p.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".to_owned());
                Err(Error::InvalidInput(format!("cell panicked: {msg}")))
            });
            result
                .map(|mut r| {
                    r.wall_time = Some(started.elapsed());
                    vec![r]
                })
                .map_err(|e| fail(engine, buffer, &[trial], e.to_string()))
        }
    }
}

fn simulate_cell(m: &ExperimentMatrix, engine: Engine, buffer: f64, trial: u32, ts_dir: &Path) -> Result<RunRecord> {
    let (scenario, trace) = match engine {
        Engine::Packetsim => {
            let s = m.packet_scenario(buffer);
            let trace = packetsim::run(&s, trial)?;
            if !trace.violations.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "invariant violations: {}",
                    trace.violations.join("; ")
                )));
            }
            (s, trace)
        }
        Engine::Fluid => {
            let s = m.fluid_scenario(buffer);
            let mut p = FluidParams::for_link(&s.link);
            p.record_states = false;
            p.enable_v3 = m.fluid_v3;
            (s.clone(), fluid::simulate_trial(&s, &p, trial)?.trace)
        }
        Engine::SteadyState => unreachable!("analytic cells are not simulated"),
    };
    let mut window = scenario.analysis_window;
    if let (Engine::Packetsim, Some(slope)) = (engine, m.convergence_slope) {
        if let Some(t) = convergence_time(&trace, slope) {
            // Keep at least a tenth of the run to average over.
            window = (scenario.duration - t).max(0.1 * scenario.duration);
        }
    }
    write_timeseries(&ts_dir.join(format!("{engine}_b{buffer}_t{trial}.csv")), &trace)?;
    let sum = metrics::summarize(&trace, window, FractionMode::OfCapacity)?;
    Ok(RunRecord {
        preset: m.label(),
        engine,
        buffer_bdp: buffer,
        trial,
        bbr_fraction: sum.bbr_fraction,
        jfi: sum.jfi,
        loss_rate: Some(sum.loss_rate),
        utilization: Some(sum.utilization),
        buffer_occupancy: Some(sum.buffer_occupancy),
        seed: scenario.seed,
        duration: scenario.duration,
        analysis_window: window,
        wall_time: None,
        version: Some(ARTIFACT_VERSION),
    })
}

/// File-name-safe form of a row label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '_' | '.' => c,
            '+' => '_',
            _ => '-',
        })
        .collect()
}

pub fn write_timeseries(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(TIMESERIES_HEADER).map_err(csv_err)?;
    for (t, id, cum, queue, drops) in trace.csv_rows() {
        w.write_record([t.to_string(), id.to_string(), cum.to_string(), queue.to_string(), drops.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

pub fn write_summary(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(r.to_fields()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Parses `summary.csv`, reporting the 1-based line of any bad row.
pub fn read_summary(path: &Path) -> Result<Vec<RunRecord>> {
    let shown = path.display().to_string();
    let err = |row: usize, msg: String| Error::Csv {
        path: shown.clone(),
        row,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let mut records = Vec::new();
    let mut saw_header = false;
    for (i, row) in rdr.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| err(line, e.to_string()))?;
        if i == 0 {
            if row.iter().ne(SUMMARY_HEADER) {
                return Err(err(line, format!("header must be {}", SUMMARY_HEADER.join(","))));
            }
            saw_header = true;
            continue;
        }
        if row.len() != SUMMARY_HEADER.len() {
            return Err(err(line, format!("expected {} fields, found {}", SUMMARY_HEADER.len(), row.len())));
        }
        let f = |k: usize| row[k].trim();
        let num = |k: usize| {
            f(k).parse::<f64>()
                .map_err(|_| err(line, format!("{}: not a number: '{}'", SUMMARY_HEADER[k], f(k))))
        };
        let opt = |k: usize| if f(k).is_empty() { Ok(None) } else { num(k).map(Some) };
        let int = |k: usize| {
            f(k).parse::<u64>()
                .map_err(|_| err(line, format!("{}: not an integer: '{}'", SUMMARY_HEADER[k], f(k))))
        };
        if f(0).is_empty() {
            return Err(err(line, "empty preset".into()));
        }
        records.push(RunRecord {
            preset: f(0).to_owned(),
            engine: f(1).parse().map_err(|e: Error| err(line, e.to_string()))?,
            buffer_bdp: num(2)?,
            trial: u32::try_from(int(3)?).map_err(|e| err(line, e.to_string()))?,
            bbr_fraction: opt(4)?,
            jfi: opt(5)?,
            loss_rate: opt(6)?,
            utilization: opt(7)?,
            buffer_occupancy: opt(8)?,
            seed: int(9)?,
            duration: num(10)?,
            analysis_window: num(11)?,
            wall_time: None,
            version: None,
        });
    }
    if !saw_header {
        return Err(err(1, "missing header".into()));
    }
    Ok(records)
}
