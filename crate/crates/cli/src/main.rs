// SPDX-License-Identifier: Apache-2.0

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bbrlab_core::fluid::{self, FluidParams};
use bbrlab_core::harness::{self, Engine, ExperimentMatrix, FlowMix, RunRecord};
use bbrlab_core::metrics::{self, FractionMode};
use bbrlab_core::steady_state::{predict_bbr_fraction, SteadyStateInputs};
use bbrlab_core::{packetsim, scenario_file, Error, SimTrace};
use clap::{Parser, Subcommand};

/// BBR coexistence lab: analytic and fluid models, a packet simulator and
/// an experiment harness.
#[derive(Debug, Parser)]
#[command(name = "bbrlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment preset (ware-40ms-10mbps, ware-30ms-50mbps,
    /// ware-10ms-40mbps-text, scherrer-100mbps).
    #[arg(long, global = true, default_value = "ware-40ms-10mbps")]
    preset: String,

    /// Scenario file used instead of the preset's link and flows.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Buffer sizes in BDP, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    buffers: Option<Vec<f64>>,

    /// Engines to sweep: steady_state, fluid, packetsim.
    #[arg(long, global = true, value_delimiter = ',')]
    engines: Option<Vec<String>>,

    /// Flow mix, e.g. 5xbbrv1+5xcubic.
    #[arg(long, global = true)]
    mix: Option<String>,

    #[arg(long, global = true)]
    trials: Option<u32>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Multiplies packet-level duration and analysis window.
    #[arg(long, global = true)]
    time_scale: Option<f64>,

    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady-state BBR share per buffer size, as CSV.
    Predict,
    /// One fluid-model run at the first buffer size.
    Fluid {
        #[arg(long, default_value_t = 0)]
        trial: u32,
        /// Model BBRv3 flows with the fluid v3 variant.
        #[arg(long)]
        fluid_v3: bool,
    },
    /// One packet-level run at the first buffer size.
    Sim {
        #[arg(long, default_value_t = 0)]
        trial: u32,
    },
    /// Every buffer × engine × trial cell; writes summary.csv and time series.
    Sweep {
        #[arg(long)]
        fluid_v3: bool,
        /// Start packet-level analysis once the BBR share's slope stays below
        /// this many per second (off by default).
        #[arg(long)]
        convergence_slope: Option<f64>,
    },
    /// Tables and plots from an output directory's summary.csv.
    Report,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidScenario(_)
            | Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::UnsupportedCca { .. }
            | Error::UnknownPreset { .. }
            | Error::Csv { .. } => Failure::Config(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Config(m)) => {
            eprintln!("bbrlab: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("bbrlab: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Failure> {
    match &cli.command {
        Command::Predict => predict(cli),
        Command::Fluid { trial, fluid_v3 } => single(cli, Engine::Fluid, *trial, *fluid_v3),
        Command::Sim { trial } => single(cli, Engine::Packetsim, *trial, false),
        Command::Sweep {
            fluid_v3,
            convergence_slope,
        } => sweep(cli, *fluid_v3, *convergence_slope),
        Command::Report => {
            let r = harness::report(&out_dir(cli))?;
            print!("{}", r.text);
            for f in &r.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

/// The matrix described by the global flags.
fn matrix(cli: &Cli) -> Result<ExperimentMatrix, Failure> {
    let mut m = match &cli.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            harness::from_scenario(label, scenario_file::parse(&text)?)?
        }
        None => harness::preset(&cli.preset)?,
    };
    if let Some(mix) = &cli.mix {
        m = m.with_mix(mix.parse::<FlowMix>()?);
        m.engines = m.applicable_engines();
    }
    if let Some(b) = &cli.buffers {
        m.buffers = b.clone();
    }
    if let Some(e) = &cli.engines {
        m.engines = e.iter().map(|s| s.parse()).collect::<Result<_, Error>>()?;
    }
    if let Some(t) = cli.trials {
        m.template.trials = t;
    }
    if let Some(s) = cli.seed {
        m.template.seed = s;
    }
    if let Some(s) = cli.time_scale {
        m.time_scale = s;
    }
    m.jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    m.out_dir = out_dir(cli);
    Ok(m)
}

fn predict(cli: &Cli) -> Result<ExitCode, Failure> {
    let mut m = matrix(cli)?;
    m.engines = vec![Engine::SteadyState];
    let m = m.validated()?;
    let mut csv = String::from("buffer_bdp,bbr_fraction,loss_based_fraction,probe_time_s,clamped\n");
    for &b in &m.buffers {
        let s = m.packet_scenario(b);
        let p = predict_bbr_fraction(&SteadyStateInputs::from_link(&s.link, m.mix.bbr_count(), s.analysis_window)?);
        csv.push_str(&format!(
            "{b},{},{},{},{}\n",
            p.bbr_fraction, p.loss_based_fraction, p.probe_time, p.clamped
        ));
    }
    print!("{csv}");
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        harness_write(&dir.join("prediction.csv"), csv.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn harness_write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn single(cli: &Cli, engine: Engine, trial: u32, fluid_v3: bool) -> Result<ExitCode, Failure> {
    let mut m = matrix(cli)?;
    m.fluid_v3 = fluid_v3;
    m.engines = vec![engine];
    let m = m.validated()?;
    let buffer = m.buffers[0];
    let from_file = cli.scenario.is_some();
    let (scenario, trace): (_, SimTrace) = match engine {
        Engine::Fluid => {
            let s = if from_file {
                m.template.with_buffer_bdp(buffer)
            } else {
                m.fluid_scenario(buffer)
            };
            let mut p = FluidParams::for_link(&s.link);
            p.record_states = false;
            p.enable_v3 = fluid_v3;
            let run = fluid::simulate_trial(&s, &p, trial)?;
            (s, run.trace)
        }
        _ => {
            let s = m.packet_scenario(buffer);
            let trace = packetsim::run(&s, trial)?;
            if !trace.violations.is_empty() {
                return Err(Failure::Run(trace.violations.join("; ")));
            }
            (s, trace)
        }
    };
    let sum = metrics::summarize(&trace, scenario.analysis_window, FractionMode::OfCapacity)?;
    let rec = RunRecord {
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
        analysis_window: scenario.analysis_window,
        wall_time: None,
        version: Some(harness::ARTIFACT_VERSION),
    };
    let dir = cli.out.clone().unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;
    let summary = dir.join(format!("{engine}_{}.csv", harness::slug(&m.label())));
    harness::write_summary(&summary, std::slice::from_ref(&rec))?;
    print!("{}", std::fs::read_to_string(&summary)?);
    for (id, tp) in trace.flow_ids.iter().zip(&sum.per_flow_throughput) {
        eprintln!("flow {id} ({}): {:.3} Mbps", trace.ccas[*id as usize], tp / 1e6);
    }
    if cli.out.is_some() {
        let ts = dir.join(format!("{engine}_{}_timeseries.csv", harness::slug(&m.label())));
        harness::write_timeseries(&ts, &trace)?;
        eprintln!("wrote {}", ts.display());
    } else {
        std::fs::remove_file(&summary)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(cli: &Cli, fluid_v3: bool, convergence_slope: Option<f64>) -> Result<ExitCode, Failure> {
    let mut m = matrix(cli)?;
    m.fluid_v3 = fluid_v3;
    if fluid_v3 && cli.engines.is_none() {
        m.engines = m.applicable_engines();
    }
    m.convergence_slope = convergence_slope;
    let started = std::time::Instant::now();
    let outcome = harness::execute(&m)?;
    eprintln!(
        "{} runs ({} failed) in {:.1} s, version {}; wrote {}",
        outcome.records.len(),
        outcome.failures.len(),
        started.elapsed().as_secs_f64(),
        harness::ARTIFACT_VERSION,
        outcome.summary_path.display()
    );
    for f in &outcome.failures {
        eprintln!("failed: {} buffer {} trial {}: {}", f.engine, f.buffer_bdp, f.trial, f.error);
    }
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
