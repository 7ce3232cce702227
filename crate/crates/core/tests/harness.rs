// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;

use bbrlab_core::harness::{self, Engine, ExperimentMatrix, SUMMARY_FILE, SUMMARY_HEADER};
use bbrlab_core::Error;

fn small(preset: &str, out: &Path) -> ExperimentMatrix {
    let mut m = harness::preset(preset).unwrap();
    m.buffers = vec![4.0, 1.0];
    m.engines = vec![Engine::Packetsim, Engine::SteadyState];
    m.template.trials = 2;
    m.time_scale = 0.02;
    m.jobs = 2;
    m.out_dir = out.to_path_buf();
    m
}

fn rows(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join(SUMMARY_FILE))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn sweep_writes_one_sorted_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = harness::execute(&small("ware-40ms-10mbps", dir.path())).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    let lines = rows(dir.path());
    assert_eq!(lines[0], SUMMARY_HEADER.join(","));
    // 2 buffers × 2 engines × 2 trials; the analytic value is written per trial.
    assert_eq!(lines.len() - 1, 8);
    let keys: Vec<(String, f64, u32)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_owned(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(keys, sorted);
    for (engine, buffer, trial) in &keys {
        if engine == "packetsim" {
            let ts = dir
                .path()
                .join("timeseries/ware-40ms-10mbps")
                .join(format!("packetsim_b{buffer}_t{trial}.csv"));
            let head = fs::read_to_string(&ts).unwrap();
            assert!(head.starts_with("t_s,flow_id,cum_bytes,queue_bytes,drops\n"), "{}", ts.display());
        }
    }
}

#[test]
fn single_trial_sweeps_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut m = small("ware-40ms-10mbps", d.path());
        m.template.trials = 1;
        m.jobs = if d.path() == a.path() { 1 } else { 3 };
        harness::execute(&m).unwrap();
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn rerunning_a_cell_replaces_its_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small("ware-40ms-10mbps", dir.path());
    harness::execute(&m).unwrap();
    m.buffers = vec![4.0];
    m.engines = vec![Engine::Packetsim];
    harness::execute(&m).unwrap();
    assert_eq!(rows(dir.path()).len() - 1, 8);

    let other = small("ware-30ms-50mbps", dir.path());
    harness::execute(&other).unwrap();
    assert_eq!(rows(dir.path()).len() - 1, 16);
}

#[test]
fn empty_sweep_and_missing_engines_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small("ware-40ms-10mbps", dir.path());
    m.buffers.clear();
    assert!(matches!(m.validated(), Err(Error::InvalidScenario(_))));
    let mut m = small("ware-40ms-10mbps", dir.path());
    m.engines.clear();
    assert!(matches!(harness::execute(&m), Err(Error::InvalidScenario(_))));
    assert!(!dir.path().join(SUMMARY_FILE).exists());
}

#[test]
fn report_is_idempotent_and_scores_model_pairs() {
    let dir = tempfile::tempdir().unwrap();
    harness::execute(&small("ware-40ms-10mbps", dir.path())).unwrap();
    let first = harness::report(dir.path()).unwrap();
    let snapshot: Vec<Vec<u8>> = first.files.iter().map(|f| fs::read(f).unwrap()).collect();
    let second = harness::report(dir.path()).unwrap();
    assert_eq!(first.files, second.files);
    let again: Vec<Vec<u8>> = second.files.iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(snapshot, again);

    assert_eq!(first.scores.len(), 1);
    assert_eq!(first.scores[0].model, Engine::SteadyState);
    assert!(first.text.contains("time scale 0.02"));
    let svg = fs::read_to_string(dir.path().join("fraction_ware-40ms-10mbps.svg")).unwrap();
    assert!(svg.contains("fair share") && svg.contains("steady_state") && svg.contains("packetsim"));
}

#[test]
fn single_engine_report_has_no_scores() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small("ware-40ms-10mbps", dir.path());
    m.engines = vec![Engine::Packetsim];
    harness::execute(&m).unwrap();
    let r = harness::report(dir.path()).unwrap();
    assert!(r.scores.is_empty());
    assert!(!r.text.contains("Model scores"));
    assert!(r.text.contains("packetsim metrics"));
}

#[test]
fn scherrer_report_adds_metric_panels() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small("scherrer-100mbps", dir.path());
    m.buffers = vec![1.0];
    m.template.trials = 1;
    harness::execute(&m).unwrap();
    let r = harness::report(dir.path()).unwrap();
    let panels = dir.path().join("panels_scherrer-100mbps.svg");
    assert!(r.files.contains(&panels));
    let svg = fs::read_to_string(panels).unwrap();
    for title in ["Jain's fairness index", "loss rate", "link utilization", "buffer occupancy"] {
        assert!(svg.contains(title), "{title}");
    }
}

#[test]
fn corrupt_summary_reports_the_row() {
    let dir = tempfile::tempdir().unwrap();
    harness::execute(&small("ware-40ms-10mbps", dir.path())).unwrap();
    let path = dir.path().join(SUMMARY_FILE);
    let mut lines = rows(dir.path());
    lines[4] = lines[4].replacen(",packetsim,", ",warp,", 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match harness::report(dir.path()) {
        Err(Error::Csv { row, .. }) => assert_eq!(row, 5),
        other => panic!("{other:?}"),
    }

    lines[4] = "ware-40ms-10mbps,packetsim,4".into();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = harness::report(dir.path()).unwrap_err();
    assert!(err.to_string().contains("row 5"), "{err}");

    fs::write(&path, "preset,engine\n").unwrap();
    assert!(matches!(harness::report(dir.path()), Err(Error::Csv { row: 1, .. })));
    fs::remove_file(&path).unwrap();
    assert!(harness::report(dir.path()).is_err());
}

#[test]
fn other_mixes_are_labelled_and_filtered_to_runnable_engines() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small("ware-40ms-10mbps", dir.path()).with_mix("1xbbrv3+1xreno".parse().unwrap());
    assert_eq!(m.label(), "ware-40ms-10mbps:1xbbrv3+1xreno");
    assert_eq!(m.applicable_engines(), vec![Engine::SteadyState, Engine::Packetsim]);
    m.engines = vec![Engine::Fluid];
    assert!(m.clone().validated().is_err());
    m.fluid_v3 = true;
    assert!(m.validated().is_ok());
}
