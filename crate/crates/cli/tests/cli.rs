// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn bbrlab(args: &[&str], out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bbrlab"));
    c.args(args);
    if let Some(dir) = out {
        c.arg("--out").arg(dir);
    }
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn predict_prints_the_steady_state_curve() {
    let o = bbrlab(&["predict"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "buffer_bdp,bbr_fraction,loss_based_fraction,probe_time_s,clamped");
    assert_eq!(lines.len(), 8);
    let at_8: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(at_8[0], "8");
    assert!((at_8[1].parse::<f64>().unwrap() - 0.565931).abs() < 1e-6);
}

#[test]
fn predict_writes_csv_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbrlab(&["predict", "--preset", "ware-30ms-50mbps", "--buffers", "1,64"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(dir.path().join("prediction.csv")).unwrap(), stdout(&o));
}

#[test]
fn sim_and_fluid_print_one_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, engine) in [("sim", "packetsim"), ("fluid", "fluid")] {
        let o = bbrlab(&[cmd, "--buffers", "2", "--time-scale", "0.02"], Some(dir.path()));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(&row[..3], ["ware-40ms-10mbps", engine, "2"]);
        let ts = dir.path().join(format!("{engine}_ware-40ms-10mbps_timeseries.csv"));
        assert!(ts.exists());
    }
}

#[test]
fn sim_accepts_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("two.conf");
    std::fs::write(
        &file,
        "capacity_mbps = 10\nbase_rtt_ms = 40\nbuffer_bdp = 2\nmtu_bytes = 1500\nduration_s = 5\n\
         analysis_window_s = 2\ntrials = 1\nseed = 3\n\n[flow]\ncca = bbrv1\n\n[flow]\ncca = reno\n",
    )
    .unwrap();
    let o = bbrlab(&["sim", "--scenario", file.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("two,packetsim,2,0,"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["sweep", "--preset", "nope"],
        &["sweep", "--buffers", "x"],
        &["sweep", "--mix", "2xcubic", "--engines", "steady_state"],
        &["sweep", "--engines", "warp"],
        &["report"],
    ];
    for args in cases {
        let o = bbrlab(args, Some(&dir.path().join("out")));
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!dir.path().join("out/summary.csv").exists());
}

#[test]
fn failed_cells_exit_with_one_and_keep_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    // The second scale leaves no analysis window for the packet engine.
    let ok = bbrlab(&["sweep", "--buffers", "1", "--trials", "1", "--time-scale", "0.02"], Some(dir.path()));
    assert_eq!(ok.status.code(), Some(0));
    let o = bbrlab(
        &["sweep", "--buffers", "1", "--trials", "1", "--engines", "packetsim", "--time-scale", "0.00001"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed: packetsim buffer 1 trial 0"));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let engines: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(engines, ["fluid", "steady_state"]);
}
