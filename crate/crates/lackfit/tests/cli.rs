use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lackfit::run::RunReport;
use lackfit::AppError;

fn lackfit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lackfit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = lackfit(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(args: &[&str], cwd: &Path) -> i32 {
    lackfit(args, cwd).status.code().unwrap()
}

/// Relative path → contents of every file below `dir`.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn csv_shape(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let cols = lines.next().unwrap().split(',').count();
    (lines.count(), cols)
}

const QUICK_VDP: &str =
    "master_seed = 7\n[data]\nsystem = \"vanderpol\"\n[test]\nb1 = 4\nb2 = 49\n";

#[test]
fn simulate_writes_the_standard_grid_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["simulate", "--seed", "5", "--replicates", "2", "--out", "a"],
        d,
    );
    ok(
        &["simulate", "--seed", "5", "--replicates", "2", "--out", "b"],
        d,
    );
    assert_eq!(snapshot(&d.join("a")), snapshot(&d.join("b")));
    assert_eq!(csv_shape(&d.join("a/rep-0000/observations.csv")), (440, 3));
    assert_eq!(csv_shape(&d.join("a/rep-0001/truth.csv")), (440, 3));
    assert_ne!(
        std::fs::read(d.join("a/rep-0000/observations.csv")).unwrap(),
        std::fs::read(d.join("a/rep-0001/observations.csv")).unwrap()
    );

    ok(&["simulate", "--seed", "6", "--out", "c"], d);
    assert_ne!(
        std::fs::read(d.join("a/rep-0000/observations.csv")).unwrap(),
        std::fs::read(d.join("c/rep-0000/observations.csv")).unwrap()
    );
}

#[test]
fn rossler_observes_two_of_three_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("r.toml"), "[data]\nsystem = \"rossler\"\n").unwrap();
    ok(&["simulate", "--config", "r.toml", "--out", "r"], d);
    assert_eq!(csv_shape(&d.join("r/rep-0000/observations.csv")), (440, 3));
    assert_eq!(csv_shape(&d.join("r/rep-0000/truth.csv")), (440, 4));
}

#[test]
fn diagnose_is_reproducible_across_jobs_and_from_its_archive() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("vdp.toml"), QUICK_VDP).unwrap();
    ok(
        &[
            "diagnose", "--config", "vdp.toml", "--out", "j1", "--jobs", "1",
        ],
        d,
    );
    ok(
        &[
            "diagnose", "--config", "vdp.toml", "--out", "j3", "--jobs", "3",
        ],
        d,
    );
    let first = snapshot(&d.join("j1"));
    assert_eq!(first, snapshot(&d.join("j3")));

    ok(
        &[
            "diagnose",
            "--config",
            "j1/config.toml",
            "--out",
            "again",
            "--jobs",
            "2",
        ],
        d,
    );
    assert_eq!(first, snapshot(&d.join("again")));

    let text = std::fs::read_to_string(d.join("j1/report.json")).unwrap();
    let report = RunReport::from_json(&text).unwrap();
    assert_eq!(report.to_json(), text);
    assert_eq!(RunReport::from_json(&report.to_json()).unwrap(), report);
    assert!(report.errors.is_empty());
    let c2 = report.case2.as_ref().unwrap();
    assert_eq!(c2.statistic_points, 408);
    assert_eq!(report.case3.as_ref().unwrap().replicates.len(), 4);
}

#[test]
fn plot_tables_have_the_documented_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("vdp.toml"), QUICK_VDP).unwrap();
    ok(&["diagnose", "--config", "vdp.toml", "--out", "o"], d);
    let p = d.join("o/plots");
    assert_eq!(csv_shape(&p.join("forcing_vs_state.csv")), (408, 5));
    assert_eq!(csv_shape(&p.join("derivative_fit.csv")), (408, 5));
    assert_eq!(csv_shape(&p.join("h1_predictions.csv")), (344, 7));
    assert_eq!(csv_shape(&p.join("h0_surface.csv")), (41 * 41, 3));
    assert_eq!(csv_shape(&p.join("timeseries.csv")), (408, 7));

    ok(
        &[
            "export-plots",
            "--report",
            "o/report.json",
            "--out",
            "replot",
        ],
        d,
    );
    assert_eq!(snapshot(&p), snapshot(&d.join("replot")));
}

#[test]
fn diagnose_accepts_user_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--seed", "9", "--out", "sim"], d);
    std::fs::write(
        d.join("lin.toml"),
        "[model]\nname = \"linear2d\"\n[test]\nb1 = 3\nb2 = 19\n",
    )
    .unwrap();
    ok(
        &[
            "diagnose",
            "--config",
            "lin.toml",
            "--data",
            "sim/rep-0000/observations.csv",
            "--out",
            "u",
        ],
        d,
    );
    assert_eq!(
        std::fs::read(d.join("u/observations.csv")).unwrap(),
        std::fs::read(d.join("sim/rep-0000/observations.csv")).unwrap()
    );
    assert!(!d.join("u/truth.csv").exists());
    ok(&["diagnose", "--config", "u/config.toml", "--out", "u2"], d);
    assert_eq!(snapshot(&d.join("u")), snapshot(&d.join("u2")));
}

#[test]
fn power_table_matches_the_replicate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "master_seed = 3\nreplicates = 3\n[test]\nb1 = 3\nb2 = 49\n\
               [[cells]]\nsystem = \"vanderpol\"\n[[cells]]\nsystem = \"linear2d\"\ngenerator = \"sde\"\n";
    std::fs::write(d.join("p.toml"), cfg).unwrap();
    ok(
        &[
            "power-study",
            "--config",
            "p.toml",
            "--out",
            "p",
            "--jobs",
            "2",
        ],
        d,
    );
    ok(
        &[
            "power-study",
            "--config",
            "p.toml",
            "--out",
            "q",
            "--jobs",
            "1",
        ],
        d,
    );
    assert_eq!(snapshot(&d.join("p")), snapshot(&d.join("q")));

    let mut rdr = csv::Reader::from_path(d.join("p/power.csv")).unwrap();
    let rows: Vec<lackfit::power::PowerRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let cell = d
            .join("p")
            .join(format!("{}-{}", row.system, row.generator));
        let mut rejections = 0;
        for r in 0..row.replicates {
            let rep = RunReport::read(&cell.join(format!("rep-{r:04}/report.json"))).unwrap();
            let t = if row.test == "case2" {
                rep.case2
            } else {
                rep.case3
            };
            if t.unwrap().decision == lackfit_core::diagnose::Decision::Reject {
                rejections += 1;
            }
        }
        assert_eq!(row.rejections, rejections);
        assert_eq!(row.completed + row.failed, row.replicates);
        assert!((0.0..=1.0).contains(&row.rejection_rate));
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "master_seed = 1\nbogus = 2\n").unwrap();
    let out = lackfit(&["simulate", "--config", "bad.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    std::fs::write(d.join("lin.toml"), "[model]\nname = \"linear2d\"\n").unwrap();
    assert_eq!(
        exit_code(
            &["diagnose", "--config", "lin.toml", "--data", "missing.csv"],
            d
        ),
        2
    );
    std::fs::write(d.join("bad.csv"), "time,x1,x2\n0,1,2\n1,zz,3\n").unwrap();
    assert_eq!(
        exit_code(
            &["diagnose", "--config", "lin.toml", "--data", "bad.csv"],
            d
        ),
        2
    );

    // too short for the trimmed statistic grid
    let rows: String = (0..40)
        .map(|i| format!("{},{},{}\n", i as f64 * 0.125, (i as f64).sin(), 1.0))
        .collect();
    std::fs::write(d.join("short.csv"), format!("time,x1,x2\n{rows}")).unwrap();
    assert_eq!(
        exit_code(
            &["diagnose", "--config", "lin.toml", "--data", "short.csv"],
            d
        ),
        3
    );

    assert_eq!(exit_code(&["diagnose", "--jobs", "0"], d), 2);
}

#[test]
fn aborted_tests_map_to_exit_code_four() {
    let aborted = lackfit_core::Error::TestAborted {
        failed: 2,
        total: 10,
        first: "singular".into(),
    };
    assert_eq!(AppError::from(aborted.clone()).exit_code(), 4);
    assert_eq!(
        AppError::from(aborted.in_stage("case2 test")).exit_code(),
        4
    );
    let other = lackfit_core::Error::InvalidArgument("x".into());
    assert_eq!(AppError::from(other).exit_code(), 3);
}
