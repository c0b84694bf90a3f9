use std::path::Path;
use std::process::{Command, Output};

use moment_measures::{io, measures};

fn solver(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moment-solver"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|x| x.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn solve_two_atoms_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "two.json",
        r#"{"dim": 1, "atoms": [[-1], [1]], "weights": [0.5, 0.5]}"#,
    );
    let o = solver(&["solve", "--measure", "two.json", "--out", "run"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p = io::read_potential(&d.join("run/potential.json")).unwrap();
    for v in p.values() {
        assert!((v + std::f64::consts::LN_2).abs() < 1e-12);
    }
    let manifest: serde_json::Value = io::read_json(&d.join("run/manifest.json")).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(
        manifest["inputs"]["two.json"].as_str().unwrap(),
        io::sha256_file(&d.join("two.json")).unwrap()
    );
    for f in ["potential.json", "report.json", "trace.csv"] {
        assert!(manifest["outputs"].as_array().unwrap().iter().any(|x| x == f));
    }

    assert_eq!(code(&solver(&["report", "run"], d)), 0);
    assert!(d.join("run/summary.txt").exists());
    let rows = csv_rows(&d.join("run/plot_objective.csv"));
    let objective: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(objective.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn hyperplane_measure_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "flat.csv", "y0,y1,weight\n1,0,1\n-1,0,1\n2,0,1\n-2,0,1\n");
    let o = solver(&["solve", "--measure", "flat.csv"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("condition (ii)"));
    let o = solver(&["validate", "--measure", "flat.csv"], d);
    assert_eq!(code(&o), 1);
}

#[test]
fn square_sample_solves_and_round_trips_through_forward() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let square = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mu = measures::center(&measures::sample_uniform_polygon(&square, 100, 3).unwrap());
    io::write_measure(&d.join("square.csv"), &mu).unwrap();
    write(d, "solver.toml", "gradient_tol = 1e-9\nmax_iters = 500\n");
    let o = solver(
        &[
            "solve",
            "--measure",
            "square.csv",
            "--config",
            "solver.toml",
            "--out",
            "run",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&d.join("run/cells.csv")).len(), 100);

    let o = solver(
        &[
            "forward",
            "--potential",
            "run/potential.json",
            "--measure",
            "square.csv",
            "--out",
            "fwd",
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = io::read_json(&d.join("fwd/conditions.json")).unwrap();
    assert!(summary["max_weight_deviation"].as_f64().unwrap() < 1e-8);
    assert_eq!(summary["exact"], true);

    assert_eq!(code(&solver(&["report", "run"], d)), 0);
    assert!(d.join("run/plot_cells.csv").exists());
}

#[test]
fn exact_solves_are_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "m.json",
        r#"{"dim": 2, "atoms": [[1, 0], [0, 1], [-1, -1], [0.2, 0.1], [-0.2, -0.1]], "weights": [1, 1, 1, 0.5, 0.5]}"#,
    );
    for out in ["a", "b"] {
        assert_eq!(code(&solver(&["solve", "--measure", "m.json", "--out", out], d)), 0);
    }
    for f in ["potential.json", "trace.csv", "cells.csv"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn forward_cube_cloud_matches_gallery_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = solver(
        &[
            "forward",
            "--case",
            "cube",
            "--dim",
            "2",
            "--samples",
            "200000",
            "--seed",
            "4",
            "--out",
            "fwd",
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    let (dim, points, weights) = io::read_estimate_csv(&d.join("fwd/moment_measure.csv")).unwrap();
    assert_eq!(dim, 2);
    for c in 0..2 {
        let f: Vec<f64> = (0..weights.len()).map(|k| points[2 * k + c].abs()).collect();
        let mean: f64 = weights.iter().zip(&f).map(|(w, x)| w * x).sum();
        let se = weights
            .iter()
            .zip(&f)
            .map(|(w, x)| (w * (x - mean)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((mean - 0.5).abs() <= 4.0 * se, "{mean} ± {se}");
        assert!(points.iter().all(|y| y.abs() <= 1.0));
    }
    assert_eq!(code(&solver(&["report", "fwd"], d)), 0);
    let rows = csv_rows(&d.join("fwd/plot_scatter.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], "barycenter");
    assert!(last[1].parse::<f64>().unwrap().abs() < 1e-2 && last[2].parse::<f64>().unwrap().abs() < 1e-2);
}

#[test]
fn malformed_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "bad.json", r#"{"dim": 1, "atoms": [[1]]"#);
    assert_eq!(code(&solver(&["forward", "--potential", "bad.json"], d)), 1);
    assert_eq!(code(&solver(&["report", "missing"], d)), 1);
    write(
        d,
        "two.json",
        r#"{"dim": 1, "atoms": [[-1], [1]], "weights": [0.5, 0.5]}"#,
    );
    write(d, "c.toml", "gradient_tolerance = 1e-3\n");
    assert_eq!(
        code(&solver(&["solve", "--measure", "two.json", "--config", "c.toml"], d)),
        1
    );
    assert_eq!(code(&solver(&["gallery", "--case", "torus"], d)), 1);
    assert_eq!(code(&solver(&["check", "--suite", "nope"], d)), 1);
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "m.json",
        r#"{"dim": 2, "atoms": [[1, 0], [0, 1], [-1, -1], [0.2, 0.1], [-0.2, -0.1]], "weights": [1, 1, 1, 0.5, 0.5]}"#,
    );
    write(d, "c.toml", "max_iters = 1\ngradient_tol = 1e-14\n");
    assert_eq!(
        code(&solver(&["solve", "--measure", "m.json", "--config", "c.toml"], d)),
        2
    );
}

#[test]
fn check_suites_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for suite in ["prekopa", "santalo", "negative-controls"] {
        let out = format!("check-{suite}");
        let o = solver(
            &[
                "check",
                "--suite",
                suite,
                "--seeds",
                "100",
                "--out",
                &out,
                "--threads",
                "2",
            ],
            d,
        );
        assert_eq!(code(&o), 0, "{suite}: {}", String::from_utf8_lossy(&o.stdout));
        let ledger = io::read_ledger_csv(&d.join(&out).join("ledger.csv")).unwrap();
        assert!(ledger.len() >= 100 && ledger.iter().all(|r| r.pass));
        assert_eq!(code(&solver(&["report", &out], d)), 0);
        assert!(d.join(&out).join("plot_margins.csv").exists());
    }
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_moment-solver"))
        .args(["gallery", "--case", "sphere", "--samples", "10000"])
        .env("MOMENT_SOLVER_THREADS", "1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
