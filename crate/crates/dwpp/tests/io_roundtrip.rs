use std::fs;

use dwpp::io;
use dwpp_core::montecarlo::{assemble, MethodOutcome, ReplicateResult, ScenarioSpec, TruthSource};
use dwpp_core::population::{generate_population, GroupSizeMode, MarginalTruth, PopulationConfig};
use dwpp_core::sampling::{draw_sample, DesignKind, DesignSpec};

fn small_population(mode: GroupSizeMode) -> dwpp_core::population::Population {
    let config = PopulationConfig { n_units: 400, n_groups: 40, group_sizes: mode, seed: 11, ..Default::default() };
    generate_population(&config).unwrap()
}

#[test]
fn population_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [GroupSizeMode::Fixed, GroupSizeMode::Lognormal { log_variance: 0.5 }] {
        let pop = small_population(mode);
        io::write_population(&pop, dir.path()).unwrap();
        assert_eq!(io::read_population(dir.path()).unwrap(), pop);
    }
}

#[test]
fn samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pop = small_population(GroupSizeMode::Fixed);
    for kind in [
        DesignKind::SingleStagePps { n: 60 },
        DesignKind::TwoStageClusterPps { n: 60, f: 0.5 },
        DesignKind::SrsTwoStage { n: 60, f: 0.5 },
    ] {
        let sample = draw_sample(&pop, &DesignSpec { kind, seed: 3 }).unwrap();
        let path = dir.path().join("s.csv");
        io::write_sample(&sample, &path).unwrap();
        let back = io::read_sample(&path).unwrap();
        // The design tag is not part of the file.
        assert_eq!(back.groups, sample.groups, "{kind:?}");
    }
}

fn toy_scenario() -> ScenarioSpec {
    serde_json::from_str(
        r#"{
            "name": "toy",
            "population": { "n_units": 100, "n_groups": 10 },
            "design": { "kind": "single_stage_pps", "n": 20 },
            "methods": [ { "method": "single_weighting" }, { "method": "mpml" } ],
            "truth": { "source": "explicit", "beta0": 0.5, "beta1": 1.0, "sigma_u2": 1.2 },
            "seed": 1
        }"#,
    )
    .unwrap()
}

fn toy_report() -> dwpp_core::montecarlo::McReport {
    let s = toy_scenario();
    let truth = MarginalTruth { beta0: 0.5, beta1: 1.0, sigma_u2: 1.2 };
    let results = (0..4)
        .map(|r| ReplicateResult {
            replicate: r,
            groups_sampled: 7,
            outcomes: vec![
                MethodOutcome { method: "single_weighting".into(), estimates: Ok([0.1 * r as f64, 1.0 / 3.0, 1.2 + r as f64]) },
                MethodOutcome {
                    method: "mpml".into(),
                    estimates: if r == 2 { Err("optimizer, did not converge".into()) } else { Ok([0.5, 0.9, 1.0e-7]) },
                },
            ],
        })
        .collect();
    assert!(matches!(s.truth, TruthSource::Explicit { .. }));
    assemble(&s, truth, results)
}

#[test]
fn report_csv_round_trips_to_summary() {
    let dir = tempfile::tempdir().unwrap();
    let report = toy_report();
    let files = io::write_report(&report, dir.path()).unwrap();
    assert_eq!(io::read_report_summary(&files.report_csv).unwrap(), report.summary);
    let json: dwpp_core::montecarlo::McReport = io::read_json(&files.json).unwrap();
    assert_eq!(json, report);
    // Failure reasons with commas survive quoting.
    let failures = fs::read_to_string(&files.failures_csv).unwrap();
    assert!(failures.contains("\"optimizer, did not converge\""), "{failures}");
}

#[test]
fn report_csv_is_tidy() {
    let dir = tempfile::tempdir().unwrap();
    let files = io::write_report(&toy_report(), dir.path()).unwrap();
    let text = fs::read_to_string(&files.report_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scenario,method,parameter,statistic,value");
    // 2 methods x 3 parameters x 8 statistics.
    assert_eq!(lines.count(), 48);
    assert!(text.contains("toy,single_weighting,sigma_u2,mse,3.5\n"), "{text}");
    let fig = fs::read_to_string(&files.figure_csv).unwrap();
    assert!(fig.starts_with("scenario,method,parameter,replicate,estimate,truth,error\n"));
}

#[test]
fn validation_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "unit_id,y\n1,abc\n").unwrap();
    let e = io::validate_csv(&path, &["unit_id", "y"], &["y"]).unwrap_err().to_string();
    assert!(e.contains("'abc' is not a number"), "{e}");
    let e = io::validate_csv(&path, &["unit_id", "x"], &[]).unwrap_err().to_string();
    assert!(e.contains("expected [unit_id,x]"), "{e}");
    let missing = io::read_sample(&path).unwrap_err().to_string();
    assert!(missing.contains("missing column 'group'"), "{missing}");
}

#[test]
fn shortest_float_format_is_exact() {
    for v in [0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e-8] {
        assert_eq!(io::fmt(v).parse::<f64>().unwrap(), v);
    }
}
