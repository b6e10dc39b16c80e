use expander_cs::experiment::*;

fn config(dir: &std::path::Path, k_list: &str, intensities: &str, trials: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"n": 2000, "m": 800, "d": 8, "k_list": {k_list}, "intensity_list": {intensities},
            "trials": {trials}, "seed": 11, "out_dir": {:?}}}"#,
        dir
    ))
    .unwrap()
}

#[test]
fn near_noiseless_sanity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(dir.path(), "[1, 5]", "[1e6]", 1)).unwrap();
    for row in &out.summary {
        assert!(row.mean_error < 0.05, "{row:?}");
    }
}

#[test]
fn outputs_are_reproducible_apart_from_wall_time() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let cfg = config(dir, "[3]", "[50, 500]", 3);
        write_outputs(&run_experiment(&cfg).unwrap(), dir).unwrap();
    }
    let strip = |p: &std::path::Path| -> String {
        std::fs::read_to_string(p.join("trials.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    for file in ["summary.csv", "pilot.csv", "f_hat_errors.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
    let trials = std::fs::read_to_string(a.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().next().unwrap(), TRIALS_HEADER.join(","));
    assert_eq!(trials.lines().count(), 1 + 2 * 3);
    let summary = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER.join(","));
}

#[test]
fn fixed_weight_skips_the_pilot() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "[2]", "[100]", 2);
    cfg.penalty = "l1:0.01".into();
    let out = run_experiment(&cfg).unwrap();
    assert!(out.pilot.is_empty());
    assert_eq!(out.trials.len(), 2);
}

#[test]
fn infeasible_configs_fail_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "[2]", "[100]", 1);
    cfg.d = 900;
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = config(dir.path(), "[2]", "[100]", 1);
    cfg.trials = 0;
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = config(dir.path(), "[2]", "[-1]", 1);
    cfg.lambda = Some(0.01);
    assert!(run_experiment(&cfg).is_err());
}
