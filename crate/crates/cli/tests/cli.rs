use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn excs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_excs")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_signal(path: &Path, n: usize, spikes: &[(usize, f64)]) {
    let mut v = vec![0.0; n];
    for &(i, a) in spikes {
        v[i] = a;
    }
    fs::write(path, v.iter().map(|x| format!("{x}\n")).collect::<String>()).unwrap();
}

#[test]
fn generate_verify_sense_recover() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = excs(d, &["gen", "--n", "2000", "--m", "800", "--d", "8", "--seed", "1", "--out", "g.exg"]);
    assert!(o.status.success(), "{o:?}");

    let o = excs(d, &["verify", "--graph", "g.exg", "--k", "2", "--epsilon", "0.25", "--mode", "sampled", "--budget", "100000"]);
    assert_eq!(o.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(cert["verdict"], "pass");
    assert_eq!(cert["proof"], false);

    write_signal(&d.join("s.txt"), 2000, &[(5, 4000.0), (700, 4000.0), (1500, 2000.0)]);
    let o = excs(d, &["sense", "--graph", "g.exg", "--signal", "s.txt", "--seed", "3", "--out", "y.txt"]);
    assert!(o.status.success(), "{o:?}");
    let y: Vec<u64> = fs::read_to_string(d.join("y.txt")).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(y.len(), 800);

    let o = excs(d, &["recover", "--graph", "g.exg", "--y", "y.txt", "--lambda", "auto", "--penalty", "l1:1.0", "--out", "r/"]);
    assert!(o.status.success(), "{o:?}");
    let result: serde_json::Value = serde_json::from_str(fs::read_to_string(d.join("r/result.json")).unwrap().trim()).unwrap();
    for key in ["x_hat_file", "f_hat_file", "objective_trace_file"] {
        let name = result[key].as_str().unwrap();
        assert!(d.join("r").join(name).exists(), "{key}");
    }
    assert!(result["iters"].as_u64().unwrap() >= 1);
    let x: Vec<f64> = fs::read_to_string(d.join("r/x_hat.txt")).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(x.len(), 2000);
    assert!(x.iter().all(|&v| v >= 0.0));
}

#[test]
fn failed_verification_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // two identical columns: no (2, ε < 1/2) expansion
    fs::write(dir.path().join("dup.exg"), "3 4 2\n0 1\n0 1\n2 3\n").unwrap();
    let o = excs(dir.path(), &["verify", "--graph", "dup.exg", "--k", "2", "--epsilon", "0.25"]);
    assert_eq!(o.status.code(), Some(2));
    let cert: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(cert["witness"]["subset"], serde_json::json!([0, 1]));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["gen", "--n", "10"],
        vec!["gen", "--n", "10", "--m", "4", "--d", "2", "--out", "g.exg", "--bogus"],
        vec!["verify", "--graph", "missing.exg", "--k", "1", "--epsilon", "0.2"],
        vec!["bounds"],
        vec![],
    ] {
        let o = excs(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(excs(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn cover_and_tvnorm() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(excs(d, &["gen", "--n", "300", "--m", "100", "--d", "4", "--seed", "2", "--out", "g.exg"]).status.success());
    let o = excs(d, &["cover", "--graph", "g.exg"]);
    let cover: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(cover["indices"].as_array().unwrap().len() >= 25);

    fs::write(d.join("img.txt"), "2 2\n0 1\n0 1\n").unwrap();
    let v: f64 = stdout(&excs(d, &["tvnorm", "--image", "img.txt"])).trim().parse().unwrap();
    assert!((v - 2f64.sqrt()).abs() < 1e-15);
    let v: f64 = stdout(&excs(d, &["tvnorm", "--image", "img.txt", "--isotropic"])).trim().parse().unwrap();
    assert_eq!(v, 2.0);
}

#[test]
fn single_bound_checks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(excs(d, &["gen", "--n", "20", "--m", "12", "--d", "3", "--seed", "4", "--out", "g.exg"]).status.success());
    write_signal(&d.join("alpha.txt"), 20, &[(1, 0.5), (7, 0.25)]);
    write_signal(&d.join("f.txt"), 20, &[(1, 0.6), (7, 0.4)]);
    for check in ["lemma1", "kl"] {
        let o = excs(d, &["bounds", "--check", check, "--graph", "g.exg", "--alpha", "alpha.txt", "--f", "f.txt", "--lambda", "0.01"]);
        let r: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(r["pass"], true, "{check}: {r}");
        assert_eq!(o.status.code(), Some(0));
    }
    let o = excs(d, &["bounds", "--check", "hellinger", "--g", "3", "--h", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let o = excs(d, &["bounds", "--check", "band", "--graph", "g.exg", "--f", "f.txt", "--lambda", "0.05"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = excs(d, &["bounds", "--check", "becca", "--alpha", "alpha.txt", "--f", "f.txt", "--penalty", "uniform:0", "--k", "2"]);
    let r: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let expect = 2f64.sqrt() * 10f64.ln() * 0.25;
    assert!((r["value"].as_f64().unwrap() - expect).abs() < 1e-12);
    let o = excs(d, &["bounds", "--check", "theorem1", "--graph", "g.exg", "--u", "alpha.txt", "--v", "f.txt", "--k", "1"]);
    assert_eq!(o.status.code(), Some(1), "missing --epsilon");
}

#[test]
fn experiment_command_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"n": 400, "m": 160, "d": 6, "k_list": [2, 4], "intensity_list": [100, 1000], "trials": 2, "seed": 3, "out_dir": "out"}"#,
    )
    .unwrap();
    let o = excs(d, &["experiment", "--config", "cfg.json"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 4);
    let trials = fs::read_to_string(d.join("out/trials.csv")).unwrap();
    assert_eq!(trials.lines().next().unwrap(), "k,I,trial,normalized_l1_error,iters,wall_time_ms");
    assert_eq!(trials.lines().count(), 1 + 4 * 2);
    let summary = fs::read_to_string(d.join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "k,I,mean_error,stderr,trials");
    let pilot = fs::read_to_string(d.join("out/pilot.csv")).unwrap();
    assert_eq!(pilot.lines().next().unwrap(), "k,I,tau,pilot_error,selected");
    assert_eq!(pilot.lines().count(), 1 + 4 * 3);
}
