use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fdrboot::io::{load_nulls, load_tvalues, write_nulls, write_tvalues};
use fdrboot::rng::substream;
use fdrboot::simulation::sample_mvt;
use fdrboot::{AlphaEstimates, NullSampleSet};
use rand::Rng;

fn fdrboot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrboot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Null pool plus an observation drawn from the same law.
fn complete_null_fixture(dir: &Path, n: usize, draws: usize, seed: u64) {
    let mut rng = substream(seed, &[]);
    let rows: Vec<Vec<f64>> = (0..draws).map(|_| sample_mvt(n, 0.5, 96.0, &mut rng)).collect();
    let nulls = NullSampleSet::from_rows(rows, 96.0).unwrap();
    let alphas = AlphaEstimates::new(sample_mvt(n, 0.5, 96.0, &mut rng), 96.0).unwrap();
    let names: Vec<String> = (0..n).map(|i| format!("factor_{i}")).collect();
    write_tvalues(&dir.join("tvalues.csv"), &alphas, Some(&names)).unwrap();
    write_nulls(&dir.join("nulls.csv"), &nulls).unwrap();
}

#[test]
fn test_command_on_complete_null_rejects_almost_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let n = 40;
    let mut total = 0usize;
    let reps = 6;
    for seed in 0..reps {
        complete_null_fixture(dir.path(), n, 1_000, seed);
        let out = fdrboot(&[
            "test",
            "-a",
            path(&dir.path().join("tvalues.csv")),
            "-x",
            path(&dir.path().join("nulls.csv")),
            "--method",
            "ddb",
            "--format",
            "json",
            "--seed",
            "3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["hypotheses"], 40);
        assert_eq!(v["df"], 96.0);
        total += v["decisions"][0]["rejections"].as_u64().unwrap() as usize;
    }
    // a false rejection in more than one of six complete-null files would be
    // far above a 5% FDR
    assert!(total <= 2 * n / 10, "{total}");
}

#[test]
fn test_command_runs_every_method_on_a_signal_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let n = 30;
    let mut rng = substream(11, &[]);
    let rows: Vec<Vec<f64>> = (0..800).map(|_| sample_mvt(n, 0.0, 96.0, &mut rng)).collect();
    let mut obs = sample_mvt(n, 0.0, 96.0, &mut rng);
    for v in obs.iter_mut().take(10) {
        *v += 6.0;
    }
    let nulls = NullSampleSet::from_rows(rows, 96.0).unwrap();
    write_nulls(&dir.path().join("x.csv"), &nulls).unwrap();
    let mut body = String::from("t\n");
    obs.iter().for_each(|v| body.push_str(&format!("{v}\n")));
    fs::write(dir.path().join("a.csv"), body).unwrap();

    let out_csv = dir.path().join("decisions.csv");
    let cdf = dir.path().join("cdf.csv");
    let out = fdrboot(&[
        "test",
        "-a",
        path(&dir.path().join("a.csv")),
        "-x",
        path(&dir.path().join("x.csv")),
        "--df",
        "96",
        "--format",
        "csv",
        "-o",
        path(&out_csv),
        "--cdf",
        path(&cdf),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,name,t_value,p_value,Single,BH,BY,BKY,Storey,Storey-A,YB,DDB,DDBA"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), n);
    for row in rows.iter().take(10) {
        // strong signals are found by every procedure
        assert!(row[4..].iter().all(|&f| f == "1"), "{row:?}");
    }
    let cdf_text = fs::read_to_string(&cdf).unwrap();
    assert_eq!(cdf_text.lines().count(), 1_002);
    assert!(cdf_text.lines().last().unwrap().starts_with("1,"));
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "t\n1.0\n2.0\n").unwrap();
    fs::write(dir.path().join("x.csv"), "a,b,c\n1,2,3\n").unwrap();
    let a = dir.path().join("a.csv");
    let x = dir.path().join("x.csv");
    let mismatch = fdrboot(&["test", "-a", path(&a), "-x", path(&x), "--df", "10"]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("columns"));

    let no_df = fdrboot(&["test", "-a", path(&a), "-x", path(&x)]);
    assert_eq!(no_df.status.code(), Some(2));
    assert_eq!(fdrboot(&["simulate", "-s", "12", "-r", "1"]).status.code(), Some(2));
    assert_eq!(fdrboot(&["simulate", "--q", "1.5", "-r", "1"]).status.code(), Some(2));
    assert_eq!(fdrboot(&["simulate", "--method", "nope"]).status.code(), Some(2));
    assert_eq!(fdrboot(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fdrboot(&["--help"]).status.code(), Some(0));
}

#[test]
fn failed_run_leaves_no_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.txt");
    let status = fdrboot(&["simulate", "-s", "1", "-r", "0", "-o", path(&out)]).status;
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn simulate_is_reproducible_and_writes_formats() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["simulate", "-s", "1", "-r", "3", "--seed", "7", "-m", "bh,storey,single"];
    let a = fdrboot(&base).stdout;
    let b = fdrboot(&base).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("Scenario 1: rho=0, pi0=0.5"));
    assert!(text.contains("Thr-p") && text.contains("# of Rej"));

    let csv = dir.path().join("r.csv");
    let mut args = base.to_vec();
    args.extend(["--format", "csv", "-o", path(&csv)]);
    assert!(fdrboot(&args).status.success());
    let body = fs::read_to_string(&csv).unwrap();
    assert_eq!(body.lines().count(), 4);
    assert!(body.lines().nth(1).unwrap().starts_with("1,0,0.5,3,0.05,7,BH,"));

    let json = fdrboot(&["simulate", "-s", "4", "-r", "2", "-m", "single", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v[0]["scenario"]["pi0"], 1.0);
    assert_eq!(v[0]["methods"][0]["method"], "single");
}

#[test]
fn nulls_and_autocorr_commands() {
    let dir = tempfile::tempdir().unwrap();
    let (t, n) = (60, 4);
    let mut rng = substream(21, &[]);
    let factors: Vec<[f64; 3]> = (0..t)
        .map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5])
        .collect();
    let mut f_body = String::from("mkt,smb,hml\n");
    let mut r_body = String::from("p1,p2,p3,p4\n");
    for f in &factors {
        f_body.push_str(&format!("{},{},{}\n", f[0], f[1], f[2]));
        let row: Vec<String> = (0..n)
            .map(|i| format!("{}", 0.01 * i as f64 + 0.8 * f[i % 3] + 0.1 * (rng.random::<f64>() - 0.5)))
            .collect();
        r_body.push_str(&row.join(","));
        r_body.push('\n');
    }
    let returns = dir.path().join("returns.csv");
    let factors_path = dir.path().join("factors.csv");
    fs::write(&returns, r_body).unwrap();
    fs::write(&factors_path, f_body).unwrap();
    let a_out = dir.path().join("tvalues.csv");
    let x_out = dir.path().join("nulls.csv");
    let out = fdrboot(&[
        "nulls",
        "-i",
        path(&returns),
        "-f",
        path(&factors_path),
        "-b",
        "200",
        "--alphas-out",
        path(&a_out),
        "--nulls-out",
        path(&x_out),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tv = load_tvalues(&a_out, None).unwrap();
    assert_eq!(tv.estimates.df(), (t - 4) as f64);
    assert_eq!(tv.names.unwrap(), vec!["p1", "p2", "p3", "p4"]);
    let nulls = load_nulls(&x_out, tv.estimates.df()).unwrap();
    assert_eq!((nulls.num_draws(), nulls.num_hypotheses()), (200, n));

    let ac = fdrboot(&["autocorr", "-i", path(&returns), "--max-lag", "3"]);
    assert!(ac.status.success());
    let text = String::from_utf8(ac.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lag,mean,p1,p2,p3,p4");
    assert_eq!(lines.len(), 4);
    let row: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[1] - row[2..].iter().sum::<f64>() / 4.0).abs() < 1e-12);

    fs::write(&factors_path, "a,b,c\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n").unwrap();
    let bad = fdrboot(&[
        "nulls",
        "-i",
        path(&returns),
        "-f",
        path(&factors_path),
        "--alphas-out",
        path(&a_out),
        "--nulls-out",
        path(&x_out),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}
