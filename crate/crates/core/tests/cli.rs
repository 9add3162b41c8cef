use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_implied-pair"))
        .args(args)
        .env_remove("IMPLIED_PAIR_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn price_black_scholes() {
    let out = run(&[
        "price", "--kind", "call", "--spot", "1", "--strike", "1", "--tau", "1", "--sigma", "0.2", "--rho", "0.05",
    ]);
    assert_eq!(code(&out), 0);
    let price = json(&out)["price"].as_f64().unwrap();
    assert!((price - 0.104_505_835_721_855_67).abs() < 1e-15);
}

#[test]
fn price_mixture_file_and_preset_agree() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "m.json",
        r#"{"spot":1,"tau":1,"states":[{"p":0.5,"sigma":0.3,"r":0.1},{"p":0.5,"sigma":0.7,"r":0.08}]}"#,
    );
    let a = json(&run(&["price", "--model", &model, "--strike", "1"]))["price"].as_f64().unwrap();
    let b = json(&run(&["price", "--preset", "high-rate", "--strike", "1"]))["price"].as_f64().unwrap();
    assert_eq!(a, b);
    assert!((a - 0.235_285_487_990_296_76).abs() < 1e-15);
}

#[test]
fn price_usage_errors_exit_2() {
    let out = run(&["price", "--kind", "call", "--spot", "1", "--tau", "1", "--sigma", "0.2", "--rho", "0.05"]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--strike"));

    let out = run(&["price", "--spot", "-1", "--strike", "1", "--tau", "1", "--sigma", "0.2", "--rho", "0"]);
    assert_eq!(code(&out), 2);
    let out = run(&["price", "--preset", "nope", "--strike", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn calibrate_round_trip() {
    let price = |k: f64| {
        let out =
            run(&["price", "--spot", "1", "--strike", &k.to_string(), "--tau", "1", "--sigma", "0.3", "--rho", "0.05"]);
        json(&out)["price"].as_f64().unwrap()
    };
    let (p1, p2) = (price(0.9), price(1.1));
    let out = run(&["calibrate", "--k1", "0.9", "--k2", "1.1", "--p1", &p1.to_string(), "--p2", &p2.to_string()]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["sigma_imp"].as_f64().unwrap() - 0.3).abs() < 1e-8);
    assert!((v["rho_imp"].as_f64().unwrap() - 0.05).abs() < 1e-8);
    assert_eq!(v["status"], "converged");
    assert!(v["residuals"].is_array() && v["iterations"].is_object());
}

#[test]
fn calibrate_from_preset_and_file() {
    let out = run(&["calibrate", "--preset", "high-rate", "--k1", "0.9", "--k2", "1.28"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let sigma = v["sigma_imp"].as_f64().unwrap();
    let rho = v["rho_imp"].as_f64().unwrap();
    // 40-digit reference solve; the root is unique over a 400-point rate scan
    assert!((sigma - 0.493_279_053_404_350_7).abs() < 1e-8, "{sigma}");
    assert!((rho - 0.099_994_416_842_658_98).abs() < 1e-8, "{rho}");

    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"spot":1,"quotes":[{{"kind":"call","strike":0.9,"tau":1,"price":{}}},{{"kind":"call","strike":1.28,"tau":1,"price":{}}}]}}"#,
        run_price_preset(0.9),
        run_price_preset(1.28)
    );
    let quotes = write(dir.path(), "q.json", &body);
    let w = json(&run(&["calibrate", "--quotes", &quotes]));
    assert_eq!(w["sigma_imp"], v["sigma_imp"]);
    assert_eq!(w["rho_imp"], v["rho_imp"]);
}

fn run_price_preset(k: f64) -> f64 {
    json(&run(&["price", "--preset", "high-rate", "--strike", &k.to_string()]))["price"].as_f64().unwrap()
}

#[test]
fn calibrate_term_structure_file() {
    let price = |k: f64, tau: f64, sigma: f64| {
        let out = run(&[
            "price",
            "--spot",
            "1",
            "--strike",
            &k.to_string(),
            "--tau",
            &tau.to_string(),
            "--sigma",
            &sigma.to_string(),
            "--rho",
            "0.04",
        ]);
        json(&out)["price"].as_f64().unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"quotes":[{{"kind":"call","strike":1.0,"tau":0.5,"price":{}}},{{"kind":"call","strike":0.9,"tau":1,"price":{}}},{{"kind":"call","strike":1.1,"tau":1,"price":{}}}]}}"#,
        price(1.0, 0.5, 0.2),
        price(0.9, 1.0, 0.25),
        price(1.1, 1.0, 0.25)
    );
    let out = run(&["calibrate", "--quotes", &write(dir.path(), "t.json", &body)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["sigma_short"].as_f64().unwrap() - 0.2).abs() < 1e-6);
    assert!((v["sigma_long"].as_f64().unwrap() - 0.25).abs() < 1e-6);
    assert!((v["rho"].as_f64().unwrap() - 0.04).abs() < 1e-6);
}

#[test]
fn calibrate_error_codes() {
    let out = run(&["calibrate", "--preset", "high-rate", "--k1", "1", "--k2", "1"]);
    assert_eq!(code(&out), 2);

    let out = run(&[
        "calibrate",
        "--k1",
        "0.9",
        "--k2",
        "1.1",
        "--p1",
        "0.2",
        "--p2",
        "0.1",
        "--rho-min",
        "-0.5",
        "--rho-max",
        "0",
    ]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["status"], "no_root");
}

#[test]
fn multiple_roots_are_listed() {
    // Ten-period lattice with three exact solutions.
    let price = |k: &str| {
        let out = run(&["binomial", "price", "--rho", "1.02", "--eps", "0.3", "--periods", "10", "--strike", k]);
        json(&out)["price"].as_f64().unwrap().to_string()
    };
    let (p1, p2) = (price("0.9"), price("1.1"));
    let out = run(&["binomial", "implied", "--k1", "0.9", "--p1", &p1, "--k2", "1.1", "--p2", &p2, "--periods", "10"]);
    assert_eq!(code(&out), 5);
    let v = json(&out);
    assert_eq!(v["status"], "multiple_roots");
    let roots = v["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 3);
    assert!(roots.iter().any(|r| (r["rate"].as_f64().unwrap() - 1.02).abs() < 1e-6));

    let out = run(&[
        "binomial",
        "implied",
        "--k1",
        "0.9",
        "--p1",
        &p1,
        "--k2",
        "1.1",
        "--p2",
        &p2,
        "--periods",
        "10",
        "--rho-min",
        "1.015",
        "--rho-max",
        "1.03",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["rho"].as_f64().unwrap() - 1.02).abs() < 1e-6);
    assert!((v["eps"].as_f64().unwrap() - 0.3).abs() < 1e-6);
}

#[test]
fn binomial_price_and_domain() {
    let out = run(&["binomial", "price", "--rho", "1", "--eps", "0.5", "--periods", "1", "--strike", "1"]);
    assert_eq!(code(&out), 0);
    assert!((json(&out)["price"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    for eps in ["0", "1", "1.5"] {
        let out = run(&["binomial", "price", "--rho", "1", "--eps", eps, "--periods", "1", "--strike", "1"]);
        assert_eq!(code(&out), 2, "eps={eps}");
    }
}

#[test]
fn smile_to_file_and_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("smile.csv");
    let args = ["smile", "--preset", "low-rate", "--k2", "1.28", "--k1-range", "0.7:1.25:0.05"];
    let mut with_file = args.to_vec();
    with_file.extend(["-o", csv.to_str().unwrap()]);
    let out = run(&with_file);
    assert_eq!(code(&out), 0);
    let summary = json(&out);
    assert_eq!(summary["cells"], 12);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert_eq!(text.lines().next().unwrap(), "k1,k2,sigma_imp,rho_imp,status,iterations,residual1,residual2");

    let out = run(&args);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"cells\":12"));
}

#[test]
fn constant_model_smile_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "c.json", r#"{"spot":1,"tau":1,"states":[{"p":1,"sigma":0.25,"r":0.03}]}"#);
    let out = run(&["smile", "--model", &model, "--k2", "1.2", "--k1-range", "0.8:1.1:0.1"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[4], "converged");
        assert!((f[2].parse::<f64>().unwrap() - 0.25).abs() < 1e-8);
        assert!((f[3].parse::<f64>().unwrap() - 0.03).abs() < 1e-8);
    }
}

#[test]
fn surface_grid_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = run(&["surface", "--preset", "high-rate", "--range", "0.8:1.4:0.1", "-o", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let s = json(&out);
    assert_eq!(s["cells"], 49);
    assert_eq!(s["computed"], 42);
    let out = run(&[
        "--threads",
        "1",
        "surface",
        "--preset",
        "high-rate",
        "--range",
        "0.8:1.4:0.1",
        "-o",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(",degenerate,")).count(), 7);
}

#[test]
fn surface_io_failure_exit_3() {
    let out = run(&["surface", "--preset", "high-rate", "--range", "0.9:1.1:0.1", "-o", "/nonexistent-dir/x.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_averaging_paths() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(
        dir.path(),
        "seg.json",
        r#"{"spot":1,"segments":[{"dt":0.25,"sigma":0.2,"r":0.01},{"dt":0.5,"sigma":0.5,"r":0.06},{"dt":0.25,"sigma":0.3,"r":0.03}]}"#,
    );
    let perm = write(
        dir.path(),
        "perm.json",
        r#"{"spot":1,"segments":[{"dt":0.25,"sigma":0.3,"r":0.03},{"dt":0.25,"sigma":0.2,"r":0.01},{"dt":0.5,"sigma":0.5,"r":0.06}]}"#,
    );
    let a = run(&["verify-averaging", "--spec", &seg, "--strike", "1", "--paths", "200000", "--seed", "3"]);
    let b = run(&["verify-averaging", "--spec", &perm, "--strike", "1", "--paths", "200000", "--seed", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    let (a, b) = (json(&a), json(&b));
    assert_eq!(a["analytic"], b["analytic"]);
    assert!(a["z_score"].as_f64().unwrap().abs() <= 4.0);
    for key in ["mc_mean", "std_error", "analytic", "z_score"] {
        assert!(a[key].is_number(), "{key}");
    }

    // A tiny z_max forces the failure code.
    let out = run(&["verify-averaging", "--spec", &seg, "--strike", "1", "--paths", "1000", "--z-max", "0"]);
    assert_eq!(code(&out), 6);

    let bad = write(dir.path(), "bad.json", r#"{"spot":1,"segments":[{"dt":-1,"sigma":0.2,"r":0}]}"#);
    assert_eq!(code(&run(&["verify-averaging", "--spec", &bad, "--strike", "1"])), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "c.json", r#"{"spot":1,"segments":[{"dt":1,"sigma":0.2,"r":0.05}]}"#);
    let args = ["verify-averaging", "--spec", spec.as_str(), "--strike", "1.1", "--paths", "50000", "--seed", "9"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}
