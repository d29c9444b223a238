use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(rel: &str) -> &'static str {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel);
    Box::leak(path.to_str().unwrap().to_owned().into_boxed_str())
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permsense"))
        .args(args)
        .env_remove("PERMSENSE_FIXTURE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stderr.is_empty(), "{args:?} wrote to stderr");
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    assert!(out.stdout.is_empty(), "{args:?} wrote to stdout on error");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Rows of a single-table CSV output, header removed.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
}

#[test]
fn version_is_machine_readable() {
    assert_eq!(
        ok(&["--version"]).trim(),
        format!("permsense {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn inspect_reports_fixture_notch_depth() {
    let out = ok(&["inspect", fixture("traces/unloaded_s21.s2p")]);
    let s21 = rows(&out).into_iter().find(|r| r[0] == "s21").unwrap();
    assert_eq!(num(&s21[1]), 201.0);
    assert_eq!(num(&s21[5]), -13.62576);
    assert_eq!(num(&s21[6]), 3.98e9);
}

#[test]
fn inspect_errors() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.s2p");
    std::fs::write(&empty, "").unwrap();
    assert!(fails(&["inspect", p(&empty)]).contains("no data points"));
    let bad = dir.path().join("bad.s2p");
    std::fs::write(&bad, "# GHz S RI R 50\n1 0 0 1 0 1 0 0 0\n2 0 0 1 0 1\n").unwrap();
    assert!(fails(&["inspect", p(&bad)]).contains("line 3"));
    assert!(!fails(&["inspect", "/nonexistent.s2p"]).is_empty());
}

fn simulated(dir: &TempDir, netlist: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(format!("{netlist}.s2p"));
    let mut args = vec![
        "simulate".to_string(),
        fixture(&format!("netlists/{netlist}.toml")).to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    args.extend(["-o".into(), p(&out).into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(ok(&args), "");
    out
}

#[test]
fn lc_notch_round_trip_through_simulate_and_resonances() {
    let dir = TempDir::new().unwrap();
    let trace = simulated(
        &dir,
        "lc_notch",
        &["--fmin", "4", "--fmax", "6", "--points", "2001"],
    );
    let r = rows(&ok(&["resonances", p(&trace)]));
    assert_eq!(r.len(), 1);
    let f0 = 1.0 / (2.0 * std::f64::consts::PI * 1e-21f64.sqrt());
    assert!((num(&r[0][0]) - f0).abs() <= 0.5e6, "{r:?}");
    assert_eq!(r[0][4], "transmission");
}

#[test]
fn flat_trace_has_no_resonances() {
    let dir = TempDir::new().unwrap();
    let trace = simulated(&dir, "passthrough", &["--points", "101"]);
    let out = ok(&["resonances", p(&trace)]);
    assert_eq!(out, "frequency_hz,frequency_ghz,depth_db,q,mode,grid_index\n");
    assert_eq!(ok(&["resonances", p(&trace), "--format", "json"]).trim(), "[]");
}

#[test]
fn two_notches_ascending() {
    let dir = TempDir::new().unwrap();
    let trace = simulated(
        &dir,
        "dual_notch",
        &["--fmin", "1", "--fmax", "14", "--points", "2601"],
    );
    let r = rows(&ok(&["resonances", p(&trace), "--min-sep-ghz", "0.5"]));
    assert_eq!(r.len(), 2, "{r:?}");
    let (a, b) = (num(&r[0][1]), num(&r[1][1]));
    assert!(a < b);
    assert!((a - 3.98).abs() < 0.01 && (b - 11.57).abs() < 0.01, "{a} {b}");
}

#[test]
fn passthrough_is_unit_transmission() {
    let out = ok(&[
        "simulate",
        fixture("netlists/passthrough.toml"),
        "--points",
        "11",
        "--format",
        "csv",
    ]);
    for r in rows(&out) {
        assert_eq!((num(&r[3]), num(&r[4])), (1.0, 0.0));
        assert_eq!((num(&r[1]), num(&r[2])), (0.0, 0.0));
    }
}

#[test]
fn bad_netlists_rejected() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[[element]]\ntopology = \"diagonal\"\nkind = \"R\"\nr_ohm = 1.0\n",
    )
    .unwrap();
    assert!(!fails(&["simulate", p(&bad)]).is_empty());
    std::fs::write(
        &bad,
        "[[element]]\ntopology = \"series\"\nkind = \"L\"\nl_h = -1e-9\n",
    )
    .unwrap();
    assert!(!fails(&["simulate", p(&bad)]).is_empty());
    assert!(!fails(&["simulate", fixture("netlists/rlc_template.toml")]).is_empty());
    assert!(!fails(&[
        "simulate",
        fixture("netlists/lc_notch.toml"),
        "--fmin",
        "5",
        "--fmax",
        "2"
    ])
    .is_empty());
}

#[test]
fn calibrate_published_samples() {
    let out = ok(&["calibrate", fixture("samples/table5_s21.csv")]);
    let r = &rows(&out)[0];
    for (got, want) in [(&r[0], 3.99), (&r[1], 0.3512), (&r[2], 0.0230)] {
        assert!((num(got) - want).abs() <= 0.002, "{out}");
    }
    assert_eq!(r[5], "true");
    let free = ok(&[
        "calibrate",
        fixture("samples/table5_s21.csv"),
        "--anchor-air",
        "false",
    ]);
    assert_eq!(rows(&free)[0][5], "false");
}

#[test]
fn calibrate_exact_samples_and_errors() {
    let dir = TempDir::new().unwrap();
    let f = |e: f64| 4.0 - 0.4 * (e - 1.0) + 0.02 * (e - 1.0) * (e - 1.0);
    let mut text = String::from("name,permittivity,resonance_ghz,mode\n");
    for (i, e) in [1.0, 2.0, 3.0, 4.5].iter().enumerate() {
        text.push_str(&format!("m{i},{e},{:?},transmission\n", f(*e)));
    }
    let samples = dir.path().join("s.csv");
    std::fs::write(&samples, &text).unwrap();
    let model = dir.path().join("model.toml");
    let out = ok(&["calibrate", p(&samples), "-o", p(&model), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for (k, want) in [("x1", 4.0), ("x2", 0.4), ("x3", 0.02)] {
        assert!((v[k].as_f64().unwrap() - want).abs() < 1e-12, "{out}");
    }
    let r = rows(&ok(&[
        "extract",
        "--model",
        p(&model),
        "--freq-ghz",
        &format!("{:?}", f(2.5)),
    ]));
    assert!((num(&r[0][1]) - 2.5).abs() < 1e-9);

    let two: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    std::fs::write(&samples, two).unwrap();
    assert!(fails(&["calibrate", p(&samples)]).contains("at least 3"));
}

#[test]
fn extract_with_preset() {
    let r = rows(&ok(&["extract", "--freq-ghz", "3.6017", "--freq-ghz", "3.99"]));
    assert!((num(&r[0][1]) - 2.2).abs() < 2.5e-4, "{r:?}");
    assert_eq!(num(&r[1][1]), 1.0);
    assert!(fails(&["extract", "--freq-ghz", "4.5"]).contains("outside"));
    let r = rows(&ok(&["extract", "--file", fixture("traces/unloaded_s21.s2p")]));
    assert_eq!(num(&r[0][0]), 3.98);
    assert!(num(&r[0][1]) > 1.0 && num(&r[0][1]) < 1.05);
}

#[test]
fn report_reproduces_published_columns() {
    let out = ok(&["report"]);
    assert_eq!(out, ok(&["report"]));
    let agrees = out.lines().filter(|l| l.ends_with(",true")).count();
    assert_eq!(agrees, 8, "{out}");
    assert!(!out.contains(",false"));
    for calc in ["3.9900", "3.6017", "3.2185", "3.0815"] {
        assert!(out.contains(&format!(",{calc},")), "{out}");
    }
    assert!(out.contains("table3_s21,1,6,4.168,2.199,9.448,9.55,"));

    let only = ok(&["report", "--tables", "5"]);
    assert!(only.starts_with("# calculated peaks\n") && !only.contains("# relative error"));

    let json = ok(&["report", "--format", "json"]);
    assert_eq!(json, ok(&["report", "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["relative_error"][1]["abs_relative_error_2dp"], "0.05");
    assert!(fails(&["report", "--tables", "7"]).contains("unknown report table"));
}

#[test]
fn report_reads_fixture_override() {
    let dir = TempDir::new().unwrap();
    for t in ["table2", "table3", "table4", "table5", "table6"] {
        let name = format!("{t}.csv");
        std::fs::copy(fixture(&name), dir.path().join(&name)).unwrap();
    }
    let t5 = std::fs::read_to_string(fixture("table5.csv"))
        .unwrap()
        .replace("3.6017", "3.6000");
    std::fs::write(dir.path().join("table5.csv"), t5).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_permsense"))
        .args(["report", "--tables", "5"])
        .env("PERMSENSE_FIXTURE_DIR", dir.path())
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("Rogers RT5880,2.2,3.6,3.6017,3.6000,false"),
        "{text}"
    );
}

#[test]
fn sensitivity_sweeps() {
    let endpoint = |file: &str| {
        let out = ok(&["sensitivity", fixture(file)]);
        let last = rows(&out).pop().unwrap();
        assert_eq!(last[0], "endpoint");
        num(&last[5])
    };
    assert!((endpoint("sweeps/table3_s21.csv") - 9.448).abs() <= 0.001);
    assert!((endpoint("sweeps/table4_s21.csv") - 6.912).abs() <= 0.001);

    let dir = TempDir::new().unwrap();
    let flat = dir.path().join("flat.csv");
    std::fs::write(
        &flat,
        "control_kind,control_value,resonance_ghz,depth_db\npermittivity,1,4,\npermittivity,3,4,\n",
    )
    .unwrap();
    assert_eq!(num(&rows(&ok(&["sensitivity", p(&flat)]))[1][5]), 0.0);
    std::fs::write(&flat, "control_kind,control_value,resonance_ghz,depth_db\n").unwrap();
    assert!(!fails(&["sensitivity", p(&flat)]).is_empty());
}

#[test]
fn thickness_saturation_from_sweeps() {
    let sat = |file: &str, tol: &str| {
        let out = ok(&["sensitivity", fixture(file), "--tol-ghz", tol]);
        num(&rows(&out)[0][1])
    };
    assert_eq!(sat("sweeps/table2_s21.csv", "0.02"), 2.0);
    assert_eq!(sat("sweeps/table2_s21.csv", "0.05"), 1.5);
    assert_eq!(sat("sweeps/table2_s11.csv", "0.02"), 2.0);
    assert_eq!(sat("sweeps/table2_s11.csv", "0.05"), 1.0);
}

#[test]
fn fit_circuit_self_consistency_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let target = simulated(&dir, "rlc_truth", &["--points", "401"]);
    let fitted = dir.path().join("fitted.toml");
    let args = [
        "fit-circuit",
        fixture("netlists/rlc_template.toml"),
        p(&target),
        "--seed",
        "7",
        "--restarts",
        "3",
    ];
    let out = ok(&args);
    assert_eq!(out, ok(&args));
    let r = rows(&out);
    for (row, truth) in r.iter().zip([2.0, 1e-9, 1e-12]) {
        assert!((num(&row[1]) / truth - 1.0).abs() < 0.01, "{out}");
    }
    let residual = r.iter().find(|row| row[0] == "residual_db_rms").unwrap();
    assert!(num(&residual[1]) < 0.01);

    let mut with_output = args.to_vec();
    with_output.extend(["-o", p(&fitted), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&ok(&with_output)).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 3);
    let text = std::fs::read_to_string(&fitted).unwrap();
    assert_eq!(text, v["netlist"].as_str().unwrap());
    assert!(!text.contains('?'));
    ok(&["simulate", p(&fitted), "--points", "11"]);
}

#[test]
fn fit_circuit_rejects_unbounded_parameter() {
    let dir = TempDir::new().unwrap();
    let target = simulated(&dir, "rlc_truth", &["--points", "51"]);
    let template = dir.path().join("t.toml");
    std::fs::write(
        &template,
        "[[element]]\ntopology = \"shunt\"\nkind = \"RLC_S\"\nr_ohm = \"?6.0\"\nl_h = 1e-9\nc_f = 1e-12\n",
    )
    .unwrap();
    assert!(!fails(&["fit-circuit", p(&template), p(&target)]).is_empty());
}

#[test]
fn every_command_emits_json() {
    let dir = TempDir::new().unwrap();
    let trace = fixture("traces/unloaded_s21.s2p");
    let target = simulated(&dir, "rlc_truth", &["--points", "51"]);
    let cases: Vec<Vec<&str>> = vec![
        vec!["inspect", trace],
        vec!["resonances", trace],
        vec!["calibrate", fixture("samples/table5_s21.csv")],
        vec!["extract", "--freq-ghz", "3.5"],
        vec!["report"],
        vec!["simulate", fixture("netlists/lc_notch.toml"), "--points", "5"],
        vec![
            "fit-circuit",
            fixture("netlists/rlc_template.toml"),
            p(&target),
            "--restarts",
            "0",
        ],
        vec!["sensitivity", fixture("sweeps/table3_s21.csv")],
        vec!["sensitivity", fixture("sweeps/table2_s21.csv")],
    ];
    for mut args in cases {
        args.extend(["--format", "json"]);
        let out = ok(&args);
        serde_json::from_str::<serde_json::Value>(&out).unwrap_or_else(|e| panic!("{args:?}: {e}\n{out}"));
        args.pop();
        args.pop();
        args.extend(["--format", "csv"]);
        assert!(!ok(&args).is_empty());
    }
}
