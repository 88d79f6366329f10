use std::path::Path;
use std::process::{Command, Output};

fn layerpot(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerpot"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn certified_run_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cap");
    let o = layerpot(&["capacity", "--geometry", "circle", "--panels", "64"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["command"], "capacity");
    assert_eq!(r["certified"], true);
    assert!(r["error"].is_null());
    assert!(r["timestamp"]["elapsed_seconds"].as_f64().unwrap() >= 0.0);
    for f in r["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists());
    }
    assert!((r["results"]["capacity"].as_f64().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn usage_errors_exit_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["capacity", "--no-such-flag"],
        &["capacity", "--geometry", "hexagon"],
        &["capacity", "--panels", "0"],
        &["capacity", "--beta", "0.5"],
        &["solve", "--problem", "int-robin"],
        &["solve", "--problem", "int-neu", "--data", "one"],
        &["bergman", "--data", "nothing"],
        &["kernel-svd", "--geometry", "circle"],
        &["corner-demo", "--geometry", "circle"],
        &["capacity", "--geometry", "square", "--vertices", "v.json"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let out = dir.path().join(format!("u{i}"));
        let o = layerpot(args, &out);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!out.exists(), "{args:?} wrote output");
    }
    let bare = Command::new(env!("CARGO_BIN_EXE_layerpot")).output().unwrap();
    assert_eq!(bare.status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_layerpot")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("corner-demo"));
}

#[test]
fn numerical_failure_exits_two_with_error_in_report() {
    // the unit L-shape has a negative Robin constant, so V solves refuse it
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lsolve");
    let o = layerpot(&["solve", "--geometry", "lshape", "--panels", "8"], &out);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["certified"], false);
    assert!(r["error"].as_str().unwrap().contains("margin"), "{}", r["error"]);

    let out = dir.path().join("lsolve_scaled");
    let o = layerpot(&["solve", "--geometry", "lshape", "--panels", "8", "--scale", "0.25"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tight");
    let o = layerpot(&["solve", "--geometry", "square", "--panels", "4", "--tol", "1e-30"], &out);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert!(r["error"].is_null());
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "geometry = \"circle\"\npanels = 32\nradius = 0.25\n").unwrap();
    let out = dir.path().join("c1");
    let o = layerpot(&["capacity", "--config", cfg.to_str().unwrap(), "--panels", "48"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["inputs"]["geometry"], "circle");
    assert_eq!(r["inputs"]["panels"], 48);
    assert_eq!(r["inputs"]["radius"], 0.25);

    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    let out = dir.path().join("c2");
    assert_eq!(layerpot(&["capacity", "--config", cfg.to_str().unwrap()], &out).status.code(), Some(1));
}

#[test]
fn vertices_file_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("tri.json");
    std::fs::write(&v, "[[0,0],[0.6,0],[0.1,0.5]]").unwrap();
    let out = dir.path().join("tri");
    let o = layerpot(&["capacity", "--vertices", v.to_str().unwrap(), "--panels", "6", "--dump-mesh", "--dump-operator"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mesh.csv", "V.csv", "W.csv", "equilibrium.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = report(&out);
    assert_eq!(r["inputs"]["geometry"], "vertices");
    assert_eq!(r["inputs"]["vertices"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_reads_boundary_data_file() {
    let dir = tempfile::tempdir().unwrap();
    // 4 panels per edge on the square: 16 nodes, 16 panels
    let f = dir.path().join("bd.json");
    let p: Vec<String> = (0..16).map(|i| format!("{}", (i as f64 * 0.4).sin())).collect();
    std::fs::write(&f, format!("{{\"p\": [{}]}}", p.join(","))).unwrap();
    let arg = f.to_str().unwrap();
    let out = dir.path().join("ok");
    let o = layerpot(&["solve", "--panels", "4", "--problem", "int-dir", "--data", arg], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["results"]["data"], "file");

    // Neumann problems need "q"
    let out = dir.path().join("noq");
    assert_eq!(layerpot(&["solve", "--panels", "4", "--problem", "ext-neu", "--data", arg], &out).status.code(), Some(1));
    assert!(!out.exists());
    // wrong length
    let out = dir.path().join("len");
    assert_eq!(layerpot(&["solve", "--panels", "5", "--problem", "int-dir", "--data", arg], &out).status.code(), Some(1));
    // incompatible interior Neumann data is a numerical failure
    std::fs::write(&f, format!("{{\"q\": [{}]}}", vec!["1"; 16].join(","))).unwrap();
    let out = dir.path().join("incompatible");
    assert_eq!(layerpot(&["solve", "--panels", "4", "--problem", "int-neu", "--data", arg], &out).status.code(), Some(2));
    assert!(report(&out)["error"].is_string());
}

#[test]
fn documented_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cap");
    assert_eq!(layerpot(&["capacity", "--geometry", "circle", "--radius", "0.5"], &out).status.code(), Some(0));
    assert!((report(&out)["results"]["capacity"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    let out = dir.path().join("jumps");
    assert_eq!(layerpot(&["jump-test", "--geometry", "square", "--panels", "64"], &out).status.code(), Some(0));
    assert!(report(&out)["results"]["max_residual"].as_f64().unwrap() < 1e-4);
}
