//! Wiring tests for the `helimin` binary: exit codes, files and headers.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn helimin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helimin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn mesh_check_reports_angle_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = helimin(dir.path(), &["mesh", "check", "--square", "4", "--save", "sq.msh"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("angle condition: satisfied"));
    assert!(fs::read_to_string(dir.path().join("sq.msh")).unwrap().starts_with("nodes 25\n"));

    // two triangles sharing an edge with both opposite angles obtuse
    fs::write(
        dir.path().join("flat.msh"),
        "nodes 4\n0 0\n1 0\n0.5 0.1\n0.5 -0.1\ntriangles 2\n0 1 2\n1 0 3\n",
    )
    .unwrap();
    let o = helimin(dir.path(), &["mesh", "check", "--mesh", "flat.msh"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("VIOLATED"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = helimin(dir.path(), &["minimize", "--mesh", "missing.msh", "--kappa", "0"]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.msh"));

    let conflicting = helimin(dir.path(), &["minimize", "--square", "2", "--kappa", "1", "--material", "cobalt"]);
    assert_eq!(code(&conflicting), 1);

    let no_params = helimin(dir.path(), &["minimize", "--square", "2"]);
    assert_eq!(code(&no_params), 1);

    let bad_ic = helimin(dir.path(), &["minimize", "--square", "2", "--kappa", "0", "--ic", "nope"]);
    assert_eq!(code(&bad_ic), 1);

    fs::write(dir.path().join("bad.cfg"), "kappa 1\n").unwrap();
    let bad_config = helimin(dir.path(), &["--config", "bad.cfg", "minimize", "--square", "2"]);
    assert_eq!(code(&bad_config), 1);
}

#[test]
fn minimize_at_critical_point_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = helimin(
        dir.path(),
        &["minimize", "--square", "8", "--kappa", "0", "--gamma", "1", "--ic", "e1", "--tol", "1e-10", "--out", "res"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("iterations:     0"));
    let res = dir.path().join("res");
    let trace = fs::read_to_string(res.join("run.trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("n,J_u,J_w,el_residual,energy_increase"));
    assert!(fs::read_to_string(res.join("run.field")).unwrap().starts_with("field 81\n"));
    assert!(fs::read_to_string(res.join("run.vtk")).unwrap().contains("VECTORS m double"));
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = helimin(
        dir.path(),
        &["minimize", "--square", "4", "--gamma", "1", "--ic", "random", "--seed", "3", "--max-iters", "1", "--no-vtk"],
    );
    assert_eq!(code(&o), 3);
    assert!(dir.path().join("helimin-out/run.field").exists());
    assert!(!dir.path().join("helimin-out/run.vtk").exists());
}

#[test]
fn config_file_fills_in_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# small run\nsquare = 2\ngamma = 1.3\nic = random\nseed = 5\nout = from-config\nname = cfg\n",
    )
    .unwrap();
    let o = helimin(dir.path(), &["--config", "run.cfg", "minimize", "--out", "from-flag"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("from-flag/cfg.field").exists());
    assert!(!dir.path().join("from-config").exists());
}

#[test]
fn random_initial_state_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seed: &str| {
        let o = helimin(
            dir.path(),
            &["minimize", "--square", "2", "--kappa", "0", "--ic", "random", "--seed", seed, "--max-iters", "1", "--out", out],
        );
        assert_eq!(code(&o), 3);
        fs::read_to_string(dir.path().join(out).join("run.field")).unwrap()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("a", "7"), run("c", "8"));
}

#[test]
fn counterexamples_print_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let o = helimin(dir.path(), &["counterexamples"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("8.000000000000"));
    assert!(out.contains("9.000000000000"));
    assert!(out.contains("energy increase found: true"));

    let o = helimin(dir.path(), &["counterexamples", "--eps", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("10.250000000000"));

    let o = helimin(dir.path(), &["counterexamples", "--helical-scan"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).matches("  increase").count() >= 2);

    let o = helimin(dir.path(), &["counterexamples", "--eps", "3"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn export_writes_vtk_and_rejects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e3.field"), "field 4\n0 0 1\n0 0 1\n0 0 1\n0 0 1\n").unwrap();
    let o = helimin(dir.path(), &["export", "--square", "1", "--field", "e3.field", "--out", "e3.vtk"]);
    assert_eq!(code(&o), 0);
    let vtk = fs::read_to_string(dir.path().join("e3.vtk")).unwrap();
    assert!(vtk.contains("POINTS 4 double"));
    assert!(vtk.contains("CELLS 2 8"));
    let m3: Vec<&str> = vtk.lines().skip_while(|l| *l != "LOOKUP_TABLE default").skip(1).collect();
    assert_eq!(m3, vec!["1.0"; 4]);

    let o = helimin(dir.path(), &["export", "--square", "2", "--field", "e3.field", "--out", "bad.vtk"]);
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("bad.vtk").exists());
}

#[test]
fn small_sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = helimin(
        dir.path(),
        &["sweep", "--material", "cobalt", "--D-range", "0:1:1e-3", "--ic", "constant", "--h", "1.0", "--out", "sw"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sw = dir.path().join("sw");
    let summary = fs::read_to_string(sw.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "D,ic,classification,final_J,iterations");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0e0,constant,uniform,"));
    for stem in ["D0_constant", "D1_constant"] {
        for ext in ["field", "trace.csv", "vtk"] {
            assert!(sw.join(format!("{stem}.{ext}")).exists(), "{stem}.{ext}");
        }
    }
}
