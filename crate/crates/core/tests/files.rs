//! File round trips through the filesystem.

use std::fs;

use helimin::experiments::initial_random;
use helimin::io::{load_field, load_field_for, save_field, write_run};
use helimin::mesh::{generate_disk, generate_structured_square, Mesh};
use helimin::{minimize, Error, MinimizeConfig, ModelParams};

#[test]
fn mesh_and_field_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = generate_disk(2.0, 0.5).unwrap();
    let path = dir.path().join("disk.msh");
    mesh.save(&path).unwrap();
    let back = Mesh::load(&path).unwrap();
    assert_eq!(back.nodes(), mesh.nodes());
    assert_eq!(back.triangles(), mesh.triangles());

    let u = initial_random(&mesh, 4);
    let fpath = dir.path().join("u.field");
    save_field(&fpath, &u).unwrap();
    assert_eq!(load_field_for(&fpath, &mesh).unwrap(), u);

    let other = generate_structured_square(2).unwrap();
    assert!(matches!(load_field_for(&fpath, &other), Err(Error::SizeMismatch { .. })));
    assert!(matches!(load_field(dir.path().join("missing.field")), Err(Error::Io(_))));
}

#[test]
fn run_bundle_has_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = generate_structured_square(3).unwrap();
    let cfg = MinimizeConfig::new(ModelParams::new(0.0, 1.0).unwrap());
    let (u, trace) = minimize(&mesh, &initial_random(&mesh, 1), &cfg).unwrap();
    write_run(&dir.path().join("nested/out"), "case", &mesh, &u, &trace).unwrap();

    let base = dir.path().join("nested/out");
    assert_eq!(load_field(base.join("case.field")).unwrap(), u);
    let csv = fs::read_to_string(base.join("case.trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), trace.rows.len() + 1);
    let vtk = fs::read_to_string(base.join("case.vtk")).unwrap();
    assert!(vtk.contains(&format!("POINTS {} double", mesh.num_nodes())));
    assert!(vtk.contains(&format!("CELL_TYPES {}", mesh.num_triangles())));
}
