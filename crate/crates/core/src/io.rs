//! File formats: nodal fields (`field N` followed by `ux uy uz` lines),
//! legacy-VTK export, and per-run output bundles.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{NodalVectorField, Vec3};
use crate::mesh::Mesh;
use crate::minimizer::MinimizeTrace;

/// Serializes a field; values use the shortest round-trip representation.
pub fn field_to_text(field: &NodalVectorField) -> String {
    let mut s = format!("field {}\n", field.len());
    for v in field.values() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    s
}

/// Parses the field format. Blank lines and `#` comments are ignored.
pub fn parse_field(text: &str) -> Result<NodalVectorField> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "empty input, expected 'field <N>'".into(),
    })?;
    let count = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["field", n] => n.parse::<usize>().map_err(|e| Error::Parse {
            line,
            message: format!("invalid node count '{n}': {e}"),
        })?,
        _ => {
            return Err(Error::Parse {
                line,
                message: format!("expected 'field <N>', found '{header}'"),
            })
        }
    };
    let mut values = Vec::with_capacity(count);
    for (line, l) in lines {
        if values.len() == count {
            return Err(Error::Parse {
                line,
                message: format!("more than {count} values"),
            });
        }
        let nums = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("invalid number '{t}': {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let [x, y, z] = nums[..] else {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 components, found {}", nums.len()),
            });
        };
        values.push(Vec3::new(x, y, z));
    }
    if values.len() != count {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("expected {count} values, found {}", values.len()),
        });
    }
    NodalVectorField::new(values)
}

pub fn save_field(path: impl AsRef<Path>, field: &NodalVectorField) -> Result<()> {
    fs::write(path, field_to_text(field))?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<NodalVectorField> {
    parse_field(&fs::read_to_string(path)?)
}

/// Loads a field and checks that it has one value per mesh node.
pub fn load_field_for(path: impl AsRef<Path>, mesh: &Mesh) -> Result<NodalVectorField> {
    let f = load_field(path)?;
    f.check_mesh(mesh)?;
    Ok(f)
}

/// Legacy-VTK ASCII unstructured grid with point vectors `m` and the scalar
/// `m3 = m·e₃`.
pub fn vtk_string(mesh: &Mesh, field: &NodalVectorField) -> Result<String> {
    if mesh.num_triangles() == 0 || mesh.num_nodes() == 0 {
        return Err(Error::InvalidMesh("cannot export an empty mesh".into()));
    }
    field.check_mesh(mesh)?;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "helimin field");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:?} {:?} 0", p[0], p[1]);
    }
    let m = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {} {}", m, 4 * m);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.num_nodes());
    let _ = writeln!(s, "VECTORS m double");
    for v in field.values() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "SCALARS m3 double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for v in field.values() {
        let _ = writeln!(s, "{:?}", v.z);
    }
    Ok(s)
}

pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, field: &NodalVectorField) -> Result<()> {
    let s = vtk_string(mesh, field)?;
    fs::write(path, s)?;
    Ok(())
}

pub fn write_trace(path: impl AsRef<Path>, trace: &MinimizeTrace) -> Result<()> {
    fs::write(path, trace.to_csv())?;
    Ok(())
}

/// Writes `<stem>.field`, `<stem>.trace.csv` and `<stem>.vtk` into `dir`.
pub fn write_run(dir: &Path, stem: &str, mesh: &Mesh, field: &NodalVectorField, trace: &MinimizeTrace) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_field(dir.join(format!("{stem}.field")), field)?;
    write_trace(dir.join(format!("{stem}.trace.csv")), trace)?;
    write_vtk(dir.join(format!("{stem}.vtk")), mesh, field)
}
