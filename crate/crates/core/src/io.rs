//! Mesh and field export: legacy ASCII VTK and a plain-text mesh dump.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::Mesh;

/// VTK tetrahedron cell type.
const VTK_TETRA: u8 = 10;

/// Writes the mesh as an unstructured grid, with optional per-vertex scalars.
pub fn write_vtk(mesh: &Mesh, title: &str, point_data: &[(&str, &[f64])], mut w: impl Write) -> Result<()> {
    let nv = mesh.vertices.len();
    let nt = mesh.tets.len();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for v in &mesh.vertices {
        writeln!(w, "{:e} {:e} {:e}", v.x, v.y, v.z)?;
    }
    writeln!(w, "CELLS {nt} {}", 5 * nt)?;
    for t in &mesh.tets {
        writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "{VTK_TETRA}")?;
    }
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {nv}")?;
        for (name, values) in point_data {
            if values.len() != nv {
                return Err(Error::InvalidArgument(format!(
                    "point data '{name}' has {} values for {nv} vertices",
                    values.len()
                )));
            }
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(w, "{v:e}")?;
            }
        }
    }
    Ok(())
}

/// `vertices N`, N lines `x y z`, `tets M`, M lines of four vertex ids.
pub fn write_mesh_text(mesh: &Mesh, mut w: impl Write) -> Result<()> {
    writeln!(w, "vertices {}", mesh.vertices.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z)?;
    }
    writeln!(w, "tets {}", mesh.tets.len())?;
    for t in &mesh.tets {
        writeln!(w, "{} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    Ok(())
}

pub fn read_mesh_text(r: impl BufRead) -> Result<(Vec<Vec3>, Vec<[usize; 4]>)> {
    let bad = |msg: String| Error::InvalidArgument(format!("mesh text: {msg}"));
    let lines: Vec<String> = r
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let header = |pos: usize, expect: &str| -> Result<usize> {
        let line = lines.get(pos).ok_or_else(|| bad(format!("missing '{expect}' header")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(expect) {
            return Err(bad(format!("expected '{expect}', got '{line}'")));
        }
        it.next()
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(format!("bad count in '{line}'")))
    };
    let nv = header(0, "vertices")?;
    let start = 1;
    let mut vertices = Vec::with_capacity(nv);
    for line in lines.iter().skip(start).take(nv) {
        let x: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("{e} in '{line}'")))?;
        if x.len() != 3 {
            return Err(bad(format!("vertex line '{line}'")));
        }
        vertices.push(Vec3::new(x[0], x[1], x[2]));
    }
    if vertices.len() != nv {
        return Err(bad(format!("expected {nv} vertices, found {}", vertices.len())));
    }
    let nt = header(start + nv, "tets")?;
    let mut tets = Vec::with_capacity(nt);
    for line in lines.iter().skip(start + nv + 1).take(nt) {
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("{e} in '{line}'")))?;
        if ids.len() != 4 || ids.iter().any(|&i| i >= nv) {
            return Err(bad(format!("tet line '{line}'")));
        }
        tets.push([ids[0], ids[1], ids[2], ids[3]]);
    }
    if tets.len() != nt {
        return Err(bad(format!("expected {nt} tets, found {}", tets.len())));
    }
    Ok((vertices, tets))
}
