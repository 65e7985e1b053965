//! Legacy VTK unstructured-grid ASCII output for external viewers.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::Mesh;
use std::fmt::Write as _;
use std::path::Path;

/// Write mesh + state as legacy VTK ASCII: POINTS (3 floats, 2-D
/// padded with zero z), CELLS/CELL_TYPES (5 = triangle, 10 =
/// tetrahedron), POINT_DATA with SCALARS s, VECTORS director, and an
/// optional SCALARS phi.  Values carry 9 significant digits.
pub fn write_vtk(
    mesh: &Mesh,
    s: &[f64],
    director: &[Vec3],
    phi: Option<&[f64]>,
    path: &Path,
) -> Result<()> {
    let text = vtk_string(mesh, s, director, phi)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn vtk_string(mesh: &Mesh, s: &[f64], director: &[Vec3], phi: Option<&[f64]>) -> Result<String> {
    let n = mesh.n_vertices();
    if s.len() != n || director.len() != n || phi.map_or(false, |p| p.len() != n) {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "field length does not match vertex count",
        )));
    }
    let k = mesh.dim() + 1;
    let cell_type = if mesh.dim() == 2 { 5 } else { 10 };
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("ericksen state\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {n} double").unwrap();
    for v in mesh.vertices() {
        writeln!(out, "{:.9e} {:.9e} {:.9e}", v.x, v.y, v.z).unwrap();
    }
    let nc = mesh.n_cells();
    writeln!(out, "CELLS {nc} {}", nc * (k + 1)).unwrap();
    for c in 0..nc {
        let verts = mesh.cell(c);
        write!(out, "{k}").unwrap();
        for v in verts {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "CELL_TYPES {nc}").unwrap();
    for _ in 0..nc {
        writeln!(out, "{cell_type}").unwrap();
    }
    writeln!(out, "POINT_DATA {n}").unwrap();
    out.push_str("SCALARS s double 1\n");
    out.push_str("LOOKUP_TABLE default\n");
    for v in s {
        writeln!(out, "{v:.9e}").unwrap();
    }
    out.push_str("VECTORS director double\n");
    for v in director {
        writeln!(out, "{:.9e} {:.9e} {:.9e}", v.x, v.y, v.z).unwrap();
    }
    if let Some(p) = phi {
        out.push_str("SCALARS phi double 1\n");
        out.push_str("LOOKUP_TABLE default\n");
        for v in p {
            writeln!(out, "{v:.9e}").unwrap();
        }
    }
    Ok(out)
}

/// Minimal reader for checking round trips: recovers a named point
/// scalar from a legacy VTK ASCII file written by [`write_vtk`].
pub fn read_vtk_point_scalar(text: &str, name: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    let mut n_points = None;
    while let Some(line) = lines.next() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("POINT_DATA ") {
            n_points = Some(rest.trim().parse::<usize>().map_err(|_| {
                Error::Config("bad POINT_DATA count".into())
            })?);
        }
        if t.starts_with(&format!("SCALARS {name} ")) {
            let n = n_points.ok_or_else(|| Error::Config("SCALARS before POINT_DATA".into()))?;
            // skip LOOKUP_TABLE
            lines.next();
            let mut vals = Vec::with_capacity(n);
            for _ in 0..n {
                let l = lines
                    .next()
                    .ok_or_else(|| Error::Config("truncated scalar block".into()))?;
                vals.push(l.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("bad scalar value '{l}'"))
                })?);
            }
            return Ok(vals);
        }
    }
    Err(Error::Config(format!("scalar '{name}' not found")))
}
