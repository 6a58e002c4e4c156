//! Plain-text outputs: legacy ASCII VTK, CSV tables and key-value reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{HexGrid, Phase, PlateMesh};

/// Nodal or cell field for a VTK file.
pub struct VtkField<'a> {
    pub name: &'a str,
    /// 1 (scalar) or 3 (vector).
    pub components: usize,
    pub values: &'a [f64],
}

fn write_fields<W: Write>(out: &mut W, header: &str, count: usize, fields: &[VtkField]) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(out, "{header} {count}")?;
    write_field_list(out, count, fields)
}

fn write_field_list<W: Write>(out: &mut W, count: usize, fields: &[VtkField]) -> Result<()> {
    for f in fields {
        if f.values.len() != f.components * count || !(f.components == 1 || f.components == 3) {
            return Err(Error::Mismatch(format!(
                "field {} has {} values for {count} entries with {} components",
                f.name,
                f.values.len(),
                f.components
            )));
        }
        let name = f.name.replace(char::is_whitespace, "_");
        if f.components == 1 {
            writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
            for v in f.values {
                writeln!(out, "{v:e}")?;
            }
        } else {
            writeln!(out, "VECTORS {name} double")?;
            for v in f.values.chunks(3) {
                writeln!(out, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
            }
        }
    }
    Ok(())
}

/// Uniform grid as `STRUCTURED_POINTS`, node order x fastest.
pub fn write_vtk_grid<W: Write>(out: &mut W, title: &str, grid: &HexGrid, points: &[VtkField], cells: &[VtkField]) -> Result<()> {
    let d = grid.dims;
    writeln!(out, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET STRUCTURED_POINTS", title.lines().next().unwrap_or(""))?;
    writeln!(out, "DIMENSIONS {} {} {}", d[0] + 1, d[1] + 1, d[2] + 1)?;
    writeln!(out, "ORIGIN {:e} {:e} {:e}", grid.origin[0], grid.origin[1], grid.origin[2])?;
    writeln!(out, "SPACING {:e} {:e} {:e}", grid.h[0], grid.h[1], grid.h[2])?;
    write_fields(out, "POINT_DATA", grid.num_nodes(), points)?;
    write_fields(out, "CELL_DATA", grid.num_elements(), cells)?;
    Ok(())
}

/// Hexahedral mesh as `UNSTRUCTURED_GRID` with a phase label per element.
pub fn write_vtk_hex_mesh<W: Write>(
    out: &mut W,
    title: &str,
    grid: &HexGrid,
    phases: &[Phase],
    points: &[VtkField],
    cells: &[VtkField],
) -> Result<()> {
    let ne = grid.num_elements();
    if phases.len() != ne {
        return Err(Error::Mismatch(format!("{} phase labels for {ne} elements", phases.len())));
    }
    writeln!(out, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", title.lines().next().unwrap_or(""))?;
    writeln!(out, "POINTS {} double", grid.num_nodes())?;
    for n in 0..grid.num_nodes() {
        let x = grid.node_coord(n);
        writeln!(out, "{:e} {:e} {:e}", x[0], x[1], x[2])?;
    }
    writeln!(out, "CELLS {ne} {}", 9 * ne)?;
    for e in 0..ne {
        let nodes = grid.element_nodes(e).map(|n| n.to_string());
        writeln!(out, "8 {}", nodes.join(" "))?;
    }
    writeln!(out, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(out, "{VTK_HEXAHEDRON}")?;
    }
    write_fields(out, "POINT_DATA", grid.num_nodes(), points)?;
    writeln!(out, "CELL_DATA {ne}\nSCALARS phase int 1\nLOOKUP_TABLE default")?;
    for p in phases {
        writeln!(out, "{}", matches!(p, Phase::Gel) as u8)?;
    }
    write_field_list(out, ne, cells)
}

const VTK_HEXAHEDRON: u8 = 12;

/// Plate mesh as a one-layer `STRUCTURED_POINTS` set.
pub fn write_vtk_plate<W: Write>(out: &mut W, title: &str, plate: &PlateMesh, points: &[VtkField]) -> Result<()> {
    let grid = HexGrid { origin: [plate.omega.lo[0], plate.omega.lo[1], 0.0], h: [plate.h[0], plate.h[1], 1.0], dims: [plate.m, plate.m, 0] };
    write_vtk_grid(out, title, &grid, points, &[])
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// CSV with a header row; numbers in shortest round-trip form.
pub fn write_csv<W: Write>(out: &mut W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Mismatch(format!("CSV row has {} values for {} columns", row.len(), header.len())));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// `key = value` lines.
pub fn write_key_values<W: Write>(out: &mut W, entries: &[(String, String)]) -> Result<()> {
    for (k, v) in entries {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mesh, build_plate_mesh, cell_grid, CellGeometry, Rect};

    #[test]
    fn vtk_layout() {
        let grid = cell_grid(2);
        let scalar: Vec<f64> = (0..grid.num_nodes()).map(|n| n as f64).collect();
        let vector = vec![0.5; 3 * grid.num_nodes()];
        let phase = vec![1.0; grid.num_elements()];
        let mut buf = Vec::new();
        write_vtk_grid(
            &mut buf,
            "cell",
            &grid,
            &[VtkField { name: "p", components: 1, values: &scalar }, VtkField { name: "u", components: 3, values: &vector }],
            &[VtkField { name: "phase", components: 1, values: &phase }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DIMENSIONS 3 3 5"));
        assert!(text.contains("POINT_DATA 45"));
        assert!(text.contains("CELL_DATA 16"));
        assert_eq!(text.lines().filter(|l| l.split(' ').count() == 3 && l.starts_with("5e-1")).count(), 45);
    }

    #[test]
    fn hex_mesh_layout() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let ne = mesh.grid.num_elements();
        let flag = vec![2.0; ne];
        let mut buf = Vec::new();
        write_vtk_hex_mesh(&mut buf, "cell", &mesh.grid, &mesh.phases, &[], &[VtkField { name: "flag", components: 1, values: &flag }])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cells = lines.iter().position(|l| l.starts_with("CELLS")).unwrap();
        assert_eq!(lines[cells], format!("CELLS {ne} {}", 9 * ne));
        assert_eq!(lines[cells + 1], "8 0 1 6 5 25 26 31 30");
        assert_eq!(text.matches("CELL_DATA").count(), 1);
        let gel = mesh.phases.iter().filter(|p| matches!(p, Phase::Gel)).count();
        let start = lines.iter().position(|l| l.starts_with("SCALARS phase")).unwrap() + 2;
        assert_eq!(lines[start..start + ne].iter().filter(|l| **l == "1").count(), gel);
        assert!(text.ends_with(&"2e0\n".repeat(ne)));
    }

    #[test]
    fn plate_vtk_and_length_check() {
        let plate = build_plate_mesh(&Rect::unit(), 4).unwrap();
        let w = vec![0.0; plate.num_nodes()];
        let mut buf = Vec::new();
        write_vtk_plate(&mut buf, "plate", &plate, &[VtkField { name: "W3", components: 1, values: &w }]).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("DIMENSIONS 5 5 1"));
        let bad = [VtkField { name: "W3", components: 1, values: &w[1..] }];
        assert!(write_vtk_plate(&mut Vec::new(), "plate", &plate, &bad).is_err());
    }

    #[test]
    fn csv_round_trips_values() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["eps", "err"], &[vec![0.25, 1.0 / 3.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.25, 1.0 / 3.0]);
        assert!(write_csv(&mut Vec::new(), &["a"], &[vec![1.0, 2.0]]).is_err());
    }
}
