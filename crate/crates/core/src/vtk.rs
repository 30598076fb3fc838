//! Legacy-VTK ASCII snapshots on the reference mesh.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::mesh::Mesh;
use crate::stepper::CoupledState;

/// Points are reference coordinates; `velocity` is R ũ (physical frame),
/// `displacement` is X̃ − Id, and the cell field is the element mean of det ∇X̃.
pub fn write_snapshot<W: Write>(mut w: W, mesh: &Mesh, state: &CoupledState) -> std::io::Result<()> {
    let n = mesh.nodes.len();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "fsisim t={}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for x in &mesh.nodes {
        writeln!(w, "{} {} {}", x[0], x[1], x[2])?;
    }
    let m = mesh.tets.len();
    writeln!(w, "CELLS {m} {}", 5 * m)?;
    for t in &mesh.tets {
        writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(w, "CELL_TYPES {m}")?;
    for _ in 0..m {
        writeln!(w, "10")?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "VECTORS velocity double")?;
    for v in &state.fluid.velocity.nodal {
        let u = state.rigid.r * v;
        writeln!(w, "{} {} {}", u[0], u[1], u[2])?;
    }
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for p in &state.fluid.pressure {
        writeln!(w, "{p}")?;
    }
    writeln!(w, "VECTORS displacement double")?;
    for (xt, y) in state.ext.xt.nodal.iter().zip(&mesh.nodes) {
        let d = xt - y;
        writeln!(w, "{} {} {}", d[0], d[1], d[2])?;
    }
    writeln!(w, "CELL_DATA {m}")?;
    writeln!(w, "SCALARS det_grad_x double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for q in &state.ext.qp {
        writeln!(w, "{}", q.iter().map(|g| g.det).sum::<f64>() / 4.0)?;
    }
    Ok(())
}

pub fn save_snapshot(dir: &Path, step: usize, mesh: &Mesh, state: &CoupledState) -> Result<()> {
    let f = std::fs::File::create(dir.join(format!("step_{step:06}.vtk")))?;
    write_snapshot(std::io::BufWriter::new(f), mesh, state)?;
    Ok(())
}
