//! Trajectory artifacts: per-snapshot node and velocity CSVs, the
//! diagnostics time series and optional legacy-VTK dumps. Every file is
//! written atomically and carries the configuration hash and tool version.

use crate::error::Result;
use crate::macrosim::{DiagnosticsRow, MacroState};
use crate::mesh::PeriodicMesh;
use crate::table::{write_atomic, TOOL_VERSION};
use std::path::{Path, PathBuf};

fn header(hash: &str) -> String {
    format!("# poroscale {TOOL_VERSION} config={hash}\n")
}

/// Node-data snapshot `x,y,u0,R0,theta,p0`.
pub fn write_snapshot(
    dir: &Path,
    mesh: &PeriodicMesh,
    state: &MacroState,
    index: usize,
    hash: &str,
) -> Result<PathBuf> {
    let mut s = header(hash);
    s.push_str("x,y,u0,R0,theta,p0\n");
    for (k, p) in mesh.nodes.iter().enumerate() {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.x, p.y, state.u0[k], state.r0[k], state.theta[k], state.p0[k]
        ));
    }
    let path = dir.join(format!("snapshot_{index:06}.csv"));
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

/// Per-element velocity snapshot `x,y,vx,vy` (centroids).
pub fn write_velocity(
    dir: &Path,
    mesh: &PeriodicMesh,
    state: &MacroState,
    index: usize,
    hash: &str,
) -> Result<PathBuf> {
    let mut s = header(hash);
    s.push_str("x,y,vx,vy\n");
    for e in 0..mesh.n_elements() {
        let c = mesh.element_centroid(e);
        let v = state.vstar[e];
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            c.x, c.y, v.x, v.y
        ));
    }
    let path = dir.join(format!("velocity_{index:06}.csv"));
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

/// Last consistent state before a failed step.
pub fn write_failure_state(
    dir: &Path,
    mesh: &PeriodicMesh,
    state: &MacroState,
) -> Result<PathBuf> {
    let mut s = format!("# poroscale {TOOL_VERSION} failure state at t = {:.6e}\n", state.time);
    s.push_str("x,y,u0,R0,theta,p0\n");
    for (k, p) in mesh.nodes.iter().enumerate() {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.x, p.y, state.u0[k], state.r0[k], state.theta[k], state.p0[k]
        ));
    }
    let path = dir.join("failure_state.csv");
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

/// Diagnostics time series `t,min_u,max_u,min_R,max_R,balance_residual,clamps`.
pub fn write_diagnostics(dir: &Path, rows: &[DiagnosticsRow], hash: &str) -> Result<PathBuf> {
    let mut s = header(hash);
    s.push_str("t,min_u,max_u,min_R,max_R,balance_residual,clamps\n");
    for r in rows {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.t, r.min_u, r.max_u, r.min_r, r.max_r, r.balance_residual, r.clamps
        ));
    }
    let path = dir.join("diagnostics.csv");
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

/// Legacy-VTK point-data export of one snapshot (optional per config).
pub fn write_vtk(
    dir: &Path,
    mesh: &PeriodicMesh,
    state: &MacroState,
    index: usize,
    hash: &str,
) -> Result<PathBuf> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&format!("poroscale {TOOL_VERSION} config={hash}\n"));
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    s.push_str(&format!("POINTS {} double\n", mesh.n_nodes()));
    for p in &mesh.nodes {
        s.push_str(&format!("{:.16e} {:.16e} 0.0\n", p.x, p.y));
    }
    s.push_str(&format!(
        "CELLS {} {}\n",
        mesh.n_elements(),
        4 * mesh.n_elements()
    ));
    for el in &mesh.elements {
        s.push_str(&format!("3 {} {} {}\n", el[0], el[1], el[2]));
    }
    s.push_str(&format!("CELL_TYPES {}\n", mesh.n_elements()));
    for _ in 0..mesh.n_elements() {
        s.push_str("5\n");
    }
    s.push_str(&format!("POINT_DATA {}\n", mesh.n_nodes()));
    for (name, values) in [
        ("u0", &state.u0),
        ("R0", &state.r0),
        ("theta", &state.theta),
        ("p0", &state.p0),
    ] {
        s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for v in values {
            s.push_str(&format!("{v:.16e}\n"));
        }
    }
    let path = dir.join(format!("snapshot_{index:06}.vtk"));
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}
