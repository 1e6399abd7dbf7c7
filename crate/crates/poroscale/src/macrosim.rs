//! Time integration of the coupled macroscopic system: per-node radius ODE,
//! Darcy solve with the porosity-change source, and implicit-Euler
//! advection-reaction-diffusion transport, with effective coefficients
//! interpolated from the table through the local radius field.
//!
//! Operator order per step: radius update (Heun) -> coefficient
//! interpolation -> Darcy solve -> transport step. Coefficients are sampled
//! per element at the centroid, which makes the discrete divergence identity
//! `div v* = -dtheta/dt` hold against interior test functions to solver
//! tolerance exactly (the Darcy flux and the stored element velocity are the
//! same object).

use crate::cell::{cell_average_flux, DiffusionCellSolution, StokesCellSolution};
use crate::error::{Error, Result};
use crate::fem::{p1_dofmap, p1_element, DofStatus, QUAD_DEG4};
use crate::geometry::CellTransform;
use crate::la::Vec2;
use crate::mesh::{BoundaryTag, PeriodicMesh};
use crate::physics::PhysicsFunctions;
use crate::sparse::CsrMatrix;
use crate::table::CoefficientTable;
use std::collections::HashMap;
use std::sync::Arc;

/// Discrete macroscopic fields at one time level. Scalars are P1 nodal
/// vectors on the macro mesh; the Darcy velocity is elementwise constant.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub time: f64,
    pub u0: Vec<f64>,
    pub r0: Vec<f64>,
    pub p0: Vec<f64>,
    pub vstar: Vec<Vec2>,
    pub theta: Vec<f64>,
    pub dtheta_dt: Vec<f64>,
}

impl MacroState {
    pub fn new(mesh: &PeriodicMesh, u0: Vec<f64>, r0: Vec<f64>) -> Self {
        let theta: Vec<f64> = r0
            .iter()
            .map(|r| crate::geometry::porosity_of_radius(*r).theta)
            .collect();
        MacroState {
            time: 0.0,
            u0,
            r0,
            p0: vec![0.0; mesh.n_nodes()],
            vstar: vec![Vec2::ZERO; mesh.n_elements()],
            theta,
            dtheta_dt: vec![0.0; mesh.n_nodes()],
        }
    }

    /// Nodewise invariants: radius bounds, porosity consistency, boundary
    /// condition on the concentration.
    pub fn check_invariants(&self, mesh: &PeriodicMesh, r_min: f64, r_max: f64) -> Result<()> {
        for (k, r) in self.r0.iter().enumerate() {
            if *r < r_min - 1e-12 || *r > r_max + 1e-12 {
                return Err(Error::MacroStep {
                    step: 0,
                    message: format!("radius out of bounds at node {k}: {r}"),
                });
            }
            let theta = crate::geometry::porosity_of_radius(*r).theta;
            if (self.theta[k] - theta).abs() > 1e-12 {
                return Err(Error::MacroStep {
                    step: 0,
                    message: format!("porosity inconsistent at node {k}"),
                });
            }
        }
        for n in mesh.nodes_with_tag(BoundaryTag::Outer) {
            if self.u0[n].abs() > 1e-12 {
                return Err(Error::MacroStep {
                    step: 0,
                    message: format!("nonzero boundary concentration at node {n}"),
                });
            }
        }
        Ok(())
    }
}

/// Heun (explicit trapezoid) update of the radius field with the current
/// concentration frozen; porosity and its rate are recomputed analytically,
/// `dtheta/dt = -2 pi R g(u, R)` at the new state. Returns the number of
/// nodes clamped back into `[R_min, R_max]`.
pub fn step_radius(
    state: &mut MacroState,
    dt: f64,
    physics: &PhysicsFunctions,
    r_min: f64,
    r_max: f64,
) -> Result<usize> {
    if dt <= 0.0 {
        return Err(Error::MacroStep {
            step: 0,
            message: "dt must be positive".into(),
        });
    }
    let mut clamps = 0usize;
    let overshoot_budget = dt * physics.c_g + 1e-13;
    for k in 0..state.r0.len() {
        let u = state.u0[k];
        let r = state.r0[k];
        let g1 = physics.g.eval(u, r);
        let predictor = r + dt * g1;
        let g2 = physics.g.eval(u, predictor);
        let mut r_new = r + 0.5 * dt * (g1 + g2);
        if r_new < r_min || r_new > r_max {
            let overshoot = (r_min - r_new).max(r_new - r_max);
            if overshoot > overshoot_budget {
                return Err(Error::MacroStep {
                    step: 0,
                    message: format!(
                        "radius overshoot {overshoot:.3e} at node {k} exceeds dt * C_g = {overshoot_budget:.3e}"
                    ),
                });
            }
            r_new = r_new.clamp(r_min, r_max);
            clamps += 1;
        }
        state.r0[k] = r_new;
        let p = crate::geometry::porosity_of_radius(r_new);
        state.theta[k] = p.theta;
        state.dtheta_dt[k] = -p.surface * physics.g.eval(u, r_new);
    }
    Ok(clamps)
}

/// Optional manufactured sources injected by the verification harness.
pub struct ExtraSources<'a> {
    /// Added to the Darcy right-hand side: `-div(K*(h0 - grad p0)) =
    /// -dtheta/dt + s_darcy`.
    pub darcy: Option<&'a dyn Fn(f64, Vec2) -> f64>,
    /// Added to the transport right-hand side.
    pub transport: Option<&'a dyn Fn(f64, Vec2) -> f64>,
}

impl Default for ExtraSources<'_> {
    fn default() -> Self {
        ExtraSources {
            darcy: None,
            transport: None,
        }
    }
}

/// Diagnostics of one Darcy solve.
pub struct DarcyReport {
    pub solver_residual: f64,
    /// Residual of the weak identity `div v* = -dtheta/dt` against interior
    /// P1 test functions, relative to the load norm.
    pub weak_divergence_residual: f64,
}

/// Solve the Darcy pressure problem
/// `-div(K*(h0 - grad p0)) = -dtheta/dt`, `p0 = p_b` on the boundary, and
/// store the elementwise velocity `v* = K*(h0 - grad p0)`.
pub fn solve_darcy(
    mesh: &PeriodicMesh,
    state: &mut MacroState,
    table: &CoefficientTable,
    physics: &PhysicsFunctions,
    t: f64,
    tol: f64,
    extra: &ExtraSources<'_>,
) -> Result<DarcyReport> {
    for r in &state.r0 {
        if *r < table.r_min() - 1e-12 || *r > table.r_max() + 1e-12 {
            return Err(Error::MacroStep {
                step: 0,
                message: format!("radius {r} outside table range"),
            });
        }
    }
    let dirichlet: HashMap<usize, f64> = mesh
        .nodes_with_tag(BoundaryTag::Outer)
        .into_iter()
        .map(|n| (n, physics.p_b.eval(t, mesh.nodes[n])))
        .collect();
    let map = p1_dofmap(mesh, false, &dirichlet);
    let n_red = map.n_reduced;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n_red];
    // per-element permeability and body force at the centroid
    let mut k_elem = vec![0.0; mesh.n_elements()];
    let mut h_elem = vec![Vec2::ZERO; mesh.n_elements()];
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let c = mesh.element_centroid(e);
        let r_c = (state.r0[dofs[0]] + state.r0[dofs[1]] + state.r0[dofs[2]]) / 3.0;
        let k = table
            .interpolate(r_c)
            .map_err(|err| Error::MacroStep {
                step: 0,
                message: err.to_string(),
            })?
            .kstar;
        let h = physics.h0.eval(t, c);
        k_elem[e] = k;
        h_elem[e] = h;
        let mut local = vec![vec![0.0; 3]; 3];
        let mut local_rhs = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                local[i][j] = k * area * grads[i].dot(grads[j]);
            }
            // int k h0 . grad phi_i (element-constant data, exact)
            local_rhs[i] += k * area * h.dot(grads[i]);
        }
        // int dtheta/dt phi_i with P1 dtheta/dt (+ manufactured source)
        for (lambda, w) in QUAD_DEG4 {
            let x = crate::fem::barycentric_point(&pts, &lambda);
            let mut src = lambda[0] * state.dtheta_dt[dofs[0]]
                + lambda[1] * state.dtheta_dt[dofs[1]]
                + lambda[2] * state.dtheta_dt[dofs[2]];
            if let Some(s) = extra.darcy {
                src += s(t, x);
            }
            for i in 0..3 {
                local_rhs[i] += w * area * src * lambda[i];
            }
        }
        for (i, &di) in dofs.iter().enumerate() {
            let ri = match map.status[di] {
                DofStatus::Free(r) => r,
                DofStatus::Fixed(_) => continue,
            };
            rhs[ri] += local_rhs[i];
            for (j, &dj) in dofs.iter().enumerate() {
                match map.status[dj] {
                    DofStatus::Free(rj) => triplets.push((ri, rj, local[i][j])),
                    DofStatus::Fixed(v) => rhs[ri] -= local[i][j] * v,
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n_red, n_red, triplets);
    let (x, solver_residual) = crate::sparse::solve_banded(&a, &rhs, tol)?;
    state.p0 = map.expand(&x);

    // element velocities from the same data the assembly used
    for e in 0..mesh.n_elements() {
        let (_, grads, _) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let grad_p = grads[0] * state.p0[dofs[0]]
            + grads[1] * state.p0[dofs[1]]
            + grads[2] * state.p0[dofs[2]];
        state.vstar[e] = (h_elem[e] - grad_p) * k_elem[e];
    }

    // independent weak-divergence check: int v* . grad phi + int dtheta phi
    // over interior test functions (manufactured sources included)
    let mut res = vec![0.0; n_red];
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        for (i, &di) in dofs.iter().enumerate() {
            if let DofStatus::Free(ri) = map.status[di] {
                res[ri] += area * state.vstar[e].dot(grads[i]);
            }
        }
        for (lambda, w) in QUAD_DEG4 {
            let x = crate::fem::barycentric_point(&pts, &lambda);
            let mut src = lambda[0] * state.dtheta_dt[dofs[0]]
                + lambda[1] * state.dtheta_dt[dofs[1]]
                + lambda[2] * state.dtheta_dt[dofs[2]];
            if let Some(s) = extra.darcy {
                src += s(t, x);
            }
            for (i, &di) in dofs.iter().enumerate() {
                if let DofStatus::Free(ri) = map.status[di] {
                    res[ri] += w * area * src * lambda[i];
                }
            }
        }
    }
    let scale = crate::sparse::norm2(&rhs).max(1e-30);
    let weak_divergence_residual = crate::sparse::norm2(&res) / scale;
    Ok(DarcyReport {
        solver_residual,
        weak_divergence_residual,
    })
}

/// Diagnostics of one transport step.
pub struct TransportReport {
    pub solver_residual: f64,
    /// Maximum element Peclet number `|v*| h / (2 d*)`.
    pub max_peclet: f64,
}

/// Implicit-Euler step of the transport equation in conservation form:
/// `(theta^{n+1} u^{n+1} - theta^n u^n)/dt` tested against P1 functions,
/// diffusion and advection implicit with the current Darcy velocity,
/// reaction lagged at `u^n`, homogeneous Dirichlet boundary.
#[allow(clippy::too_many_arguments)]
pub fn step_transport(
    mesh: &PeriodicMesh,
    state: &mut MacroState,
    theta_old: &[f64],
    table: &CoefficientTable,
    physics: &PhysicsFunctions,
    dt: f64,
    t_next: f64,
    tol: f64,
    extra: &ExtraSources<'_>,
) -> Result<TransportReport> {
    let dirichlet: HashMap<usize, f64> = mesh
        .nodes_with_tag(BoundaryTag::Outer)
        .into_iter()
        .map(|n| (n, 0.0))
        .collect();
    let map = p1_dofmap(mesh, false, &dirichlet);
    let n_red = map.n_reduced;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n_red];
    let mut max_peclet = 0.0f64;
    let u_old = state.u0.clone();
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let r_c = (state.r0[dofs[0]] + state.r0[dofs[1]] + state.r0[dofs[2]]) / 3.0;
        let dstar = table
            .interpolate(r_c)
            .map_err(|err| Error::MacroStep {
                step: 0,
                message: err.to_string(),
            })?
            .dstar;
        let v = state.vstar[e];
        let h_e = (2.0 * area).sqrt();
        max_peclet = max_peclet.max(v.norm() * h_e / (2.0 * dstar));
        let mut local = vec![vec![0.0; 3]; 3];
        let mut local_rhs = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                // diffusion (implicit) and advection -int u v . grad phi
                local[i][j] += dstar * area * grads[i].dot(grads[j]);
            }
        }
        for (lambda, w) in QUAD_DEG4 {
            let x = crate::fem::barycentric_point(&pts, &lambda);
            let wq = w * area;
            let theta_new_q: f64 = (0..3).map(|i| lambda[i] * state.theta[dofs[i]]).sum();
            let theta_old_q: f64 = (0..3).map(|i| lambda[i] * theta_old[dofs[i]]).sum();
            let u_old_q: f64 = (0..3).map(|i| lambda[i] * u_old[dofs[i]]).sum();
            let f_old_q: f64 = (0..3)
                .map(|i| lambda[i] * physics.f.eval(u_old[dofs[i]]))
                .sum();
            let dtheta_q: f64 = (0..3).map(|i| lambda[i] * state.dtheta_dt[dofs[i]]).sum();
            let mut src = theta_new_q * f_old_q + dtheta_q * physics.rho;
            if let Some(s) = extra.transport {
                src += s(t_next, x);
            }
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += wq * theta_new_q / dt * lambda[i] * lambda[j];
                    local[i][j] -= wq * lambda[j] * v.dot(grads[i]);
                }
                local_rhs[i] += wq * (theta_old_q * u_old_q / dt * lambda[i] + src * lambda[i]);
            }
        }
        for (i, &di) in dofs.iter().enumerate() {
            let ri = match map.status[di] {
                DofStatus::Free(r) => r,
                DofStatus::Fixed(_) => continue,
            };
            rhs[ri] += local_rhs[i];
            for (j, &dj) in dofs.iter().enumerate() {
                match map.status[dj] {
                    DofStatus::Free(rj) => triplets.push((ri, rj, local[i][j])),
                    DofStatus::Fixed(v0) => rhs[ri] -= local[i][j] * v0,
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n_red, n_red, triplets);
    let (x, solver_residual) = crate::sparse::solve_banded(&a, &rhs, tol)?;
    state.u0 = map.expand(&x);
    Ok(TransportReport {
        solver_residual,
        max_peclet,
    })
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_r: f64,
    pub max_r: f64,
    pub balance_residual: f64,
    pub clamps: usize,
}

/// Simulation setup, already resolved against the mesh and table.
pub struct RunSetup {
    pub mesh: Arc<PeriodicMesh>,
    pub table: Arc<CoefficientTable>,
    pub physics: PhysicsFunctions,
    pub r_bounds: (f64, f64),
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
    pub solver_tol: f64,
    /// Baseline mode for the code-path equivalence check: skip the radius
    /// update entirely (porosity frozen at its initial state).
    pub skip_radius_update: bool,
    /// Where to dump the last consistent state if a sub-step fails.
    pub failure_dump: Option<std::path::PathBuf>,
}

/// Trajectory of the coupled run.
pub struct RunResult {
    pub snapshots: Vec<MacroState>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub final_state: MacroState,
    pub max_peclet: f64,
    pub total_clamps: usize,
}

/// Run the coupled time loop; per step: radius ODE, coefficient
/// interpolation, Darcy solve, transport step.
pub fn run_simulation(
    setup: &RunSetup,
    initial: MacroState,
    extra: &ExtraSources<'_>,
) -> Result<RunResult> {
    let n_steps = (setup.t_end / setup.dt).round() as usize;
    if n_steps == 0 || (setup.t_end - n_steps as f64 * setup.dt).abs() > 1e-9 * setup.t_end {
        return Err(Error::Config(format!(
            "time horizon {} is not an integer multiple of dt = {}",
            setup.t_end, setup.dt
        )));
    }
    let mesh = &setup.mesh;
    let (r_min, r_max) = setup.r_bounds;
    let mut state = initial;
    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::with_capacity(n_steps);
    let mut max_peclet = 0.0f64;
    let mut total_clamps = 0usize;
    if setup.snapshot_every > 0 {
        snapshots.push(state.clone());
    }
    for step in 1..=n_steps {
        let t_next = step as f64 * setup.dt;
        let theta_old = state.theta.clone();
        let u_old = state.u0.clone();
        let clamps = if setup.skip_radius_update {
            for k in 0..state.dtheta_dt.len() {
                state.dtheta_dt[k] = 0.0;
            }
            0
        } else {
            match step_radius(&mut state, setup.dt, &setup.physics, r_min, r_max) {
                Ok(c) => c,
                Err(e) => return Err(step_failure(setup, mesh, &state, step, e)),
            }
        };
        total_clamps += clamps;
        let darcy = match solve_darcy(
            mesh,
            &mut state,
            &setup.table,
            &setup.physics,
            t_next,
            setup.solver_tol,
            extra,
        ) {
            Ok(r) => r,
            Err(e) => return Err(step_failure(setup, mesh, &state, step, e)),
        };
        let transport = match step_transport(
            mesh,
            &mut state,
            &theta_old,
            &setup.table,
            &setup.physics,
            setup.dt,
            t_next,
            setup.solver_tol,
            extra,
        ) {
            Ok(r) => r,
            Err(e) => return Err(step_failure(setup, mesh, &state, step, e)),
        };
        state.time = t_next;
        max_peclet = max_peclet.max(transport.max_peclet);
        let balance = balance_residual(
            mesh,
            &state,
            &theta_old,
            &u_old,
            &setup.table,
            &setup.physics,
            setup.dt,
            t_next,
            extra,
        );
        let _ = darcy;
        diagnostics.push(DiagnosticsRow {
            t: t_next,
            min_u: state.u0.iter().cloned().fold(f64::INFINITY, f64::min),
            max_u: state.u0.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            min_r: state.r0.iter().cloned().fold(f64::INFINITY, f64::min),
            max_r: state.r0.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            balance_residual: balance,
            clamps,
        });
        if setup.snapshot_every > 0 && step % setup.snapshot_every == 0 {
            snapshots.push(state.clone());
        }
    }
    Ok(RunResult {
        snapshots,
        diagnostics,
        final_state: state,
        max_peclet,
        total_clamps,
    })
}

/// Wrap a sub-step failure with its step index, dumping the last
/// consistent state next to the trajectory outputs when configured.
fn step_failure(
    setup: &RunSetup,
    mesh: &PeriodicMesh,
    state: &MacroState,
    step: usize,
    e: Error,
) -> Error {
    let message = match e {
        Error::MacroStep { message, .. } => message,
        other => other.to_string(),
    };
    let dumped = setup
        .failure_dump
        .as_ref()
        .and_then(|dir| crate::output::write_failure_state(dir, mesh, state).ok());
    let message = match dumped {
        Some(path) => format!("{message}; state dumped to {}", path.display()),
        None => message,
    };
    Error::MacroStep { step, message }
}

/// Discrete global balance estimate:
/// `|d/dt int theta u - boundary flux - int (theta f + dtheta rho)|`, with
/// the boundary flux integrated independently from element gradients over
/// boundary edges.
#[allow(clippy::too_many_arguments)]
fn balance_residual(
    mesh: &PeriodicMesh,
    state: &MacroState,
    theta_old: &[f64],
    u_old: &[f64],
    table: &CoefficientTable,
    physics: &PhysicsFunctions,
    dt: f64,
    t_next: f64,
    extra: &ExtraSources<'_>,
) -> f64 {
    // d/dt int theta u
    let mut mass_new = 0.0;
    let mut mass_old = 0.0;
    let mut sources = 0.0;
    for e in 0..mesh.n_elements() {
        let (area, _, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        for (lambda, w) in QUAD_DEG4 {
            let wq = w * area;
            let theta_new_q: f64 = (0..3).map(|i| lambda[i] * state.theta[dofs[i]]).sum();
            let theta_old_q: f64 = (0..3).map(|i| lambda[i] * theta_old[dofs[i]]).sum();
            let u_new_q: f64 = (0..3).map(|i| lambda[i] * state.u0[dofs[i]]).sum();
            let u_old_q: f64 = (0..3).map(|i| lambda[i] * u_old[dofs[i]]).sum();
            let f_old_q: f64 = (0..3)
                .map(|i| lambda[i] * physics.f.eval(u_old[dofs[i]]))
                .sum();
            let dtheta_q: f64 = (0..3).map(|i| lambda[i] * state.dtheta_dt[dofs[i]]).sum();
            mass_new += wq * theta_new_q * u_new_q;
            mass_old += wq * theta_old_q * u_old_q;
            let x = crate::fem::barycentric_point(&pts, &lambda);
            sources += wq * (theta_new_q * f_old_q + dtheta_q * physics.rho);
            if let Some(s) = extra.transport {
                sources += wq * s(t_next, x);
            }
        }
    }
    // boundary flux of D* grad u - u v* (u = 0 on the boundary kills the
    // advective part)
    let mut flux = 0.0;
    let elem_of_edge: HashMap<(usize, usize), usize> = (0..mesh.n_elements())
        .flat_map(|e| {
            let el = mesh.elements[e];
            (0..3).map(move |k| {
                let (a, b) = (el[k], el[(k + 1) % 3]);
                ((a.min(b), a.max(b)), e)
            })
        })
        .collect();
    for &(a, b, tag) in &mesh.boundary_edges {
        if tag != BoundaryTag::Outer {
            continue;
        }
        let Some(&e) = elem_of_edge.get(&(a.min(b), a.max(b))) else {
            continue;
        };
        let (_, grads, _) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let grad_u = grads[0] * state.u0[dofs[0]]
            + grads[1] * state.u0[dofs[1]]
            + grads[2] * state.u0[dofs[2]];
        let edge = mesh.nodes[b] - mesh.nodes[a];
        let len = edge.norm();
        // outward normal: perpendicular pointing away from the centroid
        let mut n = Vec2::new(edge.y, -edge.x) * (1.0 / len);
        let mid = (mesh.nodes[a] + mesh.nodes[b]) * 0.5;
        if (mesh.element_centroid(e) - mid).dot(n) > 0.0 {
            n = -n;
        }
        let r_c = (state.r0[dofs[0]] + state.r0[dofs[1]] + state.r0[dofs[2]]) / 3.0;
        let dstar = table.interpolate(r_c).map(|c| c.dstar).unwrap_or(0.0);
        flux += len * dstar * grad_u.dot(n);
    }
    ((mass_new - mass_old) / dt - flux - sources).abs()
}

/// A bank of fixed-cell solutions at sampled radii for micro-field
/// reconstruction.
pub struct CellBankEntry {
    pub transform: CellTransform,
    pub stokes: StokesCellSolution,
    pub diffusion: DiffusionCellSolution,
}

/// Reconstructed cell fields at one macro point.
pub struct MicroFields {
    /// Superposed Stokes velocity `w0 = sum_i (h0 - grad p0)_i w_i`
    /// (P2 vector values on the bank's reference mesh).
    pub w0: Vec<f64>,
    /// Cell pressure `q1 = (psi - y) . h0 + sum_i (h0 - grad p0)_i pi_i`
    /// (P1 values).
    pub q1: Vec<f64>,
    /// First-order corrector expansion `u1 = sum_i d_i u0 chi_i`
    /// (P1 values).
    pub u1: Vec<f64>,
    /// Superposition witness: `int A0 w0 dy` over the cell.
    pub cell_flux: Vec2,
    /// The same flux predicted by the permeability tensor, `K* (h0-grad p0)`.
    pub kstar_flux: Vec2,
    pub bank_radius: f64,
}

/// Reconstruct the micro-scale fields at a macro point from the nearest
/// sampled cell solutions.
pub fn reconstruct_micro_fields(
    mesh: &PeriodicMesh,
    state: &MacroState,
    bank: &[CellBankEntry],
    point: Vec2,
    physics: &PhysicsFunctions,
    t: f64,
) -> Result<MicroFields> {
    let e = locate_element(mesh, point).ok_or_else(|| Error::MacroStep {
        step: 0,
        message: format!("point ({}, {}) outside the macro domain", point.x, point.y),
    })?;
    let (_, grads, _) = p1_element(mesh, e);
    let dofs = mesh.elements[e];
    let grad_p = grads[0] * state.p0[dofs[0]]
        + grads[1] * state.p0[dofs[1]]
        + grads[2] * state.p0[dofs[2]];
    let grad_u = grads[0] * state.u0[dofs[0]]
        + grads[1] * state.u0[dofs[1]]
        + grads[2] * state.u0[dofs[2]];
    let r_local = {
        let bary = barycentric_of(mesh, e, point);
        bary[0] * state.r0[dofs[0]] + bary[1] * state.r0[dofs[1]] + bary[2] * state.r0[dofs[2]]
    };
    let h0 = physics.h0.eval(t, point);
    let g = h0 - grad_p;
    let entry = bank
        .iter()
        .min_by(|a, b| {
            (a.transform.radius - r_local)
                .abs()
                .partial_cmp(&(b.transform.radius - r_local).abs())
                .unwrap()
        })
        .ok_or_else(|| Error::MacroStep {
            step: 0,
            message: "empty cell bank".into(),
        })?;
    let cell_mesh = &entry.stokes.velocities[0].mesh;
    let n_p2 = entry.stokes.velocities[0].values.len() / 2;
    let mut w0 = vec![0.0; 2 * n_p2];
    for d in 0..2 * n_p2 {
        w0[d] = g.x * entry.stokes.velocities[0].values[d] + g.y * entry.stokes.velocities[1].values[d];
    }
    let mut q1 = vec![0.0; cell_mesh.n_nodes()];
    let mut u1 = vec![0.0; cell_mesh.n_nodes()];
    for k in 0..cell_mesh.n_nodes() {
        let y = cell_mesh.nodes[k];
        let psi_y = entry.transform.psi(y).unwrap_or(y);
        q1[k] = (psi_y - y).dot(h0)
            + g.x * entry.stokes.pressures[0].values[k]
            + g.y * entry.stokes.pressures[1].values[k];
        u1[k] = grad_u.x * entry.diffusion.correctors[0].values[k]
            + grad_u.y * entry.diffusion.correctors[1].values[k];
    }
    let cell_flux = cell_average_flux(&entry.transform, &entry.stokes, g)?;
    let kstar_flux = entry.stokes.kstar_flux.mul_vec(g);
    Ok(MicroFields {
        w0,
        q1,
        u1,
        cell_flux,
        kstar_flux,
        bank_radius: entry.transform.radius,
    })
}

fn barycentric_of(mesh: &PeriodicMesh, e: usize, p: Vec2) -> [f64; 3] {
    let [a, b, c] = mesh.elements[e];
    let (pa, pb, pc) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
    let area = crate::mesh::triangle_area(pa, pb, pc);
    [
        crate::mesh::triangle_area(p, pb, pc) / area,
        crate::mesh::triangle_area(pa, p, pc) / area,
        crate::mesh::triangle_area(pa, pb, p) / area,
    ]
}

fn locate_element(mesh: &PeriodicMesh, p: Vec2) -> Option<usize> {
    for e in 0..mesh.n_elements() {
        let bary = barycentric_of(mesh, e, p);
        if bary.iter().all(|l| *l >= -1e-12) {
            return Some(e);
        }
    }
    None
}
