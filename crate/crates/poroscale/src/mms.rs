//! Manufactured-solution convergence studies for the macroscopic solvers:
//! Darcy (spatial), heat/transport (spatial and temporal) and the fully
//! coupled system (temporal, against a fine-time-step reference).
//!
//! Manufactured coefficients go through the same table-interpolation path
//! the production solver uses, so the studies measure the discretization
//! actually shipped, not an idealized one.

use crate::cell::Formulation;
use crate::error::Result;
use crate::fem::l2_error_p1;
use crate::geometry::porosity_of_radius;
use crate::la::{Mat2, Vec2};
use crate::macrosim::{run_simulation, solve_darcy, ExtraSources, MacroState, RunSetup};
use crate::mesh::gen_macro_mesh;
use crate::physics::{
    BodyForce, BoundaryPressure, PhysicsFunctions, ReactionRate, SurfaceRate,
};
use crate::table::{build_table, CoefficientTable, MicrostructureParams};
use std::sync::Arc;

const PI: f64 = std::f64::consts::PI;

/// One refinement study: (resolution parameter, error) pairs and the
/// observed orders between consecutive levels.
pub struct ConvergenceReport {
    pub case: String,
    pub levels: Vec<(f64, f64)>,
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    fn from_errors(case: &str, params: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors
            .windows(2)
            .zip(params.windows(2))
            .map(|(e, p)| (e[0] / e[1]).log2() / (p[0] / p[1]).log2())
            .collect();
        ConvergenceReport {
            case: case.to_string(),
            levels: params.into_iter().zip(errors).collect(),
            orders,
        }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Small coefficient table shared by the studies (moving formulation,
/// modest cell resolution: the studies measure macro discretization).
pub fn mms_table() -> Result<CoefficientTable> {
    let params = MicrostructureParams {
        r_min: 0.1,
        r_max: 0.25,
        diffusion: Mat2::IDENTITY,
        n_samples: 5,
        cell_resolution: 16,
        formulation: Formulation::Moving,
    };
    Ok(build_table(&params, None, 1e-10)?.0)
}

fn quiet_physics(table: &CoefficientTable) -> PhysicsFunctions {
    let _ = table;
    PhysicsFunctions {
        f: ReactionRate::Zero,
        g: SurfaceRate::Zero,
        h0: BodyForce::Zero,
        p_b: BoundaryPressure::Zero,
        rho: 0.0,
        diffusion: Mat2::IDENTITY,
        c_g: 0.0,
        l_g: 0.0,
    }
}

/// Darcy pressure study: `p = sin(pi x) sin(pi y)` on the unit square with
/// uniform radius, manufactured compressibility source.
pub fn mms_darcy(table: &CoefficientTable, resolutions: &[usize]) -> Result<ConvergenceReport> {
    let r_uniform = 0.18;
    let kstar = table.interpolate(r_uniform)?.kstar;
    let exact = move |p: Vec2| (PI * p.x).sin() * (PI * p.y).sin();
    let source = move |_t: f64, p: Vec2| 2.0 * PI * PI * kstar * exact(p);
    let physics = quiet_physics(table);
    let mut errors = Vec::new();
    let mut hs = Vec::new();
    for &n in resolutions {
        let mesh = Arc::new(gen_macro_mesh([0.0, 0.0, 1.0, 1.0], n, n)?);
        let mut state = MacroState::new(
            &mesh,
            vec![0.0; mesh.n_nodes()],
            vec![r_uniform; mesh.n_nodes()],
        );
        let extra = ExtraSources {
            darcy: Some(&source),
            transport: None,
        };
        solve_darcy(&mesh, &mut state, table, &physics, 0.0, 1e-11, &extra)?;
        errors.push(l2_error_p1(&mesh, &state.p0, &exact));
        hs.push(1.0 / n as f64);
    }
    Ok(ConvergenceReport::from_errors("darcy", hs, errors))
}

fn heat_exact(t: f64, p: Vec2) -> f64 {
    (-t).exp() * (PI * p.x).sin() * (PI * p.y).sin()
}

/// Heat study (fixed porosity, no flow): implicit Euler + P1, with source
/// manufactured for `u = e^{-t} sin(pi x) sin(pi y)`.
///
/// `spatial = true` refines the mesh with `dt ~ h^2`; otherwise the mesh is
/// fixed and `dt` halves, with errors measured against a reference run at
/// `dt/16` so the spatial error cancels.
pub fn mms_heat(
    table: &CoefficientTable,
    spatial: bool,
    include_advection_reaction: bool,
) -> Result<ConvergenceReport> {
    let r_uniform = 0.18;
    let coeffs = table.interpolate(r_uniform)?;
    let theta = porosity_of_radius(r_uniform).theta;
    let dstar = coeffs.dstar;
    let kstar = coeffs.kstar;
    let (adv_amp, react_c1) = if include_advection_reaction {
        (0.4, -0.5)
    } else {
        (0.0, 0.0)
    };
    let velocity = move |p: Vec2| {
        Vec2::new(
            adv_amp * kstar * (std::f64::consts::TAU * p.y).sin(),
            0.0,
        )
    };
    let source = move |t: f64, p: Vec2| {
        let u = heat_exact(t, p);
        let grad = Vec2::new(
            (-t).exp() * PI * (PI * p.x).cos() * (PI * p.y).sin(),
            (-t).exp() * PI * (PI * p.x).sin() * (PI * p.y).cos(),
        );
        theta * (-u) + dstar * 2.0 * PI * PI * u + velocity(p).dot(grad)
            - theta * (react_c1 * u)
    };
    let mut physics = quiet_physics(table);
    if include_advection_reaction {
        physics.f = ReactionRate::Linear { c0: 0.0, c1: react_c1 };
        physics.h0 = BodyForce::Solenoidal { ax: adv_amp, ay: 0.0 };
    }
    let run = |n: usize, steps: usize, t_end: f64| -> Result<(Arc<crate::mesh::PeriodicMesh>, Vec<f64>)> {
        let mesh = Arc::new(gen_macro_mesh([0.0, 0.0, 1.0, 1.0], n, n)?);
        let u0: Vec<f64> = mesh.nodes.iter().map(|p| heat_exact(0.0, *p)).collect();
        let state = MacroState::new(&mesh, u0, vec![r_uniform; mesh.n_nodes()]);
        let setup = RunSetup {
            mesh: mesh.clone(),
            table: Arc::new(table.clone()),
            physics: physics.clone(),
            r_bounds: (table.r_min(), table.r_max()),
            dt: t_end / steps as f64,
            t_end,
            snapshot_every: 0,
            solver_tol: 1e-11,
            skip_radius_update: false,
            failure_dump: None,
        };
        let extra = ExtraSources {
            darcy: None,
            transport: Some(&source),
        };
        let result = run_simulation(&setup, state, &extra)?;
        Ok((mesh, result.final_state.u0))
    };
    if spatial {
        let t_end = 0.1;
        let mut errors = Vec::new();
        let mut hs = Vec::new();
        for (n, steps) in [(8usize, 4usize), (16, 16), (32, 64)] {
            let (mesh, u) = run(n, steps, t_end)?;
            errors.push(l2_error_p1(&mesh, &u, &|p| heat_exact(t_end, p)));
            hs.push(1.0 / n as f64);
        }
        Ok(ConvergenceReport::from_errors(
            if include_advection_reaction { "transport-spatial" } else { "heat-spatial" },
            hs,
            errors,
        ))
    } else {
        let t_end = 0.4;
        let n = 32;
        let dts = [16usize, 32, 64];
        let (mesh, u_ref) = run(n, 64 * 16, t_end)?;
        let mut errors = Vec::new();
        let mut dt_vals = Vec::new();
        for steps in dts {
            let (_, u) = run(n, steps, t_end)?;
            let diff: Vec<f64> = u.iter().zip(&u_ref).map(|(a, b)| a - b).collect();
            errors.push(crate::fem::l2_norm_p1(&mesh, &diff));
            dt_vals.push(t_end / steps as f64);
        }
        Ok(ConvergenceReport::from_errors(
            if include_advection_reaction { "transport-temporal" } else { "heat-temporal" },
            dt_vals,
            errors,
        ))
    }
}

/// Fully coupled study: radius ODE active (linear relaxation, closed-form
/// radius), Darcy with manufactured compressibility source so the exact
/// pressure vanishes, advective transport with all terms on, temporal order
/// against a fine-time-step reference at fixed mesh.
pub fn mms_coupled(table: &CoefficientTable) -> Result<ConvergenceReport> {
    let (kappa, r_mid, r_init) = (1.5, 0.16, 0.22);
    let rho = 0.3;
    let adv = 0.4;
    let theta_e = move |t: f64| porosity_of_radius(radius_exact(t, kappa, r_mid, r_init)).theta;
    let _ = theta_e;
    let table_arc = Arc::new(table.clone());
    let physics = PhysicsFunctions {
        f: ReactionRate::Linear { c0: 0.0, c1: -0.5 },
        g: SurfaceRate::LinearRelaxation { kappa, r_mid },
        h0: BodyForce::Solenoidal { ax: adv, ay: 0.0 },
        p_b: BoundaryPressure::Zero,
        rho,
        diffusion: Mat2::IDENTITY,
        c_g: kappa * (r_init - r_mid).abs().max(0.1),
        l_g: kappa,
    };
    // Darcy source cancelling the porosity change, so p = 0 exactly and
    // v* = k*(R(t)) h0
    let darcy_source = move |t: f64, _p: Vec2| {
        let r = radius_exact(t, kappa, r_mid, r_init);
        let g = kappa * (r_mid - r);
        2.0 * PI * r * g // = -dtheta/dt
    };
    let table_for_source = table.clone();
    let transport_source = move |t: f64, p: Vec2| {
        let r = radius_exact(t, kappa, r_mid, r_init);
        let por = porosity_of_radius(r);
        let g = kappa * (r_mid - r);
        let dtheta = -por.surface * g;
        let c = table_for_source.interpolate(r).expect("radius in range");
        let u = heat_exact(t, p);
        let grad = Vec2::new(
            (-t).exp() * PI * (PI * p.x).cos() * (PI * p.y).sin(),
            (-t).exp() * PI * (PI * p.x).sin() * (PI * p.y).cos(),
        );
        let v = Vec2::new(adv * c.kstar * (std::f64::consts::TAU * p.y).sin(), 0.0);
        // d/dt(theta u) + div(u v - D* grad u) - theta f - dtheta rho
        dtheta * u + por.theta * (-u) + c.dstar * 2.0 * PI * PI * u + v.dot(grad)
            - por.theta * (-0.5 * u)
            - dtheta * rho
    };
    let t_end = 0.4;
    let n = 32;
    let mesh = Arc::new(gen_macro_mesh([0.0, 0.0, 1.0, 1.0], n, n)?);
    let run = |steps: usize| -> Result<Vec<f64>> {
        let u0: Vec<f64> = mesh.nodes.iter().map(|p| heat_exact(0.0, *p)).collect();
        let state = MacroState::new(&mesh, u0, vec![r_init; mesh.n_nodes()]);
        let setup = RunSetup {
            mesh: mesh.clone(),
            table: table_arc.clone(),
            physics: physics.clone(),
            r_bounds: (table_arc.r_min(), table_arc.r_max()),
            dt: t_end / steps as f64,
            t_end,
            snapshot_every: 0,
            solver_tol: 1e-11,
            skip_radius_update: false,
            failure_dump: None,
        };
        let extra = ExtraSources {
            darcy: Some(&darcy_source),
            transport: Some(&transport_source),
        };
        Ok(run_simulation(&setup, state, &extra)?.final_state.u0)
    };
    let u_ref = run(64 * 16)?;
    let mut errors = Vec::new();
    let mut dts = Vec::new();
    for steps in [16usize, 32, 64] {
        let u = run(steps)?;
        let diff: Vec<f64> = u.iter().zip(&u_ref).map(|(a, b)| a - b).collect();
        errors.push(crate::fem::l2_norm_p1(&mesh, &diff));
        dts.push(t_end / steps as f64);
    }
    Ok(ConvergenceReport::from_errors("coupled-temporal", dts, errors))
}

fn radius_exact(t: f64, kappa: f64, r_mid: f64, r_init: f64) -> f64 {
    r_mid + (r_init - r_mid) * (-kappa * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darcy_mms_second_order() {
        let table = mms_table().unwrap();
        let report = mms_darcy(&table, &[8, 16, 32]).unwrap();
        assert!(
            report.min_order() >= 1.9,
            "darcy orders {:?}, errors {:?}",
            report.orders,
            report.levels
        );
    }

    #[test]
    fn heat_mms_spatial_order() {
        let table = mms_table().unwrap();
        let report = mms_heat(&table, true, false).unwrap();
        assert!(
            report.min_order() >= 1.9,
            "heat spatial orders {:?}, errors {:?}",
            report.orders,
            report.levels
        );
    }

    #[test]
    fn heat_mms_temporal_order() {
        let table = mms_table().unwrap();
        let report = mms_heat(&table, false, false).unwrap();
        assert!(
            report.min_order() >= 0.9,
            "heat temporal orders {:?}, errors {:?}",
            report.orders,
            report.levels
        );
    }

    #[test]
    fn transport_mms_spatial_order() {
        let table = mms_table().unwrap();
        let report = mms_heat(&table, true, true).unwrap();
        assert!(
            report.min_order() >= 1.9,
            "transport spatial orders {:?}, errors {:?}",
            report.orders,
            report.levels
        );
    }

    #[test]
    fn coupled_mms_temporal_order() {
        let table = mms_table().unwrap();
        let report = mms_coupled(&table).unwrap();
        assert!(
            report.min_order() >= 0.9,
            "coupled temporal orders {:?}, errors {:?}",
            report.orders,
            report.levels
        );
    }
}
