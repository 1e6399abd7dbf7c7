//! Acceptance suite: every numerically testable identity of the
//! construction, at the stated tolerances. One criterion per test, one
//! printed pass line each (run with `--nocapture` to see them all).

use poroscale::cell::{
    corrector_correspondence, scalar_reduction, solve_diffusion_cell, solve_stokes_cell,
    Formulation,
};
use poroscale::geometry::{tensor_floor_sweep, CellTransform};
use poroscale::la::{Mat2, Vec2};
use poroscale::macrosim::{run_simulation, solve_darcy, ExtraSources, MacroState};
use poroscale::mesh::{gen_cell_mesh, gen_macro_mesh, map_mesh};
use poroscale::mms;
use poroscale::physics::{BodyForce, BoundaryPressure, PhysicsFunctions, ReactionRate, SurfaceRate};
use poroscale::table::{build_table, MicrostructureParams};
use poroscale::verify::{identity_sweep, smoke_setup, SOLVER_TOL};
use std::sync::Arc;
use std::time::Instant;

const R_MIN: f64 = 0.1;
const R_MAX: f64 = 0.25;

fn pass(criterion: usize, name: &str, detail: String) {
    println!("acceptance {criterion:02} {name}: {detail} PASS");
}

fn default_table(
    resolution: usize,
    n_samples: usize,
) -> (
    poroscale::table::CoefficientTable,
    Vec<poroscale::table::SampleDiagnostics>,
) {
    let params = MicrostructureParams {
        r_min: R_MIN,
        r_max: R_MAX,
        diffusion: Mat2::IDENTITY,
        n_samples,
        cell_resolution: resolution,
        formulation: Formulation::Moving,
    };
    build_table(&params, None, SOLVER_TOL).unwrap()
}

#[test]
fn criterion_01_piola_identity() {
    let start = Instant::now();
    // 36^2 grid minus the obstacle leaves just over 10^3 points, times
    // three radii
    let (piola, _) = identity_sweep(36, 1e-5).unwrap();
    let elapsed = start.elapsed();
    assert!(piola <= 1e-6, "max Piola residual {piola:e}");
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:.2?}");
    pass(1, "piola identity", format!("max residual {piola:.2e} <= 1e-6 in {elapsed:.2?}"));
}

#[test]
fn criterion_02_rhs_identity() {
    let start = Instant::now();
    let (_, rhs) = identity_sweep(36, 1e-5).unwrap();
    let elapsed = start.elapsed();
    assert!(rhs <= 1e-6, "max force-identity residual {rhs:e}");
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:.2?}");
    pass(2, "transformed force identity", format!("max residual {rhs:.2e} <= 1e-6 in {elapsed:.2?}"));
}

#[test]
fn criterion_03_jacobian_floor_and_coercivity() {
    let coarse = tensor_floor_sweep(R_MIN, R_MAX, Mat2::IDENTITY, 11, 128).unwrap();
    let fine = tensor_floor_sweep(R_MIN, R_MAX, Mat2::IDENTITY, 11, 256).unwrap();
    assert!(coarse.min_jacobian > 0.0);
    assert!(coarse.min_d0_eigenvalue > 0.0);
    let dj = (coarse.min_jacobian - fine.min_jacobian).abs() / coarse.min_jacobian;
    let da = (coarse.min_d0_eigenvalue - fine.min_d0_eigenvalue).abs() / coarse.min_d0_eigenvalue;
    assert!(dj <= 0.10, "Jacobian floor unstable: {dj}");
    assert!(da <= 0.10, "coercivity floor unstable: {da}");
    pass(
        3,
        "jacobian floor and coercivity",
        format!(
            "c_J = {:.4} (drift {:.1}%), alpha = {:.4} (drift {:.1}%)",
            coarse.min_jacobian,
            100.0 * dj,
            coarse.min_d0_eigenvalue,
            100.0 * da
        ),
    );
}

#[test]
fn criterion_04_isotropy_and_refinement_reduction() {
    let start = Instant::now();
    let radii = [R_MIN, 0.5 * (R_MIN + R_MAX), R_MAX];
    let mut max_aniso = [[0.0f64; 2]; 2]; // [level][d or k]
    for (lvl, res) in [64usize, 128].into_iter().enumerate() {
        let reference = Arc::new(gen_cell_mesh(R_MAX, res).unwrap());
        for &r in &radii {
            let t = CellTransform::unit_diffusion(r, R_MIN, R_MAX).unwrap();
            let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
            let d = solve_diffusion_cell(&t, &mapped, Formulation::Moving, SOLVER_TOL).unwrap();
            let s = solve_stokes_cell(&t, &mapped, Formulation::Moving, SOLVER_TOL).unwrap();
            max_aniso[lvl][0] = max_aniso[lvl][0].max(scalar_reduction(&d.dstar).1);
            max_aniso[lvl][1] = max_aniso[lvl][1].max(scalar_reduction(&s.kstar_flux.sym()).1);
        }
    }
    let elapsed = start.elapsed();
    assert!(max_aniso[0][0] <= 0.01, "aniso_d at h=1/64: {}", max_aniso[0][0]);
    assert!(max_aniso[0][1] <= 0.01, "aniso_k at h=1/64: {}", max_aniso[0][1]);
    assert!(
        max_aniso[1][0] * 2.0 <= max_aniso[0][0],
        "aniso_d reduction {} -> {}",
        max_aniso[0][0],
        max_aniso[1][0]
    );
    assert!(
        max_aniso[1][1] * 2.0 <= max_aniso[0][1],
        "aniso_k reduction {} -> {}",
        max_aniso[0][1],
        max_aniso[1][1]
    );
    assert!(elapsed.as_secs_f64() < 180.0, "runtime {elapsed:.2?}");
    pass(
        4,
        "isotropy",
        format!(
            "aniso_d {:.2e} -> {:.2e}, aniso_k {:.2e} -> {:.2e} under refinement, {elapsed:.1?}",
            max_aniso[0][0], max_aniso[1][0], max_aniso[0][1], max_aniso[1][1]
        ),
    );
}

#[test]
fn criterion_05_dual_permeability_formulas() {
    let (_, diags) = default_table(32, 9);
    let worst = diags.iter().map(|d| d.dual_gap_k).fold(0.0, f64::max);
    assert!(
        worst <= 10.0 * SOLVER_TOL,
        "dual permeability gap {worst:e} exceeds 10 x solver tolerance"
    );
    pass(
        5,
        "dual permeability formulas",
        format!("max energy/flux gap {worst:.2e} <= {:.0e} over 9 radii", 10.0 * SOLVER_TOL),
    );
}

#[test]
fn criterion_06_formulation_equivalence() {
    let r = 0.2;
    let t = CellTransform::unit_diffusion(r, R_MIN, R_MAX).unwrap();
    let mut gaps = Vec::new();
    for res in [32usize, 64] {
        let reference = Arc::new(gen_cell_mesh(R_MAX, res).unwrap());
        let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
        let df = solve_diffusion_cell(&t, &reference, Formulation::Fixed, SOLVER_TOL).unwrap();
        let dm = solve_diffusion_cell(&t, &mapped, Formulation::Moving, SOLVER_TOL).unwrap();
        let sf = solve_stokes_cell(&t, &reference, Formulation::Fixed, SOLVER_TOL).unwrap();
        let sm = solve_stokes_cell(&t, &mapped, Formulation::Moving, SOLVER_TOL).unwrap();
        let gap_d = df.dstar.sub_mat(&dm.dstar).frob_norm() / dm.dstar.frob_norm();
        let gap_k =
            sf.kstar_flux.sub_mat(&sm.kstar_flux).frob_norm() / sm.kstar_flux.frob_norm();
        gaps.push((gap_d, gap_k));
    }
    assert!(gaps[1].0 <= 0.02, "D* gap at h=1/64: {}", gaps[1].0);
    assert!(gaps[1].1 <= 0.02, "K* gap at h=1/64: {}", gaps[1].1);
    assert!(gaps[1].0 < gaps[0].0, "D* gap does not shrink: {gaps:?}");
    assert!(gaps[1].1 < gaps[0].1, "K* gap does not shrink: {gaps:?}");
    pass(
        6,
        "fixed/moving equivalence",
        format!(
            "D* gap {:.2e} -> {:.2e}, K* gap {:.2e} -> {:.2e}",
            gaps[0].0, gaps[1].0, gaps[0].1, gaps[1].1
        ),
    );
}

#[test]
fn criterion_07_corrector_correspondence() {
    let t = CellTransform::unit_diffusion(0.15, R_MIN, R_MAX).unwrap();
    let mut mismatches = Vec::new();
    for res in [32usize, 64] {
        let reference = Arc::new(gen_cell_mesh(R_MAX, res).unwrap());
        let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
        let fixed = solve_diffusion_cell(&t, &reference, Formulation::Fixed, SOLVER_TOL).unwrap();
        let moving = solve_diffusion_cell(&t, &mapped, Formulation::Moving, SOLVER_TOL).unwrap();
        mismatches.push(corrector_correspondence(&fixed, &moving, &t).unwrap().max());
    }
    assert!(mismatches[1] <= 0.02, "mismatch at h=1/64: {}", mismatches[1]);
    assert!(
        mismatches[1] < mismatches[0],
        "mismatch does not shrink: {mismatches:?}"
    );
    pass(
        7,
        "corrector correspondence",
        format!("normalized L2 mismatch {:.3} -> {:.3}", mismatches[0], mismatches[1]),
    );
}

#[test]
fn criterion_08_voigt_bound() {
    let (table, diags) = default_table(32, 9);
    let mut min_margin = f64::INFINITY;
    for d in &diags {
        let theta = poroscale::geometry::porosity_of_radius(d.r).theta;
        let interior = d.r > table.r_min() + 1e-12 && d.r < table.r_max() - 1e-12;
        for xi in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0)] {
            let margin = theta * xi.dot(xi) - d.dstar.quad_form(xi);
            assert!(
                margin >= 0.0 && (!interior || margin > 0.0),
                "Voigt bound violated at R = {}: margin {margin}",
                d.r
            );
            min_margin = min_margin.min(margin / (theta * xi.dot(xi)));
        }
    }
    pass(
        8,
        "Voigt bound",
        format!("min relative margin {min_margin:.3} over 9 radii x 3 directions"),
    );
}

#[test]
fn criterion_09_darcy_exact_cases() {
    let (table, _) = default_table(16, 5);
    let mesh = Arc::new(gen_macro_mesh([0.0, 0.0, 1.0, 1.0], 16, 16).unwrap());
    let quiet = PhysicsFunctions {
        f: ReactionRate::Zero,
        g: SurfaceRate::Zero,
        h0: BodyForce::Zero,
        p_b: BoundaryPressure::Constant { c: 1.7 },
        rho: 0.0,
        diffusion: Mat2::IDENTITY,
        c_g: 0.0,
        l_g: 0.0,
    };
    let mut state = MacroState::new(&mesh, vec![0.0; mesh.n_nodes()], vec![0.2; mesh.n_nodes()]);
    solve_darcy(&mesh, &mut state, &table, &quiet, 0.0, SOLVER_TOL, &ExtraSources::default())
        .unwrap();
    let max_v = state.vstar.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let max_dp = state.p0.iter().map(|p| (p - 1.7).abs()).fold(0.0, f64::max);
    assert!(max_v <= 1e-8, "v* should vanish: {max_v:e}");
    assert!(max_dp <= 1e-8, "p should be constant: {max_dp:e}");

    let forced = PhysicsFunctions {
        h0: BodyForce::Constant { x: 1.0, y: -0.5 },
        p_b: BoundaryPressure::Zero,
        ..quiet
    };
    let mut state = MacroState::new(&mesh, vec![0.0; mesh.n_nodes()], vec![0.2; mesh.n_nodes()]);
    solve_darcy(&mesh, &mut state, &table, &forced, 0.0, SOLVER_TOL, &ExtraSources::default())
        .unwrap();
    let k = table.interpolate(0.2).unwrap().kstar;
    let expect = Vec2::new(k, -0.5 * k);
    let worst = state
        .vstar
        .iter()
        .map(|v| (*v - expect).norm() / expect.norm())
        .fold(0.0, f64::max);
    assert!(worst <= 0.005, "constant-forcing velocity off by {worst}");
    pass(
        9,
        "Darcy exact cases",
        format!("trivial case |v*| {max_v:.1e}, constant forcing deviation {worst:.2e}"),
    );
}

#[test]
fn criterion_10_mms_orders() {
    let start = Instant::now();
    let table = mms::mms_table().unwrap();
    let darcy = mms::mms_darcy(&table, &[8, 16, 32]).unwrap();
    let heat = mms::mms_heat(&table, true, false).unwrap();
    let coupled = mms::mms_coupled(&table).unwrap();
    let elapsed = start.elapsed();
    assert!(darcy.min_order() >= 1.9, "darcy orders {:?}", darcy.orders);
    assert!(heat.min_order() >= 1.9, "heat orders {:?}", heat.orders);
    assert!(coupled.min_order() >= 0.9, "coupled orders {:?}", coupled.orders);
    assert!(elapsed.as_secs_f64() < 300.0, "runtime {elapsed:.2?}");
    pass(
        10,
        "manufactured-solution orders",
        format!(
            "darcy {:.2}, heat {:.2}, coupled {:.2} in {elapsed:.1?}",
            darcy.min_order(),
            heat.min_order(),
            coupled.min_order()
        ),
    );
}

#[test]
fn criterion_11_radius_confinement_and_bounds() {
    let (table, _) = default_table(16, 5);
    let (setup, state) = smoke_setup(16, 200, Arc::new(table)).unwrap();
    // dt is delta / C_g by construction in the smoke setup
    let result = run_simulation(&setup, state, &ExtraSources::default()).unwrap();
    assert_eq!(result.diagnostics.len(), 200);
    let min_r = result.diagnostics.iter().map(|d| d.min_r).fold(f64::INFINITY, f64::min);
    let max_r = result.diagnostics.iter().map(|d| d.max_r).fold(0.0f64, f64::max);
    let min_u = result.diagnostics.iter().map(|d| d.min_u).fold(f64::INFINITY, f64::min);
    let max_u = result.diagnostics.iter().map(|d| d.max_u).fold(0.0f64, f64::max);
    assert!(min_r >= R_MIN && max_r <= R_MAX, "radius left [{R_MIN}, {R_MAX}]: [{min_r}, {max_r}]");
    assert_eq!(result.total_clamps, 0, "clamps occurred");
    assert!(min_u >= -1e-10, "concentration went negative: {min_u:e}");
    pass(
        11,
        "radius confinement",
        format!(
            "200 steps at dt = delta/C_g: R in [{min_r:.4}, {max_r:.4}], u in [{:.1e}, {max_u:.3}], 0 clamps",
            min_u.max(0.0)
        ),
    );
}

#[test]
fn criterion_12_determinism() {
    let (table, _) = default_table(12, 4);
    let table = Arc::new(table);
    let run = || {
        let (setup, state) = smoke_setup(10, 40, table.clone()).unwrap();
        let result = run_simulation(&setup, state, &ExtraSources::default()).unwrap();
        let mut blob = Vec::new();
        // serialize the trajectory exactly as the CLI writes it
        let mesh = &setup.mesh;
        for snap in [&result.final_state] {
            for (k, p) in mesh.nodes.iter().enumerate() {
                blob.extend_from_slice(
                    format!(
                        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                        p.x, p.y, snap.u0[k], snap.r0[k], snap.theta[k], snap.p0[k]
                    )
                    .as_bytes(),
                );
            }
        }
        for row in &result.diagnostics {
            blob.extend_from_slice(
                format!("{:.16e},{:.16e},{:.16e}\n", row.t, row.max_u, row.balance_residual)
                    .as_bytes(),
            );
        }
        blob
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "repeated runs differ bit-wise");
    pass(12, "determinism", format!("{} artifact bytes bit-identical across runs", a.len()));
}
