//! Periodic cell problems and the effective coefficients they produce.
//!
//! Two formulations of each cell problem are implemented:
//!
//! * fixed-cell: problems posed on the reference cell (hole radius `R_max`)
//!   with transformed coefficients `D0`, `A`, `J` from [`crate::geometry`];
//! * moving-cell: problems posed on the mapped cell (hole radius `R`) with
//!   plain constant coefficients.
//!
//! The two are images of each other under the cell transformation and agree
//! in the continuum; discretely they differ by O(h^2), which the
//! equivalence checks quantify.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_cell_elliptic, assemble_stokes, composite_quad, elliptic_driver_rhs, p1_element,
    solve_stokes, DiscreteField, LdlFactorCache, P2Space, StokesRhs, ViscousForm,
};
use crate::geometry::CellTransform;
use crate::la::{Mat2, Vec2};
use crate::mesh::PeriodicMesh;
use std::sync::Arc;

/// Which cell the problem is posed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Fixed,
    Moving,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formulation::Fixed => write!(f, "fixed"),
            Formulation::Moving => write!(f, "moving"),
        }
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Formulation::Fixed),
            "moving" => Ok(Formulation::Moving),
            other => Err(Error::Config(format!("unknown formulation '{other}'"))),
        }
    }
}

/// Diffusion correctors and homogenised diffusion tensor at one radius.
pub struct DiffusionCellSolution {
    pub correctors: [DiscreteField; 2],
    pub dstar: Mat2,
    pub formulation: Formulation,
    pub radius: f64,
    pub mesh_size: f64,
    pub solver_residual: f64,
}

/// Stokes cell velocities/pressures and the permeability tensor at one
/// radius, by both the energy and the flux formula.
pub struct StokesCellSolution {
    pub velocities: [DiscreteField; 2],
    pub pressures: [DiscreteField; 2],
    pub kstar_flux: Mat2,
    pub kstar_energy: Mat2,
    pub formulation: Formulation,
    pub radius: f64,
    pub mesh_size: f64,
    pub p2: P2Space,
    pub div_residual: f64,
    pub solver_residual: f64,
}

/// Quadrature depth for elements overlapping the cutoff transition band of
/// the transformation, whose coefficient fields have internal layers far
/// steeper than the mesh scale. Outside the band (and for the identity
/// transform) the base rule is exact to discretization order.
fn band_quad_depth(transform: &CellTransform, pts: &[Vec2; 3]) -> usize {
    if (transform.radius - transform.r_max).abs() < 1e-14 {
        return 0;
    }
    let center = transform.center;
    let rs = [
        (pts[0] - center).norm(),
        (pts[1] - center).norm(),
        (pts[2] - center).norm(),
    ];
    let diam = (pts[0] - pts[1])
        .norm()
        .max((pts[1] - pts[2]).norm())
        .max((pts[2] - pts[0]).norm());
    let rmin = rs.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmax = rs.iter().cloned().fold(0.0f64, f64::max);
    if rmax + diam < transform.r_max || rmin - diam > transform.cutoff.b {
        return 0;
    }
    let mut depth = 0usize;
    let mut size = diam;
    while size > 0.006 && depth < 4 {
        size /= 2.0;
        depth += 1;
    }
    depth
}

fn check_mesh_radius(mesh: &PeriodicMesh, expected: f64, what: &str) -> Result<()> {
    let got = mesh
        .hole_radius
        .ok_or_else(|| Error::Mesh(format!("{what} requires a perforated cell mesh")))?;
    if (got - expected).abs() > 1e-9 {
        return Err(Error::Mesh(format!(
            "{what}: mesh hole radius {got} does not match expected {expected}"
        )));
    }
    Ok(())
}

/// Solve the two diffusion cell problems
/// `-div(coeff (grad chi_i + e_i)) = 0` with periodic boundary, no-flux on
/// the obstacle and zero mean, and assemble
/// `D*_ij = int coeff (grad chi_i + e_i) . (grad chi_j + e_j)`.
pub fn solve_diffusion_cell(
    transform: &CellTransform,
    mesh: &Arc<PeriodicMesh>,
    formulation: Formulation,
    tol: f64,
) -> Result<DiffusionCellSolution> {
    let radius = transform.radius;
    let wrap = |message: String| Error::CellProblem { radius, message };
    let coeff: Box<dyn Fn(Vec2) -> Mat2> = match formulation {
        Formulation::Fixed => {
            check_mesh_radius(mesh, transform.r_max, "fixed-cell diffusion problem")?;
            let t = transform.clone();
            Box::new(move |x| t.tensors_at(x).expect("quadrature point outside cell").d0)
        }
        Formulation::Moving => {
            check_mesh_radius(mesh, transform.radius, "moving-cell diffusion problem")?;
            let d = transform.diffusion;
            Box::new(move |_| d)
        }
    };
    let t_for_quad = transform.clone();
    let qsel = move |pts: &[Vec2; 3]| band_quad_depth(&t_for_quad, pts);
    let qsel_opt: Option<crate::fem::QuadSelect<'_>> = match formulation {
        Formulation::Fixed => Some(&qsel),
        Formulation::Moving => None,
    };
    let sys = assemble_cell_elliptic(mesh, coeff.as_ref(), None, qsel_opt)
        .map_err(|e| wrap(e.to_string()))?;
    let factor = LdlFactorCache::new(&sys).map_err(|e| wrap(e.to_string()))?;
    let mut correctors = Vec::new();
    let mut residual: f64 = 0.0;
    for i in 0..2 {
        let rhs = elliptic_driver_rhs(&sys, coeff.as_ref(), i, qsel_opt);
        let sol = factor
            .solve(&sys, Some(&rhs), tol)
            .map_err(|e| wrap(e.to_string()))?;
        residual = residual.max(sol.residual);
        correctors.push(sol.field);
    }
    // effective tensor
    let mut dstar = Mat2::zero();
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let grad_chi: Vec<Vec2> = (0..2)
            .map(|i| {
                let v = &correctors[i].values;
                grads[0] * v[dofs[0]] + grads[1] * v[dofs[1]] + grads[2] * v[dofs[2]]
            })
            .collect();
        let depth = qsel_opt.map(|f| f(&pts)).unwrap_or(0);
        for &(lambda, w) in composite_quad(depth) {
            let x = crate::fem::barycentric_point(&pts, &lambda);
            let d = coeff(x);
            for i in 0..2 {
                let gi = grad_chi[i] + Vec2::basis(i);
                let dgi = d.mul_vec(gi);
                for j in 0..2 {
                    let gj = grad_chi[j] + Vec2::basis(j);
                    dstar.m[i][j] += w * area * dgi.dot(gj);
                }
            }
        }
    }
    let corr0 = correctors.remove(0);
    let corr1 = correctors.remove(0);
    Ok(DiffusionCellSolution {
        correctors: [corr0, corr1],
        dstar: dstar.sym(),
        formulation,
        radius,
        mesh_size: mesh.mesh_size(),
        solver_residual: residual,
    })
}

/// Solve the two Stokes cell problems with unit macroscopic forces and
/// assemble the permeability tensor by both formulas.
///
/// Fixed-cell: viscous form `int J e0(w_i) : e0(v)`, constraint
/// `int q A : grad v`, force `int A^T e_i . v`; flux
/// `K*_ij = int A^T e_i . w_j`, energy `K*_ij = int J e0(w_i) : e0(w_j)`.
/// Moving-cell: the same with `A = I`, `J = 1` and the half-gradient form,
/// so energy is `1/2 int grad w_i : grad w_j`.
pub fn solve_stokes_cell(
    transform: &CellTransform,
    mesh: &Arc<PeriodicMesh>,
    formulation: Formulation,
    tol: f64,
) -> Result<StokesCellSolution> {
    let radius = transform.radius;
    let wrap = |message: String| Error::CellProblem { radius, message };
    let (fields, form): (Box<dyn Fn(Vec2) -> (Mat2, f64)>, ViscousForm) = match formulation {
        Formulation::Fixed => {
            check_mesh_radius(mesh, transform.r_max, "fixed-cell Stokes problem")?;
            let t = transform.clone();
            (
                Box::new(move |x| {
                    let s = t.tensors_at(x).expect("quadrature point outside cell");
                    (s.a, s.j)
                }),
                ViscousForm::TransformedSymmetric,
            )
        }
        Formulation::Moving => {
            check_mesh_radius(mesh, transform.radius, "moving-cell Stokes problem")?;
            (
                Box::new(|_| (Mat2::IDENTITY, 1.0)),
                ViscousForm::HalfGradient,
            )
        }
    };
    let t_for_quad = transform.clone();
    let qsel = move |pts: &[Vec2; 3]| band_quad_depth(&t_for_quad, pts);
    let qsel_opt: Option<crate::fem::QuadSelect<'_>> = match formulation {
        Formulation::Fixed => Some(&qsel),
        Formulation::Moving => None,
    };
    let sys = assemble_stokes(
        mesh,
        form,
        fields.as_ref(),
        &[StokesRhs::Driver(0), StokesRhs::Driver(1)],
        false,
        qsel_opt,
    )
    .map_err(|e| wrap(e.to_string()))?;
    let sols = solve_stokes(&sys, tol).map_err(|e| wrap(e.to_string()))?;

    let mut kstar_flux = Mat2::zero();
    let mut kstar_energy = Mat2::zero();
    let mut tmp = vec![0.0; sys.vmap.n_reduced];
    for i in 0..2 {
        for j in 0..2 {
            kstar_flux.m[i][j] = crate::sparse::dot(&sols[i].rhs_reduced, &sols[j].velocity_reduced);
            sys.k.mul_vec(&sols[i].velocity_reduced, &mut tmp);
            kstar_energy.m[i][j] = crate::sparse::dot(&tmp, &sols[j].velocity_reduced);
        }
    }
    let div_residual = sols.iter().map(|s| s.div_residual).fold(0.0, f64::max);
    let solver_residual = sols.iter().map(|s| s.residual).fold(0.0, f64::max);
    let mut it = sols.into_iter();
    let (s0, s1) = (it.next().unwrap(), it.next().unwrap());
    Ok(StokesCellSolution {
        velocities: [s0.velocity, s1.velocity],
        pressures: [s0.pressure, s1.pressure],
        kstar_flux,
        kstar_energy,
        formulation,
        radius,
        mesh_size: mesh.mesh_size(),
        p2: sys.p2,
        div_residual,
        solver_residual,
    })
}

/// Outcome of the corrector-correspondence check between the fixed-cell and
/// moving-cell diffusion correctors: the relation
/// `chi~_i(psi(y)) = chi_i(y) + (y - psi(y)) . e_i` holds up to a constant,
/// and the discrete mismatch after removing the best constant decays with
/// the mesh.
pub struct CorrespondenceReport {
    /// Relative L2 mismatch per corrector.
    pub per_corrector: [f64; 2],
}

impl CorrespondenceReport {
    pub fn max(&self) -> f64 {
        self.per_corrector[0].max(self.per_corrector[1])
    }
}

/// Evaluate the corrector correspondence at mapped nodes. `fixed` must live
/// on the reference mesh and `moving` on its image under the transformation,
/// so nodes correspond one to one.
pub fn corrector_correspondence(
    fixed: &DiffusionCellSolution,
    moving: &DiffusionCellSolution,
    _transform: &CellTransform,
) -> Result<CorrespondenceReport> {
    if (fixed.radius - moving.radius).abs() > 1e-12 {
        return Err(Error::CellProblem {
            radius: fixed.radius,
            message: format!(
                "corrector correspondence: radii differ ({} vs {})",
                fixed.radius, moving.radius
            ),
        });
    }
    let ref_mesh = &fixed.correctors[0].mesh;
    let mov_mesh = &moving.correctors[0].mesh;
    if ref_mesh.n_nodes() != mov_mesh.n_nodes() {
        return Err(Error::CellProblem {
            radius: fixed.radius,
            message: "corrector correspondence: node counts differ".into(),
        });
    }
    let mut per = [0.0; 2];
    for i in 0..2 {
        let e_i = Vec2::basis(i);
        let diff: Vec<f64> = (0..ref_mesh.n_nodes())
            .map(|k| {
                let displacement = ref_mesh.nodes[k] - mov_mesh.nodes[k]; // y - psi(y)
                let rhs = fixed.correctors[i].values[k] + displacement.dot(e_i);
                moving.correctors[i].values[k] - rhs
            })
            .collect();
        // remove the best constant in L2 over the moving cell
        let ones = vec![1.0; diff.len()];
        let area = crate::fem::integral_p1(mov_mesh, &ones);
        let mean = crate::fem::integral_p1(mov_mesh, &diff) / area;
        let shifted: Vec<f64> = diff.iter().map(|d| d - mean).collect();
        let num = crate::fem::l2_norm_p1(mov_mesh, &shifted);
        let den = crate::fem::l2_norm_p1(mov_mesh, &moving.correctors[i].values);
        per[i] = num / den;
    }
    Ok(CorrespondenceReport { per_corrector: per })
}

/// Integral `int A w0 dy` of the superposed velocity `w0 = sum_i g_i w_i`
/// over the cell; equals `K* g` by the superposition identity.
pub fn cell_average_flux(
    transform: &CellTransform,
    sol: &StokesCellSolution,
    g: Vec2,
) -> Result<Vec2> {
    let mesh = &sol.velocities[0].mesh;
    let mut acc = Vec2::ZERO;
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let sdofs = sol.p2.element_dofs(mesh, e);
        let depth = match sol.formulation {
            Formulation::Fixed => band_quad_depth(transform, &pts),
            Formulation::Moving => 0,
        };
        for &(lambda, w) in composite_quad(depth) {
            let x = crate::fem::barycentric_point(&pts, &lambda);
            let (vals, _) = crate::fem::p2_basis(&lambda, &grads);
            let mut w0 = Vec2::ZERO;
            for (i, &sd) in sdofs.iter().enumerate() {
                let v0 = Vec2::new(
                    sol.velocities[0].values[2 * sd],
                    sol.velocities[0].values[2 * sd + 1],
                );
                let v1 = Vec2::new(
                    sol.velocities[1].values[2 * sd],
                    sol.velocities[1].values[2 * sd + 1],
                );
                w0 += (v0 * g.x + v1 * g.y) * vals[i];
            }
            let a = match sol.formulation {
                Formulation::Fixed => transform.tensors_at(x)?.a,
                Formulation::Moving => Mat2::IDENTITY,
            };
            acc += a.mul_vec(w0) * (w * area);
        }
    }
    Ok(acc)
}

/// Scalar reduction of a (near-)isotropic tensor: mean diagonal and the
/// relative Frobenius anisotropy residual `||T - t I||_F / t`.
pub fn scalar_reduction(t: &Mat2) -> (f64, f64) {
    let mean = t.trace() / 2.0;
    let aniso = t.sub_mat(&Mat2::IDENTITY.scale(mean)).frob_norm() / mean;
    (mean, aniso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_cell_mesh, gen_periodic_square_mesh, map_mesh};
    use approx::assert_relative_eq;

    const TOL: f64 = 1e-10;

    fn transform(r: f64) -> CellTransform {
        CellTransform::unit_diffusion(r, 0.1, 0.25).unwrap()
    }

    #[test]
    fn diffusion_no_perforation_gives_identity() {
        // degenerate probe: no obstacle at all, constant coefficient
        let mesh = Arc::new(gen_periodic_square_mesh(8).unwrap());
        let t = transform(0.25);
        // bypass radius check by solving directly on the square as "moving"
        // with hole_radius None -> expect the mesh check to reject it
        assert!(solve_diffusion_cell(&t, &mesh, Formulation::Moving, TOL).is_err());
        // the corrector-free behaviour itself is covered in fem tests
        // (full_square_corrector_vanishes)
    }

    #[test]
    fn diffusion_cell_isotropic_and_bounded() {
        let t = transform(0.25);
        let mesh = Arc::new(gen_cell_mesh(0.25, 24).unwrap());
        let sol = solve_diffusion_cell(&t, &mesh, Formulation::Moving, TOL).unwrap();
        let (d, aniso) = scalar_reduction(&sol.dstar);
        let theta = t.porosity().theta;
        assert!(aniso < 0.01, "anisotropy {aniso}");
        assert!(d < theta, "Voigt bound violated: {d} vs {theta}");
        // dilute-expansion floor 1 - 2 pi R^2 (the converged value sits just
        // below theta/(2 - theta), so that form is not a valid floor)
        let dilute_floor = 1.0 - 2.0 * (1.0 - theta);
        assert!(d > dilute_floor, "d = {d} below dilute floor {dilute_floor}");
        // symmetric to near machine precision
        assert!((sol.dstar.m[0][1] - sol.dstar.m[1][0]).abs() < 1e-12);
    }

    #[test]
    fn diffusion_fixed_vs_moving_agree() {
        let t = transform(0.15);
        let reference = Arc::new(gen_cell_mesh(0.25, 24).unwrap());
        let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
        let fixed = solve_diffusion_cell(&t, &reference, Formulation::Fixed, TOL).unwrap();
        let moving = solve_diffusion_cell(&t, &mapped, Formulation::Moving, TOL).unwrap();
        let gap = fixed.dstar.sub_mat(&moving.dstar).frob_norm() / moving.dstar.frob_norm();
        assert!(gap < 0.02, "fixed/moving gap {gap}");
    }

    #[test]
    fn corrector_correspondence_shrinks_with_radius_factor() {
        let t = transform(0.15);
        let mut mismatches = Vec::new();
        for res in [16usize, 32] {
            let reference = Arc::new(gen_cell_mesh(0.25, res).unwrap());
            let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
            let fixed = solve_diffusion_cell(&t, &reference, Formulation::Fixed, TOL).unwrap();
            let moving = solve_diffusion_cell(&t, &mapped, Formulation::Moving, TOL).unwrap();
            let rep = corrector_correspondence(&fixed, &moving, &t).unwrap();
            // both correctors independently satisfy the same bound
            assert!(rep.per_corrector[0] < 2.0 * rep.per_corrector[1]);
            assert!(rep.per_corrector[1] < 2.0 * rep.per_corrector[0]);
            mismatches.push(rep.max());
        }
        // second-order-ish decay; the 2% absolute bound at h ~ 1/64 is
        // asserted by the acceptance suite
        assert!(mismatches[1] < 0.05, "mismatch {:?}", mismatches);
        assert!(mismatches[1] < 0.5 * mismatches[0], "no decay: {mismatches:?}");

        // identity transform: fixed and moving problems coincide
        let t0 = transform(0.25);
        let reference = Arc::new(gen_cell_mesh(0.25, 16).unwrap());
        let mapped0 = Arc::new(map_mesh(&reference, &t0).unwrap());
        let fixed0 = solve_diffusion_cell(&t0, &reference, Formulation::Fixed, TOL).unwrap();
        let moving0 = solve_diffusion_cell(&t0, &mapped0, Formulation::Moving, TOL).unwrap();
        let rep0 = corrector_correspondence(&fixed0, &moving0, &t0).unwrap();
        assert!(rep0.max() < 1e-9, "identity mismatch {:?}", rep0.per_corrector);
    }

    #[test]
    fn viscous_forms_agree_on_constrained_solutions() {
        // The two viscous forms differ by 1/2 int (1/J)(A : grad w)(A : grad v);
        // for Taylor-Hood the constraint holds only weakly, so the discrete
        // velocities differ at the discretization order, not at solver
        // tolerance. Checked: small gap, shrinking under refinement.
        let t = transform(0.2);
        let mut gaps = Vec::new();
        for res in [12usize, 24] {
            let reference = Arc::new(gen_cell_mesh(0.25, res).unwrap());
            let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
            let fields = |_: crate::la::Vec2| (crate::la::Mat2::IDENTITY, 1.0);
            let mut sols = Vec::new();
            for form in [
                crate::fem::ViscousForm::HalfGradient,
                crate::fem::ViscousForm::TransformedSymmetric,
            ] {
                let sys = crate::fem::assemble_stokes(
                    &mapped,
                    form,
                    &fields,
                    &[crate::fem::StokesRhs::Driver(0)],
                    false,
                    None,
                )
                .unwrap();
                let sol = crate::fem::solve_stokes(&sys, TOL).unwrap().remove(0);
                assert!(sol.div_residual <= 1e-9, "weak divergence {:e}", sol.div_residual);
                sols.push(sol.velocity);
            }
            let num: f64 = sols[0]
                .values
                .iter()
                .zip(&sols[1].values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = sols[1].values.iter().map(|v| v * v).sum::<f64>().sqrt();
            gaps.push(num / den);
        }
        assert!(gaps[1] < 0.01, "form gap {gaps:?}");
        assert!(gaps[1] < 0.5 * gaps[0], "form gap not shrinking: {gaps:?}");
    }

    #[test]
    fn stokes_cell_isotropic_dual_formulas() {
        let t = transform(0.25);
        let mesh = Arc::new(gen_cell_mesh(0.25, 24).unwrap());
        let sol = solve_stokes_cell(&t, &mesh, Formulation::Moving, TOL).unwrap();
        let (k, aniso) = scalar_reduction(&sol.kstar_flux);
        assert!(k > 0.0);
        assert!(aniso < 0.01, "anisotropy {aniso}");
        let gap = sol.kstar_flux.sub_mat(&sol.kstar_energy).frob_norm()
            / sol.kstar_energy.frob_norm();
        assert!(gap <= 10.0 * TOL, "dual formula gap {gap:e}");
        // symmetry via the Galerkin identity
        let asym = (sol.kstar_flux.m[0][1] - sol.kstar_flux.m[1][0]).abs()
            / sol.kstar_flux.frob_norm();
        assert!(asym < 1e-8);
    }

    #[test]
    fn stokes_fixed_vs_moving_agree() {
        let t = transform(0.2);
        let reference = Arc::new(gen_cell_mesh(0.25, 24).unwrap());
        let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
        let fixed = solve_stokes_cell(&t, &reference, Formulation::Fixed, TOL).unwrap();
        let moving = solve_stokes_cell(&t, &mapped, Formulation::Moving, TOL).unwrap();
        let gap = fixed.kstar_flux.sub_mat(&moving.kstar_flux).frob_norm()
            / moving.kstar_flux.frob_norm();
        assert!(gap < 0.02, "fixed/moving K* gap {gap}");
    }

    #[test]
    fn superposition_witness_matches_kstar() {
        let t = transform(0.2);
        let mesh = Arc::new(gen_cell_mesh(0.25, 16).unwrap());
        let sol = solve_stokes_cell(&t, &mesh, Formulation::Fixed, TOL).unwrap();
        let g = Vec2::new(0.7, -1.3);
        let flux = cell_average_flux(&t, &sol, g).unwrap();
        let expect = sol.kstar_flux.mul_vec(g);
        let rel = (flux - expect).norm() / expect.norm();
        assert!(rel < 1e-8, "superposition mismatch {rel:e}");
        // zero coefficients: zero reconstructed flux
        let zero = cell_average_flux(&t, &sol, Vec2::ZERO).unwrap();
        assert_relative_eq!(zero.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn voigt_bound_three_directions() {
        let d_phys = Mat2::new(1.5, 0.3, 0.3, 1.0);
        let t = CellTransform::new(0.18, 0.1, 0.25, d_phys).unwrap();
        let reference = Arc::new(gen_cell_mesh(0.25, 20).unwrap());
        let mapped = Arc::new(map_mesh(&reference, &t).unwrap());
        let sol = solve_diffusion_cell(&t, &mapped, Formulation::Moving, TOL).unwrap();
        let theta = t.porosity().theta;
        for xi in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0)] {
            let lhs = sol.dstar.quad_form(xi);
            let rhs = theta * d_phys.quad_form(xi);
            assert!(lhs < rhs, "Voigt bound violated: {lhs} vs {rhs}");
        }
    }
}
