//! Finite element spaces, assembly and linear-system solves.
//!
//! Discretization choices: P1 for scalars (correctors, pressure, macro
//! fields), continuous P2 x P2 / P1 for the Stokes saddle point (inf-sup
//! stable), degree-4 triangle quadrature everywhere, periodicity by node
//! identification (slave dofs folded onto masters), mean-zero constraints by
//! pinning plus a posteriori shift (scalars) or kernel projection
//! (pressures). Saddle problems are solved by conjugate gradients on the
//! pressure Schur complement with a sparse LDL^T factorization of the
//! velocity block.

use crate::error::{Error, Result};
use crate::la::{Mat2, Vec2};
use crate::mesh::{BoundaryTag, PeriodicMesh};
use crate::sparse::{cg_operator, norm2, CsrMatrix, LdlFactor};
use std::collections::HashMap;
use std::sync::Arc;

/// Degree-4 triangle rule (6 points, barycentric coordinates and weights
/// normalized to unit total).
pub const QUAD_DEG4: [([f64; 3], f64); 6] = [
    (
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        0.223381589678011,
    ),
    (
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        0.109951743655322,
    ),
];

/// Composite refinement of the degree-4 rule: the element is virtually
/// subdivided `depth` times (uniform quadrisection) and the rule applied on
/// every child, all expressed in parent barycentric coordinates. Used where
/// coefficient fields have internal layers the base rule cannot resolve
/// (the cutoff transition band of the cell transformation).
pub fn composite_quad(depth: usize) -> &'static [([f64; 3], f64)] {
    use std::sync::OnceLock;
    static RULES: OnceLock<Vec<Vec<([f64; 3], f64)>>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let mut all = vec![QUAD_DEG4.to_vec()];
        for d in 1..=4usize {
            let next = next_level(&all[d - 1]);
            all.push(next);
        }
        all
    });
    &rules[depth.min(4)]
}

fn next_level(prev: &[([f64; 3], f64)]) -> Vec<([f64; 3], f64)> {
    let v0 = [1.0, 0.0, 0.0];
    let v1 = [0.0, 1.0, 0.0];
    let v2 = [0.0, 0.0, 1.0];
    let mid = |a: [f64; 3], b: [f64; 3]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
    let (m01, m12, m20) = (mid(v0, v1), mid(v1, v2), mid(v2, v0));
    let children = [
        [v0, m01, m20],
        [m01, v1, m12],
        [m20, m12, v2],
        [m01, m12, m20],
    ];
    let mut next = Vec::with_capacity(prev.len() * 4);
    for child in children {
        for &(lam, w) in prev {
            let mut l = [0.0; 3];
            for k in 0..3 {
                l[k] = lam[0] * child[0][k] + lam[1] * child[1][k] + lam[2] * child[2][k];
            }
            next.push((l, w / 4.0));
        }
    }
    next
}

/// Per-element quadrature depth selector.
pub type QuadSelect<'a> = &'a dyn Fn(&[Vec2; 3]) -> usize;

fn quad_depth(qsel: Option<QuadSelect<'_>>, pts: &[Vec2; 3]) -> usize {
    qsel.map(|f| f(pts)).unwrap_or(0)
}

/// Geometry of one straight triangle: area and the constant P1 gradients.
pub fn p1_element(mesh: &PeriodicMesh, e: usize) -> (f64, [Vec2; 3], [Vec2; 3]) {
    let [a, b, c] = mesh.elements[e];
    let (pa, pb, pc) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
    let area = crate::mesh::triangle_area(pa, pb, pc);
    let g = [
        Vec2::new(pb.y - pc.y, pc.x - pb.x) * (1.0 / (2.0 * area)),
        Vec2::new(pc.y - pa.y, pa.x - pc.x) * (1.0 / (2.0 * area)),
        Vec2::new(pa.y - pb.y, pb.x - pa.x) * (1.0 / (2.0 * area)),
    ];
    (area, g, [pa, pb, pc])
}

pub fn barycentric_point(pts: &[Vec2; 3], lambda: &[f64; 3]) -> Vec2 {
    pts[0] * lambda[0] + pts[1] * lambda[1] + pts[2] * lambda[2]
}

/// Finite element space tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeSpaceKind {
    P1Scalar,
    P2Vector,
    P1Pressure,
}

/// Nodal coefficient vector on a mesh.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub mesh: Arc<PeriodicMesh>,
    pub space: FeSpaceKind,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<PeriodicMesh>, space: FeSpaceKind, values: Vec<f64>) -> Result<Self> {
        let expect = match space {
            FeSpaceKind::P1Scalar | FeSpaceKind::P1Pressure => mesh.n_nodes(),
            FeSpaceKind::P2Vector => usize::MAX, // validated by the caller that knows the P2 space
        };
        if expect != usize::MAX && values.len() != expect {
            return Err(Error::Assembly(format!(
                "field length {} does not match space dimension {}",
                values.len(),
                expect
            )));
        }
        Ok(DiscreteField { mesh, space, values })
    }
}

/// Edge numbering for quadratic elements. Scalar P2 dof `k` is a vertex node
/// for `k < n_vertices`, otherwise the midpoint of `edges[k - n_vertices]`.
#[derive(Debug, Clone)]
pub struct P2Space {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub elem_edges: Vec<[usize; 3]>,
    edge_ids: HashMap<(usize, usize), usize>,
}

impl P2Space {
    pub fn build(mesh: &PeriodicMesh) -> Self {
        let mut edge_ids = HashMap::new();
        let mut edges = Vec::new();
        let mut elem_edges = Vec::with_capacity(mesh.n_elements());
        for el in &mesh.elements {
            let mut ids = [0usize; 3];
            // local edge order: (0,1), (1,2), (2,0)
            for (k, (a, b)) in [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])]
                .into_iter()
                .enumerate()
            {
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                ids[k] = id;
            }
            elem_edges.push(ids);
        }
        P2Space {
            n_vertices: mesh.n_nodes(),
            edges,
            elem_edges,
            edge_ids,
        }
    }

    pub fn n_scalar_dofs(&self) -> usize {
        self.n_vertices + self.edges.len()
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids.get(&(a.min(b), a.max(b))).copied()
    }

    /// Scalar P2 dofs of element `e` in local order
    /// `[v0, v1, v2, e01, e12, e20]`.
    pub fn element_dofs(&self, mesh: &PeriodicMesh, e: usize) -> [usize; 6] {
        let el = mesh.elements[e];
        let ed = self.elem_edges[e];
        [
            el[0],
            el[1],
            el[2],
            self.n_vertices + ed[0],
            self.n_vertices + ed[1],
            self.n_vertices + ed[2],
        ]
    }
}

/// Values and gradients of the six P2 basis functions at a barycentric point.
pub fn p2_basis(lambda: &[f64; 3], grad_lambda: &[Vec2; 3]) -> ([f64; 6], [Vec2; 6]) {
    let l = lambda;
    let g = grad_lambda;
    let vals = [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ];
    let grads = [
        g[0] * (4.0 * l[0] - 1.0),
        g[1] * (4.0 * l[1] - 1.0),
        g[2] * (4.0 * l[2] - 1.0),
        (g[0] * l[1] + g[1] * l[0]) * 4.0,
        (g[1] * l[2] + g[2] * l[1]) * 4.0,
        (g[2] * l[0] + g[0] * l[2]) * 4.0,
    ];
    (vals, grads)
}

/// Status of one full dof after constraint resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofStatus {
    Free(usize),
    Fixed(f64),
}

/// Map from full to reduced (constrained) dof numbering.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub status: Vec<DofStatus>,
    pub n_reduced: usize,
}

impl DofMap {
    /// Expand a reduced solution to the full dof vector.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.status
            .iter()
            .map(|s| match s {
                DofStatus::Free(r) => reduced[*r],
                DofStatus::Fixed(v) => *v,
            })
            .collect()
    }
}

/// Coordinates of the reduced P1 dofs (representative node positions),
/// for geometric fill-reducing orderings.
pub fn p1_reduced_coords(mesh: &PeriodicMesh, map: &DofMap) -> Vec<[f64; 2]> {
    let mut coords = vec![[0.0; 2]; map.n_reduced];
    for (node, st) in map.status.iter().enumerate() {
        if let DofStatus::Free(r) = st {
            coords[*r] = [mesh.nodes[node].x, mesh.nodes[node].y];
        }
    }
    coords
}

/// Coordinates of the reduced P2 vector dofs.
pub fn p2_vector_reduced_coords(mesh: &PeriodicMesh, p2: &P2Space, vmap: &DofMap) -> Vec<[f64; 2]> {
    let mut coords = vec![[0.0; 2]; vmap.n_reduced];
    for (dof, st) in vmap.status.iter().enumerate() {
        if let DofStatus::Free(r) = st {
            let sdof = dof / 2;
            let p = if sdof < p2.n_vertices {
                mesh.nodes[sdof]
            } else {
                let (a, b) = p2.edges[sdof - p2.n_vertices];
                (mesh.nodes[a] + mesh.nodes[b]) * 0.5
            };
            coords[*r] = [p.x, p.y];
        }
    }
    coords
}

/// Dof map for P1 scalars: periodic folding (if requested) plus Dirichlet
/// values. Dirichlet wins over periodicity for a node carrying both.
pub fn p1_dofmap(
    mesh: &PeriodicMesh,
    periodic: bool,
    dirichlet: &HashMap<usize, f64>,
) -> DofMap {
    let n = mesh.n_nodes();
    let mut status = vec![DofStatus::Free(usize::MAX); n];
    let mut n_reduced = 0usize;
    let mut reduced_of: HashMap<usize, usize> = HashMap::new();
    for node in 0..n {
        let rep = if periodic { mesh.master_of(node) } else { node };
        if let Some(v) = dirichlet.get(&rep).or_else(|| dirichlet.get(&node)) {
            status[node] = DofStatus::Fixed(*v);
            continue;
        }
        let r = *reduced_of.entry(rep).or_insert_with(|| {
            let r = n_reduced;
            n_reduced += 1;
            r
        });
        status[node] = DofStatus::Free(r);
    }
    DofMap { status, n_reduced }
}

/// Dof map for one scalar component of the P2 space: periodic folding of
/// vertex and edge dofs, Dirichlet zeros on the given vertex/edge sets.
///
/// Edge dofs are folded by matching slave-tagged boundary edges to the
/// master-tagged edge whose midpoint differs by a unit lattice vector;
/// endpoint-wise folding would break at the corner, whose vertex master
/// chain crosses to the opposite corner.
pub fn p2_scalar_dofmap(
    mesh: &PeriodicMesh,
    p2: &P2Space,
    dirichlet_vertices: &std::collections::HashSet<usize>,
    dirichlet_edges: &std::collections::HashSet<usize>,
) -> DofMap {
    let n = p2.n_scalar_dofs();
    let mut status = vec![DofStatus::Free(usize::MAX); n];
    let mut n_reduced = 0usize;
    let mut reduced_of: HashMap<usize, usize> = HashMap::new();
    let mut edge_fold: HashMap<usize, usize> = HashMap::new();
    {
        let midpoint = |a: usize, b: usize| (mesh.nodes[a] + mesh.nodes[b]) * 0.5;
        let masters: Vec<(Vec2, usize)> = mesh
            .boundary_edges
            .iter()
            .filter(|&&(_, _, t)| t == BoundaryTag::PeriodicMaster)
            .filter_map(|&(a, b, _)| p2.edge_id(a, b).map(|id| (midpoint(a, b), id)))
            .collect();
        for &(a, b, tag) in &mesh.boundary_edges {
            if tag != BoundaryTag::PeriodicSlave {
                continue;
            }
            let (Some(slave_id), mid) = (p2.edge_id(a, b), midpoint(a, b)) else {
                continue;
            };
            let target = masters.iter().find(|(mm, _)| {
                let d1 = *mm - (mid - Vec2::new(1.0, 0.0));
                let d2 = *mm - (mid - Vec2::new(0.0, 1.0));
                d1.norm() < 1e-9 || d2.norm() < 1e-9
            });
            if let Some(&(_, master_id)) = target {
                edge_fold.insert(slave_id, master_id);
            }
        }
    }
    for dof in 0..n {
        let rep_dof = if dof < p2.n_vertices {
            mesh.master_of(dof)
        } else {
            let id = dof - p2.n_vertices;
            p2.n_vertices + edge_fold.get(&id).copied().unwrap_or(id)
        };
        let fixed = if rep_dof < p2.n_vertices {
            dirichlet_vertices.contains(&rep_dof) || dirichlet_vertices.contains(&dof.min(rep_dof))
        } else {
            dirichlet_edges.contains(&(rep_dof - p2.n_vertices))
        };
        if fixed {
            status[dof] = DofStatus::Fixed(0.0);
            continue;
        }
        let r = *reduced_of.entry(rep_dof).or_insert_with(|| {
            let r = n_reduced;
            n_reduced += 1;
            r
        });
        status[dof] = DofStatus::Free(r);
    }
    DofMap { status, n_reduced }
}

/// Scatter a local element matrix into triplets under a dof map, moving
/// fixed-dof columns to the right-hand side.
fn scatter(
    dofs: &[usize],
    local: &[Vec<f64>],
    map: &DofMap,
    triplets: &mut Vec<(usize, usize, f64)>,
    rhs: Option<&mut [f64]>,
) {
    let mut rhs = rhs;
    for (i, &di) in dofs.iter().enumerate() {
        let ri = match map.status[di] {
            DofStatus::Free(r) => r,
            DofStatus::Fixed(_) => continue,
        };
        for (j, &dj) in dofs.iter().enumerate() {
            match map.status[dj] {
                DofStatus::Free(rj) => triplets.push((ri, rj, local[i][j])),
                DofStatus::Fixed(v) => {
                    if let Some(r) = rhs.as_deref_mut() {
                        r[ri] -= local[i][j] * v;
                    }
                }
            }
        }
    }
}

/// Assembled scalar elliptic system on a (possibly periodic) mesh.
pub struct EllipticSystem {
    pub mesh: Arc<PeriodicMesh>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dof_map: DofMap,
    /// Reduced integral weights of the basis functions (for mean-zero
    /// shifts and compatibility projections).
    pub mass_weights: Vec<f64>,
    /// Mean-zero constraint active (pure-Neumann / periodic problems).
    pub mean_zero: bool,
    pub symmetric: bool,
}

/// Stiffness assembly for `-div(coeff grad u)` with P1 elements, periodic
/// reduction and a mean-zero constraint. The right-hand side corresponds to
/// the affine driver `e_i` when `driver` is given: `rhs(v) = -int coeff e_i .
/// grad v`.
pub fn assemble_cell_elliptic(
    mesh: &Arc<PeriodicMesh>,
    coeff: &dyn Fn(Vec2) -> Mat2,
    driver: Option<usize>,
    qsel: Option<QuadSelect<'_>>,
) -> Result<EllipticSystem> {
    let map = p1_dofmap(mesh, true, &HashMap::new());
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; map.n_reduced];
    let mut mass_weights = vec![0.0; map.n_reduced];
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let mut local = vec![vec![0.0; 3]; 3];
        let mut local_rhs = [0.0; 3];
        let mut local_mass = [0.0; 3];
        for &(lambda, w) in composite_quad(quad_depth(qsel, &pts)) {
            let x = barycentric_point(&pts, &lambda);
            let d = coeff(x);
            if !d.is_spd() {
                return Err(Error::Assembly(format!(
                    "coefficient not SPD at quadrature point ({}, {})",
                    x.x, x.y
                )));
            }
            let wq = w * area;
            for i in 0..3 {
                let dg_i = d.mul_vec(grads[i]);
                for j in 0..3 {
                    local[i][j] += wq * dg_i.dot(grads[j]);
                }
                local_mass[i] += wq * lambda[i];
                if let Some(k) = driver {
                    local_rhs[i] -= wq * d.mul_vec(Vec2::basis(k)).dot(grads[i]);
                }
            }
        }
        scatter(&dofs, &local, &map, &mut triplets, None);
        for (i, &di) in dofs.iter().enumerate() {
            if let DofStatus::Free(r) = map.status[di] {
                rhs[r] += local_rhs[i];
                mass_weights[r] += local_mass[i];
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(map.n_reduced, map.n_reduced, triplets);
    Ok(EllipticSystem {
        mesh: mesh.clone(),
        matrix,
        rhs,
        dof_map: map,
        mass_weights,
        mean_zero: true,
        symmetric: true,
    })
}

/// Reduced load vector of the affine driver `e_i`:
/// `rhs(v) = -int coeff e_i . grad v`.
pub fn elliptic_driver_rhs(
    sys: &EllipticSystem,
    coeff: &dyn Fn(Vec2) -> Mat2,
    driver: usize,
    qsel: Option<QuadSelect<'_>>,
) -> Vec<f64> {
    let mesh = &sys.mesh;
    let mut rhs = vec![0.0; sys.dof_map.n_reduced];
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        for &(lambda, w) in composite_quad(quad_depth(qsel, &pts)) {
            let x = barycentric_point(&pts, &lambda);
            let de = coeff(x).mul_vec(Vec2::basis(driver));
            for i in 0..3 {
                if let DofStatus::Free(r) = sys.dof_map.status[dofs[i]] {
                    rhs[r] -= w * area * de.dot(grads[i]);
                }
            }
        }
    }
    rhs
}

/// Reduced load vector `rhs(v) = int f v` for an assembled elliptic system.
pub fn elliptic_source_rhs(sys: &EllipticSystem, f: &dyn Fn(Vec2) -> f64) -> Vec<f64> {
    let mesh = &sys.mesh;
    let mut rhs = vec![0.0; sys.dof_map.n_reduced];
    for e in 0..mesh.n_elements() {
        let (area, _, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        for (lambda, w) in QUAD_DEG4 {
            let x = barycentric_point(&pts, &lambda);
            let fv = f(x) * w * area;
            for i in 0..3 {
                if let DofStatus::Free(r) = sys.dof_map.status[dofs[i]] {
                    rhs[r] += fv * lambda[i];
                }
            }
        }
    }
    rhs
}

/// P1 mass matrix with an optional P1 nodal weight, reduced under `map`.
pub fn assemble_p1_mass(
    mesh: &PeriodicMesh,
    map: &DofMap,
    nodal_weight: Option<&[f64]>,
) -> CsrMatrix {
    let mut triplets = Vec::new();
    for e in 0..mesh.n_elements() {
        let (area, _, _) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        let mut local = vec![vec![0.0; 3]; 3];
        for (lambda, w) in QUAD_DEG4 {
            let wq = w * area;
            let coeff = match nodal_weight {
                Some(t) => {
                    lambda[0] * t[dofs[0]] + lambda[1] * t[dofs[1]] + lambda[2] * t[dofs[2]]
                }
                None => 1.0,
            };
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += wq * coeff * lambda[i] * lambda[j];
                }
            }
        }
        scatter(&dofs, &local, map, &mut triplets, None);
    }
    CsrMatrix::from_triplets(map.n_reduced, map.n_reduced, triplets)
}

/// Solve report for scalar systems.
pub struct EllipticSolve {
    pub field: DiscreteField,
    pub residual: f64,
}

/// Direct solve of an elliptic system. Mean-zero systems are made definite
/// by pinning one dof and projecting the load onto the compatible range;
/// the solution is shifted to integral zero afterwards.
pub fn solve_elliptic(
    sys: &EllipticSystem,
    rhs_override: Option<&[f64]>,
    tol: f64,
) -> Result<EllipticSolve> {
    let factor = LdlFactorCache::new(sys)?;
    factor.solve(sys, rhs_override, tol)
}

/// Reusable factorization of an elliptic system (cell problems solve the
/// same matrix for two drivers).
pub struct LdlFactorCache {
    factor: LdlFactor,
    pinned: Option<usize>,
    matrix: CsrMatrix,
}

impl LdlFactorCache {
    pub fn new(sys: &EllipticSystem) -> Result<Self> {
        let mut matrix = sys.matrix.clone();
        let pinned = if sys.mean_zero {
            // replace row/column 0 by the identity row
            let pin = 0usize;
            let n = matrix.n_rows;
            let mut triplets = Vec::with_capacity(matrix.nnz());
            for r in 0..n {
                let (cols, vals) = matrix.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    if r != pin && *c != pin {
                        triplets.push((r, *c, *v));
                    }
                }
            }
            triplets.push((pin, pin, 1.0));
            matrix = CsrMatrix::from_triplets(n, n, triplets);
            Some(pin)
        } else {
            None
        };
        let coords = p1_reduced_coords(&sys.mesh, &sys.dof_map);
        let factor = LdlFactor::new_geometric(&matrix, &coords)?;
        Ok(LdlFactorCache {
            factor,
            pinned,
            matrix,
        })
    }

    pub fn solve(
        &self,
        sys: &EllipticSystem,
        rhs_override: Option<&[f64]>,
        tol: f64,
    ) -> Result<EllipticSolve> {
        let mut rhs = rhs_override.unwrap_or(&sys.rhs).to_vec();
        if let Some(pin) = self.pinned {
            // compatibility: remove the constant-direction component
            let total: f64 = rhs.iter().sum();
            let mass_total: f64 = sys.mass_weights.iter().sum();
            for (r, m) in rhs.iter_mut().zip(&sys.mass_weights) {
                *r -= total * m / mass_total;
            }
            rhs[pin] = 0.0;
        }
        let (mut x, residual) = crate::sparse::solve_spd_with(&self.factor, &self.matrix, &rhs, tol)?;
        if self.pinned.is_some() {
            let mean = crate::sparse::dot(&x, &sys.mass_weights)
                / sys.mass_weights.iter().sum::<f64>();
            for v in x.iter_mut() {
                *v -= mean;
            }
        }
        let full = sys.dof_map.expand(&x);
        Ok(EllipticSolve {
            field: DiscreteField::new(sys.mesh.clone(), FeSpaceKind::P1Scalar, full)?,
            residual,
        })
    }
}

/// Viscous bilinear form of the Stokes cell problem.
///
/// `HalfGradient` is `int (1/(2J)) (A^T grad w) : (A^T grad v)`, the pullback
/// of `1/2 int grad w : grad v` on the deformed cell. `TransformedSymmetric`
/// is `int J e0(w) : e0(v)` with `e0(v) = sym(F^{-T} grad v)`, the pullback
/// of `int e(w) : e(v)`. The two coincide on exactly divergence-free fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViscousForm {
    HalfGradient,
    TransformedSymmetric,
}

/// Right-hand sides assembled together with a Stokes system.
pub enum StokesRhs<'a> {
    /// `rhs(v) = int A^T e_i . v` (unit macroscopic force through the
    /// transformed cell).
    Driver(usize),
    /// `rhs(v) = int f . v`.
    Body(&'a dyn Fn(Vec2) -> Vec2),
}

/// Assembled Stokes saddle-point system.
pub struct StokesSystem {
    pub mesh: Arc<PeriodicMesh>,
    pub p2: P2Space,
    /// Reduced viscous block (SPD on the constrained space).
    pub k: CsrMatrix,
    /// Constraint block: rows = reduced pressure dofs, cols = reduced
    /// velocity dofs, entries `int q A : grad v`.
    pub b: CsrMatrix,
    pub rhs: Vec<Vec<f64>>,
    pub vmap: DofMap,
    pub pmap: DofMap,
    /// Reduced pressure integral weights (mean-zero normalization).
    pub p_weights: Vec<f64>,
    /// Constant-per-component velocity kernels, present only when no
    /// obstacle constrains the velocity (manufactured-solution mode).
    pub v_kernel: Vec<Vec<f64>>,
}

/// Assemble the P2/P1 Stokes system on a periodic mesh with no-slip on the
/// obstacle boundary, coefficient fields `A(y)`, `J(y)` and the selected
/// viscous form.
///
/// Meshes without an obstacle are rejected unless `allow_unconstrained` is
/// set, in which case the velocity constants are recorded as kernel vectors
/// and handled by the solver (used by manufactured-solution checks on the
/// periodic square).
pub fn assemble_stokes(
    mesh: &Arc<PeriodicMesh>,
    form: ViscousForm,
    fields: &dyn Fn(Vec2) -> (Mat2, f64),
    rhs_specs: &[StokesRhs<'_>],
    allow_unconstrained: bool,
    qsel: Option<QuadSelect<'_>>,
) -> Result<StokesSystem> {
    let p2 = P2Space::build(mesh);
    // no-slip set: obstacle vertices and obstacle boundary edge midpoints
    let mut noslip_v = std::collections::HashSet::new();
    let mut noslip_e = std::collections::HashSet::new();
    for &(a, b, tag) in &mesh.boundary_edges {
        if tag == BoundaryTag::Obstacle {
            noslip_v.insert(a);
            noslip_v.insert(b);
            if let Some(id) = p2.edge_id(a, b) {
                noslip_e.insert(id);
            }
        }
    }
    if noslip_v.is_empty() && !allow_unconstrained {
        return Err(Error::Assembly(
            "stokes assembly requires an obstacle boundary (empty no-slip set)".into(),
        ));
    }
    let smap = p2_scalar_dofmap(mesh, &p2, &noslip_v, &noslip_e);
    // vector dof = 2 * scalar dof + component
    let vmap = DofMap {
        status: smap
            .status
            .iter()
            .flat_map(|s| {
                [0, 1].map(|c| match s {
                    DofStatus::Free(r) => DofStatus::Free(2 * r + c),
                    DofStatus::Fixed(v) => DofStatus::Fixed(*v),
                })
            })
            .collect(),
        n_reduced: 2 * smap.n_reduced,
    };
    let pmap = p1_dofmap(mesh, true, &HashMap::new());

    let mut k_tri = Vec::new();
    let mut b_tri = Vec::new();
    let mut rhs = vec![vec![0.0; vmap.n_reduced]; rhs_specs.len()];
    let mut p_weights = vec![0.0; pmap.n_reduced];

    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        let sdofs = p2.element_dofs(mesh, e);
        let pdofs = mesh.elements[e];
        let mut k_loc = vec![vec![0.0; 12]; 12];
        let mut b_loc = vec![vec![0.0; 12]; 3];
        let mut rhs_loc = vec![[0.0; 12]; rhs_specs.len()];
        let mut pw_loc = [0.0; 3];
        for &(lambda, w) in composite_quad(quad_depth(qsel, &pts)) {
            let x = barycentric_point(&pts, &lambda);
            let (a_mat, j) = fields(x);
            if j <= 0.0 {
                return Err(Error::Assembly(format!(
                    "non-positive Jacobian {j} at quadrature point"
                )));
            }
            let wq = w * area;
            let (vals, g) = p2_basis(&lambda, &grads);
            // A^T grad(phi_i) for each scalar basis function
            let at = a_mat.transpose();
            let atg: Vec<Vec2> = g.iter().map(|gi| at.mul_vec(*gi)).collect();
            match form {
                ViscousForm::HalfGradient => {
                    // component-decoupled scalar blocks
                    for i in 0..6 {
                        for jj in 0..6 {
                            let v = wq / (2.0 * j) * atg[i].dot(atg[jj]);
                            k_loc[2 * i][2 * jj] += v;
                            k_loc[2 * i + 1][2 * jj + 1] += v;
                        }
                    }
                }
                ViscousForm::TransformedSymmetric => {
                    // e0(phi_i e_c) = sym(column c <- (1/J) A^T grad phi_i)
                    let mut e_mats = [[Mat2::zero(); 2]; 6];
                    for i in 0..6 {
                        for c in 0..2 {
                            let mut m = Mat2::zero();
                            m.m[0][c] = atg[i].x / j;
                            m.m[1][c] = atg[i].y / j;
                            e_mats[i][c] = m.sym();
                        }
                    }
                    for i in 0..6 {
                        for c in 0..2 {
                            for jj in 0..6 {
                                for d in 0..2 {
                                    k_loc[2 * i + c][2 * jj + d] +=
                                        wq * j * e_mats[i][c].frob_dot(&e_mats[jj][d]);
                                }
                            }
                        }
                    }
                }
            }
            // constraint and pressure weights: b(q, v) = int q A : grad v,
            // A : grad(phi_j e_c) = column c of A . grad phi_j
            for p in 0..3 {
                let qp = lambda[p];
                for jj in 0..6 {
                    for c in 0..2 {
                        let acol = Vec2::new(a_mat.m[0][c], a_mat.m[1][c]);
                        b_loc[p][2 * jj + c] += wq * qp * acol.dot(g[jj]);
                    }
                }
                pw_loc[p] += wq * qp;
            }
            for (spec, loc) in rhs_specs.iter().zip(rhs_loc.iter_mut()) {
                let force = match spec {
                    StokesRhs::Driver(i) => at.mul_vec(Vec2::basis(*i)),
                    StokesRhs::Body(f) => f(x),
                };
                for jj in 0..6 {
                    loc[2 * jj] += wq * force.x * vals[jj];
                    loc[2 * jj + 1] += wq * force.y * vals[jj];
                }
            }
        }
        // scatter
        let vdofs: Vec<usize> = sdofs.iter().flat_map(|&s| [2 * s, 2 * s + 1]).collect();
        scatter(&vdofs, &k_loc, &vmap, &mut k_tri, None);
        for (p, &pd) in pdofs.iter().enumerate() {
            let rp = match pmap.status[pd] {
                DofStatus::Free(r) => r,
                DofStatus::Fixed(_) => continue,
            };
            p_weights[rp] += pw_loc[p];
            for (jj, &vd) in vdofs.iter().enumerate() {
                if let DofStatus::Free(rv) = vmap.status[vd] {
                    b_tri.push((rp, rv, b_loc[p][jj]));
                }
            }
        }
        for (spec_rhs, loc) in rhs.iter_mut().zip(&rhs_loc) {
            for (jj, &vd) in vdofs.iter().enumerate() {
                if let DofStatus::Free(rv) = vmap.status[vd] {
                    spec_rhs[rv] += loc[jj];
                }
            }
        }
    }
    let k = CsrMatrix::from_triplets(vmap.n_reduced, vmap.n_reduced, k_tri);
    let b = CsrMatrix::from_triplets(pmap.n_reduced, vmap.n_reduced, b_tri);
    let v_kernel = if noslip_v.is_empty() {
        // constants per component span the kernel of k
        (0..2)
            .map(|c| {
                (0..vmap.n_reduced)
                    .map(|r| if r % 2 == c { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(StokesSystem {
        mesh: mesh.clone(),
        p2,
        k,
        b,
        rhs,
        vmap,
        pmap,
        p_weights,
        v_kernel,
    })
}

/// One Stokes solve: expanded velocity and pressure plus solver diagnostics.
pub struct StokesSolve {
    pub velocity: DiscreteField,
    pub pressure: DiscreteField,
    /// Relative residual of the full saddle system.
    pub residual: f64,
    pub schur_iterations: usize,
    /// `||B w|| / ||w||_K`: weak divergence-constraint violation.
    pub div_residual: f64,
    /// Reduced velocity vector (for energy products).
    pub velocity_reduced: Vec<f64>,
    /// Reduced rhs vector (for flux products).
    pub rhs_reduced: Vec<f64>,
}

/// Solve all right-hand sides of a Stokes system by CG on the pressure Schur
/// complement, reusing one LDL^T factorization of the velocity block.
pub fn solve_stokes(sys: &StokesSystem, tol: f64) -> Result<Vec<StokesSolve>> {
    // Pin one dof per kernel vector (unconstrained-velocity mode only).
    let mut k = sys.k.clone();
    let mut pins = Vec::new();
    if !sys.v_kernel.is_empty() {
        for c in 0..sys.v_kernel.len() {
            pins.push(c); // reduced dofs 0 and 1 are components 0 and 1 of the first free node
        }
        let n = k.n_rows;
        let mut triplets = Vec::with_capacity(k.nnz());
        for r in 0..n {
            let (cols, vals) = k.row(r);
            for (cc, v) in cols.iter().zip(vals) {
                if !pins.contains(&r) && !pins.contains(cc) {
                    triplets.push((r, *cc, *v));
                }
            }
        }
        for &p in &pins {
            triplets.push((p, p, 1.0));
        }
        k = CsrMatrix::from_triplets(n, n, triplets);
    }
    let vcoords = p2_vector_reduced_coords(&sys.mesh, &sys.p2, &sys.vmap);
    let factor = LdlFactor::new_geometric(&k, &vcoords)?;
    let np = sys.pmap.n_reduced;
    let ones = vec![1.0; np];
    let unit_w = vec![1.0; np];

    let mut results = Vec::with_capacity(sys.rhs.len());
    for rhs in &sys.rhs {
        let mut f = rhs.clone();
        for kern in &sys.v_kernel {
            let c = crate::sparse::dot(&f, kern) / crate::sparse::dot(kern, kern);
            for (fi, ki) in f.iter_mut().zip(kern) {
                *fi -= c * ki;
            }
        }
        for &p in &pins {
            f[p] = 0.0;
        }
        // Schur operator: q -> B K^{-1} B^T q
        let apply_schur = |q: &[f64], out: &mut [f64]| {
            let mut btq = vec![0.0; sys.vmap.n_reduced];
            sys.b.mul_transpose_add(q, &mut btq);
            for &p in &pins {
                btq[p] = 0.0;
            }
            let z = factor.solve(&btq);
            sys.b.mul_vec(&z, out);
        };
        let kf = factor.solve(&f);
        let mut schur_rhs = vec![0.0; np];
        sys.b.mul_vec(&kf, &mut schur_rhs);
        for v in schur_rhs.iter_mut() {
            *v = -*v;
        }
        let mut pi = vec![0.0; np];
        let out = cg_operator(
            apply_schur,
            &schur_rhs,
            &mut pi,
            (tol * 1e-2).max(1e-14),
            2000,
            Some((&ones, &unit_w)),
            Some(&sys.p_weights),
        );
        // velocity: w = K^{-1}(f + B^T pi)
        let mut fv = f.clone();
        sys.b.mul_transpose_add(&pi, &mut fv);
        for &p in &pins {
            fv[p] = 0.0;
        }
        let w = factor.solve(&fv);
        // normalize pressure to weighted mean zero
        let mean = crate::sparse::dot(&pi, &sys.p_weights) / sys.p_weights.iter().sum::<f64>();
        for v in pi.iter_mut() {
            *v -= mean;
        }
        // residual of the full system
        let mut rv = vec![0.0; sys.vmap.n_reduced];
        sys.k.mul_vec(&w, &mut rv);
        let mut btp = vec![0.0; sys.vmap.n_reduced];
        sys.b.mul_transpose_add(&pi, &mut btp);
        let mut fproj = rhs.clone();
        for kern in &sys.v_kernel {
            let c = crate::sparse::dot(&fproj, kern) / crate::sparse::dot(kern, kern);
            for (fi, ki) in fproj.iter_mut().zip(kern) {
                *fi -= c * ki;
            }
        }
        let mut top: Vec<f64> = (0..rv.len()).map(|i| rv[i] - btp[i] - fproj[i]).collect();
        for kern in &sys.v_kernel {
            // ignore kernel-direction residual (fixed by pinning)
            let c = crate::sparse::dot(&top, kern) / crate::sparse::dot(kern, kern);
            for (ti, ki) in top.iter_mut().zip(kern) {
                *ti -= c * ki;
            }
        }
        let mut bw = vec![0.0; np];
        sys.b.mul_vec(&w, &mut bw);
        let scale = norm2(&fproj).max(f64::MIN_POSITIVE);
        let residual = (norm2(&top).powi(2) + norm2(&bw).powi(2)).sqrt() / scale;
        if residual > tol {
            return Err(Error::SolverTolerance {
                tol,
                achieved: residual,
                iterations: out.iterations,
            });
        }
        let div_residual = norm2(&bw) / norm2(&w).max(f64::MIN_POSITIVE);
        let velocity = DiscreteField {
            mesh: sys.mesh.clone(),
            space: FeSpaceKind::P2Vector,
            values: sys.vmap.expand(&w),
        };
        let pressure = DiscreteField {
            mesh: sys.mesh.clone(),
            space: FeSpaceKind::P1Pressure,
            values: sys.pmap.expand(&pi),
        };
        results.push(StokesSolve {
            velocity,
            pressure,
            residual,
            schur_iterations: out.iterations,
            div_residual,
            velocity_reduced: w,
            rhs_reduced: f,
        });
    }
    Ok(results)
}

/// Discrete inf-sup witness: square root of the smallest generalized
/// eigenvalue of the pressure Schur complement against the lumped pressure
/// mass, constants deflated. Dense; intended for coarse meshes.
pub fn infsup_witness(sys: &StokesSystem) -> Result<f64> {
    let vcoords = p2_vector_reduced_coords(&sys.mesh, &sys.p2, &sys.vmap);
    let factor = LdlFactor::new_geometric(&sys.k, &vcoords)?;
    let np = sys.pmap.n_reduced;
    let mut s = vec![vec![0.0; np]; np];
    let mut q = vec![0.0; np];
    for j in 0..np {
        q.iter_mut().for_each(|v| *v = 0.0);
        q[j] = 1.0;
        let mut btq = vec![0.0; sys.vmap.n_reduced];
        sys.b.mul_transpose_add(&q, &mut btq);
        let z = factor.solve(&btq);
        let mut col = vec![0.0; np];
        sys.b.mul_vec(&z, &mut col);
        for i in 0..np {
            s[i][j] = col[i];
        }
    }
    // symmetrize roundoff
    for i in 0..np {
        for j in 0..i {
            let avg = 0.5 * (s[i][j] + s[j][i]);
            s[i][j] = avg;
            s[j][i] = avg;
        }
    }
    let ones = vec![1.0; np];
    let lam = crate::la::smallest_generalized_eigenvalue(&s, &sys.p_weights, Some(&ones), 80)
        .ok_or_else(|| Error::Solver("inf-sup witness iteration failed".into()))?;
    Ok(lam.max(0.0).sqrt())
}

/// General linear-system facade: raw matrices, scalar elliptic systems and
/// Stokes saddle points behind one entry point with a residual contract.
pub enum LinearSystem {
    Raw {
        matrix: CsrMatrix,
        rhs: Vec<f64>,
        symmetric: bool,
    },
    Elliptic(EllipticSystem),
    Saddle(StokesSystem),
}

pub enum SolveOutput {
    Vector(Vec<f64>),
    Field(DiscreteField),
    Stokes(Vec<StokesSolve>),
}

pub struct SolveReport {
    pub output: SolveOutput,
    pub residual: f64,
}

/// Solve any [`LinearSystem`] to the requested relative residual
/// (default contract 1e-10). Solver choice is internal: sparse LDL^T for
/// symmetric systems, banded LU otherwise, Schur-complement CG for saddles.
pub fn solve_linear(system: &LinearSystem, tol: f64) -> Result<SolveReport> {
    match system {
        LinearSystem::Raw {
            matrix,
            rhs,
            symmetric,
        } => {
            let (x, res) = if *symmetric {
                crate::sparse::solve_spd(matrix, rhs, tol)?
            } else {
                crate::sparse::solve_banded(matrix, rhs, tol)?
            };
            Ok(SolveReport {
                output: SolveOutput::Vector(x),
                residual: res,
            })
        }
        LinearSystem::Elliptic(sys) => {
            let sol = solve_elliptic(sys, None, tol)?;
            Ok(SolveReport {
                residual: sol.residual,
                output: SolveOutput::Field(sol.field),
            })
        }
        LinearSystem::Saddle(sys) => {
            let sols = solve_stokes(sys, tol)?;
            let worst = sols.iter().map(|s| s.residual).fold(0.0, f64::max);
            Ok(SolveReport {
                output: SolveOutput::Stokes(sols),
                residual: worst,
            })
        }
    }
}

/// L2 norm of a P1 field.
pub fn l2_norm_p1(mesh: &PeriodicMesh, values: &[f64]) -> f64 {
    l2_error_p1(mesh, values, &|_| 0.0)
}

/// L2 distance between a P1 field and an analytic function.
pub fn l2_error_p1(mesh: &PeriodicMesh, values: &[f64], exact: &dyn Fn(Vec2) -> f64) -> f64 {
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let (area, _, pts) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        for (lambda, w) in QUAD_DEG4 {
            let x = barycentric_point(&pts, &lambda);
            let uh = lambda[0] * values[dofs[0]] + lambda[1] * values[dofs[1]]
                + lambda[2] * values[dofs[2]];
            let d = uh - exact(x);
            acc += w * area * d * d;
        }
    }
    acc.sqrt()
}

/// Integral of a P1 field.
pub fn integral_p1(mesh: &PeriodicMesh, values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let (area, _, _) = p1_element(mesh, e);
        let dofs = mesh.elements[e];
        acc += area * (values[dofs[0]] + values[dofs[1]] + values[dofs[2]]) / 3.0;
    }
    acc
}

/// L2 distance between a P2 vector field and an analytic field, optionally
/// after removing the mean difference per component (velocity fields that
/// are determined up to constants).
pub fn l2_error_p2_vector(
    mesh: &PeriodicMesh,
    p2: &P2Space,
    values: &[f64],
    exact: &dyn Fn(Vec2) -> Vec2,
    adjust_mean: bool,
) -> f64 {
    let eval = |e: usize, lambda: &[f64; 3], grads: &[Vec2; 3]| -> Vec2 {
        let sdofs = p2.element_dofs_cached(mesh, e);
        let (vals, _) = p2_basis(lambda, grads);
        let mut v = Vec2::ZERO;
        for i in 0..6 {
            v += Vec2::new(values[2 * sdofs[i]], values[2 * sdofs[i] + 1]) * vals[i];
        }
        v
    };
    let mut shift = Vec2::ZERO;
    if adjust_mean {
        let mut total = 0.0;
        let mut diff = Vec2::ZERO;
        for e in 0..mesh.n_elements() {
            let (area, grads, pts) = p1_element(mesh, e);
            for (lambda, w) in QUAD_DEG4 {
                let x = barycentric_point(&pts, &lambda);
                let d = eval(e, &lambda, &grads) - exact(x);
                diff += d * (w * area);
                total += w * area;
            }
        }
        shift = diff * (1.0 / total);
    }
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let (area, grads, pts) = p1_element(mesh, e);
        for (lambda, w) in QUAD_DEG4 {
            let x = barycentric_point(&pts, &lambda);
            let d = eval(e, &lambda, &grads) - exact(x) - shift;
            acc += w * area * d.dot(d);
        }
    }
    acc.sqrt()
}

impl P2Space {
    fn element_dofs_cached(&self, mesh: &PeriodicMesh, e: usize) -> [usize; 6] {
        self.element_dofs(mesh, e)
    }
}
