//! Triangulations of the perforated periodic unit cell and of the macro
//! rectangle, with periodic node identification.
//!
//! The cell mesh is an O-grid: rays from the cell midpoint through a uniform
//! angular grid (corners included) are intersected with the outer square,
//! and radial layers blend from the circular hole to the boundary-fitted
//! square frame. All quads are split along the same diagonal; the slight
//! asymmetry this leaves is ordinary O(h^2) discretization error and decays
//! under refinement, which the isotropy checks rely on.

use crate::error::{Error, Result};
use crate::geometry::CellTransform;
use crate::la::Vec2;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Obstacle,
    Outer,
    PeriodicMaster,
    PeriodicSlave,
}

/// Triangulation with optional periodic identification and optional circular
/// hole. `periodic_pairs` maps slave node -> master node; masters of corner
/// chains may themselves be slaves and are resolved transitively.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    pub nodes: Vec<Vec2>,
    pub elements: Vec<[usize; 3]>,
    pub boundary_edges: Vec<(usize, usize, BoundaryTag)>,
    pub periodic_pairs: Vec<(usize, usize)>,
    pub hole_radius: Option<f64>,
}

impl PeriodicMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        triangle_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn element_centroid(&self, e: usize) -> Vec2 {
        let [a, b, c] = self.elements[e];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) * (1.0 / 3.0)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_area(e)).sum()
    }

    /// Largest element edge length (the reported mesh size h).
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for el in &self.elements {
            for k in 0..3 {
                let d = self.nodes[el[k]] - self.nodes[el[(k + 1) % 3]];
                h = h.max(d.norm());
            }
        }
        h
    }

    /// Shape quality 4*sqrt(3)*|T| / (l1^2 + l2^2 + l3^2), in (0, 1].
    pub fn min_quality(&self) -> f64 {
        let mut q = f64::INFINITY;
        for e in 0..self.n_elements() {
            let [a, b, c] = self.elements[e];
            let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
            let l2 = (pb - pa).dot(pb - pa) + (pc - pb).dot(pc - pb) + (pa - pc).dot(pa - pc);
            q = q.min(4.0 * 3.0f64.sqrt() * triangle_area(pa, pb, pc) / l2);
        }
        q
    }

    /// Resolve a node through periodic slave chains to its master.
    pub fn master_of(&self, mut node: usize) -> usize {
        // pairs are few; linear scan per hop is fine
        loop {
            match self.periodic_pairs.iter().find(|&&(s, _)| s == node) {
                Some(&(_, m)) => node = m,
                None => return node,
            }
        }
    }

    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut set = std::collections::BTreeSet::new();
        for &(a, b, t) in &self.boundary_edges {
            if t == tag {
                set.insert(a);
                set.insert(b);
            }
        }
        set.into_iter().collect()
    }

    /// Structural and geometric invariants; used by tests and after mapping.
    pub fn validate(&self) -> Result<()> {
        for e in 0..self.n_elements() {
            if self.element_area(e) <= 0.0 {
                return Err(Error::Mesh(format!(
                    "element {e} has non-positive area {}",
                    self.element_area(e)
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &(s, m) in &self.periodic_pairs {
            if !seen.insert(s) {
                return Err(Error::Mesh(format!("node {s} appears twice as a slave")));
            }
            let d = self.nodes[s] - self.nodes[m];
            let lattice_ok = ((d.x - 1.0).abs() < 1e-12 && d.y.abs() < 1e-12)
                || (d.x.abs() < 1e-12 && (d.y - 1.0).abs() < 1e-12);
            if !lattice_ok {
                return Err(Error::Mesh(format!(
                    "periodic pair ({s}, {m}) differs by ({}, {}), not a unit lattice vector",
                    d.x, d.y
                )));
            }
        }
        if let Some(r) = self.hole_radius {
            let center = Vec2::new(0.5, 0.5);
            for &n in &self.nodes_with_tag(BoundaryTag::Obstacle) {
                let dist = (self.nodes[n] - center).norm();
                if (dist - r).abs() > 1e-12 {
                    return Err(Error::Mesh(format!(
                        "obstacle node {n} at distance {dist}, expected radius {r}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text export: `nodes N elements M`, N node lines, M element
    /// lines `i j k tag`.
    pub fn export_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "nodes {} elements {}", self.n_nodes(), self.n_elements())?;
        for p in &self.nodes {
            writeln!(w, "{:.17e} {:.17e}", p.x, p.y)?;
        }
        for el in &self.elements {
            writeln!(w, "{} {} {} 0", el[0], el[1], el[2])?;
        }
        Ok(())
    }

    /// Import the plain-text format, reconstructing boundary tags and
    /// periodic pairs geometrically (unit-cell meshes only carry their
    /// structure through node positions).
    pub fn import_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Mesh("empty mesh file".into()))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "nodes" || parts[2] != "elements" {
            return Err(Error::Mesh(format!("bad mesh header: {header}")));
        }
        let n: usize = parts[1]
            .parse()
            .map_err(|_| Error::Mesh("bad node count".into()))?;
        let m: usize = parts[3]
            .parse()
            .map_err(|_| Error::Mesh("bad element count".into()))?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Mesh("unexpected end of node list".into()))??;
            let mut it = line.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Mesh("bad node line".into()))?;
            let y: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Mesh("bad node line".into()))?;
            nodes.push(Vec2::new(x, y));
        }
        let mut elements = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Mesh("unexpected end of element list".into()))??;
            let idx: Vec<usize> = line
                .split_whitespace()
                .take(3)
                .map(|s| s.parse().map_err(|_| Error::Mesh("bad element line".into())))
                .collect::<Result<_>>()?;
            if idx.len() != 3 {
                return Err(Error::Mesh("element line needs three node indices".into()));
            }
            elements.push([idx[0], idx[1], idx[2]]);
        }
        let mut mesh = PeriodicMesh {
            nodes,
            elements,
            boundary_edges: Vec::new(),
            periodic_pairs: Vec::new(),
            hole_radius: None,
        };
        mesh.reconstruct_boundary();
        Ok(mesh)
    }

    fn reconstruct_boundary(&mut self) {
        // Boundary edges are those owned by exactly one element.
        let mut count: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for el in &self.elements {
            for k in 0..3 {
                let (a, b) = (el[k], el[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *count.entry(key).or_insert(0) += 1;
            }
        }
        let (min_x, max_x, min_y, max_y) = self.bounding_box();
        let tol = 1e-9;
        let center = Vec2::new(0.5, 0.5);
        let mut hole_r: Option<f64> = None;
        let mut edges = Vec::new();
        for (&(a, b), &c) in count.iter() {
            if c != 1 {
                continue;
            }
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let on_box = |p: Vec2| {
                (p.x - min_x).abs() < tol
                    || (p.x - max_x).abs() < tol
                    || (p.y - min_y).abs() < tol
                    || (p.y - max_y).abs() < tol
            };
            if on_box(pa) && on_box(pb) {
                let slave = (pa.x - max_x).abs() < tol && (pb.x - max_x).abs() < tol
                    || (pa.y - max_y).abs() < tol && (pb.y - max_y).abs() < tol;
                let is_unit = (max_x - min_x - 1.0).abs() < tol && (max_y - min_y - 1.0).abs() < tol;
                let tag = if !is_unit {
                    BoundaryTag::Outer
                } else if slave {
                    BoundaryTag::PeriodicSlave
                } else {
                    BoundaryTag::PeriodicMaster
                };
                edges.push((a, b, tag));
            } else {
                edges.push((a, b, BoundaryTag::Obstacle));
                hole_r = Some((pa - center).norm());
            }
        }
        edges.sort_unstable_by_key(|&(a, b, _)| (a, b));
        self.boundary_edges = edges;
        self.hole_radius = hole_r;
        // Periodic pairs by coordinate matching on the unit cell.
        if (max_x - min_x - 1.0).abs() < tol && (max_y - min_y - 1.0).abs() < tol {
            let mut pairs = Vec::new();
            let outer: Vec<usize> = self
                .nodes_with_tag(BoundaryTag::PeriodicMaster)
                .into_iter()
                .chain(self.nodes_with_tag(BoundaryTag::PeriodicSlave))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            for &s in &outer {
                let p = self.nodes[s];
                let on_right = (p.x - max_x).abs() < tol;
                let on_top = (p.y - max_y).abs() < tol;
                if on_right {
                    if let Some(&m) = outer.iter().find(|&&m| {
                        (self.nodes[m].x - min_x).abs() < tol
                            && (self.nodes[m].y - p.y).abs() < tol
                    }) {
                        pairs.push((s, m));
                    }
                } else if on_top {
                    if let Some(&m) = outer.iter().find(|&&m| {
                        (self.nodes[m].y - min_y).abs() < tol
                            && (self.nodes[m].x - p.x).abs() < tol
                    }) {
                        pairs.push((s, m));
                    }
                }
            }
            pairs.sort_unstable();
            self.periodic_pairs = pairs;
        }
    }

    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut bb = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.nodes {
            bb.0 = bb.0.min(p.x);
            bb.1 = bb.1.max(p.x);
            bb.2 = bb.2.min(p.y);
            bb.3 = bb.3.max(p.y);
        }
        bb
    }
}

pub fn triangle_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// O-grid mesh of the perforated unit cell with hole radius `hole_radius`,
/// target element size `1/resolution`, exact circular hole boundary and
/// periodic identification of opposite sides.
pub fn gen_cell_mesh(hole_radius: f64, resolution: usize) -> Result<PeriodicMesh> {
    if !(0.0 < hole_radius && hole_radius < 0.5) {
        return Err(Error::Mesh(format!(
            "hole radius must lie in (0, 0.5), got {hole_radius}"
        )));
    }
    let h = 1.0 / resolution as f64;
    if 0.5 - hole_radius < 2.0 * h {
        return Err(Error::Mesh(format!(
            "resolution {resolution} too coarse to resolve the annulus gap 0.5 - {hole_radius}"
        )));
    }
    let center = Vec2::new(0.5, 0.5);
    // Angular count: aim at arc length ~ h midway between hole and frame.
    // n_theta = 4 m with m odd: divisible by 4 for the periodic pairing,
    // but not by 8, which (together with the checkerboard diagonals below)
    // breaks the quarter-turn symmetry of the triangulation. A C4-symmetric
    // mesh would make the discrete effective tensors isotropic to rounding
    // and the anisotropy-decay checks meaningless.
    let r_mid = 0.5 * (hole_radius + 0.55);
    let raw = std::f64::consts::TAU * r_mid / h;
    let mut m = ((raw / 4.0).round() as usize).max(3);
    if m % 2 == 0 {
        m += 1;
    }
    let n_theta = 4 * m;
    let n_r = (((0.6 - hole_radius) / h).round() as usize).max(2);

    // Radial grading carries a cos(2 theta) modulation; it vanishes on the
    // hole and the frame (pairing untouched) but removes the quarter-turn
    // symmetry the interior layers would otherwise have, for the same
    // reason as the angular count above.
    let c4_break = 0.15;
    let mut nodes = Vec::with_capacity((n_r + 1) * n_theta);
    for i in 0..=n_r {
        let s = i as f64 / n_r as f64;
        for k in 0..n_theta {
            let th = -std::f64::consts::FRAC_PI_4
                + std::f64::consts::TAU * k as f64 / n_theta as f64;
            let dir = Vec2::new(th.cos(), th.sin());
            let t_outer = 0.5 / dir.x.abs().max(dir.y.abs());
            let graded = s + c4_break * s * (1.0 - s) * (2.0 * th).cos();
            let rad = hole_radius + graded * (t_outer - hole_radius);
            nodes.push(center + dir * rad);
        }
    }
    let idx = |i: usize, k: usize| i * n_theta + (k % n_theta);

    // Periodic pairs by angular index; top pass first so right-edge corner
    // chains resolve against already-fixed masters.
    let q = n_theta / 4;
    let mut pairs = Vec::new();
    for k in q + 1..=2 * q {
        // top edge (corner (0,1) included, corner (1,1) handled by the
        // right-edge rule): mirror theta -> -theta, lattice vector (0,1)
        let slave = idx(n_r, k);
        let master = idx(n_r, (q + n_theta - k) % n_theta);
        nodes[slave] = nodes[master] + Vec2::new(0.0, 1.0);
        pairs.push((slave, master));
    }
    for k in 0..=q {
        // right edge: mirror theta -> pi - theta, lattice vector (1,0)
        let slave = idx(n_r, k);
        let master = idx(n_r, (3 * q + n_theta - k) % n_theta);
        nodes[slave] = nodes[master] + Vec2::new(1.0, 0.0);
        pairs.push((slave, master));
    }
    pairs.sort_unstable();

    let mut elements = Vec::with_capacity(2 * n_r * n_theta);
    for i in 0..n_r {
        for k in 0..n_theta {
            let (a, b, c, d) = (idx(i, k), idx(i + 1, k), idx(i + 1, k + 1), idx(i, k + 1));
            if (i + k) % 2 == 0 {
                elements.push([a, b, c]);
                elements.push([a, c, d]);
            } else {
                elements.push([a, b, d]);
                elements.push([b, c, d]);
            }
        }
    }

    let mut boundary_edges = Vec::new();
    for k in 0..n_theta {
        boundary_edges.push((idx(0, k), idx(0, k + 1), BoundaryTag::Obstacle));
        let (a, b) = (idx(n_r, k), idx(n_r, k + 1));
        let mid = (nodes[a] + nodes[b]) * 0.5;
        let tag = if mid.x > 1.0 - 1e-9 || mid.y > 1.0 - 1e-9 {
            BoundaryTag::PeriodicSlave
        } else {
            BoundaryTag::PeriodicMaster
        };
        boundary_edges.push((a, b, tag));
    }

    let mesh = PeriodicMesh {
        nodes,
        elements,
        boundary_edges,
        periodic_pairs: pairs,
        hole_radius: Some(hole_radius),
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Structured crossed-triangle mesh of a rectangle; outer boundary tagged
/// for Dirichlet conditions, no periodic pairs, no hole.
pub fn gen_macro_mesh(rect: [f64; 4], nx: usize, ny: usize) -> Result<PeriodicMesh> {
    let [ax, ay, bx, by] = rect;
    if nx < 2 || ny < 2 {
        return Err(Error::Mesh("macro mesh needs nx, ny >= 2".into()));
    }
    if bx <= ax || by <= ay {
        return Err(Error::Mesh("degenerate macro rectangle".into()));
    }
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Vec2::new(
                ax + (bx - ax) * i as f64 / nx as f64,
                ay + (by - ay) * j as f64 / ny as f64,
            ));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                elements.push([a, b, c]);
                elements.push([a, c, d]);
            } else {
                elements.push([a, b, d]);
                elements.push([b, c, d]);
            }
        }
    }
    let mut boundary_edges = Vec::new();
    for i in 0..nx {
        boundary_edges.push((idx(i, 0), idx(i + 1, 0), BoundaryTag::Outer));
        boundary_edges.push((idx(i, ny), idx(i + 1, ny), BoundaryTag::Outer));
    }
    for j in 0..ny {
        boundary_edges.push((idx(0, j), idx(0, j + 1), BoundaryTag::Outer));
        boundary_edges.push((idx(nx, j), idx(nx, j + 1), BoundaryTag::Outer));
    }
    Ok(PeriodicMesh {
        nodes,
        elements,
        boundary_edges,
        periodic_pairs: Vec::new(),
        hole_radius: None,
    })
}

/// Structured periodic unit square without hole (manufactured-solution
/// harnesses and the obstacle-free trivial cases).
pub fn gen_periodic_square_mesh(n: usize) -> Result<PeriodicMesh> {
    if n < 2 {
        return Err(Error::Mesh("periodic square needs n >= 2".into()));
    }
    let mut mesh = gen_macro_mesh([0.0, 0.0, 1.0, 1.0], n, n)?;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut pairs = Vec::new();
    for i in 0..=n {
        // top row -> bottom row, lattice (0,1)
        mesh.nodes[idx(i, n)] = mesh.nodes[idx(i, 0)] + Vec2::new(0.0, 1.0);
        pairs.push((idx(i, n), idx(i, 0)));
    }
    for j in 0..n {
        // right column -> left column, lattice (1,0)
        mesh.nodes[idx(n, j)] = mesh.nodes[idx(0, j)] + Vec2::new(1.0, 0.0);
        pairs.push((idx(n, j), idx(0, j)));
    }
    pairs.sort_unstable();
    mesh.periodic_pairs = pairs;
    for edge in mesh.boundary_edges.iter_mut() {
        let mid = (mesh.nodes[edge.0] + mesh.nodes[edge.1]) * 0.5;
        edge.2 = if mid.x > 1.0 - 1e-9 || mid.y > 1.0 - 1e-9 {
            BoundaryTag::PeriodicSlave
        } else {
            BoundaryTag::PeriodicMaster
        };
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Push the reference cell mesh forward through the cell transformation.
/// Node positions become `psi(node)`; connectivity, boundary tags and
/// periodic structure are untouched (`psi` is the identity near the outer
/// boundary).
pub fn map_mesh(mesh: &PeriodicMesh, transform: &CellTransform) -> Result<PeriodicMesh> {
    let hole = mesh
        .hole_radius
        .ok_or_else(|| Error::Mesh("map_mesh requires a perforated cell mesh".into()))?;
    if (hole - transform.r_max).abs() > 1e-12 {
        return Err(Error::Mesh(format!(
            "map_mesh requires the reference hole radius {} to equal R_max = {}",
            hole, transform.r_max
        )));
    }
    let mut mapped = mesh.clone();
    for p in mapped.nodes.iter_mut() {
        *p = transform.psi(*p)?;
    }
    mapped.hole_radius = Some(transform.radius);
    for e in 0..mapped.n_elements() {
        if mapped.element_area(e) <= 0.0 {
            return Err(Error::Mesh(format!(
                "mapped element {e} has non-positive area at R = {}",
                transform.radius
            )));
        }
    }
    Ok(mapped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn macro_mesh_two_by_two() {
        let mesh = gen_macro_mesh([0.0, 0.0, 1.0, 1.0], 2, 2).unwrap();
        assert_eq!(mesh.n_nodes(), 9);
        assert_eq!(mesh.n_elements(), 8);
        assert_relative_eq!(mesh.area(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn macro_mesh_area_exact_on_rectangle() {
        let mesh = gen_macro_mesh([-1.0, 0.0, 3.0, 2.0], 7, 5).unwrap();
        assert_relative_eq!(mesh.area(), 8.0, epsilon = 1e-12);
        mesh.validate().unwrap();
    }

    #[test]
    fn macro_mesh_p1_interpolation_second_order() {
        // Interpolation error of sin(pi x) sin(pi y) at two resolutions;
        // midpoint sampling of the error on a fine probe grid.
        let f = |p: Vec2| (std::f64::consts::PI * p.x).sin() * (std::f64::consts::PI * p.y).sin();
        let err_for = |n: usize| {
            let nf = n as f64;
            let mut worst: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    // center of grid cell, compare to bilinear of corner values
                    let p = Vec2::new((i as f64 + 0.5) / nf, (j as f64 + 0.5) / nf);
                    let corners = [
                        Vec2::new(i as f64 / nf, j as f64 / nf),
                        Vec2::new((i + 1) as f64 / nf, j as f64 / nf),
                        Vec2::new((i + 1) as f64 / nf, (j + 1) as f64 / nf),
                        Vec2::new(i as f64 / nf, (j + 1) as f64 / nf),
                    ];
                    let avg: f64 = corners.iter().map(|&c| f(c)).sum::<f64>() / 4.0;
                    worst = worst.max((avg - f(p)).abs());
                }
            }
            worst
        };
        let (e1, e2) = (err_for(8), err_for(16));
        assert!(e1 / e2 > 3.5, "interpolation order too low: {} vs {}", e1, e2);
    }

    #[test]
    fn cell_mesh_area_matches_porosity() {
        let mesh = gen_cell_mesh(0.25, 32).unwrap();
        let theta = 1.0 - std::f64::consts::PI * 0.0625;
        let rel = (mesh.area() - theta).abs() / theta;
        assert!(rel < 0.005, "area deviation {rel}");
        // The polygonal hole is inscribed, so the mesh area exceeds theta.
        assert!(mesh.area() >= theta);
    }

    #[test]
    fn cell_mesh_area_deficit_second_order() {
        let theta = 1.0 - std::f64::consts::PI * 0.0625;
        let d1 = gen_cell_mesh(0.25, 16).unwrap().area() - theta;
        let d2 = gen_cell_mesh(0.25, 32).unwrap().area() - theta;
        assert!(d1 > 0.0 && d2 > 0.0);
        let ratio = d1 / d2;
        assert!(ratio > 2.5, "area deficit ratio {ratio} not ~4");
    }

    #[test]
    fn cell_mesh_periodic_pair_count() {
        let mesh = gen_cell_mesh(0.25, 16).unwrap();
        // distinct boundary nodes on right and top sides
        let mut two_sides = std::collections::HashSet::new();
        for (k, p) in mesh.nodes.iter().enumerate() {
            let on_outer = p.x < 1e-12 || p.x > 1.0 - 1e-12 || p.y < 1e-12 || p.y > 1.0 - 1e-12;
            if on_outer && (p.x > 1.0 - 1e-12 || p.y > 1.0 - 1e-12) {
                two_sides.insert(k);
            }
        }
        assert_eq!(mesh.periodic_pairs.len(), two_sides.len());
        mesh.validate().unwrap();
    }

    #[test]
    fn cell_mesh_rejects_unresolvable_gap() {
        assert!(gen_cell_mesh(0.45, 16).is_err());
        assert!(gen_cell_mesh(0.6, 64).is_err());
    }

    #[test]
    fn map_mesh_identity_at_r_max() {
        let mesh = gen_cell_mesh(0.25, 16).unwrap();
        let t = CellTransform::unit_diffusion(0.25, 0.1, 0.25).unwrap();
        let mapped = map_mesh(&mesh, &t).unwrap();
        for (a, b) in mesh.nodes.iter().zip(&mapped.nodes) {
            assert!((*a - *b).norm() < 1e-14);
        }
        assert_eq!(mapped.n_elements(), mesh.n_elements());
    }

    #[test]
    fn map_mesh_area_and_structure() {
        let mesh = gen_cell_mesh(0.25, 32).unwrap();
        let t = CellTransform::unit_diffusion(0.15, 0.1, 0.25).unwrap();
        let mapped = map_mesh(&mesh, &t).unwrap();
        let theta = 1.0 - std::f64::consts::PI * 0.15 * 0.15;
        assert!((mapped.area() - theta).abs() / theta < 0.005);
        assert_eq!(mapped.n_nodes(), mesh.n_nodes());
        assert_eq!(mapped.n_elements(), mesh.n_elements());
        assert_eq!(mapped.periodic_pairs, mesh.periodic_pairs);
        mapped.validate().unwrap();
    }

    #[test]
    fn map_mesh_quality_over_radius_grid() {
        let mesh = gen_cell_mesh(0.25, 16).unwrap();
        let q_ref = mesh.min_quality();
        let mut worst_ratio = f64::INFINITY;
        for k in 0..=8 {
            let r = 0.1 + 0.15 * k as f64 / 8.0;
            let t = CellTransform::unit_diffusion(r, 0.1, 0.25).unwrap();
            let mapped = map_mesh(&mesh, &t).unwrap();
            worst_ratio = worst_ratio.min(mapped.min_quality() / q_ref);
        }
        // recorded floor: mapped quality stays within a fixed factor
        assert!(worst_ratio > 0.25, "quality ratio degraded to {worst_ratio}");
    }

    #[test]
    fn map_mesh_requires_reference_radius() {
        let mesh = gen_cell_mesh(0.2, 16).unwrap();
        let t = CellTransform::unit_diffusion(0.15, 0.1, 0.25).unwrap();
        assert!(map_mesh(&mesh, &t).is_err());
    }

    #[test]
    fn export_import_roundtrip() {
        let mesh = gen_cell_mesh(0.25, 16).unwrap();
        let mut buf = Vec::new();
        mesh.export_text(&mut buf).unwrap();
        let back = PeriodicMesh::import_text(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.n_nodes(), mesh.n_nodes());
        assert_eq!(back.n_elements(), mesh.n_elements());
        for (a, b) in mesh.nodes.iter().zip(&back.nodes) {
            assert!((*a - *b).norm() < 1e-15);
        }
        assert_eq!(back.periodic_pairs.len(), mesh.periodic_pairs.len());
        assert!((back.hole_radius.unwrap() - 0.25).abs() < 1e-12);
        back.validate().unwrap();
    }

    #[test]
    fn periodic_square_mesh_structure() {
        let mesh = gen_periodic_square_mesh(8).unwrap();
        assert_eq!(mesh.periodic_pairs.len(), 2 * 8 + 1);
        assert_relative_eq!(mesh.area(), 1.0, epsilon = 1e-13);
        mesh.validate().unwrap();
    }
}
